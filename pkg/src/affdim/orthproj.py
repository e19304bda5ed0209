"""Random subspaces, projected measures, and the smoothed-ball kernel.

The kernel at exponent m,

    integral of min{1, (r / |y - x|)^m}  d mu(y),

dominates the ball mass mu(B(x, r)) and its log-log upper exponent at
mu-typical centers equals the upper local dimension of the projection of
mu onto a typical m-dimensional subspace.  Matching that exponent with
the lower local dimension at almost every center is exactly the
criterion for the typical projected measure to be exact dimensional:
either the measure's lower Hausdorff dimension already reaches m, or the
measure itself is exact dimensional with dimension below m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrame, DomainError
from .measures import ScaleGrid, tail_statistics
from .projection import PointCloud, local_dims_at


@dataclass(frozen=True)
class Subspace:
    """An m-dimensional linear subspace of R^n via an orthonormal basis."""

    basis: np.ndarray  # (n, m), columns orthonormal

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[1] >= b.shape[0] or b.shape[1] < 1:
            raise DomainError(f"basis must be (n, m) with 0 < m < n, got {b.shape}")
        gram = b.T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-12):
            raise DomainError("basis columns must be orthonormal within 1e-12")
        object.__setattr__(self, "basis", b)

    @property
    def ambient(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def coordinates(self, points):
        """Coordinates of orthogonally projected points, in the basis frame.

        Distances between coordinate vectors equal distances between the
        projected points, so dimension estimates can run directly here.
        """
        return np.atleast_2d(points) @ self.basis

    def project_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(
            points=self.coordinates(cloud.points),
            weights=cloud.weights,
            meta=dict(cloud.meta, subspace_dim=self.dim),
        )


def random_subspace(n, m, rng) -> Subspace:
    """Rotation-invariant random m-plane: orthonormalized Gaussian frame.

    Gaussian frames are almost surely full rank; a degenerate draw is
    regenerated, and only 100 consecutive failures surface as an error.
    """
    if not 0 < m < n:
        raise DomainError(f"need 0 < m < n, got m={m}, n={n}")
    for _ in range(100):
        frame = rng.standard_normal((n, m))
        q, r = np.linalg.qr(frame)
        diag = np.diag(r)
        if np.all(np.abs(diag) > 1e-12):
            return Subspace(basis=q * np.sign(diag))
    raise DegenerateFrame("100 consecutive rank-deficient Gaussian frames")


def smoothed_ball_mass(cloud: PointCloud, x, r, m):
    """Weighted sum of min{1, (r/|y-x|)^m} over the cloud.

    The y = x term contributes 1 (the integrand's pointwise limit), so a
    point mass at the center evaluates to 1 at every radius.
    """
    if r <= 0:
        raise DomainError("radius must be positive")
    if m < 1:
        raise DomainError("kernel exponent m must be >= 1")
    x = np.asarray(x, dtype=float)
    dist = np.linalg.norm(cloud.points - x, axis=1)
    w = cloud.point_weights()
    out = np.ones(cloud.n)
    far = dist > r
    out[far] = (r / dist[far]) ** m
    return float((w * out).sum())


@dataclass
class KernelSlopeEstimate:
    """Log-log trace of the smoothed ball mass at one center."""

    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    quotients: np.ndarray
    fit: float
    limsup_estimate: float  # tail max of the quotient trace


def kernel_slope_at(cloud, centers, m, grid: ScaleGrid, tail_fraction=0.5):
    """Smoothed-ball-mass slope estimates at many centers."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = grid.radii
    out = []
    w = cloud.point_weights()
    for c in centers:
        dist = np.linalg.norm(cloud.points - c, axis=1)
        vals = np.empty(radii.shape[0])
        for j, r in enumerate(radii):
            contrib = np.ones(cloud.n)
            far = dist > r
            contrib[far] = (r / dist[far]) ** m
            vals[j] = (w * contrib).sum()
        lr = np.log(radii)
        lv = np.log(vals)
        quot = lv / lr
        fit = float(np.polyfit(lr, lv, 1)[0])
        _, hi = tail_statistics(quot, tail_fraction)
        out.append(
            KernelSlopeEstimate(
                center=c, radii=radii, values=vals, quotients=quot, fit=fit,
                limsup_estimate=hi,
            )
        )
    return out


@dataclass
class ExactDimVerdict:
    """The typical-projection exact-dimensionality criterion, rendered
    from mu-sampled centers with quantile thresholds."""

    m: int
    condition_i: bool  # lower dimension >= m at enough centers
    condition_ii: bool  # exact dimensional with common dimension < m
    exact_dimensional: bool
    s_estimate: float
    fraction_i: float
    fraction_ii: float
    lower_dims: np.ndarray
    kernel_slopes: np.ndarray


def exact_dim_criterion(
    cloud,
    m,
    grid: ScaleGrid,
    rng,
    n_centers=50,
    tolerance=0.1,
    quantile=0.9,
) -> ExactDimVerdict:
    """Decide the criterion from finite samples.

    Condition (i) holds when at least ``quantile`` of mu-sampled centers
    have lower local dimension >= m - tolerance; condition (ii) when the
    lower-dimension and kernel-slope estimates agree with a common
    constant below m at that fraction of centers.
    """
    if cloud.n < 1:
        raise DomainError("cloud must be nonempty")
    n_centers = min(n_centers, cloud.n)
    sel = rng.integers(0, cloud.n, size=n_centers)
    centers = cloud.points[sel]
    local = local_dims_at(cloud, centers, grid)
    lower_dims = np.array([e.fit for e in local])
    slopes = np.array([e.fit for e in kernel_slope_at(cloud, centers, m, grid)])
    frac_i = float((lower_dims >= m - tolerance).mean())
    s_value = float(np.median(np.concatenate([lower_dims, slopes])))
    agree = (np.abs(lower_dims - s_value) <= tolerance) & (
        np.abs(slopes - s_value) <= tolerance
    )
    frac_ii = float(agree.mean())
    cond_i = frac_i >= quantile
    cond_ii = frac_ii >= quantile and s_value < m
    return ExactDimVerdict(
        m=m,
        condition_i=cond_i,
        condition_ii=cond_ii,
        exact_dimensional=bool(cond_i or cond_ii),
        s_estimate=s_value,
        fraction_i=frac_i,
        fraction_ii=frac_ii,
        lower_dims=lower_dims,
        kernel_slopes=slopes,
    )
