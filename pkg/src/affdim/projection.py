"""Monte-Carlo validation of the almost-sure projection formulas.

Translation vectors are sampled uniformly from a ball, symbolic
measures are pushed through the coding map into point clouds, and the
dimensions of those clouds (box counting on a half-open cube grid, ball
masses at sampled centers) are fitted against the theory targets: the
pressure-root dimension for sets, the scaling-exponent quantities for
measures.  The covering certificate checks the unconditional inequality
tying the box count of a projected set to its r-capacity.

Everything is deterministic given a seed: streams are spawned per
translation index, and reductions run in fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, exp, inf, log, sqrt

import numpy as np

from .capacity import min_energy, tree_for_radius
from .errors import (
    BudgetExceeded,
    DepthInsufficientForGrid,
    DomainError,
    EmptyBall,
    GridTooFine,
)
from .measures import ScaleGrid, depth_for_radius, tail_statistics
from .words import coding_points


# ---------------------------------------------------------------------------
# translation sampling and cloud generation
# ---------------------------------------------------------------------------


def sample_translation(rho, d, m, rng):
    """A point uniform in the closed ball of radius rho in R^{md}.

    Radial inversion: uniform direction times rho * U^(1/(md)).
    """
    if rho < 0:
        raise DomainError("rho must be >= 0")
    n = m * d
    if rho == 0.0:
        return np.zeros(n)
    vec = rng.standard_normal(n)
    norm = np.linalg.norm(vec)
    while norm == 0.0:
        vec = rng.standard_normal(n)
        norm = np.linalg.norm(vec)
    radius = rho * rng.random() ** (1.0 / n)
    return vec * (radius / norm)


@dataclass
class PointCloud:
    """Sampled projection of a symbolic measure, with provenance."""

    points: np.ndarray
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.points.shape[0],) or np.any(w < 0):
                raise DomainError("weights must be nonnegative, one per point")
            s = w.sum()
            if not np.isclose(s, 1.0, atol=1e-9):
                raise DomainError("weights must sum to 1")
            self.weights = w / s

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def point_weights(self):
        if self.weights is None:
            return np.full(self.n, 1.0 / self.n)
        return self.weights


def required_depth(ifs, a, r_min):
    """Depth making the coding truncation error at most r_min / 10."""
    radius = ifs.attractor_radius(a)
    if radius == 0.0:
        return 1
    return max(1, ceil(log(r_min / (10.0 * radius)) / ifs.log_alpha_plus))


def project_cloud(ifs, a, mu, n_points, depth, rng, min_radius=None):
    """Push n_points i.i.d. mu-samples through the coding map at finite depth.

    With ``min_radius`` given, the truncation error alpha_plus^depth * R
    must stay below min_radius / 10, otherwise the cloud cannot support
    analysis at that radius and DepthInsufficientForGrid is raised.
    """
    a = np.asarray(a, dtype=float).reshape(ifs.m, ifs.d)
    radius = ifs.attractor_radius(a)
    err = ifs.alpha_plus**depth * radius
    if min_radius is not None and err > min_radius / 10.0:
        raise DepthInsufficientForGrid(
            f"truncation error {err:.3e} exceeds {min_radius:.3e}/10; "
            f"need depth >= {required_depth(ifs, a, min_radius)}"
        )
    words = mu.sample_paths(n_points, depth, rng)
    pts = coding_points(ifs, words, translations=a)
    return PointCloud(
        points=pts,
        meta={
            "ifs": ifs.content_hash(),
            "a": a.copy(),
            "depth": depth,
            "n_points": n_points,
            "error_bound": err,
            "attractor_radius": radius,
        },
    )


def enumerate_set_cloud(ifs, a, depth, sft=None, budget=2_000_000):
    """One truncated coding point per allowed depth-n cylinder.

    The cylinder images have diameter at most alpha_plus^depth * 2R, so
    the sample is that dense in the projected set.
    """
    from .capacity import DepthTree, estimate_node_count

    if estimate_node_count(ifs.m, depth, sft) > budget:
        raise BudgetExceeded(f"{ifs.m}^{depth} cylinder enumeration exceeds {budget}")
    tree = DepthTree(ifs, depth, sft=sft, node_cap=budget)
    words = tree.leaf_words()
    pts = coding_points(ifs, words, translations=np.asarray(a, float).reshape(ifs.m, ifs.d))
    return PointCloud(points=pts, meta={"depth": depth, "enumerated": True})


# ---------------------------------------------------------------------------
# box counting
# ---------------------------------------------------------------------------


def _pack_cells(idx):
    """Collapse integer cell coordinates to unique scalar keys when they fit."""
    lo = idx.min(axis=0)
    span = idx.max(axis=0) - lo + 1
    bits = np.ceil(np.log2(span.astype(float) + 1.0)).astype(int)
    if int(bits.sum()) <= 62:
        key = np.zeros(idx.shape[0], dtype=np.int64)
        for j in range(idx.shape[1]):
            key = (key << int(bits[j])) | (idx[:, j] - lo[j]).astype(np.int64)
        return key
    return None


def box_count(cloud, r):
    """Occupied cells of the half-open cube grid with cell diameter r.

    Cells have side r / sqrt(d), so each has diameter exactly r; the
    count is the standard upper-flavor proxy for the minimal number of
    diameter-r sets needed to cover the sample (within universal
    constants, which vanish in log-log slopes).
    """
    if r <= 0:
        raise DomainError("radius must be positive")
    pts = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(cloud)
    side = r / sqrt(pts.shape[1])
    idx = np.floor(pts / side).astype(np.int64)
    key = _pack_cells(idx)
    if key is not None:
        return int(np.unique(key).size)
    return int(np.unique(idx, axis=0).shape[0])


@dataclass
class DimensionReport:
    """Log-log box-count data with window-slope spread and theory residual."""

    radii: np.ndarray
    counts: np.ndarray
    log_inv_radii: np.ndarray
    log_counts: np.ndarray
    slope: float
    lower: float
    upper: float
    window: int
    theory_target: float | None = None
    residual: float | None = None
    resolution_floor: float | None = None  # finest radius the sample supports


def _window_slopes(x, y, window):
    slopes = []
    for i in range(len(x) - window + 1):
        xs, ys = x[i : i + window], y[i : i + window]
        slopes.append(np.polyfit(xs, ys, 1)[0])
    return np.array(slopes)


def box_dim_fit(cloud, grid: ScaleGrid, window=4, s_expected=None, theory_target=None):
    """Least-squares box-dimension fit over a radius grid.

    The reported slope is the global fit; lower/upper are the extreme
    slopes over sliding windows.  The finest radius must stay above the
    heuristic sample-resolution floor n_points^(-1/s_expected).
    """
    pts = cloud.points
    if s_expected is None:
        s_expected = float(pts.shape[1])
    floor = float(pts.shape[0]) ** (-1.0 / s_expected)
    radii = grid.radii
    if radii.min() < floor:
        raise GridTooFine(
            f"finest radius {radii.min():.3e} is below the resolution floor "
            f"{floor:.3e} for {pts.shape[0]} points at expected dimension {s_expected}"
        )
    counts = np.array([box_count(cloud, float(r)) for r in radii])
    x = -np.log(radii)
    y = np.log(counts.astype(float))
    window = min(window, len(x))
    if len(x) >= 2:
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = 0.0
    if len(x) >= window and window >= 2:
        ws = _window_slopes(x, y, window)
        lower, upper = float(ws.min()), float(ws.max())
    else:
        lower = upper = slope
    return DimensionReport(
        radii=radii,
        counts=counts,
        log_inv_radii=x,
        log_counts=y,
        slope=slope,
        lower=lower,
        upper=upper,
        window=window,
        theory_target=theory_target,
        residual=None if theory_target is None else slope - theory_target,
        resolution_floor=floor,
    )


# ---------------------------------------------------------------------------
# ball masses and local dimensions
# ---------------------------------------------------------------------------


class _CellHash:
    """Spatial hash at a fixed radius: sorted packed cells with slice lookup."""

    def __init__(self, points, r):
        self.points = points
        self.r = r
        self.idx = np.floor(points / r).astype(np.int64)
        self.lo = self.idx.min(axis=0)
        span = self.idx.max(axis=0) - self.lo + 1
        self.bits = np.maximum(
            np.ceil(np.log2(span.astype(float) + 2.0)).astype(int), 2
        )
        if int(self.bits.sum()) > 62:
            raise DomainError("cell grid too wide to hash; radius far too small")
        keys = self._pack(self.idx)
        self.order = np.argsort(keys, kind="stable")
        self.sorted_keys = keys[self.order]

    def _pack(self, idx):
        key = np.zeros(idx.shape[0] if idx.ndim > 1 else 1, dtype=np.int64)
        idx2 = np.atleast_2d(idx)
        for j in range(idx2.shape[1]):
            key = (key << int(self.bits[j])) | (idx2[:, j] - self.lo[j] + 1).astype(
                np.int64
            )
        return key

    def ball_mass(self, center, weights):
        """Total weight within the closed ball B(center, r)."""
        center = np.asarray(center, dtype=float)
        d = center.shape[0]
        base = np.floor(center / self.r).astype(np.int64)
        offsets = np.stack(
            np.meshgrid(*([np.array([-1, 0, 1])] * d), indexing="ij"), axis=-1
        ).reshape(-1, d)
        cells = base[None, :] + offsets
        keys = self._pack(cells)
        mass = 0.0
        hits = []
        for key in keys:
            a = np.searchsorted(self.sorted_keys, key, side="left")
            b = np.searchsorted(self.sorted_keys, key, side="right")
            if b > a:
                hits.append(self.order[a:b])
        if not hits:
            return 0.0
        cand = np.concatenate(hits)
        dist2 = ((self.points[cand] - center) ** 2).sum(axis=1)
        inside = dist2 <= self.r * self.r * (1.0 + 1e-12)
        return float(weights[cand[inside]].sum())


@dataclass
class LocalDimEstimate:
    """Ball-mass scaling at one center: quotient trace and fitted slope."""

    center: np.ndarray
    radii: np.ndarray
    masses: np.ndarray
    quotients: np.ndarray  # log mass / log r where mass > 0
    fit: float  # least-squares slope of log mass vs log r
    lower: float  # tail min of the quotient trace
    upper: float  # tail max of the quotient trace


def local_dims_at(cloud, centers, grid: ScaleGrid, tail_fraction=0.5):
    """Local-dimension estimates at many centers, sharing one hash per radius."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = grid.radii
    weights = cloud.point_weights()
    masses = np.zeros((centers.shape[0], radii.shape[0]))
    for j, r in enumerate(radii):
        h = _CellHash(cloud.points, float(r))
        for i, c in enumerate(centers):
            masses[i, j] = h.ball_mass(c, weights)
    out = []
    for i, c in enumerate(centers):
        if masses[i, 0] <= 0.0:
            raise EmptyBall(
                f"no cloud point within {radii[0]:.3e} of center index {i}"
            )
        valid = masses[i] > 0.0
        lr = np.log(radii[valid])
        lm = np.log(masses[i][valid])
        quot = lm / lr
        fit = float(np.polyfit(lr, lm, 1)[0]) if valid.sum() >= 2 else 0.0
        lo, hi = tail_statistics(quot, tail_fraction)
        out.append(
            LocalDimEstimate(
                center=c,
                radii=radii,
                masses=masses[i],
                quotients=quot,
                fit=fit,
                lower=lo,
                upper=hi,
            )
        )
    return out


def local_dim_estimate(cloud, center, grid: ScaleGrid, tail_fraction=0.5):
    """(lower, upper) local-dimension estimates at one center, with the trace."""
    return local_dims_at(cloud, [center], grid, tail_fraction)[0]


# ---------------------------------------------------------------------------
# covering certificate
# ---------------------------------------------------------------------------


@dataclass
class CoveringCertificate:
    """All constituents of the capacity covering inequality at one (a, r).

    pass requires  N_r <= (log r / log alpha_plus + 2) * C' * C_r  with
    C' = (2u)^d (d+1)^d and u = 2 max{1, diam bound}; the inequality
    holds for every translation, so any failure indicates a bug.
    """

    r: float
    n_r: int
    capacity: float
    c_prime: float
    log_factor: float
    bound: float
    passed: bool
    depth: int
    diam_bound: float


def covering_check(ifs, a, r, sft=None, diam=None, node_cap=2_000_000, tol=1e-9):
    """Evaluate both sides of the covering inequality independently.

    Valid for r < 1/alpha_plus: the proof covers the projected set level
    by level through depth ceil(log r / log alpha_plus), and the log
    factor dominates that step count exactly on this range.
    """
    if not 0 < r < 1.0 / ifs.alpha_plus:
        raise DomainError(
            f"need 0 < r < 1/alpha_plus = {1.0 / ifs.alpha_plus:.6g}, got {r}"
        )
    a = np.asarray(a, dtype=float).reshape(ifs.m, ifs.d)
    if diam is None:
        diam = 2.0 * ifs.attractor_radius(a)
    depth = required_depth(ifs, a, r)
    cloud = enumerate_set_cloud(ifs, a, depth, sft=sft, budget=node_cap)
    n_r = box_count(cloud, r)
    tree = tree_for_radius(ifs, r, sft=sft, node_cap=node_cap)
    sol = min_energy(tree, r, tol=tol)
    u = 2.0 * max(1.0, diam)
    c_prime = (2.0 * u) ** ifs.d * (ifs.d + 1) ** ifs.d
    log_factor = log(r) / ifs.log_alpha_plus + 2.0
    bound = log_factor * c_prime * sol.capacity
    return CoveringCertificate(
        r=float(r),
        n_r=n_r,
        capacity=sol.capacity,
        c_prime=c_prime,
        log_factor=log_factor,
        bound=bound,
        passed=bool(n_r <= bound),
        depth=tree.depth,
        diam_bound=float(diam),
    )


# ---------------------------------------------------------------------------
# the sweep harness
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    """Per-translation reports plus cross-translation summary statistics."""

    box_reports: list
    local_summaries: list  # per a: median of per-center fitted local dims
    translations: list
    theory_box: float | None
    theory_local: float | None
    box_pass: list
    local_pass: list
    pass_fraction_required: float
    box_ok: bool | None
    local_ok: bool | None
    exact_dim_verdict: dict | None
    occupancy_fraction: float | None  # informational Lebesgue-positivity proxy
    rows: list  # CSV-ready (a_index, r, count, slope) tuples


def sweep_experiment(
    ifs,
    mu,
    grid: ScaleGrid,
    n_translations,
    rho,
    n_points,
    seed,
    theory_box=None,
    theory_local=None,
    tolerance=0.15,
    local_tolerance=0.1,
    pass_fraction=0.8,
    centers_per_a=0,
    local_grid=None,
    exact_dim_data=None,
    threads=1,
):
    """Monte-Carlo sweep over translations: box dimensions (and optionally
    local dimensions) of projected clouds against theory targets.

    An almost-every-translation statement is rendered statistically: the
    sweep passes when at least ``pass_fraction`` of sampled translations
    meet the tolerance.  ``exact_dim_data`` may carry per-path exponent
    estimates (under/over liminf-exponent and potential-slope values)
    from which the exact-dimensionality criterion is evaluated.
    """
    if n_translations < 1:
        raise DomainError("need at least one sampled translation")
    seeds = np.random.SeedSequence(seed).spawn(n_translations)
    r_min = float(grid.radii.min())

    def run_one(i):
        rng = np.random.default_rng(seeds[i])
        a = sample_translation(rho, ifs.d, ifs.m, rng)
        depth = required_depth(ifs, a, r_min)
        cloud = project_cloud(ifs, a, mu, n_points, depth, rng, min_radius=r_min)
        report = box_dim_fit(
            cloud, grid, s_expected=theory_box, theory_target=theory_box
        )
        locals_median = None
        if centers_per_a > 0:
            lgrid = local_grid if local_grid is not None else grid
            sel = rng.integers(0, cloud.n, size=centers_per_a)
            ests = local_dims_at(cloud, cloud.points[sel], lgrid)
            locals_median = float(np.median([e.fit for e in ests]))
        occ = _occupancy_fraction(cloud, r_min)
        return a, report, locals_median, occ

    results = [None] * n_translations
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            for i, res in enumerate(ex.map(run_one, range(n_translations))):
                results[i] = res
    else:
        for i in range(n_translations):
            results[i] = run_one(i)

    translations = [r[0] for r in results]
    box_reports = [r[1] for r in results]
    local_summaries = [r[2] for r in results]
    occupancy = float(np.mean([r[3] for r in results]))

    box_pass = []
    if theory_box is not None:
        box_pass = [abs(rep.slope - theory_box) <= tolerance for rep in box_reports]
    local_pass = []
    if theory_local is not None and centers_per_a > 0:
        local_pass = [
            med is not None and abs(med - theory_local) <= local_tolerance
            for med in local_summaries
        ]

    def fraction_ok(passes):
        return (sum(passes) / len(passes)) >= pass_fraction if passes else None

    verdict = None
    if exact_dim_data is not None:
        verdict = exact_dimensionality_verdict(ifs.d, **exact_dim_data)

    rows = []
    for i, rep in enumerate(box_reports):
        for r, c in zip(rep.radii, rep.counts):
            rows.append((i, float(r), int(c), rep.slope))

    return SweepResult(
        box_reports=box_reports,
        local_summaries=local_summaries,
        translations=translations,
        theory_box=theory_box,
        theory_local=theory_local,
        box_pass=box_pass,
        local_pass=local_pass,
        pass_fraction_required=pass_fraction,
        box_ok=fraction_ok(box_pass),
        local_ok=fraction_ok(local_pass),
        exact_dim_verdict=verdict,
        occupancy_fraction=occupancy,
        rows=rows,
    )


def _occupancy_fraction(cloud, r):
    """Occupied fraction of the bounding-box cells at the finest radius.

    Informational only: fractions near 1 are consistent with (but do not
    prove) positive Lebesgue measure of the projected set.
    """
    pts = cloud.points
    side = r / sqrt(pts.shape[1])
    span = np.maximum(pts.max(axis=0) - pts.min(axis=0), side)
    total = np.prod(np.ceil(span / side + 1.0))
    return min(1.0, box_count(cloud, r) / total)


def exact_dimensionality_verdict(
    d, under_S, over_S, under_D, over_D, tolerance=0.1
):
    """Render the exact-dimensionality criterion from finite-scale estimates.

    Condition (i): the liminf exponent is at least d along almost every
    path.  Condition (ii): the liminf exponent and the potential slope
    agree on a common constant s < d.  Estimates within ``tolerance``
    count as equal.
    """
    cond_i = under_S >= d - tolerance
    spread = max(over_S - under_S, over_D - under_D, abs(under_S - under_D))
    s_value = 0.5 * (under_S + under_D)
    cond_ii = spread <= tolerance and s_value < d
    return {
        "condition_i": bool(cond_i),
        "condition_ii": bool(cond_ii),
        "exact_dimensional": bool(cond_i or cond_ii),
        "s_estimate": float(min(s_value, d)),
        "spread": float(spread),
        "under_S": float(under_S),
        "over_S": float(over_S),
        "under_D": float(under_D),
        "over_D": float(over_D),
    }
