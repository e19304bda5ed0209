"""Small fixed-dimension linear algebra for affine IFS work.

Singular spectra are kept in log domain throughout: products of hundreds
of contracting matrices underflow doubles long before they stop carrying
information.  Spectra of matrix words are computed from exterior powers
(compound matrices), whose largest singular values are well conditioned,
so every alpha_k of a long product keeps relative accuracy even when
alpha_1/alpha_d spans hundreds of orders of magnitude.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from itertools import combinations
from math import comb, exp, floor, log

import numpy as np

from .errors import DomainError, NonContracting, SingularMatrix

MAX_DIM = 8
_DET_THRESHOLD = 1e-14
_RENORM_FLOOR = 1e-150


def jacobi_eigenvalues(sym, max_sweeps=64):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.

    Deterministic and robust at the sizes used here (n <= 70).
    """
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    if n == 1:
        return a.ravel().copy()
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= 1e-30 * max(1.0, np.abs(np.diag(a)).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q])):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))[::-1].copy()


def _sym_eig_max(a):
    """Largest eigenvalue of a symmetric PSD matrix, closed form for n <= 3."""
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0])
    if n == 2:
        half = 0.5 * (a[0, 0] + a[1, 1])
        return half + np.hypot(0.5 * (a[0, 0] - a[1, 1]), a[0, 1])
    if n == 3:
        q = (a[0, 0] + a[1, 1] + a[2, 2]) / 3.0
        p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        p2 = (a[0, 0] - q) ** 2 + (a[1, 1] - q) ** 2 + (a[2, 2] - q) ** 2 + 2.0 * p1
        if p2 <= 0.0:
            return float(q)
        p = (p2 / 6.0) ** 0.5
        b = (a - q * np.eye(3)) / p
        r = min(1.0, max(-1.0, 0.5 * np.linalg.det(b)))
        return float(q + 2.0 * p * np.cos(np.arccos(r) / 3.0))
    return float(jacobi_eigenvalues(a)[0])


def _log_sigma_max(mat):
    """log of the largest singular value; safe for very small entries."""
    amax = np.abs(mat).max()
    if amax == 0.0:
        raise SingularMatrix("zero matrix has no positive singular values")
    scaled = mat / amax
    return log(amax) + 0.5 * log(_sym_eig_max(scaled.T @ scaled))


def compound_matrix(mat, k):
    """k-th exterior power: the matrix of k x k minors in lexicographic order."""
    n = mat.shape[0]
    if k == 1:
        return np.array(mat, dtype=float)
    subsets = list(combinations(range(n), k))
    out = np.empty((len(subsets), len(subsets)))
    for i, rows in enumerate(subsets):
        block = mat[np.ix_(rows, range(n))]
        for j, cols in enumerate(subsets):
            out[i, j] = np.linalg.det(block[:, cols])
    return out


@dataclass
class ScaledMatrix:
    """A matrix carried as mat * exp(log_scale) to dodge underflow.

    Entries are renormalized once their magnitude drops below 1e-150,
    which keeps Gram matrices of the stored factor out of the subnormal
    range for chains of any length.
    """

    mat: np.ndarray
    log_scale: float = 0.0

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), 0.0)

    def matmul(self, other: "ScaledMatrix") -> "ScaledMatrix":
        m = self.mat @ other.mat
        ls = self.log_scale + other.log_scale
        amax = np.abs(m).max()
        if amax == 0.0:
            raise SingularMatrix("matrix product underflowed to zero")
        if amax < _RENORM_FLOOR:
            m = m / amax
            ls += log(amax)
        return ScaledMatrix(m, ls)

    def log_sigma_max(self):
        return self.log_scale + _log_sigma_max(self.mat)


@dataclass(frozen=True)
class SingularSpectrum:
    """Singular values alpha_1 >= ... >= alpha_d > 0, stored as logs."""

    log_alphas: np.ndarray

    def __post_init__(self):
        la = np.asarray(self.log_alphas, dtype=float)
        object.__setattr__(self, "log_alphas", la)

    @property
    def d(self):
        return self.log_alphas.shape[0]

    @property
    def alphas(self):
        """Linear-domain values; may underflow to 0 for long products."""
        return np.exp(self.log_alphas)

    @property
    def log_det_abs(self):
        return float(self.log_alphas.sum())


def log_phi(log_alphas, s):
    """log of the singular value function at exponent s >= 0.

    For 0 <= s < d this is sum of the k largest log-alphas plus the
    fractional part times the (k+1)-th; for s >= d it is (s/d) * log|det|.
    Continuous and strictly decreasing in s when all alphas < 1.
    """
    la = np.asarray(log_alphas, dtype=float)
    d = la.shape[0]
    if s < 0:
        raise DomainError(f"exponent s must be >= 0, got {s}")
    if s >= d:
        return (s / d) * float(la.sum())
    k = floor(s)
    return float(la[:k].sum()) + (s - k) * float(la[k])


def phi(log_alphas, s):
    """Linear-domain singular value function; may underflow to 0."""
    return exp(log_phi(log_alphas, s))


def singular_values(mat) -> SingularSpectrum:
    """Singular spectrum of a single matrix.

    d = 2 uses the closed-form Gram eigenvalues with the determinant
    correction for the small value; general d goes through exterior
    powers so each alpha_k keeps relative accuracy.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {mat.shape}")
    d = mat.shape[0]
    if d > MAX_DIM:
        raise DomainError(f"dimension {d} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(mat)):
        raise DomainError("matrix entries must be finite")
    det = np.linalg.det(mat)
    if abs(det) <= _DET_THRESHOLD:
        raise SingularMatrix(f"|det| = {abs(det):.3e} below threshold {_DET_THRESHOLD}")
    if d == 1:
        return SingularSpectrum(np.array([log(abs(mat[0, 0]))]))
    if d == 2:
        g = mat.T @ mat
        half_tr = 0.5 * (g[0, 0] + g[1, 1])
        disc = np.hypot(0.5 * (g[0, 0] - g[1, 1]), g[0, 1])
        la1 = 0.5 * log(half_tr + disc)
        la2 = log(abs(det)) - la1
        return SingularSpectrum(np.array([la1, la2]))
    return _spectrum_from_chain([mat])


def _spectrum_from_chain(mats):
    """Spectrum of a product of matrices via exterior-power accumulation."""
    d = mats[0].shape[0]
    log_prods = np.empty(d)
    for k in range(1, d + 1):
        acc = ScaledMatrix.identity(comb(d, k))
        for m in mats:
            acc = acc.matmul(ScaledMatrix(compound_matrix(m, k)))
        log_prods[k - 1] = acc.log_sigma_max()
    la = np.diff(log_prods, prepend=0.0)
    return SingularSpectrum(np.sort(la)[::-1])


def operator_norm(mat):
    return exp(_log_sigma_max(np.asarray(mat, dtype=float)))


@dataclass
class IfsValidation:
    """Outcome of checking an IFS matrix tuple."""

    norms: np.ndarray
    min_singular_values: np.ndarray
    transversality: bool
    warnings: list


def validate_ifs_matrices(matrices) -> IfsValidation:
    """Check invertibility and contraction; flag the norm < 1/2 regime.

    Raises SingularMatrix / NonContracting on hard violations.  Norms in
    [1/2, 1) are legal but only the norm < 1/2 regime carries the
    almost-every-translation guarantees, so that case is reported as a
    non-fatal warning with transversality=False.
    """
    matrices = np.asarray(matrices, dtype=float)
    if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
        raise DomainError(f"expected shape (m, d, d), got {matrices.shape}")
    norms = []
    min_svs = []
    warnings = []
    for i, mat in enumerate(matrices):
        spec = singular_values(mat)  # raises SingularMatrix when degenerate
        a1 = exp(spec.log_alphas[0])
        ad = exp(spec.log_alphas[-1])
        if a1 >= 1.0:
            raise NonContracting(f"map {i + 1} has operator norm {a1:.6g} >= 1")
        if a1 >= 0.5:
            warnings.append(
                f"map {i + 1} has norm {a1:.6g} in [1/2, 1): almost-sure "
                "projection formulas are not guaranteed"
            )
        norms.append(a1)
        min_svs.append(ad)
    norms = np.array(norms)
    min_svs = np.array(min_svs)
    return IfsValidation(
        norms=norms,
        min_singular_values=min_svs,
        transversality=bool(np.all(norms < 0.5)),
        warnings=warnings,
    )


class AffineIFS:
    """A tuple of affine contractions x -> T_i x + a_i on R^d.

    Holds the per-map singular data and the contraction constants
    alpha_plus (max operator norm) and alpha_minus (min smallest singular
    value).  Matrices must be invertible and strictly contracting.
    Immutable after construction; safe to share across threads.
    """

    def __init__(self, matrices, translations):
        matrices = np.asarray(matrices, dtype=float)
        translations = np.asarray(translations, dtype=float)
        if matrices.ndim != 3:
            raise DomainError(f"matrices must have shape (m, d, d), got {matrices.shape}")
        m, d, d2 = matrices.shape
        if d != d2:
            raise DomainError("matrices must be square")
        if not 1 <= d <= MAX_DIM:
            raise DomainError(f"dimension {d} outside supported range 1..{MAX_DIM}")
        if translations.shape != (m, d):
            raise DomainError(
                f"translations must have shape ({m}, {d}), got {translations.shape}"
            )
        if not np.all(np.isfinite(translations)):
            raise DomainError("translations must be finite")
        self.validation = validate_ifs_matrices(matrices)
        self.matrices = matrices
        self.translations = translations
        self.m = m
        self.d = d
        self.map_spectra = [singular_values(mat) for mat in matrices]
        self.map_log_alphas = np.array([s.log_alphas for s in self.map_spectra])
        self.alpha_plus = float(self.validation.norms.max())
        self.alpha_minus = float(self.validation.min_singular_values.min())
        self.log_alpha_plus = float(self.map_log_alphas[:, 0].max())
        self.log_alpha_minus = float(self.map_log_alphas[:, -1].min())
        self.transversality = self.validation.transversality
        self.spectral_kind = self._classify()
        self._compound_cache = {}
        self.matrices.setflags(write=False)
        self.translations.setflags(write=False)

    def _classify(self):
        mats = self.matrices
        if all(np.allclose(m, np.diag(np.diag(m)), atol=0.0) for m in mats):
            return "diagonal"
        conformal = True
        for m in mats:
            g = m.T @ m
            c2 = np.trace(g) / self.d
            if not np.allclose(g, c2 * np.eye(self.d), rtol=1e-12, atol=1e-15 * c2):
                conformal = False
                break
        return "conformal" if conformal else "generic"

    def map_compounds(self, i, k):
        """Cached k-th exterior power of T_i (i is 0-based)."""
        key = (i, k)
        out = self._compound_cache.get(key)
        if out is None:
            out = compound_matrix(self.matrices[i], k)
            out.setflags(write=False)
            self._compound_cache[key] = out
        return out

    def attractor_radius(self, translations=None):
        """R with f_i(B(0,R)) inside B(0,R): max_i |a_i| / (1 - alpha_plus)."""
        a = self.translations if translations is None else np.asarray(translations, float)
        amax = float(np.linalg.norm(a.reshape(self.m, self.d), axis=1).max())
        return amax / (1.0 - self.alpha_plus)

    def with_translations(self, translations):
        """Copy with new translation vectors, sharing all matrix caches."""
        translations = np.asarray(translations, dtype=float).reshape(self.m, self.d)
        other = object.__new__(AffineIFS)
        other.__dict__.update(self.__dict__)
        other.translations = translations.copy()
        other.translations.setflags(write=False)
        return other

    def content_hash(self):
        h = hashlib.sha256()
        h.update(self.matrices.tobytes())
        h.update(self.translations.tobytes())
        return h.hexdigest()[:16]

    # ----- spectra of matrix words ------------------------------------

    def word_log_alphas(self, symbols):
        """log singular values of T_{i_1} ... T_{i_n}, descending.

        ``symbols`` is a sequence of 1-based map indices; empty gives the
        identity (all zeros).
        """
        return self.prefix_log_alphas(symbols)[-1]

    def prefix_log_alphas(self, symbols):
        """(n+1, d) array: row j holds the log spectrum of the depth-j prefix."""
        syms = np.asarray(symbols, dtype=np.int64)
        n = syms.shape[0]
        if n and (syms.min() < 1 or syms.max() > self.m):
            raise DomainError(f"symbols must lie in 1..{self.m}")
        if self.spectral_kind == "diagonal":
            diags = np.log(np.abs(np.diagonal(self.matrices, axis1=1, axis2=2)))
            out = np.zeros((n + 1, self.d))
            if n:
                out[1:] = np.cumsum(diags[syms - 1], axis=0)
            return -np.sort(-out, axis=1)
        if self.spectral_kind == "conformal":
            la = self.map_log_alphas[:, 0]
            out = np.zeros((n + 1, self.d))
            if n:
                out[1:] = np.cumsum(la[syms - 1])[:, None]
            return out
        return self._prefix_log_alphas_generic(syms)

    def map_log_dets(self):
        out = getattr(self, "_map_log_dets", None)
        if out is None:
            out = np.array([np.linalg.slogdet(m)[1] for m in self.matrices])
            self._map_log_dets = out
        return out

    def _prefix_log_alphas_generic(self, syms):
        # k = d is tracked exactly as a running log-determinant; exterior
        # powers 1..d-1 accumulate as renormalized matrix products.
        n = syms.shape[0]
        d = self.d
        accs = [np.eye(comb(d, k)) for k in range(1, d)]
        scales = np.zeros(d - 1)
        log_dets = self.map_log_dets()
        det_acc = 0.0
        out = np.zeros((n + 1, d))
        log_prods = np.zeros(d)
        for j, s in enumerate(syms):
            det_acc += log_dets[s - 1]
            log_prods[d - 1] = det_acc
            for k in range(1, d):
                m = accs[k - 1] @ self.map_compounds(s - 1, k)
                amax = np.abs(m).max()
                if amax == 0.0:
                    raise SingularMatrix("matrix product underflowed to zero")
                if amax < _RENORM_FLOOR:
                    m /= amax
                    scales[k - 1] += log(amax)
                accs[k - 1] = m
                log_prods[k - 1] = scales[k - 1] + _log_sigma_max(m)
            la = np.diff(log_prods, prepend=0.0)
            out[j + 1] = np.sort(la)[::-1]
        return out
