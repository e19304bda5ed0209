"""Partition sums of the singular value function and pressure roots.

The growth exponent of sum_{|I|=n} phi^s(T_I) is decreasing in s; its
root is the affinity dimension of the matrix tuple (restricted sums over
a subshift give the net-measure dimension of that subshift).  At finite
n the averaged log-sum bounds the limit from above (subadditivity), and
a computable lower pressure comes from penalizing each word by its
condition spread, so every estimate ships with an honest bracket.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, exp, inf, log

import numpy as np

from .errors import BudgetExceeded, DomainError
from .linalg import compound_matrix, log_phi

DEFAULT_ENUM_BUDGET = 300_000
DEFAULT_FAST_DEPTH = 64
DEFAULT_GENERIC_DEPTH = 12


@dataclass(frozen=True)
class SftSpec:
    """A subshift of finite type given by a 0/1 transition matrix.

    Words i_1...i_n are allowed when every adjacent pair has a 1 entry.
    Irreducibility is reported but not required.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DomainError("adjacency must be square")
        if not np.all((A == 0) | (A == 1)):
            raise DomainError("adjacency entries must be 0/1")
        alive = np.ones(A.shape[0], dtype=bool)
        changed = True
        while changed:  # prune symbols with no infinite continuation
            changed = False
            for i in np.where(alive)[0]:
                if not ((A[i] == 1) & alive).any():
                    alive[i] = False
                    changed = True
        if not alive.any():
            raise DomainError("subshift admits no word of every length")
        object.__setattr__(self, "adjacency", A.astype(np.int8))

    @property
    def m(self):
        return self.adjacency.shape[0]

    def is_irreducible(self):
        A = self.adjacency.astype(bool)
        reach = A.copy()
        for _ in range(self.m):
            reach = reach | (reach @ A)
        return bool(reach.all())

    def word_count(self, n):
        """Number of allowed words of length n."""
        if n == 0:
            return 1
        v = np.ones(self.m, dtype=object)
        A = self.adjacency.astype(object)
        for _ in range(n - 1):
            v = A @ v
        return int(v.sum())


@dataclass
class PressureSample:
    """One evaluation p_n(s) = (1/n) log sum_{|I|=n} phi^s(T_I).

    ``bracket`` marks that the value bounds the n -> infinity limit from
    above (subadditivity of the log-sums), which holds for full shifts
    and subshifts alike.
    """

    s: float
    n: int
    value: float
    bracket: bool = True


class PressureEvaluator:
    """Partition sums at a fixed word length, reusable across exponents.

    Diagonal and scalar-orthogonal families use a count-vector dynamic
    program (products there depend only on how many times each map
    occurs), which reaches depths like n = 64 at polynomial cost.  The
    generic path enumerates all allowed words once, caches their log
    spectra, and then evaluates any s by a vectorized rescan.
    """

    def __init__(self, ifs, n, sft=None, budget=DEFAULT_ENUM_BUDGET):
        if n < 1:
            raise DomainError("word length must be >= 1")
        if sft is not None and sft.m != ifs.m:
            raise DomainError("subshift alphabet does not match the IFS")
        self.ifs = ifs
        self.n = n
        self.sft = sft
        self.fast = ifs.spectral_kind in ("diagonal", "conformal")
        if self.fast:
            self._build_count_classes()
        else:
            if ifs.m**n > budget:
                raise BudgetExceeded(
                    f"{ifs.m}^{n} = {ifs.m**n} words exceed the budget {budget} "
                    "and no diagonal/conformal fast path applies"
                )
            self._enumerate_words()

    # ----- fast path: count-vector DP ----------------------------------

    def _build_count_classes(self):
        ifs = self.ifs
        if ifs.spectral_kind == "diagonal":
            keys = [tuple(np.diagonal(m)) for m in ifs.matrices]
        else:
            keys = [(float(ifs.map_log_alphas[i, 0]),) for i in range(ifs.m)]
        classes = {}
        for i, key in enumerate(keys):
            classes.setdefault(key, []).append(i)
        self.class_members = list(classes.values())
        self.g = len(self.class_members)
        self.class_of = np.empty(ifs.m, dtype=np.int64)
        for c, members in enumerate(self.class_members):
            for i in members:
                self.class_of[i] = c
        if ifs.spectral_kind == "diagonal":
            self.class_logdiag = np.array(
                [np.log(np.abs(np.diagonal(ifs.matrices[mem[0]])))
                 for mem in self.class_members]
            )
        else:
            self.class_logdiag = np.array(
                [[ifs.map_log_alphas[mem[0], 0]] * ifs.d for mem in self.class_members]
            )
        self._count_table = self._count_words_by_class()

    def _count_words_by_class(self):
        """log #allowed words per class-count vector, via a last-symbol DP."""
        m, n, g = self.ifs.m, self.n, self.g
        A = self.sft.adjacency if self.sft is not None else np.ones((m, m), np.int8)
        # state: (last symbol, counts tuple) -> log word count
        states = {}
        for i in range(m):
            counts = [0] * g
            counts[self.class_of[i]] = 1
            states[(i, tuple(counts))] = 0.0
        for _ in range(n - 1):
            nxt = {}
            for (last, counts), logc in states.items():
                for j in range(m):
                    if not A[last, j]:
                        continue
                    c2 = list(counts)
                    c2[self.class_of[j]] += 1
                    key = (j, tuple(c2))
                    prev = nxt.get(key)
                    nxt[key] = logc if prev is None else _logadd(prev, logc)
            states = nxt
        table = {}
        for (_, counts), logc in states.items():
            prev = table.get(counts)
            table[counts] = logc if prev is None else _logadd(prev, logc)
        return sorted(table.items())  # fixed order: deterministic reductions

    def _class_log_alphas(self, counts):
        la = np.zeros(self.ifs.d)
        for c, cnt in enumerate(counts):
            if cnt:
                la += cnt * self.class_logdiag[c]
        return np.sort(la)[::-1]

    # ----- generic path: one-shot enumeration ---------------------------

    def _enumerate_words(self):
        ifs = self.ifs
        m, d, n = ifs.m, ifs.d, self.n
        A = self.sft.adjacency if self.sft is not None else None
        mats = ifs.matrices.copy()
        last = np.arange(m)
        log_scale = np.zeros(m)
        log_det = np.array([np.linalg.slogdet(M)[1] for M in ifs.matrices])
        cur_logdet = log_det.copy()
        for _ in range(n - 1):
            blocks, lasts, scales, dets = [], [], [], []
            for j in range(m):
                ok = np.ones(last.shape[0], bool) if A is None else A[last, j].astype(bool)
                if not ok.any():
                    continue
                blocks.append(mats[ok] @ ifs.matrices[j])
                lasts.append(np.full(int(ok.sum()), j))
                scales.append(log_scale[ok])
                dets.append(cur_logdet[ok] + log_det[j])
            mats = np.concatenate(blocks)
            last = np.concatenate(lasts)
            log_scale = np.concatenate(scales)
            cur_logdet = np.concatenate(dets)
            amax = np.abs(mats).max(axis=(1, 2))
            mats /= amax[:, None, None]
            log_scale += np.log(amax)
        self._leaf_log_alphas = self._batched_spectra(mats, log_scale, cur_logdet)

    def _batched_spectra(self, mats, log_scale, log_det):
        d = self.ifs.d
        N = mats.shape[0]
        out = np.empty((N, d))
        if d == 1:
            out[:, 0] = log_scale + np.log(np.abs(mats[:, 0, 0]))
            return out
        if d == 2:
            g11 = mats[:, 0, 0] ** 2 + mats[:, 1, 0] ** 2
            g22 = mats[:, 0, 1] ** 2 + mats[:, 1, 1] ** 2
            g12 = mats[:, 0, 0] * mats[:, 0, 1] + mats[:, 1, 0] * mats[:, 1, 1]
            lam = 0.5 * (g11 + g22) + np.hypot(0.5 * (g11 - g22), g12)
            out[:, 0] = log_scale + 0.5 * np.log(lam)
            out[:, 1] = log_det - out[:, 0]
            return out
        from .linalg import _log_sigma_max

        for i in range(N):
            log_prods = np.empty(d)
            log_prods[-1] = log_det[i]
            for k in range(1, d):
                log_prods[k - 1] = k * log_scale[i] + _log_sigma_max(
                    compound_matrix(mats[i], k)
                )
            la = np.diff(log_prods, prepend=0.0)
            out[i] = np.sort(la)[::-1]
        return out

    # ----- evaluations ---------------------------------------------------

    def log_sum(self, s, lower=False):
        """log sum over allowed length-n words of phi^s(T_I).

        With ``lower=True`` each term is damped by (alpha_d/alpha_1)^s of
        its word, which makes (1/n) log of the result a lower bound for
        the pressure (one-block supermultiplicativity).
        """
        if self.fast:
            terms = []
            for counts, logc in self._count_table:
                la = self._class_log_alphas(counts)
                t = logc + log_phi(la, s)
                if lower:
                    t += s * (la[-1] - la[0])
                terms.append(t)
            return _logsumexp_list(terms)
        la = self._leaf_log_alphas
        vals = _log_phi_rows(la, s)
        if lower:
            vals = vals + s * (la[:, -1] - la[:, 0])
        return _pairwise_logsumexp(vals)

    def pressure(self, s, lower=False):
        return PressureSample(s=s, n=self.n, value=self.log_sum(s, lower) / self.n)


def _log_phi_rows(la, s):
    d = la.shape[1]
    if s >= d:
        return (s / d) * la.sum(axis=1)
    k = int(s)
    head = la[:, :k].sum(axis=1) if k else np.zeros(la.shape[0])
    return head + (s - k) * la[:, k]


def _logadd(a, b):
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + np.log1p(exp(lo - hi))


def _logsumexp_list(terms):
    arr = np.asarray(terms, dtype=float)
    hi = arr.max()
    return float(hi + np.log(np.exp(arr - hi).sum()))


def _pairwise_logsumexp(vals):
    """Reduction in a fixed pairwise order, reproducible across runs."""
    arr = np.asarray(vals, dtype=float)
    hi = float(arr.max())
    block = np.exp(arr - hi)
    while block.shape[0] > 1:
        n = block.shape[0]
        half = n // 2
        merged = block[:half] + block[half : 2 * half]
        if n % 2:
            merged = np.concatenate([merged, block[-1:]])
        block = merged
    return hi + log(float(block[0]))


def partition_sum(ifs, s, n, sft=None, budget=DEFAULT_ENUM_BUDGET):
    """log sum_{|I|=n, I allowed} phi^s(T_I)."""
    if s < 0:
        raise DomainError("s must be >= 0")
    return PressureEvaluator(ifs, n, sft, budget).log_sum(s)


@dataclass
class AffinityResult:
    """Root estimate with its honest cross-level bracket.

    The upper end is rigorous: each level's averaged log-sum dominates
    the limit (subadditivity), so every level root bounds the dimension
    from above.  The lower end is the larger of a rigorous
    supermultiplicative floor and a geometric extrapolation of the
    monotone trend of level roots; levels that have already converged
    collapse the bracket onto the root.
    """

    estimate: float
    bracket: tuple
    levels: list  # per-level (n, upper root, lower root)
    samples: list  # PressureSample values probed at the deepest level


def _trend_floor(upper_roots, tol):
    """Extrapolate the decreasing level-root sequence toward its limit."""
    s = upper_roots
    if len(s) < 2:
        return 0.0
    d_last = s[-2] - s[-1]
    if d_last <= tol:
        return s[-1] - tol
    q = 0.5
    if len(s) >= 3 and s[-3] - s[-2] > tol:
        q = d_last / (s[-3] - s[-2])
    q = min(max(q, 0.0), 0.9)
    remaining = d_last * q / (1.0 - q)
    return s[-1] - remaining - tol


def _bisect_root(f, tol, s_hi_start):
    """Root of a strictly decreasing f on [0, inf); 0 when f(0) <= 0."""
    f0 = f(0.0)
    if f0 <= 0.0:
        return 0.0, [(0.0, f0)]
    lo, hi = 0.0, s_hi_start
    probes = [(0.0, f0)]
    fhi = f(hi)
    probes.append((hi, fhi))
    while fhi > 0.0:
        lo, hi = hi, hi * 1.5 + 1.0
        fhi = f(hi)
        probes.append((hi, fhi))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        probes.append((mid, fm))
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), probes


def default_levels(ifs, sft=None, budget=DEFAULT_ENUM_BUDGET):
    if ifs.spectral_kind in ("diagonal", "conformal"):
        return [n for n in (4, 8, 16, 32, DEFAULT_FAST_DEPTH)]
    levels = [n for n in range(2, DEFAULT_GENERIC_DEPTH + 1, 2) if ifs.m**n <= budget]
    if not levels:
        raise BudgetExceeded(f"even n=2 exceeds the enumeration budget {budget}")
    return levels


def affinity_dim(ifs, sft=None, n_levels=None, tol=1e-6, budget=DEFAULT_ENUM_BUDGET):
    """Affinity dimension (or subshift pressure-root dimension) with bracket.

    The estimate is the pressure root at the deepest computed level; the
    bracket combines the tightest upper root across levels (each level's
    averaged log-sum dominates the limit) with the best lower-pressure
    root.  Conformal families collapse the bracket to a point.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    levels = list(n_levels) if n_levels is not None else default_levels(ifs, sft, budget)
    per_level = []
    samples = []
    s_start = ifs.d + 1.0
    for n in sorted(levels):
        ev = PressureEvaluator(ifs, n, sft, budget)
        upper, probes = _bisect_root(lambda s: ev.log_sum(s) / n, tol, s_start)
        lower, _ = _bisect_root(lambda s: ev.log_sum(s, lower=True) / n, tol, s_start)
        per_level.append((n, upper, lower))
        if n == max(levels):
            samples = [PressureSample(s=s, n=n, value=val) for s, val in probes]
    hi = min(u for _, u, _ in per_level) + tol
    floor = max(l for _, _, l in per_level) - tol
    trend = _trend_floor([u for _, u, _ in per_level], tol)
    lo = max(0.0, floor, trend)
    lo = min(lo, hi)
    estimate = min(max(per_level[-1][1], lo), hi)
    return AffinityResult(estimate=estimate, bracket=(lo, hi), levels=per_level,
                          samples=samples)


# ---------------------------------------------------------------------------
# exceptional-set bound calculators
# ---------------------------------------------------------------------------


def norm_ratio_exponent(ifs):
    """min over maps of log alpha_1 / log alpha_d; equals 1 for conformal maps."""
    return float(np.min(ifs.map_log_alphas[:, 0] / ifs.map_log_alphas[:, -1]))


@dataclass(frozen=True)
class ExceptionalBound:
    """Upper bounds on the dimension of the exceptional translation set."""

    generic: float  # dm - delta
    refined: float  # max{dm - delta/(1-tau), dm + dim_M_E - d - delta}


def exceptional_bound(d, m, delta, dim_M_E, tau) -> ExceptionalBound:
    """Hausdorff-dimension bounds for translations with an unusually small
    projected Hausdorff dimension.

    refined = max{dm - delta/(1-tau), dm + dim_M_E - d - delta}, valid
    when dim_M_E < d; the generic bound dm - delta needs no such
    restriction and is emitted for comparison.
    """
    if not 0 < delta < d:
        raise DomainError(f"need 0 < delta < d, got delta={delta}, d={d}")
    if not 0 <= tau < 1:
        raise DomainError(f"need 0 <= tau < 1, got tau={tau}")
    if not dim_M_E < d:
        raise DomainError(f"need dim_M_E < d, got {dim_M_E}")
    if m < 1 or d < 1:
        raise DomainError("need m >= 1 and d >= 1")
    dm = float(d * m)
    refined = max(dm - delta / (1.0 - tau), dm + dim_M_E - d - delta)
    return ExceptionalBound(generic=dm - delta, refined=refined)
