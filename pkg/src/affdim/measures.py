"""Cylinder measures on sequence space and their per-point scaling data.

A tree measure assigns a mass to every cylinder, consistently: the mass
of a word equals the sum over its one-symbol extensions.  On top of that
sit the quantities driving projection dimensions:

* the cylinder exponent: the t solving phi^t(T_{x|n}) = mass([x|n]),
  whose liminf over n controls lower local dimensions of projections;
* the transversality kernel Z_I(r) = prod_k min(r, alpha_k)/alpha_k of
  the prefix matrix, and the potential G(x, r) = integral of Z over the
  wedge with a second sequence, whose log-log limsup controls upper
  local dimensions.

Limits are never claimed at finite scale: estimators return the full
trace plus tail statistics over a trailing window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, exp, inf, log

import numpy as np

from .errors import DomainError, WordTooShort
from .linalg import log_phi
from .words import as_symbols

LOG3 = log(3.0)


# ---------------------------------------------------------------------------
# scale grids and trace reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaleGrid:
    """Geometric radius grid r_n = gamma^n for n in n_min..n_max."""

    gamma: float = 0.5
    n_min: int = 1
    n_max: int = 40

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must be in (0,1), got {self.gamma}")
        if self.n_max < self.n_min:
            raise DomainError("n_max must be >= n_min")

    @property
    def exponents(self):
        return np.arange(self.n_min, self.n_max + 1)

    @property
    def radii(self):
        return self.gamma ** self.exponents.astype(float)

    @property
    def log_radii(self):
        return self.exponents * log(self.gamma)

    @classmethod
    def for_ifs(cls, ifs, gamma=0.5, n_min=1, depth_cap=2000):
        """Deepest grid whose finest radius keeps the word-depth need under the cap."""
        # depth needed at radius r is ceil(log r / log alpha_plus)
        n_max = int((depth_cap * -ifs.log_alpha_plus) / -log(gamma))
        n_max = max(n_min, n_max)
        return cls(gamma=gamma, n_min=n_min, n_max=n_max)

    def depth_required(self, ifs):
        """Word depth needed by the finest radius."""
        return depth_for_radius(ifs, float(self.radii.min()))


def depth_for_radius(ifs, r):
    """Smallest integer l with alpha_plus^l <= r (0 when r >= 1)."""
    if r <= 0.0:
        raise DomainError(f"radius must be positive, got {r}")
    if r >= 1.0:
        return 0
    return max(0, ceil(log(r) / ifs.log_alpha_plus))


def tail_statistics(values, tail_fraction=0.25):
    """(tail min, tail max) over the trailing window of a trace."""
    vals = np.asarray(values, dtype=float)
    n = vals.shape[0]
    k = max(1, int(round(n * tail_fraction)))
    tail = vals[n - k :]
    return float(np.min(tail)), float(np.max(tail))


@dataclass
class TraceReport:
    """A log-log trace with tail liminf/limsup estimates."""

    exponents: np.ndarray
    radii: np.ndarray
    log_values: np.ndarray
    slopes: np.ndarray
    liminf_estimate: float
    limsup_estimate: float
    tail_fraction: float = 0.25


# ---------------------------------------------------------------------------
# measure families
# ---------------------------------------------------------------------------


class TreeMeasure:
    """Base class: a consistent cylinder-mass function on {1..m}^N.

    Subclasses implement ``log_mass_prefixes`` (log masses along a word,
    -inf for mass zero) and ``sample_paths``.  Values are immutable after
    construction; evaluation is reentrant.
    """

    m: int
    kind: str

    def log_mass_prefixes(self, word):
        raise NotImplementedError

    def log_mass(self, word):
        return float(self.log_mass_prefixes(word)[-1])

    def mass(self, word):
        return exp(self.log_mass(word)) if self.log_mass(word) > -inf else 0.0

    def sample_paths(self, n_paths, depth, rng):
        """(n_paths, depth) array of 1-based symbols drawn i.i.d. from the measure.

        Sampling conditions on positive mass, so zero-mass cylinders are
        never entered.
        """
        raise NotImplementedError

    def consistency_defect(self, word):
        """|mass(I) - sum_j mass(Ij)|; zero for any consistent measure."""
        syms = list(as_symbols(word))
        total = sum(self.mass(syms + [j]) for j in range(1, self.m + 1))
        return abs(self.mass(syms) - total)


class BernoulliMeasure(TreeMeasure):
    """Product measure with a fixed probability vector per level."""

    kind = "bernoulli"

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise DomainError("probs must be a 1-D vector")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("probs must be a probability vector")
        self.m = probs.size
        self.probs = probs
        with np.errstate(divide="ignore"):
            self._log_p = np.log(probs)

    def log_mass_prefixes(self, word):
        syms = as_symbols(word)
        out = np.zeros(syms.shape[0] + 1)
        if syms.shape[0]:
            out[1:] = np.cumsum(self._log_p[syms - 1])
        return out

    def sample_paths(self, n_paths, depth, rng):
        return rng.choice(np.arange(1, self.m + 1), size=(n_paths, depth), p=self.probs)


class MarkovMeasure(TreeMeasure):
    """Markov measure from a row-stochastic transition matrix and initial vector."""

    kind = "markov"

    def __init__(self, transition, initial):
        P = np.asarray(transition, dtype=float)
        p0 = np.asarray(initial, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DomainError("transition must be square")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise DomainError("transition rows must be probability vectors")
        if p0.shape != (P.shape[0],) or np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise DomainError("initial must be a probability vector matching transition")
        self.m = P.shape[0]
        self.transition = P
        self.initial = p0
        with np.errstate(divide="ignore"):
            self._log_P = np.log(P)
            self._log_p0 = np.log(p0)

    def log_mass_prefixes(self, word):
        syms = as_symbols(word)
        out = np.zeros(syms.shape[0] + 1)
        if syms.shape[0]:
            steps = np.empty(syms.shape[0])
            steps[0] = self._log_p0[syms[0] - 1]
            if syms.shape[0] > 1:
                steps[1:] = self._log_P[syms[:-1] - 1, syms[1:] - 1]
            out[1:] = np.cumsum(steps)
        return out

    def sample_paths(self, n_paths, depth, rng):
        out = np.empty((n_paths, depth), dtype=np.int64)
        out[:, 0] = rng.choice(np.arange(1, self.m + 1), size=n_paths, p=self.initial)
        for j in range(1, depth):
            u = rng.random(n_paths)
            cdf = np.cumsum(self.transition[out[:, j - 1] - 1], axis=1)
            out[:, j] = 1 + (u[:, None] > cdf).sum(axis=1)
        return out


class UniformSftMeasure(MarkovMeasure):
    """Uniform extension on a subshift of finite type.

    From each symbol the next one is uniform over the allowed successors
    (per-level normalization), which is the consistent realization of
    "uniform on the SFT".  Symbols without infinite continuation are
    pruned before normalizing.
    """

    kind = "sft_uniform"

    def __init__(self, adjacency):
        A = np.asarray(adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DomainError("adjacency must be square")
        if not np.all((A == 0) | (A == 1)):
            raise DomainError("adjacency entries must be 0/1")
        alive = self._surviving_symbols(A)
        if not alive.any():
            raise DomainError("subshift admits no infinite path")
        m = A.shape[0]
        P = np.zeros((m, m))
        for i in range(m):
            if alive[i]:
                succ = np.where((A[i] == 1) & alive)[0]
                P[i, succ] = 1.0 / succ.size
            else:
                P[i, i] = 1.0  # dead symbols never start, row kept stochastic
        init = alive.astype(float) / alive.sum()
        super().__init__(P, init)
        self.kind = "sft_uniform"
        self.adjacency = A.astype(np.int8)

    @staticmethod
    def _surviving_symbols(A):
        alive = np.ones(A.shape[0], dtype=bool)
        changed = True
        while changed:
            changed = False
            for i in np.where(alive)[0]:
                if not ((A[i] == 1) & alive).any():
                    alive[i] = False
                    changed = True
        return alive


class VariableProductMeasure(TreeMeasure):
    """Product measure whose probability vector varies with the level."""

    kind = "variable_product"

    def __init__(self, m, level_probs):
        """``level_probs(j)`` gives the vector used at level j (1-based)."""
        self.m = m
        self.level_probs = level_probs

    def _log_p(self, j):
        probs = np.asarray(self.level_probs(j), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(probs)

    def log_mass_prefixes(self, word):
        syms = as_symbols(word)
        out = np.zeros(syms.shape[0] + 1)
        for j, s in enumerate(syms, start=1):
            out[j] = out[j - 1] + self._log_p(j)[s - 1]
        return out

    def sample_paths(self, n_paths, depth, rng):
        out = np.empty((n_paths, depth), dtype=np.int64)
        for j in range(1, depth + 1):
            probs = np.asarray(self.level_probs(j), dtype=float)
            out[:, j - 1] = rng.choice(np.arange(1, self.m + 1), size=n_paths, p=probs)
        return out


class ExampleOneMeasure(VariableProductMeasure):
    """The variable-product measure on the block-scheduled subset of {1..3^{2k}}^N.

    The alphabet at level j is one of three nested sets, driven by the
    block schedule M_i = 8^i:

    * the middle alphabet {1..3^{2k}} on j in [M_i+1, (9/8)M_i],
    * the singleton {1} on j in [(9/8)M_i+1, (5/4)M_i],
    * the base alphabet {1..3^k} everywhere else.

    All cylinder masses are powers of 3 with integer exponents, so they
    are carried here as exact integers (multiples of log 3) and the
    scaling exponents come out as exact rationals.  Pairs with the
    diagonal system diag(1/3 x k, 1/9 x (d-k)).
    """

    kind = "variable_product"

    def __init__(self, d=2, k=1):
        if not 1 <= k <= d - 1:
            raise DomainError(f"need 1 <= k <= d-1, got k={k}, d={d}")
        self.d = d
        self.k = k
        m = 3 ** (2 * k)
        super().__init__(m, self._probs_at)
        self.base_size = 3**k

    # block schedule -----------------------------------------------------

    def level_alphabet_size(self, j):
        """#B_j: 3^{2k} in the growth block, 1 in the freeze block, else 3^k."""
        M = 8
        while M < j:
            if j <= (9 * M) // 8:
                return self.m
            if j <= (5 * M) // 4:
                return 1
            M *= 8
        return self.base_size

    def _probs_at(self, j):
        size = self.level_alphabet_size(j)
        probs = np.zeros(self.m)
        probs[:size] = 1.0 / size
        return probs

    def mass_exponent(self, j):
        """Integer e with mass([x|j]) = 3^{-e} for any x in the support."""
        M = 8
        while M < j:
            if j <= (9 * M) // 8:
                return self.k * M + 2 * self.k * (j - M)
            if j <= (5 * M) // 4:
                return (5 * self.k * M) // 4
            M *= 8
        return self.k * j

    def in_support(self, word):
        syms = as_symbols(word)
        return all(s <= self.level_alphabet_size(j) for j, s in enumerate(syms, 1))

    def log_mass_prefixes(self, word):
        syms = as_symbols(word)
        out = np.zeros(syms.shape[0] + 1)
        dead = False
        for j, s in enumerate(syms, start=1):
            if dead or s > self.level_alphabet_size(j):
                dead = True
                out[j] = -inf
            else:
                out[j] = -self.mass_exponent(j) * LOG3
        return out

    def sample_paths(self, n_paths, depth, rng):
        out = np.empty((n_paths, depth), dtype=np.int64)
        for j in range(1, depth + 1):
            size = self.level_alphabet_size(j)
            out[:, j - 1] = rng.integers(1, size + 1, size=n_paths)
        return out

    # exact scaling exponents -------------------------------------------

    def exponent_exact(self, n):
        """The exact rational t with phi^t(T_{x|n}) = mass([x|n]).

        The matrices are diag(1/3 repeated k, 1/9 repeated d-k), so in
        log-3 units the prefix spectrum at depth n is (n,...,n,2n,...,2n)
        and the inversion is pure rational arithmetic.
        """
        if n < 1:
            raise DomainError("n must be >= 1")
        c = self.mass_exponent(n)  # mass = 3^{-c}
        la = [n] * self.k + [2 * n] * (self.d - self.k)  # alpha_j = 3^{-la[j]}
        cum = np.concatenate([[0], np.cumsum(la)])  # phi^j = 3^{-cum[j]}
        if c >= cum[-1]:
            return Fraction(self.d * c, int(cum[-1]))
        for j in range(self.d):
            if cum[j] <= c <= cum[j + 1]:
                return j + Fraction(c - int(cum[j]), la[j])
        raise AssertionError("unreachable: exponent outside [0, d] range")

    def matrices(self):
        rho = np.array([1.0 / 3.0] * self.k + [1.0 / 9.0] * (self.d - self.k))
        return np.array([np.diag(rho)] * self.m)


def example_one_system(d=2, k=1, translations=None):
    """(AffineIFS, ExampleOneMeasure) for the block-scheduled diagonal family."""
    from .linalg import AffineIFS

    mu = ExampleOneMeasure(d=d, k=k)
    if translations is None:
        translations = np.zeros((mu.m, d))
    return AffineIFS(mu.matrices(), translations), mu


# ---------------------------------------------------------------------------
# per-point quantities
# ---------------------------------------------------------------------------


def cylinder_exponent(mu, ifs, word, n=None):
    """The t in [0, inf] with phi^t(T_{x|n}) = mass([x|n]).

    Piecewise-log-linear inversion: with k chosen so that
    phi^{k+1} <= mass <= phi^k, returns
    k + (log mass - log phi^k) / log alpha_{k+1}; masses below phi^d give
    d * log(mass) / log|det|.  Zero mass maps to +inf.
    """
    syms = as_symbols(word)
    if n is None:
        n = syms.shape[0]
    if n > syms.shape[0]:
        raise WordTooShort(n, syms.shape[0])
    log_mass = float(mu.log_mass_prefixes(syms[:n])[-1])
    la = ifs.word_log_alphas(syms[:n])
    return _invert_exponent(la, log_mass)


def _invert_exponent(log_alphas, log_mass):
    if log_mass == -inf:
        return inf
    d = log_alphas.shape[0]
    cum = np.concatenate([[0.0], np.cumsum(log_alphas)])  # log phi^k at integers
    if log_mass >= cum[0]:  # mass >= 1 only at the empty word
        return 0.0
    if log_mass <= cum[-1]:
        if cum[-1] >= 0.0:
            raise DomainError("exponent undefined for a non-contracting word")
        return d * log_mass / float(cum[-1])
    k = int(np.searchsorted(-cum, -log_mass, side="right")) - 1
    k = min(max(k, 0), d - 1)
    return k + (log_mass - float(cum[k])) / float(log_alphas[k])


def cylinder_exponent_trace(mu, ifs, word, n_max, tail_fraction=0.25):
    """(liminf estimate, limsup estimate, trace of exponents for n = 1..n_max).

    The estimates are the min/max over the trailing window of the trace;
    the limits themselves are not finitely computable, so the full trace
    is returned alongside.
    """
    syms = as_symbols(word)
    if n_max > syms.shape[0]:
        raise WordTooShort(n_max, syms.shape[0])
    syms = syms[:n_max]
    la = ifs.prefix_log_alphas(syms)
    log_masses = mu.log_mass_prefixes(syms)
    trace = np.array(
        [_invert_exponent(la[n], float(log_masses[n])) for n in range(1, n_max + 1)]
    )
    lo, hi = tail_statistics(trace, tail_fraction)
    return lo, hi, trace


# transversality kernel -----------------------------------------------------


def log_transversality_kernel(ifs, word, r):
    """log Z_I(r) = sum_k log( min(r, alpha_k(T_I)) / alpha_k(T_I) )."""
    return _log_z_product(ifs.word_log_alphas(as_symbols(word)), log(_check_radius(r)))


def transversality_kernel(ifs, word, r):
    """Z_I(r) in (0, 1]; equals 1 once r >= alpha_1(T_I)."""
    return exp(log_transversality_kernel(ifs, word, r))


def _check_radius(r):
    if r <= 0:
        raise DomainError(f"radius must be positive, got {r}")
    return float(r)


def _log_z_product(log_alphas, log_r):
    return float(np.minimum(0.0, log_r - log_alphas).sum())


def _log_z_min_formula(log_alphas, log_r):
    """min over k = 0..d of r^k / phi^k, in log domain."""
    cum = np.concatenate([[0.0], np.cumsum(log_alphas)])
    k = np.arange(log_alphas.shape[0] + 1)
    return float(np.min(k * log_r - cum))


def _log_z_reciprocal(log_alphas, log_r):
    """-log of prod_k max(r, alpha_k)/r."""
    return -float((np.maximum(log_r, log_alphas) - log_r).sum())


def kernel_formula_spread(ifs, word, r):
    """Max pairwise gap between the product, min, and reciprocal kernel forms."""
    la = ifs.word_log_alphas(as_symbols(word))
    lr = log(_check_radius(r))
    vals = [_log_z_product(la, lr), _log_z_min_formula(la, lr), _log_z_reciprocal(la, lr)]
    return max(vals) - min(vals)


# wedge potential ------------------------------------------------------------


def log_kernel_potential(mu, ifs, word, r):
    """log G(x, r) where G integrates the transversality kernel over the wedge.

    The integral collapses to a finite sum because the kernel is 1 on all
    prefixes of depth >= l = ceil(log r / log alpha_plus):

        G = sum_{j < l} Z_{x|j}(r) (mass_j - mass_{j+1}) + Z_{x|l}(r) mass_l.

    Evaluated fully in log domain; the linear-domain value underflows for
    very small radii.
    """
    r = _check_radius(r)
    syms = as_symbols(word)
    ell = depth_for_radius(ifs, r)
    if syms.shape[0] < ell:
        raise WordTooShort(ell, syms.shape[0])
    syms = syms[:ell]
    la = ifs.prefix_log_alphas(syms)  # (ell+1, d)
    log_masses = mu.log_mass_prefixes(syms)
    log_r = log(r)
    log_z = np.minimum(0.0, log_r - la).sum(axis=1)
    terms = []
    for j in range(ell):
        diff = _log_diff(log_masses[j], log_masses[j + 1])
        if diff > -inf:
            terms.append(log_z[j] + diff)
    if log_masses[ell] > -inf:
        terms.append(log_z[ell] + log_masses[ell])
    if not terms:
        raise DomainError("zero-mass word: potential undefined")
    return _logsumexp(np.array(terms))


def kernel_potential(mu, ifs, word, r):
    """G(x, r) in (0, 1]; monotone nondecreasing in r."""
    return exp(log_kernel_potential(mu, ifs, word, r))


def _log_diff(la, lb):
    """log(exp(la) - exp(lb)) for la >= lb; -inf when equal."""
    if lb == -inf:
        return la
    if lb >= la:
        return -inf
    return la + np.log1p(-exp(lb - la))


def _logsumexp(arr):
    hi = float(np.max(arr))
    if hi == -inf:
        return -inf
    return hi + log(float(np.exp(arr - hi).sum()))


def potential_dim_trace(mu, ifs, word, grid: ScaleGrid, tail_fraction=0.25):
    """Trace of log G(x, r) / log r over the grid with tail limsup statistics.

    The limsup estimate (running max over the trailing window) tracks the
    log-log upper exponent of the potential, which for typical
    translations equals the upper local dimension of the projection at
    the coded point.
    """
    radii = grid.radii
    log_radii = grid.log_radii
    log_vals = np.array([log_kernel_potential(mu, ifs, word, r) for r in radii])
    slopes = log_vals / log_radii
    lo, hi = tail_statistics(slopes, tail_fraction)
    return TraceReport(
        exponents=grid.exponents,
        radii=radii,
        log_values=log_vals,
        slopes=slopes,
        liminf_estimate=lo,
        limsup_estimate=hi,
        tail_fraction=tail_fraction,
    )


# essential bounds -----------------------------------------------------------


@dataclass
class EssentialBounds:
    """Empirical essential bounds of the scaling exponents over sampled paths."""

    under_S: float
    over_S: float
    under_D: float
    over_D: float
    quantiles_S: tuple  # (1%, 99%) of per-path liminf estimates
    quantiles_D: tuple  # (1%, 99%) of per-path limsup estimates
    per_path_S: np.ndarray
    per_path_D: np.ndarray


def essential_exponent_bounds(
    mu, ifs, n_paths, n_max, rng, grid=None, tail_fraction=0.25
):
    """Min/max (and 1%/99% quantiles) over mu-sampled paths of the
    liminf-exponent and potential-limsup estimates."""
    if grid is None:
        gamma = exp(ifs.log_alpha_plus)
        grid = ScaleGrid(gamma=gamma, n_min=max(1, n_max // 4), n_max=n_max)
    paths = mu.sample_paths(n_paths, max(n_max, grid.depth_required(ifs)), rng)
    s_vals = np.empty(n_paths)
    d_vals = np.empty(n_paths)
    for i in range(n_paths):
        lo, _, _ = cylinder_exponent_trace(mu, ifs, paths[i], n_max, tail_fraction)
        s_vals[i] = lo
        rep = potential_dim_trace(mu, ifs, paths[i], grid, tail_fraction)
        d_vals[i] = rep.limsup_estimate
    return EssentialBounds(
        under_S=float(np.min(s_vals)),
        over_S=float(np.max(s_vals)),
        under_D=float(np.min(d_vals)),
        over_D=float(np.max(d_vals)),
        quantiles_S=(float(np.quantile(s_vals, 0.01)), float(np.quantile(s_vals, 0.99))),
        quantiles_D=(float(np.quantile(d_vals, 0.01)), float(np.quantile(d_vals, 0.99))),
        per_path_S=s_vals,
        per_path_D=d_vals,
    )
