"""r-capacities of symbolic sets by convex energy minimization.

The capacity inverts the minimal kernel energy

    inf over probability vectors mu of the double integral of
    Z_{x wedge y}(r)  d mu(x) d mu(y),

and the key reduction making this computable is depth truncation: the
kernel equals 1 on every prefix of depth >= l = ceil(log r / log
alpha_plus) (all singular values of such prefixes sit below r), so the
infimum over all measures on the set equals the minimum of a quadratic
form over mass vectors on the depth-l cylinders.  Proof: the kernel of
two sequences depends only on their wedge; wedges of depth >= l
contribute the constant 1, so the energy of any measure is a function of
its depth-l marginal alone, and every mass vector on the depth-l
cylinders is such a marginal.

The quadratic form is positive semidefinite (the kernel is a
nonnegative combination of nested block indicators), so the minimum is
found by Frank-Wolfe with away steps and certified by potential
equalization: at the optimum every supported leaf's potential equals the
energy and no leaf's potential falls below it.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, inf, log

import numpy as np

from .errors import BudgetExceeded, DomainError, MassNotNormalized, MaxIterations
from .measures import ScaleGrid, depth_for_radius, tail_statistics

DEFAULT_NODE_CAP = 2_000_000
_POT_REFRESH = 256  # incremental potential updates between full recomputes


class DepthTree:
    """All allowed words up to a fixed depth, as per-level arrays.

    Stores parent pointers, each node's log singular spectrum, and for
    every leaf its ancestor index at every level, which is what the
    hierarchical potential evaluation consumes.
    """

    def __init__(self, ifs, depth, sft=None, node_cap=DEFAULT_NODE_CAP):
        if depth < 0:
            raise DomainError("depth must be >= 0")
        if sft is not None and sft.m != ifs.m:
            raise DomainError("subshift alphabet does not match the IFS")
        total = estimate_node_count(ifs.m, depth, sft)
        if total > node_cap:
            raise BudgetExceeded(
                f"depth-{depth} tree needs ~{total} nodes, cap is {node_cap}"
            )
        self.ifs = ifs
        self.depth = depth
        self.sft = sft
        self._build()

    def _build(self):
        ifs, depth, sft = self.ifs, self.depth, self.sft
        m, d = ifs.m, ifs.d
        diagonal_like = ifs.spectral_kind in ("diagonal", "conformal")
        self.level_parents = [np.zeros(1, dtype=np.int64)]
        self.level_symbols = [np.zeros(1, dtype=np.int64)]
        self.node_log_alphas = [np.zeros((1, d))]
        if diagonal_like:
            if ifs.spectral_kind == "diagonal":
                steps = np.log(np.abs(np.diagonal(ifs.matrices, axis1=1, axis2=2)))
            else:
                steps = np.repeat(ifs.map_log_alphas[:, :1], d, axis=1)
            cum = np.zeros((1, d))
        else:
            mats = np.eye(d)[None, :, :]
            log_scale = np.zeros(1)
            log_det = np.zeros(1)
            map_logdet = np.array([np.linalg.slogdet(M)[1] for M in ifs.matrices])
        last = np.zeros(1, dtype=np.int64) - 1  # root has no symbol
        for level in range(1, depth + 1):
            n_prev = self.level_parents[level - 1].shape[0] if level > 1 else 1
            prev_count = self.node_log_alphas[level - 1].shape[0]
            if sft is None or level == 1:
                parents = np.repeat(np.arange(prev_count), m)
                symbols = np.tile(np.arange(1, m + 1), prev_count)
            else:
                A = sft.adjacency
                rows = A[last - 1]  # allowed successors per previous node
                keep = rows.astype(bool).ravel()
                parents = np.repeat(np.arange(prev_count), m)[keep]
                symbols = np.tile(np.arange(1, m + 1), prev_count)[keep]
            self.level_parents.append(parents)
            self.level_symbols.append(symbols)
            last = symbols
            if diagonal_like:
                cum = cum[parents] + steps[symbols - 1]
                self.node_log_alphas.append(-np.sort(-cum, axis=1))
            else:
                mats = mats[parents] @ ifs.matrices[symbols - 1]
                log_scale = log_scale[parents]
                log_det = log_det[parents] + map_logdet[symbols - 1]
                amax = np.abs(mats).max(axis=(1, 2))
                mats = mats / amax[:, None, None]
                log_scale = log_scale + np.log(amax)
                self.node_log_alphas.append(
                    _batched_log_alphas(mats, log_scale, log_det)
                )
        self.level_sizes = [a.shape[0] for a in self.node_log_alphas]
        self.n_leaves = self.level_sizes[-1]
        anc = np.empty((depth + 1, self.n_leaves), dtype=np.int64)
        anc[depth] = np.arange(self.n_leaves)
        for j in range(depth, 0, -1):
            anc[j - 1] = self.level_parents[j][anc[j]]
        self.leaf_ancestors = anc

    def leaf_words(self):
        """(n_leaves, depth) symbol array, lexicographic in build order."""
        out = np.empty((self.n_leaves, self.depth), dtype=np.int64)
        for j in range(1, self.depth + 1):
            out[:, j - 1] = self.level_symbols[j][self.leaf_ancestors[j]]
        return out

    def kernel_levels(self, r):
        """Per level, the kernel value of every node's word at radius r."""
        if r <= 0:
            raise DomainError("radius must be positive")
        log_r = log(r)
        return [
            np.exp(np.minimum(0.0, log_r - la).sum(axis=1))
            for la in self.node_log_alphas
        ]

    def subtree_sums(self, p):
        sums = [None] * (self.depth + 1)
        sums[self.depth] = np.asarray(p, dtype=float)
        for j in range(self.depth, 0, -1):
            sums[j - 1] = np.bincount(
                self.level_parents[j], weights=sums[j], minlength=self.level_sizes[j - 1]
            )
        return sums

    def potentials(self, p, z_levels):
        """K @ p via level aggregation: O(depth * n_leaves) per call.

        The potential of leaf I sums, over each proper ancestor level j,
        the kernel at the ancestor times the mass meeting I exactly at
        depth j, plus the leaf's own mass (kernel 1 on the diagonal).
        """
        sums = self.subtree_sums(p)
        anc = self.leaf_ancestors
        pot = np.array(p, dtype=float)
        for j in range(self.depth):
            pot += z_levels[j][anc[j]] * (sums[j][anc[j]] - sums[j + 1][anc[j + 1]])
        return pot

    def kernel_column(self, t, z_levels):
        """Column t of the kernel matrix, O(depth * n_leaves)."""
        anc = self.leaf_ancestors
        col = np.full(self.n_leaves, z_levels[0][anc[0, t]])
        for j in range(1, self.depth):
            mask = anc[j] == anc[j, t]
            col[mask] = z_levels[j][anc[j, t]]
        col[t] = 1.0
        return col

    def kernel_matrix(self, r):
        """Dense kernel matrix; quadratic cost, for small trees and tests."""
        z_levels = self.kernel_levels(r)
        K = np.empty((self.n_leaves, self.n_leaves))
        for t in range(self.n_leaves):
            K[:, t] = self.kernel_column(t, z_levels)
        return K


def _batched_log_alphas(mats, log_scale, log_det):
    d = mats.shape[1]
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
    from .linalg import _log_sigma_max, compound_matrix

    for i in range(N):
        log_prods = np.empty(d)
        log_prods[-1] = log_det[i]
        for k in range(1, d):
            log_prods[k - 1] = k * log_scale[i] + _log_sigma_max(
                compound_matrix(mats[i], k)
            )
        out[i] = np.sort(np.diff(log_prods, prepend=0.0))[::-1]
    return out


def estimate_node_count(m, depth, sft=None):
    if sft is None:
        return (m ** (depth + 1) - 1) // (m - 1) if m > 1 else depth + 1
    return sum(sft.word_count(n) for n in range(depth + 1))


def tree_for_radius(ifs, r, sft=None, node_cap=DEFAULT_NODE_CAP):
    """Depth-l tree with l = ceil(log r / log alpha_plus)."""
    return DepthTree(ifs, depth_for_radius(ifs, r), sft=sft, node_cap=node_cap)


# ---------------------------------------------------------------------------
# energy and its minimization
# ---------------------------------------------------------------------------


def _check_simplex(p, n):
    p = np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise MassNotNormalized(f"expected {n} masses, got shape {p.shape}")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise MassNotNormalized("masses must be nonnegative and sum to 1")
    return np.maximum(p, 0.0)


def energy(tree: DepthTree, r, p):
    """The quadratic kernel energy of a leaf-mass vector at radius r."""
    p = _check_simplex(p, tree.n_leaves)
    z_levels = tree.kernel_levels(r)
    return float(p @ tree.potentials(p, z_levels))


@dataclass
class CapacitySolution:
    """Minimizing masses with the potential-equalization certificate.

    On the support the potential equals the energy up to
    ``support_residual``; everywhere the potential exceeds the energy
    minus a tolerance, with ``min_slack`` the smallest signed excess.
    """

    r: float
    depth: int
    masses: np.ndarray
    energy: float
    capacity: float
    gap: float
    support_residual: float
    min_slack: float
    iterations: int
    converged: bool


def min_energy(tree: DepthTree, r, tol=1e-8, max_iter=100_000) -> CapacitySolution:
    """Minimize the kernel energy over the simplex by away-step Frank-Wolfe.

    Exact line search (the objective is quadratic); terminates when the
    optimality gap energy - min(potential) drops below ``tol``.  Raises
    MaxIterations with the best iterate attached if the cap is hit.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    L = tree.n_leaves
    z_levels = tree.kernel_levels(r)
    p = np.full(L, 1.0 / L)
    pot = tree.potentials(p, z_levels)
    it = 0
    for it in range(1, max_iter + 1):
        e_val = float(p @ pot)
        gap = e_val - float(pot.min())
        if gap < tol:
            return _solution(tree, r, p, pot, e_val, gap, it, True)
        s = int(np.argmin(pot))
        support = np.where(p > 1e-15)[0]
        a = int(support[np.argmax(pot[support])])
        slope_fw = pot[s] - e_val  # half the directional derivative
        slope_away = e_val - pot[a]
        use_fw = slope_fw <= slope_away
        if use_fw:
            col = tree.kernel_column(s, z_levels)
            dir_pot = col - pot
            slope = slope_fw
            curvature = 1.0 - 2.0 * pot[s] + e_val
            gamma_max = 1.0
        else:
            col = tree.kernel_column(a, z_levels)
            dir_pot = pot - col
            slope = slope_away
            curvature = e_val - 2.0 * pot[a] + 1.0
            gamma_max = p[a] / (1.0 - p[a]) if p[a] < 1.0 else 1.0
        if curvature <= 0.0:
            gamma = gamma_max
        else:
            gamma = min(gamma_max, max(0.0, -slope / curvature))
        if gamma <= 0.0:
            return _solution(tree, r, p, pot, e_val, gap, it, gap < tol)
        if use_fw:
            p *= 1.0 - gamma
            p[s] += gamma
        else:
            p *= 1.0 + gamma
            p[a] -= gamma
            p[a] = max(p[a], 0.0)
        pot += gamma * dir_pot
        if it % _POT_REFRESH == 0:
            p = np.maximum(p, 0.0)
            p /= p.sum()
            pot = tree.potentials(p, z_levels)
    e_val = float(p @ pot)
    gap = e_val - float(pot.min())
    best = _solution(tree, r, p, pot, e_val, gap, it, False)
    raise MaxIterations(
        f"Frank-Wolfe gap {gap:.3e} above tol {tol:.3e} after {max_iter} iterations",
        solution=best,
    )


def _solution(tree, r, p, pot, e_val, gap, iterations, converged):
    pot = tree.potentials(p, tree.kernel_levels(r))  # certificate from fresh values
    e_val = float(p @ pot)
    support = p > 1e-12
    return CapacitySolution(
        r=float(r),
        depth=tree.depth,
        masses=p.copy(),
        energy=e_val,
        capacity=1.0 / e_val,
        gap=e_val - float(pot.min()),
        support_residual=float(np.abs(pot[support] - e_val).max()) if support.any() else 0.0,
        min_slack=float((pot - e_val).min()),
        iterations=iterations,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# capacity dimensions
# ---------------------------------------------------------------------------


@dataclass
class CapacityDimsReport:
    """log C_r / (-log r) trace over a radius grid with tail statistics."""

    radii: np.ndarray
    depths: np.ndarray
    capacities: np.ndarray  # NaN where the radius was skipped
    slopes: np.ndarray
    lower_estimate: float
    upper_estimate: float
    skipped: list  # radii whose tree exceeded the node cap


def capacity_dims(
    ifs, grid: ScaleGrid, sft=None, tol=1e-8, node_cap=DEFAULT_NODE_CAP, max_iter=100_000
) -> CapacityDimsReport:
    """Capacity trace over a radius grid; radii needing oversized trees are
    skipped and flagged rather than silently extrapolated."""
    radii = grid.radii
    caps = np.full(radii.shape, np.nan)
    depths = np.empty(radii.shape, dtype=np.int64)
    skipped = []
    trees = {}
    for i, r in enumerate(radii):
        ell = depth_for_radius(ifs, float(r))
        depths[i] = ell
        if estimate_node_count(ifs.m, ell, sft) > node_cap:
            skipped.append(float(r))
            continue
        tree = trees.get(ell)
        if tree is None:
            tree = DepthTree(ifs, ell, sft=sft, node_cap=node_cap)
            trees[ell] = tree
        sol = min_energy(tree, float(r), tol=tol, max_iter=max_iter)
        caps[i] = sol.capacity
    with np.errstate(invalid="ignore", divide="ignore"):
        slopes = np.log(caps) / (-np.log(radii))
    ok = ~np.isnan(slopes)
    if ok.any():
        lo, hi = tail_statistics(slopes[ok])
    else:
        lo = hi = float("nan")
    return CapacityDimsReport(
        radii=radii,
        depths=depths,
        capacities=caps,
        slopes=slopes,
        lower_estimate=lo,
        upper_estimate=hi,
        skipped=skipped,
    )
