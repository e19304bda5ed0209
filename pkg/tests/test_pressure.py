from itertools import product
from math import cos, exp, log, pi, sin

import numpy as np
import pytest

from affdim.errors import BudgetExceeded, DomainError
from affdim.linalg import AffineIFS, log_phi, singular_values
from affdim.pressure import (
    PressureEvaluator,
    SftSpec,
    affinity_dim,
    exceptional_bound,
    norm_ratio_exponent,
    partition_sum,
)
from conftest import make_random_ifs


def rotation(theta):
    return np.array([[cos(theta), -sin(theta)], [sin(theta), cos(theta)]])


def brute_force_log_sum(ifs, s, n, sft=None):
    """Oracle: full m^n enumeration with per-word spectra."""
    terms = []
    for word in product(range(ifs.m), repeat=n):
        if sft is not None and any(
            not sft.adjacency[a, b] for a, b in zip(word, word[1:])
        ):
            continue
        M = np.eye(ifs.d)
        for i in word:
            M = M @ ifs.matrices[i]
        terms.append(log_phi(singular_values(M).log_alphas, s))
    terms = np.array(terms)
    hi = terms.max()
    return float(hi + np.log(np.exp(terms - hi).sum()))


class TestPartitionSum:
    def test_equal_conformal_closed_form(self):
        # m maps of ratio c: every phi^s(T_I) = c^{ns}
        c, m, d = 1 / 3, 4, 2
        ifs = AffineIFS(np.array([rotation(0.5 * i) * c for i in range(m)]), np.zeros((m, d)))
        for n in (3, 7):
            for s in (0.5, 1.2, 1.9):
                assert partition_sum(ifs, s, n) == pytest.approx(
                    n * log(m * c**s), rel=1e-12
                )

    def test_identical_diagonal_closed_form(self, diag_pair_ifs):
        for n in (4, 9):
            for s in (0.3, 0.8, 1.0):
                expected = n * log(2) + n * s * log(0.4)
                assert partition_sum(diag_pair_ifs, s, n) == pytest.approx(
                    expected, rel=1e-12
                )

    def test_fast_path_equals_brute_force(self):
        ifs = AffineIFS(
            np.array([np.diag([0.3, 0.2]), np.diag([0.25, 0.1])]), np.zeros((2, 2))
        )
        got = partition_sum(ifs, 1.3, 8)
        assert got == pytest.approx(brute_force_log_sum(ifs, 1.3, 8), abs=1e-10)

    def test_generic_path_equals_brute_force(self, rng):
        ifs = make_random_ifs(2, 3, rng)
        for s in (0.6, 1.4):
            got = partition_sum(ifs, s, 5)
            assert got == pytest.approx(brute_force_log_sum(ifs, s, 5), abs=1e-10)

    def test_sft_counts_and_sums(self):
        # golden-mean shift: forbid the word 22
        sft = SftSpec(np.array([[1, 1], [1, 0]]))
        ifs = AffineIFS(np.array([np.diag([0.3, 0.2])] * 2), np.zeros((2, 2)))
        assert sft.word_count(2) == 3 and sft.word_count(3) == 5
        for n in (3, 6):
            got = partition_sum(ifs, 0.9, n, sft=sft)
            assert got == pytest.approx(brute_force_log_sum(ifs, 0.9, n, sft), abs=1e-10)

    def test_strictly_decreasing_in_s(self, diag_triple_ifs):
        ev = PressureEvaluator(diag_triple_ifs, 6)
        vals = [ev.log_sum(s) for s in np.linspace(0, 2, 9)]
        assert np.all(np.diff(vals) < 0)

    def test_subadditive_across_levels(self, rng):
        ifs = make_random_ifs(2, 2, rng)
        for s in (0.5, 1.5):
            a4 = partition_sum(ifs, s, 4)
            a6 = partition_sum(ifs, s, 6)
            a10 = partition_sum(ifs, s, 10)
            assert a10 <= a4 + a6 + 1e-9

    def test_sft_below_full_shift(self, diag_pair_ifs):
        sft = SftSpec(np.array([[1, 1], [1, 0]]))
        for n in (3, 5, 8):
            for s in (0.2, 1.1):
                assert partition_sum(diag_pair_ifs, s, n, sft=sft) <= partition_sum(
                    diag_pair_ifs, s, n
                )

    def test_budget(self, rng):
        ifs = make_random_ifs(2, 3, rng)
        with pytest.raises(BudgetExceeded):
            partition_sum(ifs, 1.0, 30, budget=1000)


class TestAffinityDim:
    def test_conformal_closed_form(self):
        ifs = AffineIFS(
            np.array([rotation(i * pi / 5) / 3 for i in range(4)]), np.zeros((4, 2))
        )
        res = affinity_dim(ifs, tol=1e-7)
        assert res.estimate == pytest.approx(log(4) / log(3), abs=1e-5)
        lo, hi = res.bracket
        assert lo <= log(4) / log(3) <= hi

    def test_identical_diagonal_closed_form(self, diag_pair_ifs):
        res = affinity_dim(diag_pair_ifs, tol=1e-7)
        assert res.estimate == pytest.approx(log(2) / log(2.5), abs=1e-5)

    def test_conformal_above_ambient_dimension(self):
        # 5 maps of ratio 1/2 in the plane: root of 5 (1/2)^s is above 2,
        # where the determinant branch of the singular value function rules
        ifs = AffineIFS(
            np.array([rotation(i) / 2 for i in range(5)]), np.zeros((5, 2))
        )
        res = affinity_dim(ifs, tol=1e-7)
        assert res.estimate == pytest.approx(log(5) / log(2), abs=1e-5)

    def test_single_map_dimension_zero(self):
        ifs = AffineIFS(np.array([np.diag([0.4, 0.3])]), np.zeros((1, 2)))
        res = affinity_dim(ifs)
        assert res.estimate == 0.0

    def test_sft_bracket_from_levels(self, diag_triple_ifs):
        # oracle: exact enumeration roots at n = 6 and n = 12 bracket the
        # subshift dimension from above, monotonely tightening
        sft = SftSpec(np.array([[1, 1, 0], [1, 0, 1], [0, 1, 1]]))
        res = affinity_dim(diag_triple_ifs, sft=sft, n_levels=[6, 8, 12], tol=1e-7)
        lo, hi = res.bracket
        assert lo <= res.estimate <= hi
        uppers = [u for _, u, _ in res.levels]
        assert hi <= min(uppers) + 1e-6
        assert res.estimate <= uppers[0] + 1e-6

    def test_full_shift_matches_conformal_formula_when_below_d(self, diag_triple_ifs):
        # alpha_1 is the only active branch below s = 1
        res = affinity_dim(diag_triple_ifs, tol=1e-7)
        assert res.estimate == pytest.approx(log(3) / log(10 / 3), abs=1e-5)

    def test_bad_tol(self, diag_pair_ifs):
        with pytest.raises(DomainError):
            affinity_dim(diag_pair_ifs, tol=0.0)


class TestExceptionalBounds:
    def test_conformal_style_substitution(self):
        b = exceptional_bound(2, 2, 0.5, 1.5, 0.0)
        assert b.refined == pytest.approx(max(4 - 0.5, 4 + 1.5 - 2 - 0.5))
        assert b.generic == pytest.approx(3.5)

    def test_diagonal_example(self, diag_pair_ifs):
        tau = norm_ratio_exponent(diag_pair_ifs)
        assert tau == pytest.approx(log(0.4) / log(0.2), abs=1e-12)
        b = exceptional_bound(2, 2, 0.5, 1.5, tau)
        assert b.refined == pytest.approx(3.0, abs=1e-12)
        assert b.refined == pytest.approx(max(4 - 0.5 / (1 - tau), 3.0), abs=1e-12)

    def test_refined_never_exceeds_generic_plus_set_term(self):
        for tau in (0.0, 0.3, 0.9):
            b = exceptional_bound(3, 2, 1.0, 2.5, tau)
            assert b.refined >= 6 + 2.5 - 3 - 1.0 - 1e-12

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            exceptional_bound(2, 2, 0.0, 1.5, 0.5)
        with pytest.raises(DomainError):
            exceptional_bound(2, 2, 2.5, 1.5, 0.5)
        with pytest.raises(DomainError):
            exceptional_bound(2, 2, 0.5, 1.5, 1.0)
        with pytest.raises(DomainError):
            exceptional_bound(2, 2, 0.5, 2.0, 0.5)

    def test_norm_ratio_of_conformal_is_one(self):
        ifs = AffineIFS(np.array([rotation(1.0) / 3]), np.zeros((1, 2)))
        assert norm_ratio_exponent(ifs) == pytest.approx(1.0, abs=1e-12)


class TestSftSpec:
    def test_rejects_dead_subshift(self):
        with pytest.raises(DomainError):
            SftSpec(np.zeros((2, 2), dtype=int))

    def test_irreducibility_flag(self):
        assert SftSpec(np.array([[1, 1], [1, 0]])).is_irreducible()
        assert not SftSpec(np.array([[1, 1], [0, 1]])).is_irreducible()
