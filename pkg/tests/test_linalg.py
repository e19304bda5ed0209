import numpy as np
import pytest

from affdim.errors import DomainError, NonContracting, SingularMatrix
from affdim.linalg import (
    AffineIFS,
    compound_matrix,
    jacobi_eigenvalues,
    log_phi,
    operator_norm,
    phi,
    singular_values,
    validate_ifs_matrices,
)
from conftest import make_random_ifs


class TestSingularValues:
    def test_identity(self):
        spec = singular_values(np.eye(2))
        assert np.allclose(spec.alphas, [1.0, 1.0])

    def test_diagonal(self):
        spec = singular_values(np.diag([1 / 3, 1 / 9]))
        assert np.allclose(spec.alphas, [1 / 3, 1 / 9], rtol=1e-14)

    def test_upper_triangular_against_gram_eigenvalues(self):
        # oracle: explicit eigenvalues of the 2x2 Gram matrix
        T = np.array([[0.3, 0.1], [0.0, 0.2]])
        G = T.T @ T
        half = 0.5 * (G[0, 0] + G[1, 1])
        disc = np.sqrt((0.5 * (G[0, 0] - G[1, 1])) ** 2 + G[0, 1] ** 2)
        expected = np.sqrt([half + disc, half - disc])
        spec = singular_values(T)
        assert np.allclose(spec.alphas, expected, rtol=1e-12)
        assert spec.alphas.prod() == pytest.approx(0.06, rel=1e-13)

    def test_product_equals_abs_det(self, rng):
        for d in (1, 2, 3, 4, 5):
            for _ in range(20):
                A = rng.standard_normal((d, d))
                if abs(np.linalg.det(A)) < 1e-6:
                    continue
                spec = singular_values(A)
                det = abs(np.linalg.det(A))
                assert np.exp(spec.log_det_abs) == pytest.approx(det, rel=1e-12)

    def test_singular_matrix_rejected(self):
        with pytest.raises(SingularMatrix):
            singular_values(np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_descending_order(self, rng):
        for _ in range(50):
            spec = singular_values(rng.standard_normal((3, 3)) + 2 * np.eye(3))
            assert np.all(np.diff(spec.log_alphas) <= 1e-12)


class TestJacobi:
    def test_matches_numpy_on_random_symmetric(self, rng):
        for n in (2, 3, 5, 8):
            A = rng.standard_normal((n, n))
            S = A + A.T
            mine = jacobi_eigenvalues(S)
            ref = np.sort(np.linalg.eigvalsh(S))[::-1]
            assert np.allclose(mine, ref, atol=1e-10)


class TestCompound:
    def test_multiplicativity(self, rng):
        A = rng.standard_normal((4, 4))
        B = rng.standard_normal((4, 4))
        for k in (1, 2, 3):
            lhs = compound_matrix(A @ B, k)
            rhs = compound_matrix(A, k) @ compound_matrix(B, k)
            assert np.allclose(lhs, rhs, atol=1e-10)


class TestPhi:
    def test_phi_zero_is_one(self, rng):
        spec = singular_values(rng.standard_normal((3, 3)) + 3 * np.eye(3))
        assert phi(spec.log_alphas, 0.0) == 1.0

    def test_direct_substitution(self):
        spec = singular_values(np.diag([1 / 3, 1 / 9]))
        assert phi(spec.log_alphas, 1.5) == pytest.approx(1 / 9, rel=1e-13)

    def test_example_system_power_law(self):
        # diag(1/3, 1/9) words: phi^s = 3^{-ns} for s in [0, 1]
        from affdim.measures import example_one_system

        ifs, _ = example_one_system(d=2, k=1)
        for n in (1, 5, 40):
            la = ifs.word_log_alphas([1] * n)
            for s in (0.25, 0.5, 1.0):
                assert log_phi(la, s) == pytest.approx(-n * s * np.log(3), rel=1e-13)

    def test_strictly_decreasing_for_contractions(self, rng):
        ifs = make_random_ifs(3, 2, rng)
        la = ifs.word_log_alphas([1, 2, 1])
        grid = np.linspace(0, 3, 31)
        vals = [log_phi(la, s) for s in grid]
        assert np.all(np.diff(vals) < 0)

    def test_log_and_linear_agree(self, rng):
        ifs = make_random_ifs(2, 2, rng)
        la = ifs.word_log_alphas([1, 2, 2, 1])
        for s in (0.0, 0.7, 1.3, 2.0, 2.9):
            assert phi(la, s) == pytest.approx(np.exp(log_phi(la, s)), rel=1e-12)

    def test_submultiplicative_on_random_pairs(self, rng):
        # phi^s(AB) <= phi^s(A) phi^s(B) for every s: checked on 1000 pairs
        d = 2
        for _ in range(1000):
            A = rng.standard_normal((d, d))
            B = rng.standard_normal((d, d))
            if min(abs(np.linalg.det(A)), abs(np.linalg.det(B))) < 1e-6:
                continue
            la_ab = singular_values(A @ B).log_alphas
            la_a = singular_values(A).log_alphas
            la_b = singular_values(B).log_alphas
            for s in np.linspace(0.0, d, 5):
                assert log_phi(la_ab, s) <= log_phi(la_a, s) + log_phi(la_b, s) + 1e-10

    def test_negative_exponent_rejected(self):
        spec = singular_values(np.eye(2))
        with pytest.raises(DomainError):
            log_phi(spec.log_alphas, -0.1)


class TestRatioBounds:
    def test_extension_by_one_symbol(self, rng):
        # alpha_- <= alpha_k(T_{Ii}) / alpha_k(T_I) <= alpha_+ for all k
        for d in (1, 2, 3):
            ifs = make_random_ifs(d, 3, rng)
            for _ in range(10):
                word = rng.integers(1, 4, size=20)
                la = ifs.prefix_log_alphas(word)
                diff = np.diff(la, axis=0)
                assert np.all(diff >= ifs.log_alpha_minus - 1e-8)
                assert np.all(diff <= ifs.log_alpha_plus + 1e-8)


class TestValidation:
    def test_transversal_system(self):
        v = validate_ifs_matrices(np.array([np.diag([0.3, 0.3])] * 2))
        assert v.transversality and not v.warnings

    def test_warns_on_large_norm(self):
        v = validate_ifs_matrices(np.array([np.diag([0.7, 0.3])]))
        assert not v.transversality
        assert len(v.warnings) == 1

    def test_singular_map(self):
        with pytest.raises(SingularMatrix):
            validate_ifs_matrices(np.array([[[1.0, 0.0], [0.0, 0.0]]]))

    def test_expanding_map(self):
        with pytest.raises(NonContracting):
            validate_ifs_matrices(np.array([np.diag([1.1, 0.3])]))

    def test_ifs_attributes(self, diag_pair_ifs):
        assert diag_pair_ifs.alpha_plus == pytest.approx(0.4)
        assert diag_pair_ifs.alpha_minus == pytest.approx(0.2)
        assert diag_pair_ifs.transversality
        assert diag_pair_ifs.spectral_kind == "diagonal"

    def test_dimension_cap(self):
        with pytest.raises(DomainError):
            AffineIFS(np.array([0.1 * np.eye(9)]), np.zeros((1, 9)))


class TestSpectralKinds:
    def test_conformal_detection(self, rng):
        theta = 0.7
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        ifs = AffineIFS(np.array([R / 3, np.eye(2) / 4]), np.zeros((2, 2)))
        assert ifs.spectral_kind == "conformal"

    def test_generic_matches_diagonal(self, rng):
        mats = np.array([np.diag([0.3, 0.2]), np.diag([0.25, 0.1])])
        ifs = AffineIFS(mats, np.zeros((2, 2)))
        word = rng.integers(1, 3, size=30)
        la_fast = ifs.prefix_log_alphas(word)
        la_slow = ifs._prefix_log_alphas_generic(word)
        assert np.allclose(la_fast, la_slow, atol=1e-12)

    def test_long_chain_determinant_identity(self, rng):
        ifs = make_random_ifs(2, 3, rng)
        word = rng.integers(1, 4, size=600)
        la = ifs.word_log_alphas(word)
        expected = sum(np.linalg.slogdet(ifs.matrices[s - 1])[1] for s in word)
        assert la.sum() == pytest.approx(expected, rel=1e-12)

    def test_operator_norm(self):
        assert operator_norm(np.diag([0.4, 0.1])) == pytest.approx(0.4)
