from math import log

import numpy as np
import pytest

from affdim.errors import DomainError
from affdim.linalg import AffineIFS
from affdim.measures import BernoulliMeasure, ScaleGrid
from affdim.orthproj import (
    Subspace,
    exact_dim_criterion,
    kernel_slope_at,
    random_subspace,
    smoothed_ball_mass,
)
from affdim.projection import PointCloud, local_dims_at, project_cloud


def cantor_cloud_2d(n=100_000, seed=2):
    rng = np.random.default_rng(seed)
    ifs = AffineIFS(np.array([[[1 / 3.0]], [[1 / 3.0]]]), np.array([[0.0], [2 / 3.0]]))
    mu = BernoulliMeasure([0.5, 0.5])
    line = project_cloud(ifs, ifs.translations, mu, n, 30, rng)
    return PointCloud(points=np.column_stack([line.points[:, 0], np.zeros(n)]))


class TestRandomSubspace:
    def test_angle_uniform_on_circle(self):
        # rotation invariance oracle: chi-squared on 12 angular bins
        rng = np.random.default_rng(7)
        n = 10_000
        angles = np.empty(n)
        for i in range(n):
            v = random_subspace(2, 1, rng).basis[:, 0]
            angles[i] = np.arctan2(v[1], v[0])
        counts, _ = np.histogram(angles, bins=12, range=(-np.pi, np.pi))
        expected = n / 12
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < 35.0  # 11 dof, far beyond the 99.9% quantile only on bugs

    def test_deterministic(self):
        v1 = random_subspace(5, 2, np.random.default_rng(3))
        v2 = random_subspace(5, 2, np.random.default_rng(3))
        assert np.array_equal(v1.basis, v2.basis)

    def test_orthonormal(self, rng):
        for _ in range(20):
            V = random_subspace(4, 2, rng)
            assert np.allclose(V.basis.T @ V.basis, np.eye(2), atol=1e-12)

    def test_equal_dims_rejected(self, rng):
        with pytest.raises(DomainError):
            random_subspace(3, 3, rng)

    def test_projection_contracts_distances(self, rng):
        V = random_subspace(3, 2, rng)
        pts = rng.standard_normal((50, 3))
        coords = V.coordinates(pts)
        for _ in range(20):
            i, j = rng.integers(0, 50, 2)
            assert (
                np.linalg.norm(coords[i] - coords[j])
                <= np.linalg.norm(pts[i] - pts[j]) + 1e-12
            )


class TestSmoothedBallMass:
    def test_point_mass_at_center(self):
        cloud = PointCloud(points=[[1.0, 2.0]])
        assert smoothed_ball_mass(cloud, [1.0, 2.0], 0.1, 1) == 1.0

    def test_two_atoms(self):
        cloud = PointCloud(points=[[0.0], [1.0]])
        for r in (0.5, 0.25):
            for m in (1, 2):
                expected = 0.5 + 0.5 * r**m
                assert smoothed_ball_mass(cloud, [0.0], r, m) == pytest.approx(expected)

    def test_radius_beyond_diameter(self, rng):
        pts = rng.random((500, 2))
        cloud = PointCloud(points=pts)
        assert smoothed_ball_mass(cloud, pts[0], 5.0, 1) == pytest.approx(1.0)

    def test_dominates_ball_mass(self, rng):
        pts = rng.random((2000, 2))
        cloud = PointCloud(points=pts)
        w = cloud.point_weights()
        for _ in range(20):
            x = pts[rng.integers(0, 2000)]
            r = float(rng.uniform(0.05, 0.5))
            ball = w[np.linalg.norm(pts - x, axis=1) <= r].sum()
            assert smoothed_ball_mass(cloud, x, r, 1) >= ball - 1e-12


class TestExactDimCriterion:
    def test_full_square_condition_i(self, rng):
        cloud = PointCloud(points=rng.random((100_000, 2)))
        grid = ScaleGrid(gamma=0.5, n_min=3, n_max=9)
        v = exact_dim_criterion(cloud, 1, grid, rng, n_centers=30)
        assert v.condition_i
        assert v.exact_dimensional

    def test_cantor_condition_ii(self):
        rng = np.random.default_rng(4)
        cloud = cantor_cloud_2d()
        grid = ScaleGrid(gamma=0.5, n_min=4, n_max=12)
        v = exact_dim_criterion(cloud, 1, grid, rng, n_centers=40)
        assert v.condition_ii and not v.condition_i
        assert v.s_estimate == pytest.approx(log(2) / log(3), abs=0.1)

    def test_two_atom_cloud(self, rng):
        cloud = PointCloud(points=[[0.0, 0.0], [1.0, 0.0]])
        grid = ScaleGrid(gamma=0.5, n_min=2, n_max=10)
        v = exact_dim_criterion(cloud, 1, grid, rng, n_centers=2)
        assert v.exact_dimensional and v.condition_ii
        assert np.allclose(v.lower_dims, 0.0, atol=1e-9)
        assert v.s_estimate == pytest.approx(0.0, abs=0.05)
        assert np.allclose(v.kernel_slopes, 0.0, atol=0.05)

    def test_kernel_slope_below_upper_local_dim(self):
        # the kernel dominates the ball indicator, so its slope estimate
        # cannot exceed the upper local dimension estimate by much
        rng = np.random.default_rng(6)
        cloud = cantor_cloud_2d(50_000, seed=6)
        grid = ScaleGrid(gamma=0.5, n_min=4, n_max=11)
        centers = cloud.points[rng.integers(0, cloud.n, 15)]
        locs = local_dims_at(cloud, centers, grid)
        slopes = kernel_slope_at(cloud, centers, 1, grid)
        for loc, ks in zip(locs, slopes):
            assert ks.fit <= loc.upper + 0.1


class TestSubspace:
    def test_validation(self):
        with pytest.raises(DomainError):
            Subspace(basis=np.ones((3, 2)))

    def test_project_cloud_carries_weights(self, rng):
        pts = rng.random((100, 3))
        w = np.full(100, 0.01)
        V = random_subspace(3, 1, rng)
        out = V.project_cloud(PointCloud(points=pts, weights=w))
        assert out.points.shape == (100, 1)
        assert np.allclose(out.weights, w)
