import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaffusion.sampling import (SamplingStrategy, SparseDepthMap, harris_kmeans_mask,
                                 harris_response, kmeans_subsample, make_sparse,
                                 points_for_density, sample_scanlines, sample_uniform)


def square_image(n=40, lo=10, hi=30):
    img = np.zeros((n, n))
    img[lo:hi, lo:hi] = 1.0
    return img


class TestHarris:
    def test_constant_image(self):
        assert np.all(harris_response(np.full((20, 20), 0.3)) == 0)

    def test_edge_interior_is_not_a_corner(self):
        img = np.zeros((30, 30))
        img[:, 15:] = 1
        R = harris_response(img)
        assert np.all(R[5:25, 13:17] <= 1e-12)

    def test_square_corners_dominate(self):
        img = square_image()
        R = harris_response(img)
        top = np.argsort(R, axis=None)[::-1][:4]
        ys, xs = np.unravel_index(top, R.shape)
        corners = np.array([[10, 10], [10, 29], [29, 10], [29, 29]])
        for y, x in zip(ys, xs):
            assert np.min(np.abs(corners - [y, x]).max(1)) <= 2

    def test_matches_brute_force_eigenvalues(self):
        # R = l1 l2 - k (l1 + l2)^2 for the structure tensor eigenvalues
        from scipy import ndimage
        img = np.random.default_rng(0).random((12, 12))
        ix = ndimage.sobel(img, axis=1, mode="reflect")
        iy = ndimage.sobel(img, axis=0, mode="reflect")
        M = [ndimage.gaussian_filter(a, 1.0) for a in (ix * ix, ix * iy, iy * iy)]
        R = harris_response(img)
        for y, x in [(3, 4), (6, 6), (9, 2)]:
            l1, l2 = np.linalg.eigvalsh([[M[0][y, x], M[1][y, x]], [M[1][y, x], M[2][y, x]]])
            assert R[y, x] == pytest.approx(l1 * l2 - 0.04 * (l1 + l2) ** 2, rel=1e-9, abs=1e-12)


class TestKMeans:
    def test_k_equals_n_returns_input(self):
        pts = np.random.default_rng(0).integers(0, 50, (7, 2)).astype(float)
        np.testing.assert_array_equal(kmeans_subsample(pts, 7), pts)

    def test_two_clusters_exhaustive_oracle(self):
        r = np.random.default_rng(1)
        a = r.normal([5, 5], 0.5, (5, 2))
        b = r.normal([40, 30], 0.5, (6, 2))
        pts = np.vstack([a, b])
        picks = kmeans_subsample(pts, 2, seed=3)
        # best 2-partition by brute force: the two blobs
        best = min(itertools.product([0, 1], repeat=len(pts)),
                   key=lambda lab: sum(((pts[np.array(lab) == c] - pts[np.array(lab) == c].mean(0)) ** 2).sum()
                                       if (np.array(lab) == c).any() else np.inf for c in (0, 1)))
        groups = {tuple(np.round(p, 9)): l for p, l in zip(pts, best)}
        assert {groups[tuple(np.round(p, 9))] for p in picks} == {0, 1}

    def test_deterministic_and_subset(self):
        pts = np.random.default_rng(2).uniform(0, 100, (200, 2))
        a, b = kmeans_subsample(pts, 20, seed=9), kmeans_subsample(pts, 20, seed=9)
        np.testing.assert_array_equal(a, b)
        assert len({tuple(p) for p in a}) == 20
        assert {tuple(p) for p in a} <= {tuple(p) for p in pts}

    def test_shortfall_returns_all_and_warns(self):
        pts = np.arange(6.0).reshape(3, 2)
        with pytest.warns(UserWarning, match="shortfall"):
            out = kmeans_subsample(pts, 5)
        np.testing.assert_array_equal(out, pts)


class TestScanlines:
    def test_full_coverage_without_dropout(self):
        depth = np.full((12, 10), 3.0)
        s = sample_scanlines(depth, 12, dropout=0.0, top=0.0)
        assert s.validity.all()

    def test_four_lines_density(self):
        depth = np.full((120, 160), 3.0)
        s = sample_scanlines(depth, 4, seed=1, dropout=0.0)
        assert s.density == pytest.approx(4 * 160 / (160 * 120))
        rows = np.nonzero(s.validity.any(1))[0]
        assert len(rows) == 4 and rows.min() >= int(0.4 * 120)

    def test_values_are_copied_exactly(self):
        depth = np.random.default_rng(0).uniform(1, 9, (60, 80))
        s = sample_scanlines(depth, 8, seed=2)
        assert np.array_equal(s.values[s.validity], depth[s.validity])
        assert 0.7 < s.validity.sum() / (8 * 80) < 0.9  # 20% dropout


class TestMakeSparse:
    @pytest.mark.parametrize("n,w,h,expected", [(375, 320, 240, 0.0049), (1500, 640, 480, 0.0049)])
    def test_reference_densities(self, n, w, h, expected):
        r = np.random.default_rng(0)
        image = r.random((h, w, 3))
        depth = r.uniform(0.5, 5, (h, w))
        s = make_sparse(depth, image, SamplingStrategy("harris-kmeans", n=n))
        assert s.density == pytest.approx(n / (w * h))
        assert s.density == pytest.approx(expected, rel=0.03)

    def test_uniform_full(self):
        depth = np.random.default_rng(0).uniform(1, 2, (8, 9))
        s = make_sparse(depth, None, SamplingStrategy("uniform", n=72))
        assert s.validity.all()

    def test_harris_requires_image(self):
        with pytest.raises(ValueError):
            make_sparse(np.ones((8, 8)), None, SamplingStrategy("harris-kmeans", n=4))

    def test_invalid_strategy(self):
        with pytest.raises(ValueError):
            SamplingStrategy("lidar")
        with pytest.raises(ValueError):
            SamplingStrategy("uniform", n=0)

    @settings(max_examples=15, deadline=None)
    @given(st.sampled_from(["harris-kmeans", "uniform", "scanline"]), st.integers(1, 400), st.integers(0, 99))
    def test_density_close_to_target_and_values_exact(self, kind, n, seed):
        r = np.random.default_rng(seed)
        image = r.random((48, 64, 3))
        depth = r.uniform(0.5, 5, (48, 64))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = make_sparse(depth, image, SamplingStrategy(kind, n=n, dropout=0.0), seed)
        assert np.array_equal(s.values[s.validity], depth[s.validity])
        if kind != "scanline":
            assert s.validity.sum() == n
        assert np.array_equal(s.validity, make_sparse(depth, image, SamplingStrategy(kind, n=n, dropout=0.0), seed).validity)

    def test_density_monotone_in_n(self):
        r = np.random.default_rng(4)
        image, depth = r.random((48, 64, 3)), r.uniform(1, 3, (48, 64))
        for kind in ("uniform", "harris-kmeans"):
            d = [make_sparse(depth, image, SamplingStrategy(kind, n=n)).density for n in (5, 20, 80)]
            assert d[0] < d[1] < d[2]

    def test_points_for_density(self):
        assert points_for_density(0.005, 128, 160) == 102


def test_sparse_map_invariant():
    with pytest.raises(ValueError):
        SparseDepthMap(np.array([[1.0, 0.0]]), np.array([[False, False]]))
    s = SparseDepthMap.from_mask(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1, 0], [0, 1]]))
    assert s.density == 0.5
