import numpy as np
import pytest

from scopedepth.imagery import DepthMap, Image, Mask
from scopedepth.photometry import (
    PhotometricConfig,
    box_filter,
    box_filter_adjoint,
    edge_aware_smoothness,
    edge_aware_smoothness_grad,
    photometric_residual,
    ssim_backward_channel,
    ssim_map,
)


def brute_force_window_stats(a, b, win):
    """Loop oracle: clamped-window means/variances/covariance."""
    h, w = a.shape
    r = win // 2
    mu_a = np.zeros((h, w))
    mu_b = np.zeros((h, w))
    var_a = np.zeros((h, w))
    var_b = np.zeros((h, w))
    cov = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            pa, pb = [], []
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    pa.append(a[ii, jj])
                    pb.append(b[ii, jj])
            pa = np.array(pa)
            pb = np.array(pb)
            mu_a[i, j] = pa.mean()
            mu_b[i, j] = pb.mean()
            var_a[i, j] = (pa**2).mean() - pa.mean() ** 2
            var_b[i, j] = (pb**2).mean() - pb.mean() ** 2
            cov[i, j] = (pa * pb).mean() - pa.mean() * pb.mean()
    return mu_a, mu_b, var_a, var_b, cov


def brute_force_ssim(a, b, cfg):
    mu_a, mu_b, var_a, var_b, cov = brute_force_window_stats(a, b, cfg.ssim_window)
    return ((2 * mu_a * mu_b + cfg.c1) * (2 * cov + cfg.c2)) / (
        (mu_a**2 + mu_b**2 + cfg.c1) * (var_a + var_b + cfg.c2)
    )


class TestBoxFilter:
    @pytest.mark.parametrize("win", [3, 5])
    def test_matches_brute_force(self, win):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, (7, 9))
        got = box_filter(x, win)
        mu, *_ = brute_force_window_stats(x, x, win)
        np.testing.assert_allclose(got, mu, atol=1e-12)

    @pytest.mark.parametrize("win", [3, 5])
    def test_adjoint_dot_product(self, win):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.normal(size=(8, 11))
            g = rng.normal(size=(8, 11))
            lhs = (box_filter(x, win) * g).sum()
            rhs = (x * box_filter_adjoint(g, win)).sum()
            assert lhs == pytest.approx(rhs, abs=1e-10)


class TestSsim:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(2)
        img = Image(rng.uniform(0, 1, (6, 8, 3)).astype(np.float32))
        np.testing.assert_allclose(ssim_map(img, img), 1.0, atol=1e-9)

    def test_constant_images_formula(self):
        cfg = PhotometricConfig()
        a = Image(np.full((5, 5, 1), 0.2, dtype=np.float32))
        b = Image(np.full((5, 5, 1), 0.8, dtype=np.float32))
        # direct formula evaluation: variances vanish, c2 cancels
        expected = (2 * 0.2 * 0.8 + cfg.c1) / (0.2**2 + 0.8**2 + cfg.c1)
        np.testing.assert_allclose(ssim_map(a, b, cfg), expected, atol=1e-6)
        assert expected == pytest.approx(0.4707, abs=2e-4)

    def test_anticorrelated_windows_negative(self):
        cfg = PhotometricConfig()
        # zero-mean alternating pattern around 0.5: b = 1 - a flips the sign
        # of every windowed covariance
        base = 0.5 + 0.3 * ((-1.0) ** np.add.outer(np.arange(6), np.arange(6)))
        a = base.astype(np.float32)
        b = (1.0 - base).astype(np.float32)
        got = ssim_map(Image(a[..., None]), Image(b[..., None]), cfg)
        oracle = brute_force_ssim(
            np.clip(a, 0, 1).astype(np.float64), np.clip(b, 0, 1).astype(np.float64), cfg
        )
        np.testing.assert_allclose(got, oracle, atol=1e-9)
        assert (got[1:-1, 1:-1] < 0).all()

    def test_matches_brute_force_random(self):
        cfg = PhotometricConfig(ssim_window=3)
        rng = np.random.default_rng(3)
        a = rng.uniform(0, 1, (7, 7)).astype(np.float32)
        b = rng.uniform(0, 1, (7, 7)).astype(np.float32)
        got = ssim_map(Image(a[..., None]), Image(b[..., None]), cfg)
        oracle = brute_force_ssim(a.astype(np.float64), b.astype(np.float64), cfg)
        np.testing.assert_allclose(got, oracle, atol=1e-9)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(4)
        a = Image(rng.uniform(0, 1, (9, 9, 3)).astype(np.float32))
        b = Image(rng.uniform(0, 1, (9, 9, 3)).astype(np.float32))
        ab = ssim_map(a, b)
        ba = ssim_map(b, a)
        np.testing.assert_array_equal(ab, ba)
        assert ab.max() <= 1.0 + 1e-12 and ab.min() >= -1.0 - 1e-12

    def test_backward_matches_finite_differences(self):
        cfg = PhotometricConfig()
        rng = np.random.default_rng(5)
        a = rng.uniform(0, 1, (5, 6))
        b = rng.uniform(0, 1, (5, 6))
        up = rng.normal(size=(5, 6))
        grad = ssim_backward_channel(a, b, up, cfg)
        from scopedepth.photometry import _ssim_channel

        eps = 1e-6
        fd = np.zeros_like(b)
        for i in range(5):
            for j in range(6):
                bp = b.copy()
                bp[i, j] += eps
                bm = b.copy()
                bm[i, j] -= eps
                fd[i, j] = (
                    (up * _ssim_channel(a, bp, cfg)).sum()
                    - (up * _ssim_channel(a, bm, cfg)).sum()
                ) / (2 * eps)
        np.testing.assert_allclose(grad, fd, atol=1e-6)


class TestPhotometricResidual:
    def test_zero_at_identity(self):
        rng = np.random.default_rng(6)
        t = Image(rng.uniform(0, 1, (6, 6, 3)).astype(np.float32))
        f_p, valid = photometric_residual(t, [(t, Mask.full(6, 6))])
        assert valid.data.all()
        np.testing.assert_allclose(f_p, 0.0, atol=1e-9)

    def test_alpha_zero_reduces_to_l1(self):
        rng = np.random.default_rng(7)
        cfg = PhotometricConfig(alpha=0.0)
        t = Image(rng.uniform(0, 1, (5, 5, 3)).astype(np.float32))
        s = Image(rng.uniform(0, 1, (5, 5, 3)).astype(np.float32))
        f_p, _ = photometric_residual(t, [(s, Mask.full(5, 5))], cfg)
        l1 = np.abs(t.data.astype(np.float64) - s.data.astype(np.float64)).mean(axis=2)
        np.testing.assert_allclose(f_p, l1, atol=1e-12)

    def test_min_over_sources(self):
        t = Image(np.full((4, 4, 1), 0.5, dtype=np.float32))
        near = Image(np.full((4, 4, 1), 0.6, dtype=np.float32))
        far = Image(np.full((4, 4, 1), 0.8, dtype=np.float32))
        cfg = PhotometricConfig(alpha=0.0)
        f_both, _ = photometric_residual(
            t, [(far, Mask.full(4, 4)), (near, Mask.full(4, 4))], cfg
        )
        np.testing.assert_allclose(f_both, 0.1, atol=1e-7)

    def test_adding_source_never_increases(self):
        rng = np.random.default_rng(8)
        t = Image(rng.uniform(0, 1, (6, 6, 3)).astype(np.float32))
        s1 = Image(rng.uniform(0, 1, (6, 6, 3)).astype(np.float32))
        s2 = Image(rng.uniform(0, 1, (6, 6, 3)).astype(np.float32))
        f1, _ = photometric_residual(t, [(s1, Mask.full(6, 6))])
        f12, _ = photometric_residual(t, [(s1, Mask.full(6, 6)), (s2, Mask.full(6, 6))])
        assert (f12 <= f1 + 1e-12).all()

    def test_invalid_sources_masked(self):
        t = Image(np.full((4, 4, 1), 0.5, dtype=np.float32))
        s = Image(np.full((4, 4, 1), 0.9, dtype=np.float32))
        half = np.zeros((4, 4), dtype=bool)
        half[:2] = True
        f_p, valid = photometric_residual(t, [(s, Mask(half))])
        assert valid.data[:2].all() and not valid.data[2:].any()

    def test_empty_source_list_rejected(self):
        t = Image(np.zeros((4, 4, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            photometric_residual(t, [])


class TestSmoothness:
    def test_constant_depth_zero(self):
        d = DepthMap(np.full((5, 5), 7.0, dtype=np.float32))
        img = Image(np.random.default_rng(9).uniform(0, 1, (5, 5, 3)).astype(np.float32))
        np.testing.assert_allclose(edge_aware_smoothness(d, img), 0.0)

    def test_unit_step_on_flat_image(self):
        # normalized depth steps by exactly 1 between the two columns
        d = np.array([[2.0, 4.0], [2.0, 4.0]], dtype=np.float32)  # mean 3
        img = Image(np.full((2, 2, 1), 0.5, dtype=np.float32))
        fs = edge_aware_smoothness(DepthMap(d), img)
        assert fs[0, 0] == pytest.approx(2.0 / 3.0)

    def test_image_edge_attenuates(self):
        d = np.array([[2.0, 4.0]], dtype=np.float32)
        flat = Image(np.full((1, 2, 1), 0.5, dtype=np.float32))
        gray = np.array([[0.0, 1.0]], dtype=np.float32)
        edged = Image(gray[..., None])
        fs_flat = edge_aware_smoothness(DepthMap(d), flat)
        fs_edge = edge_aware_smoothness(DepthMap(d), edged)
        assert fs_edge[0, 0] == pytest.approx(fs_flat[0, 0] * np.exp(-1.0))

    def test_invariant_to_depth_rescaling(self):
        rng = np.random.default_rng(10)
        d = rng.uniform(5, 20, (6, 6))
        img = Image(rng.uniform(0, 1, (6, 6, 3)).astype(np.float32))
        a = edge_aware_smoothness(d, img)
        b = edge_aware_smoothness(4.0 * d, img)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_nonpositive_mean_rejected(self):
        img = Image(np.zeros((2, 2, 1), dtype=np.float32))
        with pytest.raises(ValueError):
            edge_aware_smoothness(np.zeros((2, 2)), img)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        d = rng.uniform(5, 15, (5, 6))
        img = Image(rng.uniform(0, 1, (5, 6, 3)).astype(np.float32))
        grad = edge_aware_smoothness_grad(d, img)
        eps = 1e-6
        fd = np.zeros_like(d)
        for i in range(5):
            for j in range(6):
                dp = d.copy()
                dp[i, j] += eps
                dm = d.copy()
                dm[i, j] -= eps
                fd[i, j] = (
                    edge_aware_smoothness(dp, img).mean()
                    - edge_aware_smoothness(dm, img).mean()
                ) / (2 * eps)
        np.testing.assert_allclose(grad, fd, atol=1e-7)
