import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldykws.ldyconv import (KERNEL_TAPS, TAP_OFFSETS, LdyParams,
                            compose_kernels, dilated_conv, dynamic_conv,
                            feature_norm, idf_forward, ldy_backward,
                            ldy_forward, pdf_forward, temporal_norm)
from ldykws.numeric import finite_difference_gradient, relative_error


def random_params(seed, n_freq):
    return LdyParams.init_random(np.random.default_rng(seed), n_freq=n_freq)


class TestTemporalNorm:
    def test_constant_column_maps_to_zero(self):
        x = np.tile([[1.0, 2.0, -3.0]], (6, 1))
        y = temporal_norm(x, np.ones(3), np.zeros(3))
        assert np.all(y == 0.0)

    def test_standardizes_columns(self):
        x = np.random.default_rng(0).normal(5.0, 2.0, (50, 4))
        y = temporal_norm(x, np.ones(4), np.zeros(4))
        assert np.max(np.abs(y.mean(axis=0))) < 1e-6
        assert np.max(np.abs(y.var(axis=0) - 1.0)) < 1e-3

    def test_affine_collapse(self):
        x = np.random.default_rng(1).standard_normal((7, 3))
        y = temporal_norm(x, np.zeros(3), np.full(3, 2.5))
        assert np.all(y == 2.5)


class TestFeatureNorm:
    def test_constant_vector(self):
        y = feature_norm(np.full(5, 3.0), np.ones(5), np.zeros(5))
        assert np.all(y == 0.0)

    def test_zero_mean(self):
        h = np.random.default_rng(2).standard_normal(16)
        y = feature_norm(h, np.ones(16), np.zeros(16))
        assert abs(y.mean()) < 1e-6

    def test_alternating_closed_form(self):
        h = np.array([1.0, -1.0] * 4)
        y = feature_norm(h, np.ones(8), np.zeros(8))
        expected = h / np.sqrt(1.0 + 1e-5)
        assert np.max(np.abs(y - expected)) < 1e-12


class TestPdf:
    def test_zero_kernel_gives_half(self):
        p = LdyParams.init_zero(5)
        wp = pdf_forward(np.random.default_rng(0).standard_normal((8, 5)), p)
        assert np.all(wp == 0.5)

    def test_open_interval(self):
        p = random_params(3, 6)
        wp = pdf_forward(np.random.default_rng(4).uniform(-1, 1, (10, 6)), p)
        assert np.all((wp > 0.0) & (wp < 1.0))

    def test_delta_input_support(self):
        # a unit impulse is seen exactly by the 9 pixels whose dilated
        # receptive field covers it
        T, F, t0, f0 = 12, 9, 6, 4
        x = np.zeros((T, F))
        x[t0, f0] = 1.0
        conv = dilated_conv(x, np.ones((3, 3)))
        expected = np.zeros((T, F))
        for dt, df in TAP_OFFSETS:
            expected[t0 - dt, f0 - df] = 1.0
        assert np.array_equal(conv, expected)


class TestIdf:
    def test_dead_relu_path_returns_bias(self):
        p = LdyParams.init_zero(5)
        p.idf_fc2_b = np.arange(9.0)
        wh = idf_forward(np.random.default_rng(5).standard_normal((7, 5)), p)
        assert np.array_equal(wh, np.arange(9.0))

    def test_time_permutation_invariant(self):
        p = random_params(6, 5)
        x = np.random.default_rng(7).uniform(-1, 1, (10, 5))
        assert np.allclose(idf_forward(x, p), idf_forward(np.roll(x, 3, axis=0), p))

    def test_hand_composed_toy(self):
        # identity fc1, pre-normalized mean, one-hot rows in fc2
        F, K = 4, 9
        p = LdyParams.init_zero(F)
        p.idf_fc1_w = np.eye(F)
        p.idf_fc2_w = np.zeros((F, K))
        p.idf_fc2_w[2, 0] = 1.0
        p.idf_fc2_w[0, 1] = 1.0
        x = np.array([[1.0, -1.0, 3.0, 0.0],
                      [1.0, 1.0, 5.0, 0.0],
                      [1.0, 0.0, 4.0, 0.0]])
        H = x.mean(axis=0)
        mu, var = H.mean(), H.var()
        normed = (H - mu) / np.sqrt(var + 1e-5)
        expected = np.zeros(K)
        expected[0] = max(normed[2], 0.0)
        expected[1] = max(normed[0], 0.0)
        assert np.allclose(idf_forward(x, p), expected, atol=1e-12)


class TestComposeAndDynamicConv:
    def test_unit_mask_copies_direction(self):
        wh = np.arange(9.0)
        kernels = compose_kernels(np.ones((4, 3)), wh)
        assert np.array_equal(kernels[2, 1], wh)

    def test_outer_product_oracle(self):
        rng = np.random.default_rng(8)
        wp = rng.uniform(0, 1, (6, 4))
        wh = rng.standard_normal(9)
        kernels = compose_kernels(wp, wh)
        oracle = np.outer(wp.ravel(), wh).reshape(6, 4, 9)
        assert np.array_equal(kernels, oracle)

    def test_rank_at_most_one(self):
        rng = np.random.default_rng(9)
        kernels = compose_kernels(rng.uniform(0, 1, (8, 5)), rng.standard_normal(9))
        sv = np.linalg.svd(kernels.reshape(-1, 9), compute_uv=False)
        assert sv[1] < 1e-8 * sv[0]

    def test_zero_kernels(self):
        p = LdyParams.init_zero(5)
        x = np.random.default_rng(10).standard_normal((7, 5))
        out = dynamic_conv(x, np.zeros((7, 5, 9)), p)
        assert np.all(out == 0.0)

    def test_unit_mask_equals_static_conv(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(-1, 1, (8, 5))
        wh = rng.standard_normal(9)
        p = LdyParams.init_zero(5)
        got = dynamic_conv(x, compose_kernels(np.ones((8, 5)), wh), p,
                           apply_norm=False)
        assert np.allclose(got, dilated_conv(x, wh.reshape(3, 3)), atol=1e-12)

    def test_all_ones_patch_value(self):
        wh = np.random.default_rng(12).standard_normal(9)
        x = np.ones((9, 9))
        wp = np.full((9, 9), 0.5)
        p = LdyParams.init_zero(9)
        out = dynamic_conv(x, compose_kernels(wp, wh), p, apply_norm=False)
        # interior pixel sees the full all-ones patch
        assert out[4, 4] == pytest.approx(0.5 * wh.sum(), abs=1e-12)


class TestLdyForward:
    def test_identity_at_zero_init(self):
        x = np.random.default_rng(13).uniform(-1, 1, (98, 40))
        out, _ = ldy_forward(x, LdyParams.init_zero(40))
        assert np.array_equal(out, x)

    def test_full_size_shape(self):
        out, _ = ldy_forward(np.zeros((98, 40)), random_params(14, 40))
        assert out.shape == (98, 40)

    def test_factorization_identity(self):
        # output - x == mask * static-conv, with the output norm bypassed
        rng = np.random.default_rng(15)
        for _ in range(20):
            x = rng.uniform(-1, 1, (8, 5))
            p = random_params(int(rng.integers(1 << 30)), 5)
            wp = pdf_forward(x, p)
            wh = idf_forward(x, p)
            via_kernels = dynamic_conv(x, compose_kernels(wp, wh), p,
                                       apply_norm=False)
            factorized = wp * dilated_conv(x, wh.reshape(3, 3))
            assert np.max(np.abs(via_kernels - factorized)) < 1e-10

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 12), st.integers(2, 8), st.integers(0, 1000))
    def test_shape_preserved(self, T, F, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, (T, F))
        out, _ = ldy_forward(x, LdyParams.init_random(rng, n_freq=F))
        assert out.shape == (T, F)
        assert np.all(np.isfinite(out))


class TestLdyBackward:
    def test_zero_upstream(self):
        x = np.random.default_rng(16).uniform(-1, 1, (6, 4))
        p = random_params(17, 4)
        _, cache = ldy_forward(x, p)
        dx, grads = ldy_backward(cache, np.zeros((6, 4)))
        assert np.all(dx == 0.0)
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_skip_path_identity(self):
        # zero-initialized branch: gradient wrt x is exactly the upstream grad
        x = np.random.default_rng(18).uniform(-1, 1, (6, 4))
        g = np.random.default_rng(19).standard_normal((6, 4))
        _, cache = ldy_forward(x, LdyParams.init_zero(4))
        dx, _ = ldy_backward(cache, g)
        assert np.array_equal(dx, g)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(20)
        x = rng.uniform(-1, 1, (8, 5))
        W = rng.uniform(-1, 1, (8, 5))
        p = random_params(21, 5)
        _, cache = ldy_forward(x, p)
        dx, grads = ldy_backward(cache, W)

        fd = finite_difference_gradient(
            lambda v: float(np.sum(W * ldy_forward(v, p)[0])), x)
        assert relative_error(dx, fd) < 1e-4

        for name in grads:
            def f(v, name=name):
                q = dataclasses.replace(p, **{name: v})
                return float(np.sum(W * ldy_forward(x, q)[0]))

            fd = finite_difference_gradient(f, getattr(p, name))
            assert relative_error(grads[name], fd) < 1e-4, name

    def test_mismatched_upstream_shape(self):
        from ldykws import ContractViolation

        _, cache = ldy_forward(np.zeros((5, 4)), LdyParams.init_zero(4))
        with pytest.raises(ContractViolation):
            ldy_backward(cache, np.zeros((4, 5)))
