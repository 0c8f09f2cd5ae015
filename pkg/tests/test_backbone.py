import numpy as np
import pytest

from ldykws.backbone import (BackboneParams, backbone_backward,
                             backbone_forward, cross_entropy,
                             default_stride_blocks, softmax)
from ldykws.ldyconv import LdyParams, ldy_forward
from ldykws.numeric import finite_difference_gradient, relative_error


def toy_backbone(seed=0, n_freq=5, channels=4, n_blocks=2):
    return BackboneParams.init_random(
        np.random.default_rng(seed), n_freq=n_freq, channels=channels,
        n_blocks=n_blocks)


class TestForward:
    def test_twelve_logits(self):
        p = BackboneParams.init_random(np.random.default_rng(0))
        logits, _ = backbone_forward(np.zeros((98, 40)), p)
        assert logits.shape == (12,)

    def test_zero_input_uniform_logits(self):
        p = toy_backbone()
        logits, _ = backbone_forward(np.zeros((20, 5)), p)
        assert np.allclose(logits, logits[0])
        assert np.allclose(softmax(logits), 1.0 / 12)

    def test_time_length_absorbed_by_pooling(self):
        p = toy_backbone(1)
        l1, _ = backbone_forward(np.random.default_rng(2).uniform(-1, 1, (98, 5)), p)
        l2, _ = backbone_forward(np.random.default_rng(2).uniform(-1, 1, (196, 5)), p)
        assert l1.shape == l2.shape == (12,)

    def test_stride_schedule(self):
        assert default_stride_blocks(6) == {1, 4}
        assert default_stride_blocks(12) == {2, 8}
        assert default_stride_blocks(2) == {1}


class TestBackward:
    def test_zero_upstream(self):
        p = toy_backbone(3)
        _, cache = backbone_forward(np.random.default_rng(4).uniform(-1, 1, (8, 5)), p)
        dx, grads = backbone_backward(cache, np.zeros(12))
        assert np.all(dx == 0.0)
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_gradient_reaches_input(self):
        p = toy_backbone(5)
        x = np.random.default_rng(6).uniform(-1, 1, (8, 5))
        _, cache = backbone_forward(x, p)
        dx, _ = backbone_backward(cache, np.random.default_rng(7).uniform(-1, 1, 12))
        assert np.any(dx != 0.0)

    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-1, 1, (8, 5))
        p = toy_backbone(9)
        V = rng.uniform(-1, 1, 12)
        _, cache = backbone_forward(x, p)
        dx, grads = backbone_backward(cache, V)

        def loss_x(v):
            return float(backbone_forward(v, p)[0] @ V)

        assert relative_error(dx, finite_difference_gradient(loss_x, x)) < 1e-4
        for name, t in p.named_tensors().items():
            orig = t.copy()

            def f(v, t=t, orig=orig):
                t[...] = v
                val = float(backbone_forward(x, p)[0] @ V)
                t[...] = orig
                return val

            fd = finite_difference_gradient(f, orig)
            assert relative_error(grads[name], fd) < 1e-4, name


class TestCrossEntropy:
    def test_matches_finite_differences(self):
        logits = np.random.default_rng(10).uniform(-2, 2, 12)
        loss, dlogits = cross_entropy(logits, 7)
        fd = finite_difference_gradient(lambda z: cross_entropy(z, 7)[0], logits)
        assert relative_error(dlogits, fd) < 1e-6
        assert loss > 0


def test_zero_frontend_is_baseline():
    # with the residual branch zero-initialized, the composed system gives
    # exactly the raw-feature logits
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, (98, 40))
    front = LdyParams.init_zero(40)
    bb = BackboneParams.init_random(rng, n_freq=40, channels=8, n_blocks=2)
    filtered, _ = ldy_forward(x, front)
    l1, _ = backbone_forward(filtered, bb)
    l2, _ = backbone_forward(x, bb)
    assert np.array_equal(l1, l2)
