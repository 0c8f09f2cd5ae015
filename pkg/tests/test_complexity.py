import numpy as np
import pytest

from ldykws import ContractViolation
from ldykws.backbone import BackboneParams
from ldykws.complexity import (CostReport, bench, count_model, count_params,
                               dyconv_oracle, ldyconv_apply_mults,
                               ldyconv_cost_breakdown, table1_costs)
from ldykws.ldyconv import KERNEL_TAPS, LdyParams, dilated_patches

K, F, T = 9, 40, 98
N = T * F  # 3920 pixels at the default feature-map size


class TestCostReport:
    def test_flops_is_mults_plus_adds(self):
        r = CostReport(params=1, mults=10, adds=7)
        assert r.flops == 17

    def test_add(self):
        a = CostReport(params=1, mults=2, adds=3, aux_space=4)
        b = CostReport(params=10, mults=20, adds=30, aux_space=40)
        c = a + b
        assert (c.params, c.mults, c.adds, c.aux_space) == (11, 22, 33, 44)


class TestClosedForms:
    def test_parameter_column(self):
        costs = table1_costs(K, F, N)
        assert costs["conv"].params == 9
        assert costs["dyconv"].params == 81
        assert costs["ldyconv"].params == K * (F + 1) == 369

    def test_space_column(self):
        costs = table1_costs(K, F, N)
        assert costs["conv"].aux_space == 0
        assert costs["dyconv"].aux_space == K * N == 35280
        assert costs["ldyconv"].aux_space == N + K == 3929

    def test_time_column_scaling(self):
        costs = table1_costs(K, F, N)
        assert costs["conv"].mults == K * N
        assert costs["dyconv"].mults == K * K * N + K * N
        assert costs["ldyconv"].mults == K * N

    def test_contract(self):
        with pytest.raises(ContractViolation):
            table1_costs(0, F, N)


class TestScalingFits:
    """The dense-tap counts must fit their scaling laws with zero residual."""

    def test_dyconv_generator_is_k_squared_n(self):
        for f in (10, 20, 40):
            x = np.zeros((T, f))
            _, counts = dyconv_oracle(x)
            n = T * f
            assert counts.generator_mults == K * K * n
            assert counts.apply_mults == K * n

    def test_ldyconv_apply_is_k_n(self):
        for n in (980, 1960, 3920):
            assert ldyconv_apply_mults(K, n) == K * n

    def test_linear_fit_zero_residual(self):
        ns = np.array([980.0, 1960.0, 3920.0])
        gen = np.array([dyconv_oracle(np.zeros((T, int(n // T))))[1].generator_mults
                        for n in ns])
        app = np.array([ldyconv_apply_mults(K, int(n)) for n in ns])
        slope_gen = np.linalg.lstsq(ns[:, None], gen, rcond=None)[0][0]
        slope_app = np.linalg.lstsq(ns[:, None], app, rcond=None)[0][0]
        assert np.max(np.abs(gen - slope_gen * ns)) / gen.max() < 1e-12
        assert np.max(np.abs(app - slope_app * ns)) / app.max() < 1e-12
        assert slope_gen / slope_app == pytest.approx(K)


class TestDyconvOracle:
    def test_matches_naive_loops(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, (6, 5))
        out, _ = dyconv_oracle(x, seed=1)
        gen = np.random.default_rng(1).uniform(-1, 1, (9, 9)) / 3.0
        patches = dilated_patches(x)
        expected = np.zeros_like(x)
        for t in range(6):
            for f in range(5):
                kernel = gen @ patches[t, f]
                expected[t, f] = kernel @ patches[t, f]
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_deterministic(self):
        x = np.random.default_rng(2).uniform(-1, 1, (8, 5))
        assert np.array_equal(dyconv_oracle(x, 3)[0], dyconv_oracle(x, 3)[0])


class TestExactWalk:
    def test_front_end_parameter_count(self):
        total = count_model(F, T)
        assert total.params == 2258

    def test_enumeration_cross_check(self):
        p = LdyParams.init_random(np.random.default_rng(0), n_freq=F)
        total = count_model(F, T, params=p)
        assert total.params == count_params(p) == 2258

    def test_enumeration_mismatch_raises(self):
        p = LdyParams.init_random(np.random.default_rng(0), n_freq=20)
        with pytest.raises(ContractViolation):
            count_model(F, T, params=p)

    def test_flops_window(self):
        # the headline figure: a couple hundred K flops per clip, within
        # 15% of 224K
        total = count_model(F, T)
        assert 224_000 * 0.85 <= total.flops <= 224_000 * 1.15
        assert total.flops == 201_682

    def test_breakdown_sums_to_total(self):
        items = ldyconv_cost_breakdown()
        total = items.pop("total")
        acc = CostReport(aux_space=N + K)
        for item in items.values():
            acc = acc + item
        assert (acc.params, acc.mults, acc.adds) == (
            total.params, total.mults, total.adds)
        assert total.aux_space == N + K

    def test_unsupported_tap_count(self):
        with pytest.raises(ContractViolation):
            ldyconv_cost_breakdown(K=5)

    def test_backbone_params_counted(self):
        p = BackboneParams.init_random(np.random.default_rng(1), n_freq=F,
                                       channels=16, n_blocks=6)
        n = count_params(p)
        enumerated = sum(t.size for t in p.named_tensors().values())
        assert n == enumerated > 0


class TestBench:
    def test_contract(self):
        with pytest.raises(ContractViolation):
            bench(lambda x: x, lambda: 0, repetitions=2)

    def test_keys_and_counts(self):
        stats = bench(np.sum, lambda: np.zeros(16), repetitions=3)
        assert set(stats) == {"median_s", "iqr_s", "n"}
        assert stats["n"] == 3
        assert stats["median_s"] >= 0.0
        assert stats["iqr_s"] >= 0.0
