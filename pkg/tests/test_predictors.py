import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccafusion.exceptions import DimensionError, DomainError, TrainingError
from ccafusion.predictors import (CoxModel, MLPModel, SurvivalRecord, concordance_index,
                                  cox_partial_loglik, coxph_fit, mlp_fit, mlp_loss_and_grad,
                                  mlp_predict, risk_scores)


def brute_cindex(event, time, scores):
    num = den = 0
    for i in range(len(time)):
        if not event[i]:
            continue
        for j in range(len(time)):
            if time[j] > time[i]:
                den += 1
                num += scores[i] > scores[j]
    return num / den


def exp_survival(beta, n, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((len(beta), n))
    t = r.exponential(1.0 / np.exp(beta @ x))
    c = r.exponential(2.0 * np.median(t), size=n)
    return x, t <= c, np.minimum(t, c)


class TestMLP:
    def test_constant_target(self, rng):
        x = rng.standard_normal((3, 200))
        c = np.array([1.5, -0.5])
        model = mlp_fit(x, np.tile(c[:, None], (1, 200)), hidden=50, seed=0)
        assert model.final_loss < 1e-3 * (c @ c) + 1e-6

    def test_linear_teacher(self):
        r = np.random.default_rng(11)
        x = r.standard_normal((4, 400))
        A = r.standard_normal((2, 4))
        t = A @ x
        model = mlp_fit(x, t, hidden=50, seed=0, epochs=500)
        variance = np.mean(np.sum((t - t.mean(axis=1, keepdims=True)) ** 2, axis=0))
        assert model.final_loss < 0.01 * variance
        assert model.epochs_run == 500

    def test_deterministic(self, rng):
        x, t = rng.standard_normal((3, 50)), rng.standard_normal((1, 50))
        a = mlp_fit(x, t, hidden=8, seed=4, epochs=20)
        b = mlp_fit(x, t, hidden=8, seed=4, epochs=20)
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_zero_weights_zero_output(self, rng):
        model = MLPModel(np.zeros((4, 3)), np.zeros(4), np.zeros((2, 4)), np.zeros(2))
        np.testing.assert_array_equal(mlp_predict(model, rng.standard_normal((3, 7))), 0.0)

    def test_single_sample_matches_batch(self, rng):
        x, t = rng.standard_normal((3, 40)), rng.standard_normal((2, 40))
        model = mlp_fit(x, t, hidden=6, seed=1, epochs=5)
        full = mlp_predict(model, x)
        np.testing.assert_allclose(mlp_predict(model, x[:, 7:8])[:, 0], full[:, 7], atol=1e-14)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_gradient_finite_differences(self, rng, activation):
        m, h, d, n = 3, 5, 2, 9
        params = [rng.standard_normal((h, m)), rng.standard_normal(h),
                  rng.standard_normal((d, h)), rng.standard_normal(d)]
        x, t = rng.standard_normal((m, n)), rng.standard_normal((d, n))
        _, grads = mlp_loss_and_grad(params, x, t, activation)
        eps = 1e-5
        worst = 0.0
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + eps
                fp = mlp_loss_and_grad(params, x, t, activation)[0]
                p[idx] = old - eps
                fm = mlp_loss_and_grad(params, x, t, activation)[0]
                p[idx] = old
                fd = (fp - fm) / (2 * eps)
                worst = max(worst, abs(fd - g[idx]) / max(1.0, abs(fd)))
        assert worst < 1e-4

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self, rng):
        x, t = rng.standard_normal((3, 64)), 1e3 * rng.standard_normal((1, 64))
        with pytest.raises(TrainingError) as info:
            mlp_fit(x, t, hidden=10, seed=0, epochs=50, lr=10.0)
        assert info.value.epoch >= 1

    def test_early_stopping_restores_best(self, rng):
        x, t = rng.standard_normal((3, 60)), rng.standard_normal((1, 60))
        xv, tv = rng.standard_normal((3, 20)), rng.standard_normal((1, 20))
        model = mlp_fit(x, t, hidden=20, seed=0, epochs=500, lr=1e-2,
                        val_inputs=xv, val_targets=tv, patience=5)
        assert model.epochs_run < 500

    def test_input_dimension_checked(self, rng):
        model = mlp_fit(rng.standard_normal((3, 10)), rng.standard_normal((1, 10)), hidden=2, epochs=1)
        with pytest.raises(DimensionError):
            mlp_predict(model, np.zeros((4, 2)))

    def test_bad_layer_shapes(self):
        with pytest.raises(DimensionError):
            MLPModel(np.zeros((4, 3)), np.zeros(3), np.zeros((2, 4)), np.zeros(2))


class TestCox:
    def test_hazard_direction(self):
        time = np.arange(1.0, 21.0)
        feature = -np.argsort(np.argsort(time)).astype(float)
        feature = (feature - feature.mean()) / feature.std()
        model = coxph_fit(feature[None, :], (np.ones(20, bool), time))
        assert model.coefficients[0] > 0
        assert model.converged

    @pytest.mark.parametrize("l1_ratio", [0.0, 0.5, 1.0])
    def test_zero_feature(self, rng, l1_ratio):
        x = np.vstack([rng.standard_normal(30), np.zeros(30)])
        event = rng.random(30) < 0.7
        event[0] = True
        model = coxph_fit(x, (event, rng.exponential(1.0, 30) + 0.01), penalizer=0.1, l1_ratio=l1_ratio)
        assert model.coefficients[1] == 0.0

    def test_simulated_recovery(self):
        x, event, time = exp_survival(np.array([1.0, -1.0]), 500, seed=3)
        tr, te = slice(0, 250), slice(250, 500)
        model = coxph_fit(x[:, tr], (event[tr], time[tr]))
        assert model.coefficients[0] > 0 > model.coefficients[1]
        c = concordance_index((event[te], time[te]), risk_scores(model, x[:, te]))
        assert c > 0.7

    def test_records_interface(self):
        x, event, time = exp_survival(np.array([0.5]), 40, seed=0)
        recs = [SurvivalRecord(e, t) for e, t in zip(event, time)]
        a = coxph_fit(x, recs)
        b = coxph_fit(x, (event, time))
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_gradient_and_hessian_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((3, 25))
        time = np.round(r.exponential(1.0, 25), 1) + 0.1  # rounding creates ties
        event = r.random(25) < 0.7
        event[0] = True
        beta = r.standard_normal(3)
        _, g, H = cox_partial_loglik(beta, x, event, time)
        eps = 1e-5
        for k in range(3):
            e = np.zeros(3)
            e[k] = eps
            lp, gp, _ = cox_partial_loglik(beta + e, x, event, time)
            lm, gm, _ = cox_partial_loglik(beta - e, x, event, time)
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - g[k]) <= 1e-5 * max(1.0, abs(fd))
            np.testing.assert_allclose((gp - gm) / (2 * eps), H[:, k], rtol=1e-5, atol=1e-5)

    def test_no_events(self, rng):
        with pytest.raises(DomainError):
            coxph_fit(rng.standard_normal((2, 5)), (np.zeros(5, bool), np.ones(5)))

    def test_bad_penalty(self, rng):
        with pytest.raises(DomainError):
            coxph_fit(rng.standard_normal((2, 5)), (np.ones(5, bool), np.arange(1.0, 6)), l1_ratio=2.0)

    def test_iteration_cap(self, rng):
        x, event, time = exp_survival(np.array([1.0, -1.0]), 100, seed=1)
        assert not coxph_fit(x, (event, time), max_iter=1).converged

    def test_non_finite_coefficients_rejected(self):
        with pytest.raises(DomainError):
            CoxModel(np.array([np.nan]))


class TestRiskScores:
    def test_zero_coefficients(self, rng):
        np.testing.assert_array_equal(risk_scores(CoxModel(np.zeros(3)), rng.standard_normal((3, 4))), 0.0)

    def test_dot_product_oracle(self, rng):
        beta, x = rng.standard_normal(3), rng.standard_normal((3, 6))
        s = risk_scores(CoxModel(beta), x)
        for i in range(6):
            assert s[i] == pytest.approx(sum(beta[k] * x[k, i] for k in range(3)), abs=1e-12)

    def test_scaling(self, rng):
        beta, x = rng.standard_normal(3), rng.standard_normal((3, 10))
        event, time = np.ones(10, bool), rng.exponential(1.0, 10)
        s1, s2 = risk_scores(CoxModel(beta), x), risk_scores(CoxModel(2 * beta), x)
        np.testing.assert_allclose(s2, 2 * s1)
        assert concordance_index((event, time), s1) == concordance_index((event, time), s2)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            risk_scores(CoxModel(np.zeros(2)), np.zeros((3, 4)))


class TestConcordance:
    def test_perfect(self):
        recs = [SurvivalRecord(True, t) for t in (1.0, 2.0, 3.0)]
        assert concordance_index(recs, [3.0, 2.0, 1.0]) == 1.0
        assert concordance_index(recs, [1.0, 2.0, 3.0]) == 0.0

    def test_ties_count_zero(self):
        recs = [SurvivalRecord(True, t) for t in (1.0, 2.0)]
        assert concordance_index(recs, [1.0, 1.0]) == 0.0

    def test_brute_force_oracle(self, rng):
        event = np.array([True, False, True, True, False, True])
        time = np.array([2.0, 3.0, 1.0, 5.0, 4.0, 2.0])
        for _ in range(20):
            scores = rng.standard_normal(6)
            assert concordance_index((event, time), scores) == brute_cindex(event, time, scores)

    def test_censored_never_first(self):
        # only subject 0 has an event; subject 1 is censored earlier
        event = np.array([True, False, False])
        time = np.array([2.0, 1.0, 3.0])
        assert concordance_index((event, time), [1.0, 5.0, 0.0]) == 1.0

    def test_no_pairs(self):
        with pytest.raises(DomainError):
            concordance_index((np.zeros(3, bool), np.ones(3)), np.zeros(3))

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_properties(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(3, 15))
        event = r.random(n) < 0.6
        event[0] = True
        time = r.exponential(1.0, n)
        time[0] = time.min() / 2  # guarantees an ordered pair
        scores = r.standard_normal(n)
        c = concordance_index((event, time), scores)
        assert 0.0 <= c <= 1.0
        assert c == brute_cindex(event, time, scores)
        assert concordance_index((event, time), np.exp(3 * scores) + 1) == c
        assert c + concordance_index((event, time), -scores) == pytest.approx(1.0)
