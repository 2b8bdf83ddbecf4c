import itertools

import numpy as np
import pytest

from pfscore import (
    Ar1Params, LagBuffer, ar1_model, apf_init, fixed_lag_run, kalman_score_info,
    poyiadjis_n2_run, poyiadjis_n_run, rb_init, rb_run, shrinkage_coeffs, simulate,
)
from pfscore.estimators.rb import _quad

THETA = np.array([0.8, 0.5, 1.0])


def _model():
    return ar1_model(Ar1Params(*THETA))


class TestLambdaOneCollapse:
    def test_bitwise_equal_to_path_estimator(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        y = y[:120]
        a = rb_run(model, theta, y, 400, 1.0, np.random.default_rng(11),
                   engine="numpy")
        b = poyiadjis_n_run(model, theta, y, 400, np.random.default_rng(11),
                            engine="numpy")
        np.testing.assert_array_equal(a.score_trace, b.score_trace)
        np.testing.assert_array_equal(a.info, b.info)
        np.testing.assert_array_equal(a.info_diag_trace, b.info_diag_trace)
        assert a.loglik == b.loglik


class TestRbState:
    def test_time_one_statistic(self):
        model = _model()
        rng = np.random.default_rng(0)
        y1 = 0.4
        ps = apf_init(model, THETA, y1, 200, rng)
        ss = rb_init(ps, model, THETA, y1, lam=0.37)
        expected = model.grad_log_obs(y1, ps.x, 1, THETA) + model.grad_log_init(
            ps.x, THETA
        )
        np.testing.assert_array_equal(ss.m, expected)
        np.testing.assert_allclose(ss.S, ps.w @ expected, atol=1e-14)
        np.testing.assert_array_equal(ss.V, np.zeros((3, 3)))
        assert ss.h2 == 1.0 - 0.37**2

    def test_lambda_plays_no_role_at_time_one(self):
        model = _model()
        ps = apf_init(model, THETA, 0.4, 200, np.random.default_rng(1))
        s_a = rb_init(ps, model, THETA, 0.4, lam=0.2).S
        s_b = rb_init(ps, model, THETA, 0.4, lam=0.99).S
        np.testing.assert_array_equal(s_a, s_b)

    def test_info_symmetric_and_both_printed_forms_agree(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        rng = np.random.default_rng(2)
        from pfscore import apf_step, rb_step

        ps = apf_init(model, theta, y[0], 300, rng)
        ss = rb_init(ps, model, theta, y[0], lam=0.9)
        for t in range(1, 40):
            ps_new = apf_step(ps, model, theta, y[t], rng)
            ss = rb_step(ss, ps, ps_new, model, theta, y[t])
            ps = ps_new
            np.testing.assert_array_equal(ss.I, ss.I.T)
            # sum_i w_i (m m^T + n) + h2 V  ==  sum_i w_i (m m^T + h2 V + n)
            form_alg = np.outer(ss.S, ss.S) - _quad(ps.w, ss.m, ss.n) - ss.h2 * ss.V
            mm = ss.m[:, :, None] * ss.m[:, None, :] + ss.n + ss.h2 * ss.V[None, :, :]
            form_sum = np.outer(ss.S, ss.S) - np.einsum("i,iab->ab", ps.w, mm)
            np.testing.assert_allclose(form_alg, form_sum, atol=1e-12)
            np.testing.assert_allclose(ss.I, form_alg, atol=0)

    def test_shrinkage_variance_nondecreasing_loewner(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        rng = np.random.default_rng(3)
        from pfscore import apf_step, rb_step

        ps = apf_init(model, theta, y[0], 300, rng)
        ss = rb_init(ps, model, theta, y[0], lam=0.8)
        v_prev = ss.V.copy()
        for t in range(1, 30):
            ps_new = apf_step(ps, model, theta, y[t], rng)
            ss = rb_step(ss, ps, ps_new, model, theta, y[t])
            ps = ps_new
            assert np.linalg.eigvalsh(ss.V - v_prev).min() >= -1e-12
            v_prev = ss.V.copy()

    def test_determinism(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        y = y[:60]
        a = rb_run(model, theta, y, 200, 0.9, np.random.default_rng(7), engine="numpy")
        b = rb_run(model, theta, y, 200, 0.9, np.random.default_rng(7), engine="numpy")
        np.testing.assert_array_equal(a.score_trace, b.score_trace)
        np.testing.assert_array_equal(a.info, b.info)

    def test_rejects_bad_lambda(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        with pytest.raises(ValueError):
            rb_run(model, theta, y[:5], 50, 0.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            rb_run(model, theta, y[:5], 50, 1.2, np.random.default_rng(0))


class TestMarginalEstimator:
    def test_single_particle_collapses_to_path_recursion(self, ar1_star_data):
        # N=1 forces every pairwise weight to 1, i.e. the plain path sum
        model, theta, _, y = ar1_star_data
        y = y[:30]
        a = poyiadjis_n2_run(model, theta, y, 1, np.random.default_rng(13))
        b = poyiadjis_n_run(model, theta, y, 1, np.random.default_rng(13),
                            engine="numpy")
        np.testing.assert_array_equal(a.score_trace, b.score_trace)
        np.testing.assert_allclose(a.info, b.info, atol=1e-12)

    def test_matches_kalman_score_over_replicates(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        y = y[:100]
        exact, _ = kalman_score_info(theta, y)
        rng = np.random.default_rng(14)
        reps = np.array([
            poyiadjis_n2_run(model, theta, y, 300, rng, with_info=False).score
            for _ in range(60)
        ])
        se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
        assert np.all(np.abs(reps.mean(axis=0) - exact) < 3 * np.maximum(se, 1e-3))

    def test_blocked_and_unblocked_identical(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        y = y[:25]
        a = poyiadjis_n2_run(model, theta, y, 150, np.random.default_rng(15), block=7)
        b = poyiadjis_n2_run(model, theta, y, 150, np.random.default_rng(15), block=150)
        np.testing.assert_allclose(a.score, b.score, atol=1e-12)
        np.testing.assert_allclose(a.info, b.info, atol=1e-10)


class TestFixedLag:
    def test_full_lag_equals_path_estimator(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        y = y[:80]
        a = fixed_lag_run(model, theta, y, 300, lag=len(y), rng=np.random.default_rng(21))
        b = rb_run(model, theta, y, 300, 1.0, np.random.default_rng(21), engine="numpy")
        np.testing.assert_array_equal(a.score_trace, b.score_trace)
        np.testing.assert_array_equal(a.info, b.info)

    def test_buffer_matches_exhaustive_bruteforce(self):
        # every ancestor assignment for N=2, T=3, checked against a direct
        # evaluation of sum_s sum_i w_{min(s+L,T)}(i) phi_s(ancestor of i at s)
        d = 2
        incr = [
            np.array([[1.0, 2.0], [3.0, 5.0]]),
            np.array([[7.0, 11.0], [13.0, 17.0]]),
            np.array([[19.0, 23.0], [29.0, 31.0]]),
        ]
        w2 = np.array([0.25, 0.75])
        w3 = np.array([0.6, 0.4])
        weights = {2: w2, 3: w3}
        for anc2 in itertools.product(range(2), repeat=2):
            for anc3 in itertools.product(range(2), repeat=2):
                anc = {2: np.array(anc2), 3: np.array(anc3)}

                def ancestor(i, s, t):
                    j = i
                    for g in range(t, s, -1):
                        j = anc[g][j]
                    return j

                for lag in (1, 2, 3):
                    buf = LagBuffer(lag, with_info=False)
                    fin = np.zeros(d)
                    buf.push(incr[0], None, None)
                    for t in (2, 3):
                        buf.push(incr[t - 1], None, anc[t])
                        if len(buf) > lag:
                            f, _ = buf.finalize_oldest(weights[t])
                            fin += f
                    psi, _ = buf.window_sums()
                    got = fin + w3 @ psi

                    want = np.zeros(d)
                    for s in (1, 2, 3):
                        tf = min(s + lag, 3)
                        for i in range(2):
                            want += weights.get(tf, w3)[i] * incr[s - 1][ancestor(i, s, tf)]
                    np.testing.assert_allclose(got, want, atol=1e-12)

    def test_lag_must_be_positive(self, ar1_star_data):
        model, theta, _, y = ar1_star_data
        with pytest.raises(ValueError):
            fixed_lag_run(model, theta, y[:10], 50, lag=0, rng=np.random.default_rng(0))


class TestShrinkageCoeffs:
    def test_trivial_and_closed_form_values(self):
        rec, closed = shrinkage_coeffs(0.5, 4)
        assert closed[3, 3, 3] == 1.0  # u = s = k
        assert closed[3, 1, 2] == pytest.approx((1 - 0.5) * 0.5, abs=0)
        assert rec[1, 1, 1] == 1.0

    @pytest.mark.parametrize("lam", [0.3, 0.5, 0.9])
    def test_recursion_equals_closed_form(self, lam):
        rec, closed = shrinkage_coeffs(lam, 12)
        np.testing.assert_allclose(rec, closed, atol=1e-12)

    def test_rejects_degenerate_lambda(self):
        with pytest.raises(ValueError):
            shrinkage_coeffs(1.0, 5)
        with pytest.raises(ValueError):
            shrinkage_coeffs(0.0, 5)


class TestUnbiasedScore:
    def test_zero_mean_at_true_parameter_small(self):
        # reduced-size version of the statistical acceptance test
        theta = THETA
        model = _model()
        root = np.random.default_rng(2024)
        reps = []
        for _ in range(80):
            data_rng = np.random.default_rng(root.integers(2**63))
            _, y = simulate(model, theta, 30, data_rng)
            r = rb_run(model, theta, y, 400, 0.8, data_rng, with_info=False,
                       engine="numpy")
            reps.append(r.score)
        reps = np.array(reps)
        se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
        assert np.all(np.abs(reps.mean(axis=0)) < 2.576 * se)
