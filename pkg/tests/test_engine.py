"""Tests for the acceleration wrapper (sessions, radii, estimators)."""

import itertools
import json
import math
import warnings

import numpy as np
import pytest

from saew.bounds import (
    a_prime,
    b_prime,
    delta_i,
    err_bound,
    radius_bound,
    session_length_bound,
)
from saew.core import BALL_TOL, L1Ball, ProblemParams, ball_contains, l1_norm
from saew.engine import (
    SNAPSHOT_VERSION,
    SaewState,
    saew_estimators,
    saew_init,
    saew_restore,
    saew_snapshot,
    saew_step,
    truncate_top,
)
from saew.losses import make_square_env, make_truncated_square_env, square_grad
from saew.subroutine import RegretCertificate


# ============================================================
# Helpers
# ============================================================

def _square_oracle_factory(env, T):
    """Per-step gradient oracles for a square-loss environment."""
    x, y = env.draw(T)

    def oracle_at(t):
        def oracle(theta):
            return 2.0 * (float(x[t] @ theta) - y[t]) * x[t]
        return oracle

    return [oracle_at(t) for t in range(T)]


def _zero_oracle(theta):
    return np.zeros_like(theta)


def _run_recording(state, oracles):
    """Run steps, recording per-step diagnostics for invariant checks."""
    rows = []
    centers = {0: state.center.copy()}
    for oracle in oracles:
        pred = state.optimizer.predict()
        session_before = state.session
        center_before = state.center.copy()
        radius_before = state.radius
        start_before = state.session_start
        saew_step(state, oracle)
        rows.append({
            "pred": pred,
            "session": session_before,
            "center": center_before,
            "radius": radius_before,
            "session_start": start_before,
            "eps": state.eps_t,
            "err": state.err_t,
            "theta_bar": state.theta_bar.copy(),
            "theta_tilde": state.theta_tilde.copy(),
            "eps_min": state.eps_min,
            "grad_sq_sum_after": state.grad_sq_sum,
        })
        for s in range(session_before + 1, state.session + 1):
            if s not in centers:
                centers[s] = state.center.copy()
    return rows, centers


FAST_PARAMS = ProblemParams(d0=1, alpha=50.0, U=1.0, B=0.5, delta=0.1)


# ============================================================
# truncate_top
# ============================================================

def test_truncate_top_single_largest():
    np.testing.assert_array_equal(
        truncate_top(np.array([0.5, -0.2, 0.1]), 1), np.array([0.5, 0.0, 0.0]))


def test_truncate_top_identity_when_d0_equals_d():
    v = np.array([1.0, -3.0, 2.0, 0.0])
    np.testing.assert_array_equal(truncate_top(v, 4), v)


def test_truncate_top_two_largest_magnitudes():
    np.testing.assert_array_equal(
        truncate_top(np.array([1.0, -3.0, 2.0, 0.0]), 2),
        np.array([0.0, -3.0, 2.0, 0.0]))


def test_truncate_top_zero_support():
    np.testing.assert_array_equal(truncate_top(np.array([1.0, 2.0]), 0),
                                  np.zeros(2))


def test_truncate_top_tie_keeps_lowest_index():
    np.testing.assert_array_equal(truncate_top(np.array([1.0, -1.0]), 1),
                                  np.array([1.0, 0.0]))
    np.testing.assert_array_equal(
        truncate_top(np.array([-2.0, 1.0, 2.0]), 2),
        np.array([-2.0, 0.0, 2.0]))


def test_truncate_top_rejects_bad_support_size():
    with pytest.raises(ValueError):
        truncate_top(np.array([1.0, 2.0]), -1)
    with pytest.raises(ValueError):
        truncate_top(np.array([1.0, 2.0]), 3)
    with pytest.raises(ValueError):
        truncate_top(np.ones((2, 2)), 1)


def test_truncate_top_is_l2_projection_onto_sparse_vectors():
    # Compare against brute force over all supports of size d0.
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = 5
        v = rng.normal(size=d)
        for d0 in (1, 2, 3):
            got = truncate_top(v, d0)
            best = math.inf
            for support in itertools.combinations(range(d), d0):
                cand = np.zeros(d)
                cand[list(support)] = v[list(support)]
                best = min(best, float(np.sum((v - cand) ** 2)))
            assert float(np.sum((v - got) ** 2)) == pytest.approx(best)
            assert np.count_nonzero(got) <= d0


def test_truncate_top_idempotent():
    v = np.array([0.3, -0.7, 0.05, 0.7])
    once = truncate_top(v, 2)
    np.testing.assert_array_equal(truncate_top(once, 2), once)


# ============================================================
# saew_init
# ============================================================

def test_init_session_zero_ball():
    params = ProblemParams(d0=1, alpha=1.0, U=2.5, B=1.0, delta=0.1)
    state = saew_init(params, d=3)
    np.testing.assert_array_equal(state.center, np.zeros(3))
    assert state.radius == 2.5
    assert state.session == 0
    assert state.t == 1 and state.session_start == 1
    assert state.session_starts == [1]
    assert state.eps_t == 2.5 and state.eps_min == 2.5
    assert state.eps_argmin == 0


def test_init_estimators_are_zero_vectors():
    params = ProblemParams(d0=1, alpha=1.0, U=1.0, B=1.0, delta=0.1)
    state = saew_init(params, d=4)
    theta_hat, theta_tilde = saew_estimators(state)
    np.testing.assert_array_equal(theta_hat, np.zeros(4))
    np.testing.assert_array_equal(theta_tilde, np.zeros(4))


def test_init_validation():
    params = ProblemParams(d0=3, alpha=1.0, U=1.0, B=1.0, delta=0.1)
    with pytest.raises(ValueError, match="d0"):
        saew_init(params, d=2)
    with pytest.raises(ValueError, match="d must be"):
        saew_init(params, d=0)


def test_init_warns_on_degenerate_sparsity():
    params = ProblemParams(d0=0, alpha=1.0, U=1.0, B=1.0, delta=0.1)
    with pytest.warns(UserWarning, match="degenerate"):
        saew_init(params, d=2)


# ============================================================
# saew_step basics
# ============================================================

def test_first_step_budget_and_radius_cross_consistency():
    # The state's err/eps must equal the bounds-module formulas exactly.
    params = ProblemParams(d0=1, alpha=2.0, U=1.0, B=1.0, delta=0.1)
    state = saew_init(params, d=2)
    g = np.array([0.3, -0.8])
    saew_step(state, lambda theta: g)
    a_p = a_prime(state.certificate.a, 1, delta_i(0.1, 1))
    b_p = b_prime(state.certificate.b, 1, delta_i(0.1, 1))
    err = err_bound(0.8 ** 2, a_p, b_p, 1.0)
    assert state.a_prime_t == a_p and state.b_prime_t == b_p
    assert state.err_t == err
    assert state.eps_t == radius_bound(1, 1.0, 0, 2.0, 1, err)
    assert state.t == 2
    assert state.grad_sq_sum == pytest.approx(0.64)


def test_step_rejects_bad_gradients():
    params = ProblemParams(d0=1, alpha=1.0, U=1.0, B=1.0, delta=0.1)
    state = saew_init(params, d=2)
    with pytest.raises(ValueError, match="finite"):
        saew_step(state, lambda theta: np.array([np.nan, 0.0]))
    with pytest.raises(ValueError, match="shape"):
        saew_step(state, lambda theta: np.zeros(3))
    # Failed steps leave the clock untouched.
    assert state.t == 1 and state.grad_sq_sum == 0.0


def test_oracle_receives_current_prediction():
    params = ProblemParams(d0=1, alpha=1.0, U=1.0, B=1.0, delta=0.1)
    state = saew_init(params, d=2)
    seen = []

    def oracle(theta):
        seen.append(theta.copy())
        return np.array([0.5, 0.0])

    expected = state.optimizer.predict()
    saew_step(state, oracle)
    np.testing.assert_array_equal(seen[0], expected)


def test_single_step_estimators_equal_first_prediction():
    # One-element average: theta_bar = theta_hat_0; if eps drops below U
    # the best estimator equals it as well.
    params = ProblemParams(d0=1, alpha=1e6, U=1.0, B=0.5, delta=0.1)
    state = saew_init(params, d=2)
    first_pred = state.optimizer.predict()
    saew_step(state, lambda theta: np.array([0.1, -0.2]))
    np.testing.assert_array_equal(state.theta_bar, first_pred)
    assert state.eps_t < 1.0  # huge alpha forces an immediate drop
    np.testing.assert_array_equal(state.theta_tilde, first_pred)
    assert state.eps_argmin == 1


# ============================================================
# Session scheduling
# ============================================================

def _predicted_schedule(params, cert, T):
    """Closed-form session schedule for an all-zero gradient stream."""
    starts = [1]
    session = 0
    start = 1
    for t in range(1, T + 1):
        w = t - start + 1
        d_next = delta_i(params.delta, session + 1)
        err = err_bound(0.0, a_prime(cert.a, w, d_next),
                        b_prime(cert.b, w, d_next), params.B)
        eps = radius_bound(params.d0, params.U, session, params.alpha, w, err)
        while eps <= params.U * 2.0 ** (-(session + 1) / 2.0):
            session += 1
            start = t + 1
            starts.append(start)
    return starts


def test_zero_gradient_schedule_matches_closed_form():
    # With zero gradients the error budget is b'*B and session closes are
    # exactly predictable from the formulas.
    cert = RegretCertificate(0.0, 1.0)
    state = saew_init(FAST_PARAMS, d=3, certificate=cert)
    T = 400
    for _ in range(T):
        saew_step(state, _zero_oracle)
    assert len(state.session_starts) > 3  # several sessions actually closed
    assert state.session_starts == _predicted_schedule(FAST_PARAMS, cert, T)


def test_zero_gradient_predictions_stay_at_origin():
    state = saew_init(FAST_PARAMS, d=3, certificate=RegretCertificate(0.0, 1.0))
    for _ in range(100):
        theta_hat, theta_tilde = saew_estimators(state)
        np.testing.assert_array_equal(theta_hat, np.zeros(3))
        np.testing.assert_array_equal(theta_tilde, np.zeros(3))
        saew_step(state, _zero_oracle)
    np.testing.assert_array_equal(state.center, np.zeros(3))


def test_session_radius_bookkeeping_exact():
    state = saew_init(FAST_PARAMS, d=2, certificate=RegretCertificate(0.0, 1.0))
    for _ in range(300):
        saew_step(state, _zero_oracle)
        assert state.radius == FAST_PARAMS.U * 2.0 ** (-state.session / 2.0)
    assert len(state.session_starts) == state.session + 1


def test_stopping_rule_is_tight():
    # At each recorded close, eps was at most the next radius; one step
    # earlier (within the same session, if any) it was above it.
    rng = np.random.default_rng(12)
    params = ProblemParams(d0=1, alpha=30.0, U=1.0, B=2.0, delta=0.1)
    state = saew_init(params, d=2)
    T = 600
    eps_hist = []
    session_of_step = []
    for t in range(1, T + 1):
        saew_step(state, lambda theta: rng.uniform(-1, 1, size=2))
        eps_hist.append(state.eps_t)
        session_of_step.append(state.session)
    starts = state.session_starts
    assert len(starts) >= 3
    for i in range(1, len(starts)):
        close_t = starts[i] - 1  # last executed step before session i began
        if close_t < 1 or close_t > T:
            continue
        # The radius that triggered the close is that of session i.
        threshold = params.U * 2.0 ** (-i / 2.0)
        assert eps_hist[close_t - 1] <= threshold + 1e-15
        prev_t = close_t - 1
        if prev_t >= max(starts[i - 1], 1) and prev_t >= 1:
            # Previous step belonged to session i-1 and did not close it.
            if session_of_step[prev_t - 1] == i - 1:
                assert eps_hist[prev_t - 1] > params.U * 2.0 ** (-i / 2.0)


def test_cascade_opens_zero_length_sessions():
    # A huge alpha makes eps tiny immediately: several sessions close on
    # the very first step, all starting at t=2.
    params = ProblemParams(d0=1, alpha=1e8, U=1.0, B=0.5, delta=0.1)
    state = saew_init(params, d=2)
    saew_step(state, lambda theta: np.array([0.2, 0.1]))
    assert state.session >= 2  # at least one zero-length session
    assert state.session_starts[1:] == [2] * state.session
    assert state.radius == params.U * 2.0 ** (-state.session / 2.0)
    assert state.eps_t > params.U * 2.0 ** (-(state.session + 1) / 2.0)


def test_degenerate_d0_closes_one_session_per_step():
    params = ProblemParams(d0=0, alpha=1.0, U=1.0, B=1.0, delta=0.1)
    with pytest.warns(UserWarning, match="degenerate"):
        state = saew_init(params, d=2)
    for k in range(1, 6):
        saew_step(state, lambda theta: np.array([0.3, -0.3]))
        assert state.eps_t == 0.0
        assert state.session == k
    theta_hat, theta_tilde = saew_estimators(state)
    np.testing.assert_array_equal(theta_hat, np.zeros(2))
    np.testing.assert_array_equal(theta_tilde, np.zeros(2))
    assert state.eps_min == 0.0 and state.eps_argmin == 1


# ============================================================
# Session average and best estimator
# ============================================================

def test_theta_bar_matches_recomputed_session_average():
    env = make_square_env(d=4, d0=2, noise_sd=0.2, seed=31)
    params = ProblemParams(d0=2, alpha=20.0, U=1.0, B=4.0, delta=0.1)
    state = saew_init(params, d=4)
    T = 2500  # crosses the periodic full-recompute boundary
    rows, _ = _run_recording(state, _square_oracle_factory(env, T))
    preds_by_session: dict[int, list[np.ndarray]] = {}
    for row in rows:
        preds_by_session.setdefault(row["session"], []).append(row["pred"])
        mean = np.mean(preds_by_session[row["session"]], axis=0)
        np.testing.assert_allclose(row["theta_bar"], mean, atol=1e-9)


def test_eps_argmin_freezing_and_global_minimum():
    env = make_square_env(d=3, d0=1, noise_sd=0.3, seed=7)
    params = ProblemParams(d0=1, alpha=15.0, U=1.0, B=4.0, delta=0.1)
    state = saew_init(params, d=3)
    rows, _ = _run_recording(state, _square_oracle_factory(env, 400))
    eps_min = params.U  # pre-loop value
    argmin_bar = np.zeros(3)
    for row in rows:
        if row["eps"] < eps_min:  # strict: earliest tie kept
            eps_min = row["eps"]
            argmin_bar = row["theta_bar"]
        assert row["eps_min"] == eps_min
        np.testing.assert_array_equal(row["theta_tilde"], argmin_bar)
    assert state.eps_min == eps_min


def test_theta_tilde_stays_zero_when_eps_never_drops():
    # Tiny alpha keeps eps above U for a short run: the best estimator
    # remains the initialization.
    params = ProblemParams(d0=1, alpha=1e-4, U=1.0, B=4.0, delta=0.1)
    env = make_square_env(d=3, d0=1, noise_sd=0.3, seed=7)
    state = saew_init(params, d=3)
    for oracle in _square_oracle_factory(env, 50):
        saew_step(state, oracle)
        assert state.eps_t > 1.0
    np.testing.assert_array_equal(state.theta_tilde, np.zeros(3))
    assert state.eps_argmin == 0 and state.eps_min == 1.0


# ============================================================
# Ball membership and norm control
# ============================================================

def test_predictions_in_session_ball_and_l1_under_induction():
    violations = 0
    event_runs = 0
    for seed in range(6):
        env = make_truncated_square_env(d=5, d0=2, noise_sd=0.1, seed=seed,
                                        x_bound=1.5)
        params = ProblemParams(d0=2, alpha=10.0, U=1.0, B=5.0, delta=0.1)
        state = saew_init(params, d=5)
        rows, centers = _run_recording(state,
                                       _square_oracle_factory(env, 1200))
        for row in rows:
            ball = L1Ball(row["center"], row["radius"])
            assert ball_contains(ball, row["pred"])
        # Lemma-style norm bound under the induction event.
        event = all(
            l1_norm(c - env.theta_star_metrics) <= params.U * 2 ** (-i / 2)
            for i, c in centers.items())
        if event:
            event_runs += 1
            for row in rows:
                if l1_norm(row["pred"]) > 2 * params.U + BALL_TOL:
                    violations += 1
    assert event_runs >= 1  # the check must not be vacuous
    assert violations == 0


# ============================================================
# Session-length bound
# ============================================================

def test_session_lengths_within_bound():
    # Zero-gradient stream: every gradient is (trivially) within B, so the
    # closed-session length bound must hold for each recorded session.
    params = FAST_PARAMS
    cert = RegretCertificate(0.0, 1.0)
    state = saew_init(params, d=3, certificate=cert)
    for _ in range(400):
        saew_step(state, _zero_oracle)
    starts = state.session_starts
    assert len(starts) >= 4
    gamma = 2 ** 4 * params.d0 * params.B / (params.alpha * params.U)
    for j in range(len(starts) - 1):
        T_j = starts[j + 1] - starts[j]
        w = max(T_j, 1)
        a_p = a_prime(cert.a, w, delta_i(params.delta, j + 1))
        b_p = b_prime(cert.b, w, delta_i(params.delta, j + 1))
        assert T_j <= session_length_bound(gamma, a_p, b_p, j) + 1e-9


def test_session_lengths_within_bound_noisy_gradients():
    rng = np.random.default_rng(3)
    params = ProblemParams(d0=1, alpha=40.0, U=1.0, B=2.0, delta=0.1)
    state = saew_init(params, d=2)
    grads_ok = True
    for _ in range(800):
        g = rng.uniform(-2.0, 2.0, size=2)
        grads_ok &= float(np.max(np.abs(g))) <= params.B
        saew_step(state, lambda theta, g=g: g)
    assert grads_ok
    starts = state.session_starts
    assert len(starts) >= 3
    gamma = 2 ** 4 * params.d0 * params.B / (params.alpha * params.U)
    for j in range(len(starts) - 1):
        T_j = starts[j + 1] - starts[j]
        a_p = a_prime(state.certificate.a, max(T_j, 1),
                      delta_i(params.delta, j + 1))
        b_p = b_prime(state.certificate.b, max(T_j, 1),
                      delta_i(params.delta, j + 1))
        assert T_j <= session_length_bound(gamma, a_p, b_p, j) + 1e-9


# ============================================================
# Statistical behaviour on square-loss environments
# ============================================================

def test_induction_event_coverage():
    # Completed-session centers stay within the session radius of the
    # truth in at least a 1 - delta fraction of runs.
    hits = 0
    runs = 30
    completed_any = 0
    for seed in range(runs):
        env = make_truncated_square_env(d=5, d0=1, noise_sd=0.05, seed=seed,
                                        x_bound=1.5)
        params = ProblemParams(d0=1, alpha=8.0, U=1.0, B=4.0, delta=0.05)
        state = saew_init(params, d=5)
        centers = {0: state.center.copy()}
        for oracle in _square_oracle_factory(env, 1500):
            before = state.session
            saew_step(state, oracle)
            for s in range(before + 1, state.session + 1):
                centers.setdefault(s, state.center.copy())
        if len(centers) > 1:
            completed_any += 1
        ok = all(
            l1_norm(c - env.theta_star_metrics) <= params.U * 2 ** (-i / 2)
            for i, c in centers.items())
        hits += ok
    assert completed_any >= runs // 2  # sessions really close
    assert hits / runs >= 1 - 0.05


def test_theta_tilde_risk_within_radius_chain():
    # Risk(theta_tilde) <= alpha * eps_min^2 / (8 d0) on runs where the
    # induction event holds (square loss: exact excess risk available).
    checked = 0
    for seed in range(5):
        env = make_truncated_square_env(d=4, d0=1, noise_sd=0.05, seed=seed,
                                        x_bound=1.5)
        params = ProblemParams(d0=1, alpha=8.0, U=1.0, B=4.0, delta=0.05)
        state = saew_init(params, d=4)
        centers = {0: state.center.copy()}
        for oracle in _square_oracle_factory(env, 1500):
            before = state.session
            saew_step(state, oracle)
            for s in range(before + 1, state.session + 1):
                centers.setdefault(s, state.center.copy())
        event = all(
            l1_norm(c - env.theta_star_metrics) <= params.U * 2 ** (-i / 2)
            for i, c in centers.items())
        if not event or state.eps_min >= params.U:
            continue
        checked += 1
        risk = env.excess_risk_exact(state.theta_tilde)
        bound = params.alpha * state.eps_min ** 2 / (8 * params.d0)
        assert risk <= bound
    assert checked >= 3  # the assertion must actually fire


def test_determinism_same_seed_same_trajectory():
    def run():
        env = make_square_env(d=4, d0=2, noise_sd=0.2, seed=11)
        params = ProblemParams(d0=2, alpha=25.0, U=1.0, B=4.0, delta=0.1)
        state = saew_init(params, d=4)
        for oracle in _square_oracle_factory(env, 700):
            saew_step(state, oracle)
        return state

    s1, s2 = run(), run()
    assert s1.session_starts == s2.session_starts
    np.testing.assert_array_equal(s1.theta_tilde, s2.theta_tilde)
    assert s1.eps_t == s2.eps_t and s1.eps_min == s2.eps_min


# ============================================================
# Snapshot / restore
# ============================================================

def test_snapshot_roundtrips_through_json():
    env = make_square_env(d=3, d0=1, noise_sd=0.2, seed=2)
    params = ProblemParams(d0=1, alpha=20.0, U=1.0, B=4.0, delta=0.1)
    state = saew_init(params, d=3)
    oracles = _square_oracle_factory(env, 300)
    for oracle in oracles[:120]:
        saew_step(state, oracle)
    doc = json.loads(json.dumps(saew_snapshot(state)))
    assert doc["version"] == SNAPSHOT_VERSION
    restored = saew_restore(doc)
    # Continue both and compare exactly.
    for oracle in oracles[120:]:
        saew_step(state, oracle)
        saew_step(restored, oracle)
    assert restored.session_starts == state.session_starts
    assert restored.eps_t == state.eps_t
    assert restored.eps_min == state.eps_min
    np.testing.assert_array_equal(restored.theta_tilde, state.theta_tilde)
    np.testing.assert_array_equal(restored.optimizer.predict(),
                                  state.optimizer.predict())


def test_snapshot_rejects_unknown_version():
    params = ProblemParams(d0=1, alpha=1.0, U=1.0, B=1.0, delta=0.1)
    doc = saew_snapshot(saew_init(params, d=2))
    doc["version"] = "saew-state-v999"
    with pytest.raises(ValueError, match="version"):
        saew_restore(doc)
