import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import DEADBEAT
from lqrlab import RngStream, analytic_report
from lqrlab.algorithms import (
    COLUMNS,
    DoubleLoopHyper,
    SsacHyper,
    ZeroOrderHyper,
    double_loop_train,
    natural_gradient_estimate,
    proj_ball,
    ssac_train,
    zeroth_order_train,
)
from lqrlab.algorithms.double_loop import evaluate_policy
from lqrlab.algorithms.trace import TraceRecorder, prefix_means
from lqrlab.algorithms.zeroth_order import unit_sphere_matrices, zeroth_order_step
from lqrlab.env import with_sigma
from lqrlab.errors import DimensionError, DivergenceError, ValidationError

K_SAFE = np.array([[0.8, 0.1], [0.0, 0.6]])


# ---------------------------------------------------------------- shared pieces

def test_natural_gradient_estimate_at_true_critic(ex1, ex2):
    for sys in (ex1, ex2):
        K = np.zeros((sys.k, sys.d)) + 0.05
        if sys is ex1:
            K = K_SAFE
        rep = analytic_report(sys, K)
        assert np.allclose(natural_gradient_estimate(rep.omega_star, K), rep.E_K)


def test_natural_gradient_estimate_dimension_check():
    with pytest.raises(DimensionError):
        natural_gradient_estimate(np.zeros(6), np.eye(2))


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)), st.floats(0.01, 100))
def test_proj_ball_properties(v, radius):
    p = proj_ball(v, radius)
    assert np.linalg.norm(p) <= radius * (1 + 1e-12)
    assert np.allclose(proj_ball(p, radius), p)
    if np.linalg.norm(v) <= radius:
        assert np.array_equal(p, v)


def test_proj_ball_scalar():
    assert proj_ball(5.0, 2.0) == 2.0 and proj_ball(-1.0, 2.0) == -1.0


def test_trace_recorder_keeps_first_and_last():
    rec = TraceRecorder("x", stride=4)
    block = {c: np.arange(10) for c in COLUMNS}
    rec.add(block)
    tr = rec.finish()
    assert list(tr["iter"]) == [0, 3, 7, 9]


def test_prefix_means():
    assert np.allclose(prefix_means([1.0, 3.0, 5.0]), [1.0, 2.0, 3.0])


# ---------------------------------------------------------------- single-sample AC

def test_ssac_zero_horizon_returns_initial_state(ex1):
    tr = ssac_train(ex1, SsacHyper(T=0, K0=K_SAFE), RngStream(0))
    assert len(tr) == 0 and np.array_equal(tr.final_K, K_SAFE) and tr.final_eta == 0.0


def test_ssac_actor_uses_pre_update_critic(ex1):
    rep = analytic_report(ex1, K_SAFE)
    hp = SsacHyper(T=1, K0=K_SAFE, omega0=rep.omega_star, c_alpha=0.3)
    tr = ssac_train(ex1, hp, RngStream(0))
    # with omega_0 = omega*, the first actor step is exactly the natural gradient
    assert np.allclose(tr.final_K, K_SAFE - 0.3 * rep.E_K, atol=1e-13)
    assert tr["critic_err_sq"][0] == pytest.approx(0.0, abs=1e-20)
    assert tr["y_sq"][0] == pytest.approx(rep.J**2)


def test_ssac_zero_critic_leaves_actor_fixed(ex1):
    tr = ssac_train(ex1, SsacHyper(T=1, K0=K_SAFE), RngStream(0))
    assert np.array_equal(tr.final_K, K_SAFE)


def test_ssac_deterministic_and_seed_sensitive(ex1):
    hp = SsacHyper(T=3000)
    a = ssac_train(ex1, hp, RngStream(11), stride=1)
    b = ssac_train(ex1, hp, RngStream(11), stride=1)
    c = ssac_train(ex1, hp, RngStream(12), stride=1)
    for col in COLUMNS:
        assert np.array_equal(a[col], b[col], equal_nan=True)
    assert not np.array_equal(a.final_K, c.final_K)


def test_ssac_accounting_and_prefix_means(ex1):
    tr = ssac_train(ex1, SsacHyper(T=5000), RngStream(1), stride=1)
    assert np.array_equal(tr["samples"], np.arange(1, 5001))
    assert np.allclose(tr["A_T"], prefix_means(tr["y_sq"]), rtol=1e-12)
    assert np.allclose(tr["B_T"], prefix_means(tr["critic_err_sq"]), rtol=1e-12)
    assert np.allclose(tr["C_T"], prefix_means(tr["nat_grad_sq"]), rtol=1e-12)


def test_ssac_striding_loses_no_prefix_accuracy(ex1):
    full = ssac_train(ex1, SsacHyper(T=4000), RngStream(2), stride=1)
    strided = ssac_train(ex1, SsacHyper(T=4000), RngStream(2))
    assert len(strided) == 1001
    idx = strided["iter"]
    assert np.array_equal(strided["A_T"], full["A_T"][idx])


def test_ssac_oracle_does_not_influence_learning(ex1):
    a = ssac_train(ex1, SsacHyper(T=2000), RngStream(3), oracle_refs=True)
    b = ssac_train(ex1, SsacHyper(T=2000), RngStream(3), oracle_refs=False)
    assert np.array_equal(a.final_K, b.final_K)
    assert np.all(np.isnan(b["actor_gap"]))


def test_ssac_critic_tracks_fixed_policy(ex1):
    # actor frozen by a negligible actor stepsize: TD(0) alone must approach omega*
    rep = analytic_report(ex1, DEADBEAT)
    hp = SsacHyper(T=50_000, c_alpha=1e-12, c_beta=0.05, c_gamma=1.0, K0=DEADBEAT)
    tr = ssac_train(ex1, hp, RngStream(0))
    rel = np.linalg.norm(tr.final_omega - rep.omega_star) / np.linalg.norm(rep.omega_star)
    assert rel < 0.15
    assert tr["critic_err_sq"][-1] < 0.01 * tr["critic_err_sq"][0]


@pytest.mark.parametrize("mode", ["chained", "burn_in"])
def test_ssac_alternative_sampling_modes(ex1, mode):
    tr = ssac_train(ex1, SsacHyper(T=2000, sampling=mode, burn_in=20), RngStream(4))
    assert np.all(np.isfinite(tr["actor_gap"])) and tr.status == "ok"


def test_ssac_divergence_is_reported_with_trace(ex1):
    with pytest.raises(DivergenceError) as info:
        ssac_train(ex1, SsacHyper(T=2000, c_alpha=50.0, c_beta=50.0), RngStream(0))
    assert info.value.trace is not None and info.value.trace.status == "diverged"


def test_ssac_rejects_bad_inputs(ex1):
    with pytest.raises(ValidationError):
        ssac_train(ex1, SsacHyper(T=10, K0=np.zeros((2, 2))), RngStream(0))
    with pytest.raises(ValidationError):
        ssac_train(ex1, SsacHyper(T=10, sampling="nope"), RngStream(0))
    with pytest.raises(ValidationError):
        ssac_train(ex1, SsacHyper(T=10, omega0=np.zeros(3)), RngStream(0))


def test_ssac_default_initial_gain_is_near_optimum(ex1):
    tr = ssac_train(ex1, SsacHyper(T=1), RngStream(5), stride=1)
    assert 0.0 < tr["k_err"][0] <= 1.0 + 1e-12


# ---------------------------------------------------------------- zeroth order

def test_unit_sphere_matrices():
    U = unit_sphere_matrices(RngStream(0), 50, (3, 4))
    assert np.allclose(np.linalg.norm(U.reshape(50, -1), axis=1), 1.0)


def test_zeroth_order_gradient_points_along_true_gradient(ex1):
    hp = ZeroOrderHyper(z=5000, l=20, eta=0.0)
    K = np.array([[0.7, 0.2], [0.1, 0.3]])
    _, g, Sigma, note = zeroth_order_step(ex1, K, hp, RngStream(1))
    true = analytic_report(ex1, K).grad_J
    cos = np.sum(g * true) / (np.linalg.norm(g) * np.linalg.norm(true))
    assert cos > 0.95 and note is None
    assert np.all(np.linalg.eigvalsh(Sigma) > 0)


def test_zeroth_order_accounting(ex1):
    hp = ZeroOrderHyper(z=30, l=4, J_outer=3, eta=1e-4)
    tr = zeroth_order_train(ex1, hp, RngStream(2))
    assert list(tr["samples"]) == [240, 480, 720]
    assert np.all(np.isnan(tr["y_sq"])) and np.all(np.isfinite(tr["C_T"]))


def test_zeroth_order_stationary_start(ex1):
    hp = ZeroOrderHyper(z=30, l=4, J_outer=1, eta=1e-4, x0="stationary")
    assert len(zeroth_order_train(ex1, hp, RngStream(2))) == 1


def test_zeroth_order_unstable_perturbation(ex1):
    hp = ZeroOrderHyper(z=50, l=4, r=3.0)
    with pytest.raises(DivergenceError):
        zeroth_order_step(ex1, K_SAFE, hp, RngStream(0))


# ---------------------------------------------------------------- double loop

def test_double_loop_precondition():
    with pytest.raises(ValidationError):
        DoubleLoopHyper(T_inner=0).validate()


def test_double_loop_critic_from_true_value(ex1):
    sys = with_sigma(ex1, 0.2)
    rep = analytic_report(sys, DEADBEAT)
    hp = DoubleLoopHyper(T_inner=100_000)
    errs = []
    for seed in range(5):
        _, v2 = evaluate_policy(sys, DEADBEAT, hp, RngStream(seed), rep.J, rep.omega_star)
        errs.append(np.linalg.norm(v2 - rep.omega_star))
    assert np.median(errs) <= 0.1 * np.linalg.norm(rep.omega_star)


def test_double_loop_accounting(ex1):
    hp = DoubleLoopHyper(T_inner=200, J_outer=3, critic_init="oracle", eta=0.01, K0=DEADBEAT)
    tr = double_loop_train(ex1, hp, RngStream(0))
    assert list(tr["samples"]) == [200, 400, 600]
    assert np.all(np.isfinite(tr["critic_err_sq"]))


def test_double_loop_divergence_carries_trace(ex1):
    with pytest.raises(DivergenceError) as info:
        double_loop_train(ex1, DoubleLoopHyper(T_inner=100, J_outer=5, eta=5.0), RngStream(0))
    assert info.value.trace.status == "diverged" and len(info.value.trace) >= 1
