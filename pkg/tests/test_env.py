import numpy as np
import pytest

from conftest import DEADBEAT
from lqrlab import RngStream, make_system, validate_system
from lqrlab.env import (
    policy_action,
    rollout,
    rollout_batch,
    sample_stationary,
    stationary_covariance,
    step,
    transition,
    with_sigma,
)
from lqrlab.errors import DivergenceError, InstabilityError, ValidationError

EX1 = {"A": [[0, 1], [1, 0]], "B": [[0, 1], [1, 0]], "Q": [[9, 2], [2, 1]], "R": [[1, 2], [2, 8]]}


def test_defaults_fill_identity_noise_and_unit_sigma():
    sys = validate_system(EX1)
    assert np.array_equal(sys.D0, np.eye(2)) and sys.sigma == 1.0
    assert np.allclose(sys.D_sigma, np.eye(2) + sys.B @ sys.B.T)
    assert (sys.d, sys.k, sys.n) == (2, 2, 4)


@pytest.mark.parametrize(
    "patch, match",
    [
        ({"Q": [[1, 2], [0, 1]]}, "Q is not symmetric"),
        ({"R": [[1, 2], [2, 1]]}, "R is not positive definite"),
        ({"A": [[1, 0, 0], [0, 1, 0]]}, "A must be square"),
        ({"B": [[1, 0]]}, "B must have 2 rows"),
        ({"D0": [[1, 0], [0, 0]]}, "D0 is not positive definite"),
        ({"sigma": -1.0}, "sigma"),
        ({"Q": [[1, "x"], [0, 1]]}, "Q is not a numeric matrix"),
    ],
)
def test_validation_names_the_offending_field(patch, match):
    with pytest.raises(ValidationError, match=match):
        validate_system({**EX1, **patch})


def test_missing_matrix():
    raw = dict(EX1)
    del raw["R"]
    with pytest.raises(ValidationError, match="'R'"):
        validate_system(raw)


def test_step_cost_example(ex1):
    rng = RngStream(3)
    cost, x_next = step(ex1, np.array([1.0, 0.0]), np.array([0.0, 1.0]), rng)
    assert cost == pytest.approx(17.0)
    assert np.allclose(x_next - [1.0, 1.0], ex1.chol_D0 @ RngStream(3).normal(2))


def test_rng_streams_reproducible_and_distinct():
    a = RngStream(9).substream(1).normal(16)
    assert np.array_equal(a, RngStream(9, (1,)).normal(16))
    assert not np.array_equal(a, RngStream(9, (2,)).normal(16))
    assert not np.array_equal(a, RngStream(10, (1,)).normal(16))


def test_with_sigma_rebuilds_noise(ex1):
    s = with_sigma(ex1, 0.2)
    assert s.sigma == 0.2 and np.allclose(s.D_sigma, np.eye(2) + 0.04 * ex1.B @ ex1.B.T)


def test_policy_action_mean(ex1):
    rng = RngStream(1)
    K = np.array([[0.5, 0.1], [0.0, 0.3]])
    x = np.array([1.0, -2.0])
    us = np.array([policy_action(K, x, 1.0, rng) for _ in range(20000)])
    se = 1.0 / np.sqrt(len(us))
    assert np.all(np.abs(us.mean(axis=0) + K @ x) < 4 * se)


def test_deadbeat_stationary_covariance(ex1):
    assert np.allclose(stationary_covariance(ex1, DEADBEAT), 2 * np.eye(2))


@pytest.mark.parametrize("mode", ["exact", "burn_in"])
def test_stationary_sampling_moments(ex1, mode):
    K = np.array([[0.8, 0.1], [0.0, 0.6]])
    D = stationary_covariance(ex1, K)
    rng = RngStream(5)
    n = 4000 if mode == "exact" else 1500
    X = np.array([sample_stationary(ex1, K, rng, mode=mode, burn_in=60) for _ in range(n)])
    emp = X.T @ X / n
    # entrywise standard error of a Gaussian second moment
    se = np.sqrt((D * D + np.outer(np.diag(D), np.diag(D))) / n)
    assert np.all(np.abs(emp - D) < 4.5 * se)


def test_sampling_rejects_unstable_gain(ex1):
    with pytest.raises(InstabilityError):
        sample_stationary(ex1, np.zeros((2, 2)), RngStream(0))


def test_transition_is_consistent(ex1):
    rng = RngStream(4)
    tr = transition(ex1, DEADBEAT, np.array([0.3, -1.0]), rng)
    assert tr.cost == pytest.approx(ex1.cost(tr.x, tr.u))
    assert tr.x_next.shape == (2,) and tr.u_next.shape == (2,)


def test_rollout_shapes_and_divergence(ex1):
    costs, states = rollout(ex1, DEADBEAT, np.zeros(2), 7, RngStream(0))
    assert costs.shape == (7,) and states.shape == (7, 2) and np.all(states[0] == 0)
    unstable = make_system(3 * np.eye(2), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(DivergenceError):
        rollout(unstable, np.zeros((2, 2)), np.ones(2), 100, RngStream(0))


def test_rollout_batch_matches_costs_on_average(ex1):
    z, l = 4000, 3
    gains = np.broadcast_to(DEADBEAT, (z, 2, 2))
    cost_sum, gram = rollout_batch(ex1, gains, np.zeros((z, 2)), l, RngStream(2))
    # step 0: x = 0, cost = sigma^2 tr(R); steps >= 1: x ~ N(0, D_sigma), u = -x + zeta
    Ds = ex1.D_sigma
    per_step = np.trace((ex1.Q + ex1.R) @ Ds) + np.trace(ex1.R)
    expected = np.trace(ex1.R) + (l - 1) * per_step
    se = cost_sum.std(ddof=1) / np.sqrt(z)
    assert abs(cost_sum.mean() - expected) < 4 * se
    assert np.allclose(gram.mean(axis=0), (l - 1) * Ds, atol=0.3)
