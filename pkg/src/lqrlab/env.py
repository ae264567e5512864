"""Linear-Gaussian plant, Gaussian linear policy and reproducible sampling."""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DivergenceError,
    InstabilityError,
    NotPositiveDefiniteError,
    ValidationError,
)
from .gain import gain_matrix
from .matlib import cholesky, solve_discrete_lyapunov, spectral_radius_estimate

DIVERGENCE_NORM = 1e12
DEFAULT_BURN_IN = 200


class RngStream:
    """Seeded normal-variate stream.

    Sub-streams are derived by mixing a stream id into the seed through
    ``numpy.random.SeedSequence(seed, spawn_key=(...))``, so ``(seed, path)``
    fully determines the sequence.
    """

    def __init__(self, seed, stream=()):
        if isinstance(stream, int):
            stream = (stream,)
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = tuple(int(s) for s in stream)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.stream))
        )

    def substream(self, stream_id):
        return RngStream(self.seed, self.stream + (int(stream_id),))

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    @property
    def generator(self):
        return self._gen

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


@dataclass(frozen=True, eq=False)
class LqrSystem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    D0: np.ndarray
    sigma: float
    D_sigma: np.ndarray
    chol_D0: np.ndarray

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def k(self):
        return self.B.shape[1]

    @property
    def n(self):
        return self.d + self.k

    def closed_loop(self, K):
        return self.A - self.B @ gain_matrix(K)

    def cost(self, x, u):
        return float(x @ self.Q @ x + u @ self.R @ u)

    def to_dict(self):
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "D0": self.D0.tolist(),
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    u: np.ndarray
    cost: float
    x_next: np.ndarray
    u_next: np.ndarray


def _matrix(raw, key, shape=None):
    try:
        M = np.array(raw[key], dtype=float)
    except KeyError:
        raise ValidationError(f"system is missing {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{key} is not a numeric matrix: {exc}") from None
    if M.ndim != 2:
        raise ValidationError(f"{key} must be a 2-D matrix, got ndim={M.ndim}")
    if shape is not None and M.shape != shape:
        raise ValidationError(f"{key} must have shape {shape}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{key} has non-finite entries")
    return M


def _spd(M, key):
    if np.max(np.abs(M - M.T)) > 1e-9 * max(1.0, np.max(np.abs(M))):
        raise ValidationError(f"{key} is not symmetric")
    try:
        cholesky(M)
    except NotPositiveDefiniteError:
        raise ValidationError(f"{key} is not positive definite") from None
    return 0.5 * (M + M.T)


def validate_system(raw):
    """Build an :class:`LqrSystem` from a mapping of nested lists / arrays.

    ``D0`` defaults to the identity and ``sigma`` to 1.
    """
    A = _matrix(raw, "A")
    d = A.shape[0]
    if A.shape != (d, d):
        raise ValidationError(f"A must be square, got {A.shape}")
    B = _matrix(raw, "B")
    if B.shape[0] != d:
        raise ValidationError(f"B must have {d} rows, got {B.shape}")
    k = B.shape[1]
    Q = _spd(_matrix(raw, "Q", (d, d)), "Q")
    R = _spd(_matrix(raw, "R", (k, k)), "R")
    D0 = _spd(_matrix(raw, "D0", (d, d)), "D0") if raw.get("D0") is not None else np.eye(d)
    sigma = float(raw.get("sigma", 1.0))
    if not np.isfinite(sigma) or sigma < 0:
        raise ValidationError(f"sigma must be >= 0, got {sigma}")
    D_sigma = D0 + sigma**2 * B @ B.T
    D_sigma = 0.5 * (D_sigma + D_sigma.T)
    return LqrSystem(A, B, Q, R, D0, sigma, D_sigma, cholesky(D0))


def make_system(A, B, Q, R, D0=None, sigma=1.0):
    return validate_system({"A": A, "B": B, "Q": Q, "R": R, "D0": D0, "sigma": sigma})


def with_sigma(sys, sigma):
    """Copy of ``sys`` with a different exploration level."""
    raw = sys.to_dict()
    raw["sigma"] = sigma
    return validate_system(raw)


def policy_action(K, x, sigma, rng):
    K = gain_matrix(K)
    return -K @ x + sigma * rng.normal(K.shape[0])


def step(sys, x, u, rng):
    """One plant transition; returns (cost, x_next)."""
    cost = sys.cost(x, u)
    x_next = sys.A @ x + sys.B @ u + sys.chol_D0 @ rng.normal(sys.d)
    return cost, x_next


def stationary_covariance(sys, K):
    """D_K solving D = D_sigma + (A - BK) D (A - BK)^T."""
    L = sys.closed_loop(K)
    if spectral_radius_estimate(L) >= 1.0:
        raise InstabilityError("gain is not stabilizing")
    return solve_discrete_lyapunov(L, sys.D_sigma)


def sample_stationary(sys, K, rng, mode="exact", burn_in=DEFAULT_BURN_IN):
    """Draw a state from the stationary law of the closed loop under K.

    ``mode="exact"`` samples N(0, D_K) directly; ``mode="burn_in"`` runs the
    closed loop ``burn_in`` steps from the origin and returns the last state.
    """
    K = gain_matrix(K)
    L = sys.closed_loop(K)
    if spectral_radius_estimate(L) >= 1.0:
        raise InstabilityError("gain is not stabilizing")
    if mode == "exact":
        D = solve_discrete_lyapunov(L, sys.D_sigma)
        return cholesky(D) @ rng.normal(sys.d)
    if mode == "burn_in":
        x = np.zeros(sys.d)
        for _ in range(burn_in):
            u = policy_action(K, x, sys.sigma, rng)
            _, x = step(sys, x, u, rng)
        return x
    raise ValueError(f"unknown sampling mode {mode!r}")


def transition(sys, K, x, rng):
    """(x, u, c, x', u') under the stochastic policy, as Algorithm-1 style tuples."""
    u = policy_action(K, x, sys.sigma, rng)
    cost, x_next = step(sys, x, u, rng)
    u_next = policy_action(K, x_next, sys.sigma, rng)
    return Transition(x, u, cost, x_next, u_next)


def rollout(sys, K, x0, l, rng):
    """Simulate the stochastic closed loop for ``l`` steps from ``x0``.

    Returns ``(costs, states)`` where ``states[t]`` is the state at which
    ``costs[t]`` was incurred (``states[0] == x0``).
    """
    if l < 1:
        raise ValueError("rollout length must be >= 1")
    K = gain_matrix(K)
    costs = np.empty(l)
    states = np.empty((l, sys.d))
    x = np.asarray(x0, dtype=float)
    for t in range(l):
        states[t] = x
        u = policy_action(K, x, sys.sigma, rng)
        costs[t], x = step(sys, x, u, rng)
        if not np.linalg.norm(x) <= DIVERGENCE_NORM:
            raise DivergenceError(f"state norm exceeded {DIVERGENCE_NORM:g} at step {t}")
    return costs, states


def rollout_batch(sys, gains, x0, l, rng):
    """Vectorised rollouts: ``gains`` is (z, k, d), ``x0`` is (z, d).

    Returns per-rollout cost sums (z,) and state Gram sums (z, d, d).
    Noise is drawn per step as a (z, k) then a (z, d) block.
    """
    gains = np.asarray(gains, dtype=float)
    x = np.array(x0, dtype=float, copy=True)
    z = x.shape[0]
    cost_sum = np.zeros(z)
    gram_sum = np.zeros((z, sys.d, sys.d))
    for t in range(l):
        gram_sum += x[:, :, None] * x[:, None, :]
        u = -np.einsum("zkd,zd->zk", gains, x) + sys.sigma * rng.normal((z, sys.k))
        cost_sum += np.einsum("zi,ij,zj->z", x, sys.Q, x) + np.einsum("zi,ij,zj->z", u, sys.R, u)
        x = x @ sys.A.T + u @ sys.B.T + rng.normal((z, sys.d)) @ sys.chol_D0.T
        if not np.max(np.linalg.norm(x, axis=1)) <= DIVERGENCE_NORM:
            raise DivergenceError(f"state norm exceeded {DIVERGENCE_NORM:g} at step {t}")
    return cost_sum, gram_sum
