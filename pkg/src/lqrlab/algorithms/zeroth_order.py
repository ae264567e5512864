"""Zeroth-order natural policy gradient baseline (two-point rollouts per direction)."""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..env import rollout_batch, stationary_covariance, with_sigma
from ..errors import DivergenceError, ValidationError
from ..gain import DEFAULT_LAMBDA_MAX, PolicyGain, gain_matrix
from ..matlib import cholesky_core, spectral_radius_core, spectral_radius_estimate
from ..oracle import analytic_report, solve_are
from .common import INITIAL_GAIN_STREAM, TRAINING_STREAM, default_initial_gain
from .trace import TraceRecorder

SIGMA_REGULARIZER = 1e-9
X0_MODES = ("process-noise", "stationary")


@dataclass
class ZeroOrderHyper:
    z: int = 5000
    l: int = 20
    r: float = 0.1
    eta: float = 0.01
    J_outer: int = 1000
    sigma: Optional[float] = None
    K0: Optional[np.ndarray] = None
    x0: str = "process-noise"
    lambda_max: float = DEFAULT_LAMBDA_MAX

    def validate(self):
        if self.z < 1 or self.l < 1:
            raise ValidationError("z and l must be >= 1")
        if not self.r > 0:
            raise ValidationError("r must be positive")
        if self.J_outer < 0:
            raise ValidationError("J_outer must be >= 0")
        if self.x0 not in X0_MODES:
            raise ValidationError(f"x0 must be one of {X0_MODES}")

    @property
    def samples_per_step(self):
        return 2 * self.z * self.l


def unit_sphere_matrices(rng, count, shape):
    """``count`` matrices drawn uniformly from the Frobenius unit sphere."""
    U = rng.normal((count,) + tuple(shape))
    norms = np.sqrt(np.sum(U * U, axis=(1, 2)))
    return U / norms[:, None, None]


def zeroth_order_step(sys, K, hp, rng):
    """One outer iteration; returns (K_next, gradient estimate, state Gram, warning)."""
    z, l, r = hp.z, hp.l, hp.r
    if hp.x0 == "stationary":
        G = np.linalg.cholesky(stationary_covariance(sys, K))
    else:
        G = sys.chol_D0
    x0 = rng.normal((z, sys.d)) @ G.T
    base = np.broadcast_to(K, (z,) + K.shape)
    J_hat, gram = rollout_batch(sys, base, x0, l, rng)
    U = unit_sphere_matrices(rng, z, K.shape)
    perturbed = K[None] + r * U
    for i in range(z):
        if spectral_radius_core(np.ascontiguousarray(sys.A - sys.B @ perturbed[i])) >= 1.0:
            raise DivergenceError(f"perturbed policy {i} is not stabilizing")
    J_pert, _ = rollout_batch(sys, perturbed, x0, l, rng)

    # cost sums, not averages, and no d*k scaling
    grad = np.mean(((J_pert - J_hat) / r)[:, None, None] * U, axis=0)
    Sigma = 0.5 * np.mean(gram + np.transpose(gram, (0, 2, 1)), axis=0)
    note = None
    _, ok = cholesky_core(np.ascontiguousarray(Sigma))
    if not ok:
        Sigma = Sigma + SIGMA_REGULARIZER * np.eye(sys.d)
        note = "state Gram estimate singular; regularized with 1e-9 I"
    step = np.linalg.solve(Sigma.T, grad.T).T
    return K - hp.eta * step, grad, Sigma, note


def zeroth_order_train(sys, hp: ZeroOrderHyper, rng, stride=1):
    """Run ``hp.J_outer`` outer iterations; one trace row per outer iteration."""
    hp.validate()
    if hp.sigma is not None and hp.sigma != sys.sigma:
        sys = with_sigma(sys, hp.sigma)
    if hp.K0 is None:
        K = default_initial_gain(sys, rng.substream(INITIAL_GAIN_STREAM)).K.copy()
    else:
        K = np.array(gain_matrix(hp.K0), dtype=float)
    if not PolicyGain.for_system(sys, K).stabilizing:
        raise ValidationError("K0 is not stabilizing")
    K_star = solve_are(sys)[1].K
    J_star = analytic_report(sys, K_star).J
    stream = rng.substream(TRAINING_STREAM)
    recorder = TraceRecorder("zeroth_order", stride)
    notes = []
    e_sq_sum = 0.0

    def record(j, rep):
        nonlocal e_sq_sum
        e_sq = float(np.sum(rep.E_K**2))
        e_sq_sum += e_sq
        recorder.add(
            {
                "iter": [j],
                "samples": [(j + 1) * hp.samples_per_step],
                "y_sq": [np.nan],
                "critic_err_sq": [np.nan],
                "nat_grad_sq": [e_sq],
                "actor_gap": [rep.J - J_star],
                "k_err": [np.linalg.norm(K - K_star)],
                "A_T": [np.nan],
                "B_T": [np.nan],
                "C_T": [e_sq_sum / (j + 1)],
            }
        )

    for j in range(hp.J_outer):
        record(j, analytic_report(sys, K))
        try:
            K_next, _, _, note = zeroth_order_step(sys, K, hp, stream)
        except DivergenceError as exc:
            exc.trace = recorder.finish(final_K=K, status="diverged", warnings=notes)
            raise
        if note:
            warnings.warn(note, RuntimeWarning, stacklevel=2)
            notes.append(f"iter {j}: {note}")
        K = K_next
        rho = spectral_radius_estimate(sys.A - sys.B @ K)
        if not np.all(np.isfinite(K)) or rho >= hp.lambda_max:
            trace = recorder.finish(final_K=K, status="diverged", warnings=notes)
            raise DivergenceError(f"gain left the stable set after outer step {j}", trace)
    return recorder.finish(final_K=K, warnings=notes)
