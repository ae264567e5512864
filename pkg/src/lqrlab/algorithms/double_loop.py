"""Double-loop natural actor-critic baseline with a primal-dual GTD critic."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..env import with_sigma
from ..errors import DivergenceError, NumericError, ValidationError
from ..gain import DEFAULT_LAMBDA_MAX, PolicyGain, gain_matrix
from ..matlib import spectral_radius_estimate, sym_dim
from ..oracle import analytic_report, solve_are
from . import _kernels
from .common import INITIAL_GAIN_STREAM, TRAINING_STREAM, default_initial_gain, natural_gradient_estimate
from .trace import TraceRecorder

CRITIC_INITS = ("zero", "previous", "oracle")


@dataclass
class DoubleLoopHyper:
    T_inner: int = 500_000
    J_outer: int = 100
    eta: float = 0.05
    sigma: Optional[float] = 0.2
    alpha_c: float = 0.01
    primal_radius: float = 1e6
    dual_radius: float = 1e6
    K0: Optional[np.ndarray] = None
    # "oracle" starts each inner loop at (J(K_j), omega*_{K_j}); test use only
    critic_init: str = "zero"
    lambda_max: float = DEFAULT_LAMBDA_MAX

    def validate(self):
        if self.T_inner < 1:
            raise ValidationError("T_inner must be >= 1")
        if self.J_outer < 0:
            raise ValidationError("J_outer must be >= 0")
        if self.critic_init not in CRITIC_INITS:
            raise ValidationError(f"critic_init must be one of {CRITIC_INITS}")


def evaluate_policy(sys, K, hp, rng, v1=0.0, v2=None):
    """Inner loop: GTD estimate (v1_hat, v2_hat) of (J(K), svec(Omega_K))."""
    m = sym_dim(sys.n)
    v2 = np.zeros(m) if v2 is None else np.array(v2, dtype=float)
    normals = rng.normal((hp.T_inner + 1, 2 * sys.d + sys.k))
    status, v1_hat, v2_hat = _kernels.gtd_inner_loop(
        sys.A, sys.B, sys.Q, sys.R, sys.chol_D0, sys.D_sigma, sys.sigma,
        np.ascontiguousarray(K), float(v1), v2, 0.0, np.zeros(m),
        hp.alpha_c, hp.primal_radius, hp.dual_radius, normals,
    )
    if status == _kernels.NON_FINITE:
        raise NumericError("non-finite TD error in the inner loop")
    if status != _kernels.OK:
        raise DivergenceError("stationary covariance unavailable for the current gain")
    return float(v1_hat), v2_hat


def double_loop_train(sys, hp: DoubleLoopHyper, rng, stride=1):
    """Outer natural-gradient steps on critic estimates from ``hp.T_inner`` samples each."""
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
    recorder = TraceRecorder("double_loop", stride)
    sums = np.zeros(3)
    v1_hat, v2_hat = 0.0, None

    for j in range(hp.J_outer):
        rep = analytic_report(sys, K)
        if hp.critic_init == "oracle":
            v1_start, v2_start = rep.J, rep.omega_star
        elif hp.critic_init == "previous":
            v1_start, v2_start = v1_hat, v2_hat
        else:
            v1_start, v2_start = 0.0, None
        try:
            v1_hat, v2_hat = evaluate_policy(sys, K, hp, stream, v1_start, v2_start)
        except (DivergenceError, NumericError) as exc:
            exc.trace = recorder.finish(final_K=K, status="diverged")
            raise
        vals = (
            (v1_hat - rep.J) ** 2,
            float(np.sum((v2_hat - rep.omega_star) ** 2)),
            float(np.sum(rep.E_K**2)),
        )
        for i, v in enumerate(vals):
            sums[i] += v
        recorder.add(
            {
                "iter": [j],
                "samples": [(j + 1) * hp.T_inner],
                "y_sq": [vals[0]],
                "critic_err_sq": [vals[1]],
                "nat_grad_sq": [vals[2]],
                "actor_gap": [rep.J - J_star],
                "k_err": [np.linalg.norm(K - K_star)],
                "A_T": [sums[0] / (j + 1)],
                "B_T": [sums[1] / (j + 1)],
                "C_T": [sums[2] / (j + 1)],
            }
        )
        K = K - hp.eta * natural_gradient_estimate(v2_hat, K)
        rho = spectral_radius_estimate(sys.A - sys.B @ K)
        if not np.all(np.isfinite(K)) or rho >= hp.lambda_max:
            trace = recorder.finish(final_K=K, final_eta=v1_hat, final_omega=v2_hat, status="diverged")
            raise DivergenceError(f"gain left the stable set after outer step {j}", trace)
    return recorder.finish(final_K=K, final_eta=v1_hat, final_omega=v2_hat)
