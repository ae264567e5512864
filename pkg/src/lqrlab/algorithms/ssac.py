"""Single-sample single-timescale natural actor-critic."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..env import DEFAULT_BURN_IN, sample_stationary, with_sigma
from ..errors import DivergenceError, NumericError, ValidationError
from ..gain import DEFAULT_LAMBDA_MAX, PolicyGain, gain_matrix
from ..matlib import spectral_radius_estimate, sym_dim
from ..oracle import analytic_report, solve_are
from . import _kernels
from .common import INITIAL_GAIN_STREAM, TRAINING_STREAM, default_initial_gain
from .trace import TraceRecorder

CHUNK = 4096
SAMPLING_MODES = {
    "exact": _kernels.SAMPLE_EXACT,
    "chained": _kernels.SAMPLE_CHAINED,
    "burn_in": _kernels.SAMPLE_BURN_IN,
}


@dataclass
class SsacHyper:
    """Stepsizes are c / sqrt(T), constant over the run."""

    T: int
    c_alpha: float = 0.005
    c_beta: float = 0.01
    c_gamma: float = 0.1
    sigma: Optional[float] = None  # None keeps the system's sigma
    omega_radius: float = 1e6
    eta_radius: float = 1e6
    K0: Optional[np.ndarray] = None  # None draws K* + tau G from the seed
    omega0: Optional[np.ndarray] = None  # None is the zero vector
    eta0: float = 0.0
    lambda_max: float = DEFAULT_LAMBDA_MAX
    sampling: str = "exact"
    burn_in: int = DEFAULT_BURN_IN

    def validate(self):
        if self.T < 0:
            raise ValidationError("T must be >= 0")
        for name in ("c_alpha", "c_beta", "c_gamma", "omega_radius", "eta_radius"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.sampling not in SAMPLING_MODES:
            raise ValidationError(f"sampling must be one of {sorted(SAMPLING_MODES)}")
        if not 0 < self.lambda_max <= 1:
            raise ValidationError("lambda_max must lie in (0, 1]")


def _initial_state(sys, hp, rng):
    if hp.K0 is None:
        K0 = default_initial_gain(sys, rng.substream(INITIAL_GAIN_STREAM)).K
    else:
        K0 = np.array(gain_matrix(hp.K0), dtype=float)
    if K0.shape != (sys.k, sys.d):
        raise ValidationError(f"K0 must be {sys.k}x{sys.d}")
    if not PolicyGain.for_system(sys, K0).stabilizing:
        raise ValidationError("K0 is not stabilizing")
    m = sym_dim(sys.n)
    omega0 = np.zeros(m) if hp.omega0 is None else np.array(hp.omega0, dtype=float)
    if omega0.shape != (m,):
        raise ValidationError(f"omega0 must have length {m}")
    return K0, omega0


def ssac_train(sys, hp: SsacHyper, rng, oracle_refs=True, stride=None):
    """Run the single-sample single-timescale actor-critic for ``hp.T`` steps.

    Each iteration draws x_t from the stationary law of K_t, takes one
    transition (x_t, u_t, c_t, x'_t, u'_t), then updates the cost tracker,
    the TD(0) critic and the actor; the actor step uses the critic *before*
    this iteration's TD update. One environment interaction per iteration.

    With ``oracle_refs`` every iteration is scored against the exact J(K_t),
    omega*_{K_t} and E_{K_t}; otherwise those columns are NaN.
    """
    hp.validate()
    if hp.sigma is not None and hp.sigma != sys.sigma:
        sys = with_sigma(sys, hp.sigma)
    K0, omega0 = _initial_state(sys, hp, rng)
    T = int(hp.T)
    if stride is None:
        stride = max(1, T // 1000)
    recorder = TraceRecorder("ssac", stride)

    K = K0.copy()
    omega = omega0.copy()
    eta = float(hp.eta0)
    if T == 0:
        return recorder.finish(final_K=K, final_eta=eta, final_omega=omega)

    if oracle_refs:
        K_star = solve_are(sys)[1].K
        J_star = analytic_report(sys, K_star).J
    else:
        K_star = np.zeros_like(K)
        J_star = 0.0

    scale = 1.0 / math.sqrt(T)
    alpha, beta, gamma = hp.c_alpha * scale, hp.c_beta * scale, hp.c_gamma * scale
    d, k = sys.d, sys.k
    mode = SAMPLING_MODES[hp.sampling]
    width = 2 * k + d
    if mode == _kernels.SAMPLE_EXACT:
        width += d
    elif mode == _kernels.SAMPLE_BURN_IN:
        width += hp.burn_in * (k + d)
    stream = rng.substream(TRAINING_STREAM)
    x_carry = np.zeros(d)
    sums = np.array([0.0, 0.0, 0.0, eta])

    done = 0
    while done < T:
        steps = min(CHUNK, T - done)
        normals = stream.normal((steps, width))
        if mode == _kernels.SAMPLE_CHAINED and done == 0:
            # chained mode starts from one exact stationary draw
            x_carry = sample_stationary(sys, K, stream)
        bufs = [np.full(steps, np.nan) for _ in range(8)]
        status, n_done = _kernels.ssac_loop(
            sys.A, sys.B, sys.Q, sys.R, sys.chol_D0, sys.D_sigma, sys.sigma,
            K, omega, eta, x_carry,
            alpha, beta, gamma, hp.omega_radius, hp.eta_radius, hp.lambda_max,
            normals, mode, hp.burn_in,
            oracle_refs, K_star, J_star,
            sums, *bufs,
        )
        eta = float(sums[3])
        y_sq, z_sq, e_sq, gap, k_err, run_a, run_b, run_c = bufs
        n_rec = n_done
        it = np.arange(done, done + n_rec)
        count = it + 1.0
        recorder.add(
            {
                "iter": it,
                "samples": it + 1,
                "y_sq": y_sq[:n_rec],
                "critic_err_sq": z_sq[:n_rec],
                "nat_grad_sq": e_sq[:n_rec],
                "actor_gap": gap[:n_rec],
                "k_err": k_err[:n_rec],
                "A_T": run_a[:n_rec] / count,
                "B_T": run_b[:n_rec] / count,
                "C_T": run_c[:n_rec] / count,
            }
        )
        if status != _kernels.OK:
            trace = recorder.finish(
                final_K=K.copy(), final_eta=eta, final_omega=omega.copy(), status="diverged"
            )
            t_fail = done + n_done
            if status == _kernels.UNSTABLE:
                rho = spectral_radius_estimate(sys.A - sys.B @ K)
                raise DivergenceError(
                    f"actor left the stable set at iteration {t_fail} (rho estimate {rho:.4f})",
                    trace,
                )
            if status == _kernels.NON_FINITE:
                err = NumericError(f"non-finite TD error or gain at iteration {t_fail}")
                err.trace = trace
                raise err
            raise DivergenceError(f"stationary covariance unavailable at iteration {t_fail}", trace)
        done += steps

    return recorder.finish(final_K=K, final_eta=eta, final_omega=omega)
