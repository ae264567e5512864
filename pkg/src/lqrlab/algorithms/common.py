import numpy as np

from ..errors import DimensionError
from ..matlib import smat, tri_root
from ..oracle import random_stabilizing_gain, solve_are

INITIAL_GAIN_STREAM = 0
TRAINING_STREAM = 1


def natural_gradient_estimate(omega, K):
    """smat(omega)^22 K - smat(omega)^21, the critic's natural-gradient estimate."""
    K = np.asarray(K, dtype=float)
    omega = np.asarray(omega, dtype=float)
    n = tri_root(omega.size)
    k, d = K.shape
    if n != d + k:
        raise DimensionError(f"critic of length {omega.size} does not match a {k}x{d} gain")
    W = smat(omega)
    return W[d:, d:] @ K - W[d:, :d]


def proj_ball(v, radius):
    """Euclidean projection onto the ball of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if np.isscalar(v):
        return float(np.clip(v, -radius, radius))
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    return v if nrm <= radius else v * (radius / nrm)


def default_initial_gain(sys, rng, rho_max=0.95):
    """K* + tau G with ||G||_F = 1, tau starting at 1 and shrinking on rejection."""
    K_star = solve_are(sys)[1].K
    return random_stabilizing_gain(sys, rng, center=K_star, tau=1.0, rho_max=rho_max, unit=True)
