from dataclasses import dataclass, field

import numpy as np

from .matlib import spectral_radius_estimate

STABILITY_MARGIN = 1e-6
DEFAULT_LAMBDA_MAX = 0.999


@dataclass(frozen=True)
class PolicyGain:
    """Linear feedback gain K (k x d) for u = -K x + sigma * zeta."""

    K: np.ndarray
    rho_estimate: float = field(default=float("nan"))
    margin: float = STABILITY_MARGIN

    @classmethod
    def for_system(cls, sys, K, margin=STABILITY_MARGIN):
        K = np.array(K, dtype=float, copy=True)
        if K.ndim != 2 or K.shape != (sys.k, sys.d):
            raise ValueError(f"gain must be {sys.k}x{sys.d}, got {K.shape}")
        rho = spectral_radius_estimate(sys.A - sys.B @ K)
        return cls(K, rho, margin)

    @property
    def stabilizing(self):
        return self.rho_estimate < 1.0 - self.margin


def gain_matrix(K):
    """Accept a PolicyGain or anything array-like and return the raw matrix."""
    if isinstance(K, PolicyGain):
        return K.K
    return np.asarray(K, dtype=float)
