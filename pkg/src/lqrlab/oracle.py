"""Closed-form LQR quantities used as ground truth for the learners.

Everything here assumes full model knowledge and is exact up to floating
point: the value matrix P_K, the stationary covariance D_K, the average
cost J(K), its gradient, the natural gradient E_K, the Q-function matrix
Omega_K and the expected TD system (A_K, b_K) whose solution is
svec(Omega_K).
"""

from dataclasses import dataclass

import numpy as np

from .env import LqrSystem
from .errors import InstabilityError, NotStabilizableError
from .gain import DEFAULT_LAMBDA_MAX, STABILITY_MARGIN, PolicyGain, gain_matrix
from .matlib import (
    sigma_min,
    solve_discrete_lyapunov,
    spectral_norm,
    spectral_radius_estimate,
    svec,
    sym_kron,
)

__all__ = [
    "DEFAULT_LAMBDA_MAX",
    "STABILITY_MARGIN",
    "OracleReport",
    "PolicyGain",
    "almost_smoothness_gap",
    "analytic_report",
    "average_cost",
    "expected_feature_gram",
    "gradient_domination_check",
    "natural_gradient",
    "q_value",
    "random_stabilizing_gain",
    "solve_are",
]

ARE_TOL = 1e-13
ARE_MAX_ITER = 1_000_000
ARE_GRAD_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class OracleReport:
    K: np.ndarray
    P_K: np.ndarray
    D_K: np.ndarray
    Dtilde_K: np.ndarray
    L: np.ndarray
    J: float
    grad_J: np.ndarray
    E_K: np.ndarray
    Omega_K: np.ndarray
    omega_star: np.ndarray
    A_K: np.ndarray
    b_K: np.ndarray
    mu: float
    rho: float

    def to_dict(self):
        out = {}
        for name, value in vars(self).items():
            out[name] = value.tolist() if isinstance(value, np.ndarray) else float(value)
        return out


def _check_stable(sys, K):
    rho = spectral_radius_estimate(sys.A - sys.B @ K)
    if not rho < 1.0 - STABILITY_MARGIN:
        raise InstabilityError(f"gain is not stabilizing (rho estimate {rho:.6g})")
    return rho


def value_matrix(sys, K):
    """P_K from P = Q + K^T R K + (A - BK)^T P (A - BK)."""
    K = gain_matrix(K)
    _check_stable(sys, K)
    Lc = sys.A - sys.B @ K
    return solve_discrete_lyapunov(Lc.T, sys.Q + K.T @ sys.R @ K)


def average_cost(sys, K):
    P = value_matrix(sys, K)
    return float(np.trace(P @ sys.D_sigma) + sys.sigma**2 * np.trace(sys.R))


def natural_gradient(sys, K, P=None):
    """E_K = (R + B^T P B) K - B^T P A."""
    K = gain_matrix(K)
    if P is None:
        P = value_matrix(sys, K)
    return (sys.R + sys.B.T @ P @ sys.B) @ K - sys.B.T @ P @ sys.A


def q_matrix(sys, P):
    """Omega_K assembled from its four blocks."""
    A, B = sys.A, sys.B
    top = np.hstack([sys.Q + A.T @ P @ A, A.T @ P @ B])
    bottom = np.hstack([B.T @ P @ A, sys.R + B.T @ P @ B])
    Om = np.vstack([top, bottom])
    return 0.5 * (Om + Om.T)


def joint_covariance(sys, K, D):
    """Stationary covariance of the stacked pair (x, u)."""
    K = gain_matrix(K)
    top = np.hstack([D, -D @ K.T])
    bottom = np.hstack([-K @ D, K @ D @ K.T + sys.sigma**2 * np.eye(sys.k)])
    Dt = np.vstack([top, bottom])
    return 0.5 * (Dt + Dt.T)


def joint_transition(sys, K):
    """L with (x', u') = L (x, u) + noise, i.e. [I; -K] [A B]."""
    K = gain_matrix(K)
    return np.vstack([np.eye(sys.d), -K]) @ np.hstack([sys.A, sys.B])


def analytic_report(sys: LqrSystem, K) -> OracleReport:
    """Every closed-form quantity for a stabilizing gain K."""
    K = np.array(gain_matrix(K), dtype=float)
    rho = _check_stable(sys, K)
    Lc = sys.A - sys.B @ K
    P = solve_discrete_lyapunov(Lc.T, sys.Q + K.T @ sys.R @ K)
    D = solve_discrete_lyapunov(Lc, sys.D_sigma)
    J = float(np.trace(P @ sys.D_sigma) + sys.sigma**2 * np.trace(sys.R))
    E = natural_gradient(sys, K, P)
    Om = q_matrix(sys, P)
    omega_star = svec(Om)
    L = joint_transition(sys, K)
    Dt = joint_covariance(sys, K, D)
    m = omega_star.size
    A_K = 2.0 * sym_kron(Dt, Dt) @ (np.eye(m) - sym_kron(L.T, L.T))
    # b_K = E[(c - J) phi] = svec(2 Dt W Dt), W = blkdiag(Q, R), via the
    # Gaussian fourth-moment identity; independent of omega_star.
    W = np.zeros((sys.n, sys.n))
    W[: sys.d, : sys.d] = sys.Q
    W[sys.d :, sys.d :] = sys.R
    b_K = svec(2.0 * Dt @ W @ Dt)
    return OracleReport(
        K=K,
        P_K=P,
        D_K=D,
        Dtilde_K=Dt,
        L=L,
        J=J,
        grad_J=2.0 * E @ D,
        E_K=E,
        Omega_K=Om,
        omega_star=omega_star,
        A_K=A_K,
        b_K=b_K,
        mu=sigma_min(A_K),
        rho=rho,
    )


def expected_feature_gram(sys, K):
    """E[phi phi^T] under the stationary state-action law."""
    K = gain_matrix(K)
    _check_stable(sys, K)
    D = solve_discrete_lyapunov(sys.A - sys.B @ K, sys.D_sigma)
    Dt = joint_covariance(sys, K, D)
    s = svec(Dt)
    return 2.0 * sym_kron(Dt, Dt) + np.outer(s, s)


def q_value(sys, K, x, u, report=None):
    """Average-cost Q-function of the stochastic policy at (x, u)."""
    if report is None:
        report = analytic_report(sys, K)
    P, D = report.P_K, report.D_K
    z = np.concatenate([np.asarray(x, float), np.asarray(u, float)])
    offset = np.trace(P @ D) + sys.sigma**2 * np.trace(sys.R + P @ sys.B @ sys.B.T)
    return float(z @ report.Omega_K @ z - offset)


def solve_are(sys, tol=ARE_TOL, max_iter=ARE_MAX_ITER):
    """Riccati value iteration started from P = Q; returns (P*, PolicyGain K*)."""
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    P = Q.copy()
    for _ in range(max_iter):
        BtPA = B.T @ P @ A
        G = R + B.T @ P @ B
        P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(G, BtPA)
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.linalg.norm(P_next - P)
        scale = np.linalg.norm(P)
        if not np.isfinite(delta):
            break
        P = P_next
        if delta <= tol * scale:
            K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            gain = PolicyGain.for_system(sys, K)
            if not gain.stabilizing:
                raise NotStabilizableError("Riccati fixed point does not stabilize (A, B)")
            E = natural_gradient(sys, K)
            if np.linalg.norm(E) > ARE_GRAD_TOL:
                raise NotStabilizableError(
                    f"natural gradient at Riccati solution is {np.linalg.norm(E):.3g}"
                )
            return P, gain
    raise NotStabilizableError("Riccati value iteration did not converge")


def almost_smoothness_gap(sys, K, K_prime):
    """Both sides of the exact cost-difference identity between two gains.

    Returns ``(lhs, rhs)`` with lhs = J(K') - J(K) and
    rhs = -2 Tr(D_K' (K-K')^T E_K) + Tr(D_K' (K-K')^T (R + B^T P_K B)(K-K')).
    """
    K = gain_matrix(K)
    Kp = gain_matrix(K_prime)
    rep = analytic_report(sys, K)
    rep_p = analytic_report(sys, Kp)
    dK = K - Kp
    curvature = sys.R + sys.B.T @ rep.P_K @ sys.B
    rhs = -2.0 * np.trace(rep_p.D_K @ dK.T @ rep.E_K) + np.trace(rep_p.D_K @ dK.T @ curvature @ dK)
    return rep_p.J - rep.J, float(rhs)


def gradient_domination_check(sys, K, K_star=None):
    """Return ``(J(K) - J(K*), ||D_K*|| Tr(E_K^T E_K) / sigma_min(R))``."""
    if K_star is None:
        K_star = solve_are(sys)[1]
    rep = analytic_report(sys, K)
    rep_star = analytic_report(sys, K_star)
    bound = spectral_norm(rep_star.D_K) * np.trace(rep.E_K.T @ rep.E_K) / sigma_min(sys.R)
    return rep.J - rep_star.J, float(bound)


def random_stabilizing_gain(sys, rng, center=None, tau=1.0, rho_max=0.95, unit=False, decay=0.95):
    """Rejection-sample K = center + tau * G with rho(A - BK) <= rho_max.

    G has standard normal entries (Frobenius-normalised when ``unit``); tau
    shrinks by ``decay`` after every rejection. ``center`` defaults to K*.
    """
    if center is None:
        center = solve_are(sys)[1].K
    center = gain_matrix(center)
    for _ in range(10_000):
        G = rng.normal(center.shape)
        if unit:
            G = G / np.linalg.norm(G)
        K = center + tau * G
        rho = spectral_radius_estimate(sys.A - sys.B @ K)
        if rho <= rho_max:
            return PolicyGain(K, rho)
        tau *= decay
    raise InstabilityError("could not sample a stabilizing gain")
