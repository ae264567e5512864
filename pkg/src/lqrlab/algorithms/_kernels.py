"""Compiled inner loops for the single-sample and double-loop learners.

The matrix cores come from :mod:`lqrlab.matlib`, so the compiled loops and
the public matrix API share one implementation. Randomness arrives as
pre-drawn standard-normal blocks, which keeps results tied to the caller's
:class:`~lqrlab.env.RngStream` and independent of chunking.
"""

import math

import numpy as np
from numba import njit

from ..matlib import cholesky_core as cholesky
from ..matlib import lyapunov_direct_core as lyapunov_direct
from ..matlib import outer_svec_core as outer_svec
from ..matlib import smat_core as smat
from ..matlib import spectral_radius_core as spectral_radius
from ..matlib import svec_core as svec

# status codes returned by the loops
OK = 0
UNSTABLE = 1
NON_FINITE = 2
BAD_COVARIANCE = 3

SAMPLE_EXACT = 0
SAMPLE_CHAINED = 1
SAMPLE_BURN_IN = 2


@njit(cache=True)
def _project(v, radius):
    nrm = math.sqrt(np.sum(v * v))
    if nrm > radius:
        return v * (radius / nrm)
    return v


@njit(cache=True)
def _q_matrix(A, B, Q, R, P):
    d = A.shape[0]
    k = B.shape[1]
    Om = np.empty((d + k, d + k))
    PA = P @ A
    PB = P @ B
    Om[:d, :d] = Q + A.T @ PA
    Om[:d, d:] = A.T @ PB
    Om[d:, :d] = B.T @ PA
    Om[d:, d:] = R + B.T @ PB
    return 0.5 * (Om + Om.T)


@njit(cache=True)
def oracle_terms(A, B, Q, R, Dsig, sigma, K):
    """(J, E_K, omega*, ok) for a gain already known to be stable."""
    Lc = A - B @ K
    P, ok = lyapunov_direct(Lc.T, Q + K.T @ R @ K)
    J = np.trace(P @ Dsig) + sigma * sigma * np.trace(R)
    E = (R + B.T @ P @ B) @ K - B.T @ P @ A
    om = svec(_q_matrix(A, B, Q, R, P))
    return J, E, om, ok


@njit(cache=True)
def ssac_loop(
    A, B, Q, R, chol_D0, Dsig, sigma,
    K, omega, eta, x_carry,
    alpha, beta, gamma, omega_radius, eta_radius, lambda_max,
    normals, sample_mode, burn_in,
    with_oracle, K_star, J_star,
    sums, y_sq, z_sq, e_sq, gap, k_err, run_a, run_b, run_c,
):
    """Run len(normals) iterations in place; returns (status, iterations done).

    K, omega, x_carry and sums are updated in place; eta is returned through
    ``sums[3]`` to keep the signature array-only.
    """
    d = A.shape[0]
    k = B.shape[1]
    n = d + k
    steps = normals.shape[0]
    z = np.empty(n)
    zn = np.empty(n)
    for t in range(steps):
        row = normals[t]
        Lc = A - B @ K
        if with_oracle:
            J, E, om_star, ok = oracle_terms(A, B, Q, R, Dsig, sigma, K)
            if not ok:
                return NON_FINITE, t
            y = eta - J
            dz = omega - om_star
            y_sq[t] = y * y
            z_sq[t] = np.sum(dz * dz)
            e_sq[t] = np.sum(E * E)
            gap[t] = J - J_star
            dk = K - K_star
            k_err[t] = math.sqrt(np.sum(dk * dk))
            sums[0] += y_sq[t]
            sums[1] += z_sq[t]
            sums[2] += e_sq[t]
            run_a[t] = sums[0]
            run_b[t] = sums[1]
            run_c[t] = sums[2]

        # line 3: state from the stationary law of K_t
        off = 0
        if sample_mode == SAMPLE_EXACT:
            D, ok = lyapunov_direct(Lc, Dsig)
            G, ok2 = cholesky(D)
            if not (ok and ok2):
                return BAD_COVARIANCE, t
            x = G @ row[:d]
            off = d
        elif sample_mode == SAMPLE_CHAINED:
            x = x_carry.copy()
        else:
            x = np.zeros(d)
            for _ in range(burn_in):
                u0 = -K @ x + sigma * row[off:off + k]
                off += k
                x = A @ x + B @ u0 + chol_D0 @ row[off:off + d]
                off += d
        # lines 4-5
        u = -K @ x + sigma * row[off:off + k]
        off += k
        c = x @ Q @ x + u @ R @ u
        xn = A @ x + B @ u + chol_D0 @ row[off:off + d]
        off += d
        un = -K @ xn + sigma * row[off:off + k]
        x_carry[:] = xn

        z[:d] = x
        z[d:] = u
        zn[:d] = xn
        zn[d:] = un
        phi = outer_svec(z)
        phi_n = outer_svec(zn)
        # line 6
        delta = c - eta + phi_n @ omega - phi @ omega
        if not math.isfinite(delta):
            return NON_FINITE, t
        # line 9 uses omega_t, so form the natural-gradient estimate first
        W = smat(omega, n)
        nat = np.ascontiguousarray(W[d:, d:]) @ K - W[d:, :d]
        # lines 7-8
        new_eta = eta + gamma * (c - eta)
        if abs(new_eta) > eta_radius:
            new_eta = math.copysign(eta_radius, new_eta)
        eta = new_eta
        omega[:] = _project(omega + beta * delta * phi, omega_radius)
        # line 9
        K[:, :] = K - alpha * nat
        sums[3] = eta
        if not np.all(np.isfinite(K)):
            return NON_FINITE, t + 1
        if spectral_radius(A - B @ K) >= lambda_max:
            return UNSTABLE, t + 1
    return OK, steps


@njit(cache=True)
def gtd_inner_loop(
    A, B, Q, R, chol_D0, Dsig, sigma, K,
    v1, v2, w1, w2, alpha_c, primal_radius, dual_radius, normals,
):
    """Primal-dual gradient-TD policy evaluation for a fixed gain.

    ``normals`` has T + 1 rows of width 2d + k: row 0 draws the stationary
    initial state and the first transition, row t >= 1 one more transition
    (only its first k + d entries are used). Returns (status, v1_avg, v2_avg).
    """
    d = A.shape[0]
    k = B.shape[1]
    n = d + k
    T = normals.shape[0] - 1
    D, ok = lyapunov_direct(A - B @ K, Dsig)
    G, ok2 = cholesky(D)
    v2_acc = np.zeros(v2.shape[0])
    v1_acc = 0.0
    alpha_sum = 0.0
    if not (ok and ok2):
        return BAD_COVARIANCE, v1_acc, v2_acc
    row = normals[0]
    z = np.empty(n)
    x = G @ row[:d]
    u = -K @ x + sigma * row[d:n]
    z[:d] = x
    z[d:] = u
    phi_prev = outer_svec(z)
    c_prev = x @ Q @ x + u @ R @ u
    x = A @ x + B @ u + chol_D0 @ row[n:n + d]
    for t in range(1, T + 1):
        row = normals[t]
        a_t = alpha_c / math.sqrt(1.0 + t)
        u = -K @ x + sigma * row[:k]
        z[:d] = x
        z[d:] = u
        phi = outer_svec(z)
        c_t = x @ Q @ x + u @ R @ u
        x = A @ x + B @ u + chol_D0 @ row[k:k + d]

        diff = phi_prev - phi
        delta = v1 - c_prev + diff @ v2
        if not math.isfinite(delta):
            return NON_FINITE, v1_acc, v2_acc
        pw2 = phi_prev @ w2
        new_v1 = v1 - a_t * (w1 + pw2)
        new_v2 = v2 - a_t * diff * pw2
        new_w1 = (1.0 - a_t) * w1 + a_t * (v1 - c_prev)
        new_w2 = (1.0 - a_t) * w2 + a_t * delta * phi_prev
        # projection of the stacked primal / dual vectors
        pn = math.sqrt(new_v1 * new_v1 + np.sum(new_v2 * new_v2))
        if pn > primal_radius:
            new_v1 *= primal_radius / pn
            new_v2 = new_v2 * (primal_radius / pn)
        dn = math.sqrt(new_w1 * new_w1 + np.sum(new_w2 * new_w2))
        if dn > dual_radius:
            new_w1 *= dual_radius / dn
            new_w2 = new_w2 * (dual_radius / dn)
        v1 = new_v1
        v2[:] = new_v2
        w1 = new_w1
        w2[:] = new_w2

        v1_acc += a_t * v1
        v2_acc += a_t * v2
        alpha_sum += a_t
        phi_prev = phi
        c_prev = c_t
    return OK, v1_acc / alpha_sum, v2_acc / alpha_sum
