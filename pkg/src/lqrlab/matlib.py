"""Dense small-matrix kernels.

Symmetric vectorization uses the column-stacked upper triangle: for
``j = 0..n-1`` and ``i = 0..j`` the entry ``M[i, j]`` is emitted, with
off-diagonal entries scaled by sqrt(2) so that
``svec(M) @ svec(N) == trace(M @ N)``.

The ``*_core`` functions are numba-compiled and shared with the training
loops in :mod:`lqrlab.algorithms._kernels`. They expect contiguous float64
arrays and skip argument validation, which the public wrappers perform.
"""

import math

import numpy as np
from numba import njit

from .errors import DimensionError, InstabilityError, NotPositiveDefiniteError

SQRT2 = math.sqrt(2.0)

DIRECT_LYAPUNOV_MAX_DIM = 12
LYAPUNOV_FP_TOL = 1e-13
LYAPUNOV_FP_MAX_ITER = 1_000_000
RADIUS_POWER = 128  # 2**7, realised by repeated squaring
RADIUS_SQUARINGS = 7
CHOLESKY_MIN_PIVOT = 1e-12


def sym_dim(n):
    """Length of svec for an n x n matrix."""
    return n * (n + 1) // 2


def tri_root(m):
    """Return n with n(n+1)/2 == m, or -1 when m is not triangular."""
    n = int((math.isqrt(8 * m + 1) - 1) // 2)
    return n if n * (n + 1) // 2 == m else -1


# ---------------------------------------------------------------------------
# numba-compatible cores


@njit(cache=True)
def svec_core(M):
    n = M.shape[0]
    out = np.empty(n * (n + 1) // 2)
    p = 0
    for j in range(n):
        for i in range(j + 1):
            if i == j:
                out[p] = M[i, j]
            else:
                out[p] = SQRT2 * 0.5 * (M[i, j] + M[j, i])
            p += 1
    return out


@njit(cache=True)
def smat_core(v, n):
    M = np.empty((n, n))
    p = 0
    for j in range(n):
        for i in range(j + 1):
            if i == j:
                M[i, j] = v[p]
            else:
                M[i, j] = v[p] / SQRT2
                M[j, i] = M[i, j]
            p += 1
    return M


@njit(cache=True)
def outer_svec_core(z):
    """svec(z z^T) without forming the outer product."""
    n = z.shape[0]
    out = np.empty(n * (n + 1) // 2)
    p = 0
    for j in range(n):
        for i in range(j + 1):
            if i == j:
                out[p] = z[i] * z[i]
            else:
                out[p] = SQRT2 * z[i] * z[j]
            p += 1
    return out


@njit(cache=True)
def cholesky_core(S):
    """Lower Cholesky factor; returns (G, ok). ok is False on a bad pivot."""
    n = S.shape[0]
    G = np.zeros((n, n))
    for j in range(n):
        acc = S[j, j]
        for p in range(j):
            acc -= G[j, p] * G[j, p]
        if not acc > CHOLESKY_MIN_PIVOT:
            return G, False
        G[j, j] = math.sqrt(acc)
        for i in range(j + 1, n):
            acc = S[i, j]
            for p in range(j):
                acc -= G[i, p] * G[j, p]
            G[i, j] = acc / G[j, j]
    return G, True


@njit(cache=True)
def singular_values_core(M, tol=1e-15, max_sweeps=60):
    """Ascending singular values by one-sided (Hestenes) Jacobi rotations."""
    U = M.copy()
    r, c = U.shape
    for _ in range(max_sweeps):
        rotated = False
        for p in range(c - 1):
            for q in range(p + 1, c):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(r):
                    alpha += U[i, p] * U[i, p]
                    beta += U[i, q] * U[i, q]
                    gamma += U[i, p] * U[i, q]
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0.0 else -1.0) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(r):
                    up = U[i, p]
                    uq = U[i, q]
                    U[i, p] = cs * up - sn * uq
                    U[i, q] = sn * up + cs * uq
        if not rotated:
            break
    out = np.empty(c)
    for j in range(c):
        out[j] = math.sqrt(np.sum(U[:, j] * U[:, j]))
    return np.sort(out)


@njit(cache=True)
def spectral_norm_core(M):
    """Largest singular value."""
    if M.shape[0] < M.shape[1]:
        return singular_values_core(np.ascontiguousarray(M.T))[-1]
    return singular_values_core(M)[-1]


@njit(cache=True)
def spectral_radius_core(M):
    # M^128 = exp(logc) * X, renormalised after every squaring
    X = M.copy()
    logc = 0.0
    for _ in range(RADIUS_SQUARINGS):
        s = math.sqrt(np.sum(X * X))
        if s == 0.0 or not math.isfinite(s):
            return 0.0 if s == 0.0 else math.inf
        X = X / s
        logc = 2.0 * (logc + math.log(s))
        X = X @ X
    nrm = spectral_norm_core(X)
    if nrm == 0.0:
        return 0.0
    return math.exp((logc + math.log(nrm)) / RADIUS_POWER)


@njit(cache=True)
def lyapunov_direct_core(L, S):
    """Solve X = S + L X L^T via (I - L kron L) vec X = vec S; returns (X, ok)."""
    n = L.shape[0]
    N = n * n
    Mbig = np.eye(N) - np.kron(L, L)
    rhs = S.copy().reshape(N)
    x = np.linalg.solve(Mbig, rhs)
    ok = True
    for i in range(N):
        if not math.isfinite(x[i]):
            ok = False
    X = x.reshape((n, n))
    return 0.5 * (X + X.T), ok


@njit(cache=True)
def lyapunov_fixed_point_core(L, S, tol, max_iter):
    X = S.copy()
    for _ in range(max_iter):
        Xn = S + L @ X @ L.T
        diff = math.sqrt(np.sum((Xn - X) ** 2))
        scale = math.sqrt(np.sum(X * X))
        if not math.isfinite(diff):
            return 0.5 * (Xn + Xn.T), False
        X = Xn
        if diff <= tol * scale:
            return 0.5 * (X + X.T), True
    return 0.5 * (X + X.T), False


@njit(cache=True)
def jacobi_eigvalsh_core(S, tol=1e-15, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations (ascending)."""
    A = 0.5 * (S + S.T)
    n = A.shape[0]
    total = math.sqrt(np.sum(A * A))
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += A[i, j] * A[i, j]
        if math.sqrt(off) <= tol * max(total, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    arp = A[r, p]
                    arq = A[r, q]
                    A[r, p] = c * arp - s * arq
                    A[r, q] = s * arp + c * arq
                for r in range(n):
                    apr = A[p, r]
                    aqr = A[q, r]
                    A[p, r] = c * apr - s * aqr
                    A[q, r] = s * apr + c * aqr
    return np.sort(np.diag(A).copy())


# ---------------------------------------------------------------------------
# public API


def _square(M, name="matrix"):
    M = np.ascontiguousarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def svec(M):
    """Norm-preserving vectorization of a symmetric matrix."""
    M = _square(M)
    return svec_core(np.ascontiguousarray(0.5 * (M + M.T)))


def smat(v):
    """Inverse of :func:`svec`."""
    v = np.ascontiguousarray(v, dtype=float).reshape(-1)
    n = tri_root(v.size)
    if n < 0:
        raise DimensionError(f"length {v.size} is not a triangular number")
    return smat_core(v, n)


def sym_kron(A, B):
    """Symmetric Kronecker product acting on svec space.

    Column p is svec(0.5 (A S B^T + B S A^T)) for S = smat(e_p).
    """
    A = _square(A, "A")
    B = _square(B, "B")
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    n = A.shape[0]
    m = sym_dim(n)
    out = np.empty((m, m))
    e = np.zeros(m)
    for p in range(m):
        e[:] = 0.0
        e[p] = 1.0
        S = smat_core(e, n)
        out[:, p] = svec_core(np.ascontiguousarray(0.5 * (A @ S @ B.T + B @ S @ A.T)))
    return out


def spectral_norm(M):
    M = np.ascontiguousarray(M, dtype=float)
    return spectral_norm_core(M)


def spectral_radius_estimate(M):
    """Upper estimate of rho(M) from ||M^128||_2^(1/128)."""
    return spectral_radius_core(_square(M))


def cholesky(S):
    """Lower-triangular G with G G^T = S."""
    S = _square(S)
    G, ok = cholesky_core(np.ascontiguousarray(0.5 * (S + S.T)))
    if not ok:
        raise NotPositiveDefiniteError("matrix is not positive definite (pivot <= 1e-12)")
    return G


def solve_discrete_lyapunov(L, S, method="auto"):
    """Return X with X = S + L X L^T.

    ``method`` is ``"auto"`` (direct below 13x13, fixed point above),
    ``"direct"`` or ``"fixed_point"``.
    """
    L = _square(L, "L")
    S = _square(S, "S")
    if L.shape != S.shape:
        raise DimensionError(f"L {L.shape} and S {S.shape} differ in size")
    S = np.ascontiguousarray(0.5 * (S + S.T))
    if method == "auto":
        method = "direct" if L.shape[0] <= DIRECT_LYAPUNOV_MAX_DIM else "fixed_point"
    if spectral_radius_core(L) >= 1.0:
        raise InstabilityError("Lyapunov operator has spectral radius >= 1")
    if method == "direct":
        try:
            X, ok = lyapunov_direct_core(L, S)
        except np.linalg.LinAlgError as exc:
            raise InstabilityError("singular vectorized Lyapunov system") from exc
    elif method == "fixed_point":
        X, ok = lyapunov_fixed_point_core(L, S, LYAPUNOV_FP_TOL, LYAPUNOV_FP_MAX_ITER)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not ok:
        raise InstabilityError("Lyapunov solve did not converge")
    return X


def eigvalsh(S):
    """Ascending eigenvalues of a symmetric matrix (Jacobi)."""
    return jacobi_eigvalsh_core(_square(S))


def singular_values(M):
    """Ascending singular values (one-sided Jacobi)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {M.shape}")
    if M.shape[0] < M.shape[1]:
        M = M.T
    return singular_values_core(np.ascontiguousarray(M))


def sigma_min(M):
    """Smallest singular value of a square matrix."""
    return float(singular_values(_square(M))[0])
