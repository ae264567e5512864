"""Self-contained oracle and invariant suite behind ``lqrlab verify``.

Every check returns ``(ok, detail)``. Nothing here needs a network, files
outside the package, or test-only dependencies.
"""

import math
import tempfile
import time
from pathlib import Path

import numpy as np

from ..algorithms import (
    DoubleLoopHyper,
    SsacHyper,
    ZeroOrderHyper,
    double_loop_train,
    natural_gradient_estimate,
    proj_ball,
    ssac_train,
    zeroth_order_train,
)
from ..algorithms.trace import TraceRecorder, prefix_means
from ..env import RngStream, make_system, stationary_covariance, step
from ..errors import DimensionError, InstabilityError, NotPositiveDefiniteError, ValidationError
from ..matlib import (
    cholesky,
    eigvalsh,
    sigma_min,
    smat,
    solve_discrete_lyapunov,
    spectral_norm,
    spectral_radius_estimate,
    svec,
    sym_kron,
)
from ..oracle import (
    almost_smoothness_gap,
    analytic_report,
    average_cost,
    expected_feature_gram,
    gradient_domination_check,
    random_stabilizing_gain,
    solve_are,
)
from .config import bundled_config_path, load_config
from .experiment import aggregate_traces, fit_rate
from .output import read_trace_csv, write_trace_csv

VERIFY_SEED = 20240917
DEADBEAT_K = np.eye(2)  # A - B K = 0 for the first example


def example_system(which):
    return load_config(bundled_config_path(f"example{which}.json")).system


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# -------------------------------------------------------------- criteria 1-4

def check_oracle_residuals(n_gains=100, tol_lyap=1e-10, tol_td=1e-9):
    worst = {"P": 0.0, "D": 0.0, "td": 0.0}
    for which in (1, 2):
        sys = example_system(which)
        rng = RngStream(VERIFY_SEED, (1, which))
        for _ in range(n_gains):
            K = random_stabilizing_gain(sys, rng).K
            rep = analytic_report(sys, K)
            L = sys.A - sys.B @ K
            resP = L.T @ rep.P_K @ L - rep.P_K + sys.Q + K.T @ sys.R @ K
            resD = L @ rep.D_K @ L.T - rep.D_K + sys.D_sigma
            worst["P"] = max(worst["P"], np.linalg.norm(resP) / np.linalg.norm(rep.P_K))
            worst["D"] = max(worst["D"], np.linalg.norm(resD) / np.linalg.norm(rep.D_K))
            worst["td"] = max(worst["td"], _rel(rep.A_K @ rep.omega_star, rep.b_K))
    ok = worst["P"] <= tol_lyap and worst["D"] <= tol_lyap and worst["td"] <= tol_td
    return ok, "max rel residual P {P:.2e}, D {D:.2e}, A w* - b {td:.2e}".format(**worst)


def finite_difference_gradient(sys, K, h=1e-5):
    G = np.zeros_like(K)
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            E = np.zeros_like(K)
            E[i, j] = h
            G[i, j] = (average_cost(sys, K + E) - average_cost(sys, K - E)) / (2 * h)
    return G


def check_gradient(n_gains=20, h=1e-5, tol=1e-5):
    sys = example_system(1)
    rng = RngStream(VERIFY_SEED, (2,))
    worst = 0.0
    for _ in range(n_gains):
        K = random_stabilizing_gain(sys, rng).K
        rep = analytic_report(sys, K)
        fd = finite_difference_gradient(sys, K, h)
        worst = max(worst, np.max(np.abs(fd - rep.grad_J)) / np.max(np.abs(rep.grad_J)))
    return worst <= tol, f"max relative error {worst:.2e} (h = {h:g})"


def check_identities(n=100, tol=1e-8):
    worst_smooth = 0.0
    worst_dom = -math.inf
    for which in (1, 2):
        sys = example_system(which)
        rng = RngStream(VERIFY_SEED, (3, which))
        K_star = solve_are(sys)[1]
        for _ in range(n):
            K = random_stabilizing_gain(sys, rng).K
            Kp = random_stabilizing_gain(sys, rng).K
            lhs, rhs = almost_smoothness_gap(sys, K, Kp)
            worst_smooth = max(worst_smooth, abs(lhs - rhs) / max(abs(lhs), 1e-12))
            gap, bound = gradient_domination_check(sys, K, K_star)
            worst_dom = max(worst_dom, gap - bound)
    e_star = max(
        float(np.linalg.norm(analytic_report(example_system(w), solve_are(example_system(w))[1].K).E_K))
        for w in (1, 2)
    )
    ok = worst_smooth <= tol and worst_dom <= 0.0 and e_star <= 1e-8
    return ok, (
        f"smoothness rel err {worst_smooth:.2e}; domination max(gap - bound) {worst_dom:.3g}; "
        f"||E_K*||_F {e_star:.2e}"
    )


def _svec_columns(Z):
    """Row-wise svec of z z^T for a batch of stacked state-actions."""
    n = Z.shape[1]
    cols = []
    for j in range(n):
        for i in range(j + 1):
            w = 1.0 if i == j else math.sqrt(2.0)
            cols.append(w * Z[:, i] * Z[:, j])
    return np.stack(cols, axis=1)


def moment_statistics(sys, K, n_samples, rng, chunk=100_000):
    """Monte-Carlo means and standard errors of phi phi^T, phi (phi - phi')^T and phi (c - J).

    Each sample is an independent stationary transition (x, u, c, x', u').
    """
    K = np.asarray(K, dtype=float)
    rep = analytic_report(sys, K)
    G = cholesky(stationary_covariance(sys, K))
    d, k = sys.d, sys.k
    m = rep.omega_star.size
    acc = {name: [np.zeros(shape), np.zeros(shape)] for name, shape in
           (("gram", (m, m)), ("A", (m, m)), ("b", (m,)))}
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        x = rng.normal((b, d)) @ G.T
        u = -x @ K.T + sys.sigma * rng.normal((b, k))
        c = np.einsum("bi,ij,bj->b", x, sys.Q, x) + np.einsum("bi,ij,bj->b", u, sys.R, u)
        x2 = x @ sys.A.T + u @ sys.B.T + rng.normal((b, d)) @ sys.chol_D0.T
        u2 = -x2 @ K.T + sys.sigma * rng.normal((b, k))
        phi = _svec_columns(np.hstack([x, u]))
        phi2 = _svec_columns(np.hstack([x2, u2]))
        dphi = phi - phi2
        g = phi[:, :, None] * phi[:, None, :]
        a = phi[:, :, None] * dphi[:, None, :]
        bb = phi * (c - rep.J)[:, None]
        for name, s in (("gram", g), ("A", a), ("b", bb)):
            acc[name][0] += s.sum(axis=0)
            acc[name][1] += (s * s).sum(axis=0)
        done += b
    out = {}
    for name, (s1, s2) in acc.items():
        mean = s1 / n_samples
        var = np.maximum(s2 / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
        out[name] = (mean, np.sqrt(var / n_samples))
    return rep, out


def check_moments(n_samples=1_000_000, n_se=4.0):
    sys = example_system(1)
    rep, stats = moment_statistics(sys, DEADBEAT_K, n_samples, RngStream(VERIFY_SEED, (4,)))
    targets = {"gram": expected_feature_gram(sys, DEADBEAT_K), "A": rep.A_K, "b": rep.b_K}
    parts = []
    ok = True
    for name, target in targets.items():
        mean, se = stats[name]
        z = np.max(np.abs(mean - target) / np.maximum(se, 1e-300))
        ok &= bool(z <= n_se)
        parts.append(f"{name} max |z| {z:.2f}")
    return ok, "; ".join(parts) + f" over {n_samples} transitions"


# -------------------------------------------------------------- invariants

def check_svec_smat():
    rng = np.random.default_rng(1)
    ok = np.allclose(svec(np.array([[1.0, 2.0], [2.0, 3.0]])), [1.0, 2.0 * math.sqrt(2.0), 3.0])
    for n in (1, 2, 4, 7):
        M = rng.normal(size=(n, n))
        M = M + M.T
        N = rng.normal(size=(n, n))
        N = N + N.T
        ok &= np.allclose(smat(svec(M)), M, atol=1e-14)
        ok &= abs(svec(M) @ svec(N) - np.sum(M * N)) <= 1e-12 * (1 + abs(np.sum(M * N)))
    try:
        smat(np.ones(4))
        ok = False
    except DimensionError:
        pass
    return bool(ok), "round trip, inner-product preservation, bad length rejected"


def check_sym_kron():
    rng = np.random.default_rng(2)
    ok = True
    for n in (2, 3, 5):
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, n))
        S = rng.normal(size=(n, n))
        S = S + S.T
        lhs = sym_kron(A, B) @ svec(S)
        rhs = svec(0.5 * (A @ S @ B.T + B @ S @ A.T))
        ok &= np.allclose(lhs, rhs, atol=1e-12)
        ok &= np.allclose(sym_kron(A, B), sym_kron(B, A), atol=1e-14)
    return bool(ok), "defining identity and symmetry in its arguments"


def check_linear_algebra():
    rng = np.random.default_rng(3)
    ok = True
    for n in (2, 4, 6):
        M = rng.normal(size=(n, n))
        S = M @ M.T + n * np.eye(n)
        G = cholesky(S)
        ok &= np.allclose(G @ G.T, S, atol=1e-12) and np.allclose(G, np.tril(G))
        ok &= np.allclose(eigvalsh(S), np.linalg.eigvalsh(S), rtol=1e-10)
        ok &= abs(spectral_norm(M) - np.linalg.norm(M, 2)) <= 1e-9 * np.linalg.norm(M, 2)
        ok &= abs(sigma_min(M) - np.linalg.svd(M, compute_uv=False)[-1]) <= 1e-8 * np.linalg.norm(M, 2)
        L = 0.8 * M / max(abs(np.linalg.eigvals(M)))
        rho = max(abs(np.linalg.eigvals(L)))
        ok &= abs(spectral_radius_estimate(L) - rho) <= 0.05
        X = solve_discrete_lyapunov(L, S)
        ok &= np.linalg.norm(L @ X @ L.T - X + S) <= 1e-10 * np.linalg.norm(X)
    for bad in (np.array([[1.0, 2.0], [2.0, 1.0]]),):
        try:
            cholesky(bad)
            ok = False
        except NotPositiveDefiniteError:
            pass
    try:
        solve_discrete_lyapunov(2.0 * np.eye(2), np.eye(2))
        ok = False
    except InstabilityError:
        pass
    return bool(ok), "Cholesky, eigenvalues, norms, spectral radius, Lyapunov solver"


def check_deadbeat_closed_form():
    sys = example_system(1)
    rep = analytic_report(sys, DEADBEAT_K)
    ok = np.allclose(rep.P_K, [[10, 4], [4, 9]], atol=1e-12)
    ok &= np.allclose(rep.D_K, 2 * np.eye(2), atol=1e-12)
    ok &= abs(rep.J - 47.0) <= 1e-10
    ok &= np.allclose(rep.E_K, sys.R, atol=1e-12)
    ok &= np.allclose(natural_gradient_estimate(rep.omega_star, DEADBEAT_K), rep.E_K, atol=1e-12)
    return bool(ok), f"P = [[10,4],[4,9]], D = 2I, J = {rep.J:.12g}, E = R"


def check_environment():
    sys = example_system(1)
    cost, x_next = step(sys, np.array([1.0, 0.0]), np.array([0.0, 1.0]), RngStream(0))
    noise = sys.chol_D0 @ RngStream(0).normal(2)
    ok = abs(cost - 17.0) <= 1e-12 and np.allclose(x_next - noise, [1.0, 1.0], atol=1e-14)
    a = RngStream(5, (1, 2)).normal(8)
    b = RngStream(5, (1, 2)).normal(8)
    c = RngStream(5, (1, 3)).normal(8)
    ok &= np.array_equal(a, b) and not np.array_equal(a, c)
    try:
        make_system(sys.A, sys.B, -sys.Q, sys.R)
        ok = False
    except ValidationError:
        pass
    return bool(ok), "step cost 9 + 8 = 17, stream reproducibility, SPD validation"


def check_are():
    worst = 0.0
    for which in (1, 2):
        sys = example_system(which)
        P, gain = solve_are(sys)
        BtP = sys.B.T @ P
        res = sys.Q + sys.A.T @ P @ sys.A - sys.A.T @ P @ sys.B @ np.linalg.solve(
            sys.R + BtP @ sys.B, BtP @ sys.A
        ) - P
        worst = max(worst, np.linalg.norm(res) / np.linalg.norm(P))
        if not gain.stabilizing:
            return False, f"example {which}: K* not stabilizing"
    return worst <= 1e-10, f"Riccati residual {worst:.2e}"


def check_learner_contracts():
    sys = example_system(1)
    ok = True
    tr = ssac_train(sys, SsacHyper(T=0, K0=DEADBEAT_K), RngStream(1))
    ok &= len(tr) == 0 and np.array_equal(tr.final_K, DEADBEAT_K)
    a = ssac_train(sys, SsacHyper(T=2000), RngStream(7), stride=1)
    b = ssac_train(sys, SsacHyper(T=2000), RngStream(7), stride=1)
    ok &= np.array_equal(a.final_K, b.final_K) and np.array_equal(a["A_T"], b["A_T"], equal_nan=True)
    ok &= int(a["samples"][-1]) == 2000
    ok &= np.allclose(a["A_T"], prefix_means(a["y_sq"]), rtol=1e-12)
    zo = zeroth_order_train(sys, ZeroOrderHyper(z=20, l=5, J_outer=2, eta=1e-4), RngStream(3))
    ok &= int(zo["samples"][-1]) == 2 * 2 * 20 * 5
    dl = double_loop_train(sys, DoubleLoopHyper(T_inner=50, J_outer=1, critic_init="oracle"), RngStream(3))
    ok &= int(dl["samples"][-1]) == 50
    ok &= np.allclose(proj_ball(np.array([3.0, 4.0]), 1.0), [0.6, 0.8]) and proj_ball(-5.0, 2.0) == -2.0
    try:
        DoubleLoopHyper(T_inner=0).validate()
        ok = False
    except ValidationError:
        pass
    return bool(ok), "determinism, sample accounting, prefix means, projection, preconditions"


def check_harness_plumbing():
    ok = True
    t = np.arange(1, 1001, dtype=float)
    ok &= abs(fit_rate(t, t**-0.5) + 0.5) <= 1e-9 and abs(fit_rate(t, np.full_like(t, 3.0))) <= 1e-9
    rec = TraceRecorder("ssac", 1)
    vals = np.random.default_rng(4).normal(size=(3, 5))
    traces = []
    for row in vals:
        rec = TraceRecorder("ssac", 1)
        block = {name: row for name in ("y_sq", "critic_err_sq", "nat_grad_sq", "actor_gap", "k_err",
                                        "A_T", "B_T", "C_T")}
        block["iter"] = np.arange(5)
        block["samples"] = np.arange(1, 6)
        rec.add(block)
        traces.append(rec.finish())
    agg = aggregate_traces(traces)
    ok &= np.array_equal(agg.mean["k_err"], np.mean(vals, axis=0))
    ok &= bool(np.all(agg.lo["k_err"] <= agg.mean["k_err"]) and np.all(agg.mean["k_err"] <= agg.hi["k_err"]))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "t.csv"
        write_trace_csv(traces[0], path, ["check"])
        back = read_trace_csv(path)
        ok &= all(np.array_equal(back[c], traces[0][c], equal_nan=True) for c in traces[0].columns)
        raw = path.read_bytes()
        ok &= b"\r" not in raw
    return bool(ok), "rate fit, aggregation, CSV round trip"


CHECKS = (
    ("oracle residuals (100 gains x 2 examples)", check_oracle_residuals),
    ("gradient vs finite differences", check_gradient),
    ("smoothness / domination / E at K*", check_identities),
    ("Monte-Carlo moment matching", check_moments),
    ("svec / smat", check_svec_smat),
    ("symmetric Kronecker product", check_sym_kron),
    ("linear algebra kernels", check_linear_algebra),
    ("deadbeat closed form", check_deadbeat_closed_form),
    ("environment", check_environment),
    ("Riccati solution", check_are),
    ("learner contracts", check_learner_contracts),
    ("harness plumbing", check_harness_plumbing),
)


def run_verify(out=print):
    """Run every check; returns True iff all pass."""
    all_ok = True
    start = time.perf_counter()
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, reported with its type
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{time.perf_counter() - t0:.1f}s]")
    out(f"{'ALL PASSED' if all_ok else 'FAILURES'} in {time.perf_counter() - start:.1f}s")
    return all_ok
