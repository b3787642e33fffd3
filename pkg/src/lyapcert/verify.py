"""Numerical validation of certificates against concrete functions and trajectories."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, softmax

from .assembly import SdpProblem, build_rho_sdp, constraint_slacks
from .core import FunctionClass, MethodSpec, validate
from .interp import interpolable
from .solver import LyapunovCertificate
from .symbolic import STAR


# -- residual checks ---------------------------------------------------------


@dataclass
class ConstraintResidual:
    name: str
    sense: str
    slack: float  # min eigenvalue / entry of the slack, sign-adjusted so >= 0 is satisfied
    passed: bool


@dataclass
class ResidualReport:
    constraints: list[ConstraintResidual]
    multiplier_negativity: float
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.constraints) and self.multiplier_negativity <= self.tol

    @property
    def failures(self) -> list[str]:
        out = [c.name for c in self.constraints if not c.passed]
        if self.multiplier_negativity > self.tol:
            out.append("multipliers")
        return out

    def worst_slack(self) -> float:
        return min((c.slack for c in self.constraints), default=float("inf"))

    def lines(self) -> list[str]:
        rows = [
            f"{'PASS' if c.passed else 'FAIL'} {c.name} ({c.sense}) slack={c.slack:.6e}"
            for c in self.constraints
        ]
        ok = self.multiplier_negativity <= self.tol
        rows.append(f"{'PASS' if ok else 'FAIL'} multipliers max_negativity={self.multiplier_negativity:.6e}")
        return rows


def rebuild_problem(cert: LyapunovCertificate) -> SdpProblem:
    """Rebuild the program a certificate was extracted from, in the caller's units."""
    meta = cert.problem
    kind = meta.get("kind", "fixed_step")
    cls = FunctionClass(meta["mu"], meta["L"])
    if kind == "fixed_step":
        spec = MethodSpec(int(meta["N"]), meta["alpha"], tuple(meta["beta"]), tuple(meta["gamma"]), meta.get("method", "custom"))
        return build_rho_sdp(spec, cls, cert.rho, meta.get("restriction", "none"), rescale=False)
    from . import variants

    if kind == "els_gd":
        return variants.build_els_gd_sdp(cls, cert.rho, rescale=False)
    if kind == "els_hbm":
        return variants.build_els_hbm_sdp(cls, cert.rho, rescale=False)
    if kind == "restart":
        schedule = variants.momentum_sequence(int(meta["N_inner"]))
        return variants.build_restart_sdp(cls, schedule, cert.rho, rescale=False)
    raise ValueError(f"unknown certificate kind {kind!r}")


def check_certificate_algebraic(
    cert: LyapunovCertificate, problem: SdpProblem | None = None, tol: float = 1e-6
) -> ResidualReport:
    """Substitute the certificate into every constraint and report slacks.

    Non-strict constraints pass when the slack is at least ``-tol``; strict ones
    (the positive-definiteness blocks) need a strictly positive slack.
    """
    problem = rebuild_problem(cert) if problem is None else problem
    values = cert.variable_values()
    missing = set(problem.var_names) - set(values)
    extra = set(values) - set(problem.var_names)
    if missing or extra:
        raise ValueError(f"certificate does not match problem: missing={sorted(missing)[:5]} extra={sorted(extra)[:5]}")
    z = problem.from_user_units(values)
    rows = []
    for c, slack in constraint_slacks(problem, z):
        ok = slack > 0 if c.sense.strict else slack >= -tol
        rows.append(ConstraintResidual(c.name, c.sense.value, slack, bool(ok)))
    neg = [-z[i] for i in range(problem.n_vars) if problem.nonneg[i]]
    return ResidualReport(rows, max([0.0] + neg), tol)


# -- test functions ------------------------------------------------------------


@dataclass
class TestFunction:
    """A member of the smooth strongly convex class with known minimizer."""

    kind: str
    f: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    x_star: np.ndarray
    f_star: float
    mu: float
    L: float
    data: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def d(self) -> int:
        return self.x_star.shape[0]


def quadratic(H: np.ndarray, x_star: np.ndarray | None = None, f_star: float = 0.0) -> TestFunction:
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    d = H.shape[0]
    xs = np.zeros(d) if x_star is None else np.asarray(x_star, dtype=float)
    eig = np.linalg.eigvalsh(H)
    return TestFunction(
        "quadratic",
        lambda x: 0.5 * float((x - xs) @ H @ (x - xs)) + f_star,
        lambda x: H @ (x - xs),
        lambda x: H,
        xs,
        f_star,
        float(eig[0]),
        float(eig[-1]),
        {"H": H},
    )


def random_quadratic(cls: FunctionClass, d: int, rng: np.random.Generator) -> TestFunction:
    """Orthogonally conjugated diagonal whose spectrum always contains mu and L."""
    if d < 2:
        spectrum = np.array([cls.mu])
    else:
        spectrum = np.concatenate([[cls.mu, cls.L], rng.uniform(cls.mu, cls.L, d - 2)])
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    H = Q @ np.diag(spectrum) @ Q.T
    return quadratic(H, rng.standard_normal(d), float(rng.standard_normal()))


def logsumexp_function(A: np.ndarray, b: np.ndarray, mu: float, x_star: np.ndarray | None = None) -> TestFunction:
    """f(x) = logsumexp(A x + b) - c.x + mu/2 |x - x_star|^2, minimized at ``x_star``.

    The tilt ``c`` cancels the gradient at ``x_star``, so the minimizer is known
    exactly. The softmax covariance diag(s) - s s^T has spectral norm at most
    1/2, so the Hessian lies between mu I and (mu + |A|_2^2 / 2) I.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    xs = np.zeros(A.shape[1]) if x_star is None else np.asarray(x_star, dtype=float)
    c = A.T @ softmax(A @ xs + b)

    def f(x):
        return float(logsumexp(A @ x + b) - c @ x + 0.5 * mu * (x - xs) @ (x - xs))

    def grad(x):
        return A.T @ softmax(A @ x + b) - c + mu * (x - xs)

    def hess(x):
        s = softmax(A @ x + b)
        return A.T @ (np.diag(s) - np.outer(s, s)) @ A + mu * np.eye(A.shape[1])

    L = mu + 0.5 * np.linalg.norm(A, 2) ** 2
    return TestFunction("logsumexp", f, grad, hess, xs, f(xs), mu, float(L), {"A": A, "b": b, "c": c})


def random_logsumexp(cls: FunctionClass, d: int, rng: np.random.Generator, m: int | None = None) -> TestFunction:
    m = 2 * d if m is None else m
    A = rng.standard_normal((m, d))
    if cls.L > cls.mu:
        A *= np.sqrt(2.0 * (cls.L - cls.mu)) / np.linalg.norm(A, 2)
    else:
        A *= 0.0
    fn = logsumexp_function(A, rng.standard_normal(m), cls.mu, rng.standard_normal(d))
    fn.L = cls.L
    return fn


def tridiagonal_function(cls: FunctionClass, d: int) -> TestFunction:
    H = 2.0 * np.eye(d) + np.eye(d, k=1) + np.eye(d, k=-1)
    eig = np.linalg.eigvalsh(H)
    lo, hi = eig[0], eig[-1]
    Ht = (H - lo * np.eye(d)) * (cls.L - cls.mu) / (hi - lo) + cls.mu * np.eye(d)
    fn = quadratic(Ht)
    fn.kind = "slater-tridiagonal"
    fn.data["H_unscaled"] = H
    return fn


# -- trajectories ----------------------------------------------------------------


@dataclass
class Trajectory:
    """Concrete run: x_{-N..K}, y/g/f at 0..K, and the optimum.

    ``steps`` is the number of gradient evaluations between consecutive states;
    it is 1 except for restarted schemes, where one state is one restart cycle.
    """

    N: int
    x: dict
    y: dict
    g: dict
    f: dict
    x_star: np.ndarray
    f_star: float
    steps: int = 1

    @property
    def K(self) -> int:
        return max(self.g)

    @property
    def d(self) -> int:
        return self.x_star.shape[0]

    def points(self) -> dict:
        pts = {k: (self.y[k], self.g[k], self.f[k]) for k in self.g}
        pts[STAR] = (self.x_star, np.zeros(self.d), self.f_star)
        return pts

    def shifted_points(self) -> dict:
        pts = {k: (self.y[k] - self.x_star, self.g[k], self.f[k] - self.f_star) for k in self.g}
        pts[STAR] = (np.zeros(self.d), np.zeros(self.d), 0.0)
        return pts

    def state(self, k: int):
        """(x_k - x*, ..., x_{k-N} - x*), (g_k, ..., g_{k-N}), (f_k - f*, ...)."""
        r = range(self.N + 1)
        xs = [self.x[k - j] - self.x_star for j in r]
        gs = [self.g[k - j] for j in r]
        fs = [self.f[k - j] - self.f_star for j in r]
        return xs, gs, fs

    def stacked(self) -> np.ndarray:
        """Columns x_{-N}-x*, ..., x_0-x*, g_0, ..., g_K."""
        cols = [self.x[k] - self.x_star for k in range(-self.N, 1)] + [self.g[k] for k in range(self.K + 1)]
        return np.column_stack(cols)

    def fvec(self) -> np.ndarray:
        return np.array([self.f[k] - self.f_star for k in range(self.K + 1)])


def simulate_method(spec: MethodSpec, fn: TestFunction, x_init: Sequence[np.ndarray], iters: int) -> Trajectory:
    """Run the fixed-step method; ``x_init`` lists x_{-N}, ..., x_0."""
    N = spec.degree
    if len(x_init) != N + 1:
        raise ValueError(f"need {N + 1} initial points, got {len(x_init)}")
    x = {k - N: np.asarray(v, dtype=float) for k, v in enumerate(x_init)}
    y, g, f = {}, {}, {}
    for k in range(iters + 1):
        past = [x[k - j] for j in range(N + 1)]
        y[k] = sum(c * v for c, v in zip(spec.gamma, past))
        g[k] = fn.grad(y[k])
        f[k] = fn.f(y[k])
        x[k + 1] = sum(c * v for c, v in zip(spec.beta, past)) - spec.alpha * g[k]
    return Trajectory(N, x, y, g, f, fn.x_star, fn.f_star)


def _newton_subspace(fn: TestFunction, x: np.ndarray, D: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """argmin_c f(x + D c) for a few search directions (columns of D).

    Damped Newton with Armijo backtracking; the restriction is strongly convex.
    """
    if not np.any(D):
        return np.zeros(D.shape[1])
    c = np.zeros(D.shape[1])
    keep = np.linalg.norm(D, axis=0) > 0
    D = D[:, keep]
    cc = np.zeros(D.shape[1])
    val = fn.f(x)
    for _ in range(100):
        p = x + D @ cc
        gr = D.T @ fn.grad(p)
        H = D.T @ fn.hess(p) @ D
        step = -np.linalg.lstsq(H, gr, rcond=None)[0]
        slope = float(gr @ step)
        if not slope < 0:
            break
        t = 1.0
        if -slope > 1e-12 * max(1.0, abs(val)):
            while t >= 1e-10:
                new_val = fn.f(x + D @ (cc + t * step))
                if new_val <= val + 1e-4 * t * slope:
                    break
                t *= 0.5
        else:
            # predicted decrease is below the resolution of f: inside the Newton region
            new_val = fn.f(x + D @ (cc + step))
        cc = cc + t * step
        val = new_val
        if t == 1.0 and np.linalg.norm(step) <= tol * max(1.0, np.linalg.norm(cc)):
            break
    c[keep] = cc
    return c


def simulate_els_gd(fn: TestFunction, x0: np.ndarray, iters: int) -> Trajectory:
    """Steepest descent with exact line search."""
    x = {0: np.asarray(x0, dtype=float)}
    g, f = {}, {}
    for k in range(iters + 1):
        g[k] = fn.grad(x[k])
        f[k] = fn.f(x[k])
        a = _newton_subspace(fn, x[k], -g[k][:, None])[0]
        x[k + 1] = x[k] - a * g[k]
    return Trajectory(0, x, dict(x), g, f, fn.x_star, fn.f_star)


def simulate_els_hbm(fn: TestFunction, x_prev: np.ndarray, x0: np.ndarray, iters: int) -> Trajectory:
    """Heavy-ball iterations with (alpha, beta) chosen by exact two-dimensional search."""
    x = {-1: np.asarray(x_prev, dtype=float), 0: np.asarray(x0, dtype=float)}
    g, f = {}, {}
    for k in range(iters + 1):
        g[k] = fn.grad(x[k])
        f[k] = fn.f(x[k])
        D = np.column_stack([x[k] - x[k - 1], -g[k]])
        c = _newton_subspace(fn, x[k], D)
        x[k + 1] = x[k] + D @ c
    return Trajectory(1, x, {k: x[k] for k in g}, g, f, fn.x_star, fn.f_star)


def simulate_restarted_fgm(
    fn: TestFunction, theta: Sequence[float], y0: np.ndarray, cycles: int, L: float
) -> Trajectory:
    """Restarted fast gradient method; one recorded state per restart cycle.

    The returned trajectory stores cycle starting points y_k^0 (= y_{k-1}^N) as
    x_k, with gradients and values there.
    """
    n_inner = len(theta) - 1
    ys = {0: np.asarray(y0, dtype=float)}
    g, f = {}, {}
    for k in range(cycles + 1):
        y = ys[k]
        g[k] = fn.grad(y)
        f[k] = fn.f(y)
        z_prev = y
        gy = g[k]
        for i in range(n_inner):
            z = y - gy / L
            y = z + (theta[i] - 1.0) / theta[i + 1] * (z - z_prev)
            z_prev = z
            gy = fn.grad(y)
        ys[k + 1] = y
    return Trajectory(0, ys, {k: ys[k] for k in g}, g, f, fn.x_star, fn.f_star, steps=n_inner)


# -- Lyapunov decrease along trajectories ------------------------------------------


@dataclass
class DecreaseReport:
    values: np.ndarray
    nonneg_ok: bool
    step_ok: bool
    bound_ok: bool
    worst_step_excess: float
    worst_bound_ratio: float

    @property
    def passed(self) -> bool:
        return self.nonneg_ok and self.step_ok and self.bound_ok


def lyapunov_values(cert: LyapunovCertificate, traj: Trajectory) -> np.ndarray:
    return np.array([cert.value(*traj.state(k)) for k in range(traj.N, traj.K + 1)])


def state_magnitude(traj: Trajectory, k: int) -> float:
    """Sum of |x|^2, |g|^2 and |f - f*| over the state at k."""
    xs, gs, fs = traj.state(k)
    return float(sum(v @ v for v in xs) + sum(v @ v for v in gs) + sum(abs(v) for v in fs))


def check_decrease_on_trajectory(
    cert: LyapunovCertificate, traj: Trajectory, tol: float = 1e-8, rho: float | None = None
) -> DecreaseReport:
    """Nonnegativity, one-step decrease and the telescoped bound V_k <= w^(k-N) V_N.

    ``tol`` is relative: a constraint residual r of the certificate can show up
    as r times the size of the iterates, so each step is judged against
    ``tol * max(1, |V|, |x|^2 + |g|^2 + |f - f*|)`` over the two states involved.
    """
    rho = cert.rho if rho is None else rho
    w = rho ** (2 * traj.steps)
    ks = range(traj.N, traj.K + 1)
    V = lyapunov_values(cert, traj)
    mag = np.array([state_magnitude(traj, k) for k in ks])
    scale = np.maximum.reduce([np.ones_like(V), np.abs(V), mag])
    nonneg_ok = bool(np.all(V >= -tol * scale))
    step_scale = np.maximum(scale[:-1], scale[1:])
    excess = V[1:] - w * V[:-1] - tol * step_scale
    step_ok = bool(np.all(excess <= 0))
    powers = w ** np.arange(len(V))
    bound = powers * V[0]
    # per-step residuals accumulate along the telescoped chain (w <= 1 damps them)
    slack = tol * np.concatenate([[0.0], np.cumsum(step_scale)]) * np.maximum(1.0, powers[::-1].max())
    bound_ok = bool(np.all(V <= bound + slack + tol * scale[0]))
    ratio = float(np.max(V / np.maximum(bound, np.finfo(float).tiny))) if V[0] > 0 else 0.0
    return DecreaseReport(V, nonneg_ok, step_ok, bound_ok, float(np.max(excess, initial=-np.inf)), ratio)


def decay_rate(values: Sequence[float], floor: float = 1e-13) -> float:
    """Geometric decay factor fitted by least squares on log values above a floor."""
    v = np.asarray(values, dtype=float)
    keep = v > floor * v[0]
    k = np.arange(len(v))[keep]
    if len(k) < 3:
        return 0.0
    slope = np.polyfit(k, np.log(v[keep]), 1)[0]
    return float(np.exp(slope))


# -- spectral oracle -------------------------------------------------------------------


def companion_radius(spec: MethodSpec, h: float) -> float:
    """Spectral radius of the scalar recursion on a quadratic with curvature h."""
    N = spec.degree
    c = np.array(spec.beta) - spec.alpha * h * np.array(spec.gamma)
    if N == 0:
        return abs(float(c[0]))
    C = np.zeros((N + 1, N + 1))
    C[0] = c
    C[1:, :-1] = np.eye(N)
    return float(np.max(np.abs(np.linalg.eigvals(C))))


def quadratic_worst_rate(spec: MethodSpec, cls: FunctionClass, grid_size: int = 200) -> float:
    """Worst spectral radius over curvatures in [mu, L]; a lower bound on any certified rate."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if cls.mu == cls.L:
        return companion_radius(spec, cls.mu)
    grid = np.geomspace(cls.mu, cls.L, grid_size)
    vals = np.array([companion_radius(spec, h) for h in grid])
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
    res = minimize_scalar(lambda h: -companion_radius(spec, h), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * hi})
    return max(best, -float(res.fun))


# -- Slater fixture and Gram lifting ------------------------------------------------------


def slater_trajectory(spec: MethodSpec, cls: FunctionClass, K: int, d: int) -> Trajectory:
    validate(spec)
    N = spec.degree
    if d < N + K + 2:
        raise ValueError(f"need d >= N+K+2 = {N + K + 2}, got {d}")
    fn = tridiagonal_function(cls, d)
    eye = np.eye(d)
    x_init = [eye[N + i] for i in range(-N, 1)]
    return simulate_method(spec, fn, x_init, K)


def gram_matrix(traj: Trajectory, K: int | None = None) -> np.ndarray:
    B = traj.stacked()
    if K is not None:
        B = B[:, : traj.N + K + 2]
    return B.T @ B


def trajectory_interpolable(traj: Trajectory, cls: FunctionClass, tol: float = 1e-9) -> bool:
    """Interpolability of the sampled triples, with ``tol`` relative to their magnitude."""
    pts = traj.points()
    ymax = max(float(np.dot(y, y)) for y, _, _ in pts.values())
    gmax = max(float(np.dot(g, g)) for _, g, _ in pts.values())
    fmax = max(abs(f) for _, _, f in pts.values())
    size = (cls.L - cls.mu) * fmax + cls.mu * cls.L * ymax + gmax
    return interpolable(pts, cls, tol * max(1.0, size))
