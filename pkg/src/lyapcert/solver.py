"""Feasibility backends, margin maximization and bisection over the rate."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy import sparse

from .assembly import Restriction, SdpProblem, Sense, build_rho_sdp, constraint_slacks
from .core import FunctionClass, MethodSpec, validate

log = logging.getLogger(__name__)


class Status(str, Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNKNOWN = "Unknown"


class BackendUnknown(RuntimeError):
    """A probe could not be classified as feasible or infeasible."""


class NoCertificateWithinBracket(RuntimeError):
    """The rate program is infeasible even at the upper end of the bracket."""


@dataclass(frozen=True)
class SolverSettings:
    eps_feas: float = 1e-7
    tol_rho: float = 1e-4
    rho_max: float = 1.5
    max_iter: int = 200
    tol_gap_abs: float = 1e-9
    tol_gap_rel: float = 1e-9
    tol_feas: float = 1e-9

    @classmethod
    def from_mapping(cls, cfg: dict) -> "SolverSettings":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**{k: type(getattr(cls, k))(v) for k, v in cfg.items()})


@dataclass
class FeasibilityOutcome:
    status: Status
    margin: float
    values: np.ndarray | None = None
    diagnostics: str = ""

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


class Backend(Protocol):
    name: str

    def maximize_margin(self, problem: SdpProblem, settings: SolverSettings) -> tuple[str, float, np.ndarray | None, str]:
        """Return (solver status, t*, z*, diagnostics); status 'optimal' when trustworthy."""


def svec_index(m: int) -> list[tuple[int, int]]:
    """Upper triangle, column-major: the ordering of Clarabel's PSD triangle cone."""
    return [(i, j) for j in range(m) for i in range(j + 1)]


def svec(A: np.ndarray, idx=None) -> np.ndarray:
    m = A.shape[0]
    idx = svec_index(m) if idx is None else idx
    r2 = math.sqrt(2.0)
    return np.array([A[i, j] if i == j else r2 * A[i, j] for i, j in idx])


class ClarabelBackend:
    """Interior-point solve of the margin program with Clarabel."""

    name = "clarabel"
    # alternative settings tried when the first solve is inaccurate
    retries = ({"equilibrate_enable": False},)

    def maximize_margin(self, problem, settings, overrides=None):
        import clarabel

        n = problem.n_vars
        t = n
        nx = n + 1
        rows, cols, vals = [], [], []
        b: list[float] = []

        def emit(row_entries, rhs):
            r = len(b)
            for c, v in row_entries:
                if v != 0.0:
                    rows.append(r)
                    cols.append(c)
                    vals.append(v)
            b.append(rhs)

        # s = b - A x >= 0 for every nonnegative-cone row
        for i in range(nx):
            emit([(i, 1.0)], 1.0)
            nonneg = i < n and problem.nonneg[i]
            emit([(i, -1.0)], 0.0 if nonneg else 1.0)
        for c in problem.constraints:
            if c.sense.matrix:
                continue
            if c.sense is Sense.NONPOS:
                sgn, tcoef = -1.0, 0.0
            else:
                sgn, tcoef = 1.0, (1.0 if c.sense is Sense.STRICT_POS else 0.0)
            for r in range(c.size):
                entries = [(i, -sgn * coef[r]) for i, coef in c.expr.terms.items()]
                if tcoef:
                    entries.append((t, tcoef))
                emit(entries, sgn * c.expr.const[r])
        n_nonneg = len(b)
        cones = [clarabel.NonnegativeConeT(n_nonneg)]
        for c in problem.constraints:
            if not c.sense.matrix:
                continue
            m = c.size
            idx = svec_index(m)
            sgn = -1.0 if c.sense is Sense.NSD else 1.0
            start = len(b)
            for i, coef in c.expr.terms.items():
                col = svec(coef, idx)
                for r, v in enumerate(col):
                    if v != 0.0:
                        rows.append(start + r)
                        cols.append(i)
                        vals.append(-sgn * v)
            if c.sense is Sense.STRICT_PSD:
                for r, (a, bb) in enumerate(idx):
                    if a == bb:
                        rows.append(start + r)
                        cols.append(t)
                        vals.append(1.0)
            b.extend(sgn * svec(c.expr.const, idx))
            cones.append(clarabel.PSDTriangleConeT(m))
        A = sparse.csc_matrix((vals, (rows, cols)), shape=(len(b), nx))
        P = sparse.csc_matrix((nx, nx))
        q = np.zeros(nx)
        q[t] = -1.0
        cs = clarabel.DefaultSettings()
        cs.verbose = False
        cs.max_iter = settings.max_iter
        cs.tol_gap_abs = settings.tol_gap_abs
        cs.tol_gap_rel = settings.tol_gap_rel
        cs.tol_feas = settings.tol_feas
        for key, value in (overrides or {}).items():
            setattr(cs, key, value)
        solver = clarabel.DefaultSolver(P, q, A, np.asarray(b), cones, cs)
        sol = solver.solve()
        status = str(sol.status)
        x = np.asarray(sol.x)
        diag = f"clarabel {status} iters={sol.iterations} obj={sol.obj_val:.3e}"
        ok = "optimal" if status == "Solved" else ("almost" if status == "AlmostSolved" else "failed")
        return ok, float(x[t]), x[:n], diag


class CvxpyBackend:
    """Same margin program through cvxpy; slower, used to cross-check the default."""

    name = "cvxpy"

    def __init__(self, solver: str = "CLARABEL"):
        self.solver = solver

    def maximize_margin(self, problem, settings):
        import cvxpy as cp

        n = problem.n_vars
        z = cp.Variable(n) if n else None
        t = cp.Variable()
        cons = [t <= 1, t >= -1]
        if n:
            lower = np.where(problem.nonneg, 0.0, -1.0)
            cons += [z <= 1, z >= lower]

        def expr_of(c):
            e = c.expr.const
            for i, coef in c.expr.terms.items():
                e = e + z[i] * coef
            return e

        for c in problem.constraints:
            e = expr_of(c)
            if c.sense is Sense.STRICT_PSD:
                e = cp.Constant(np.zeros(c.expr.shape)) + e
                cons.append(0.5 * (e + e.T) - t * np.eye(c.size) >> 0)
            elif c.sense is Sense.PSD:
                e = cp.Constant(np.zeros(c.expr.shape)) + e
                cons.append(0.5 * (e + e.T) >> 0)
            elif c.sense is Sense.NSD:
                e = cp.Constant(np.zeros(c.expr.shape)) + e
                cons.append(0.5 * (e + e.T) << 0)
            elif c.sense is Sense.STRICT_POS:
                cons.append(e >= t)
            elif c.sense is Sense.NONNEG:
                cons.append(e >= 0)
            else:
                cons.append(e <= 0)
        prob = cp.Problem(cp.Maximize(t), cons)
        try:
            prob.solve(solver=self.solver)
        except cp.SolverError as exc:
            return "failed", float("nan"), None, f"cvxpy error: {exc}"
        status = prob.status
        ok = "optimal" if status == cp.OPTIMAL else ("almost" if status == cp.OPTIMAL_INACCURATE else "failed")
        zv = np.asarray(z.value) if n and z.value is not None else np.zeros(n)
        tv = float(t.value) if t.value is not None else float("nan")
        return ok, tv, zv, f"cvxpy/{self.solver} {status}"


DEFAULT_BACKEND = ClarabelBackend()


def solve_feasibility(
    problem: SdpProblem, settings: SolverSettings = SolverSettings(), backend: Backend | None = None
) -> FeasibilityOutcome:
    backend = DEFAULT_BACKEND if backend is None else backend
    ok, t, z, diag = backend.maximize_margin(problem, settings)
    if ok == "failed" or not math.isfinite(t):
        return FeasibilityOutcome(Status.UNKNOWN, t, None, diag)
    for overrides in (None,) + tuple(getattr(backend, "retries", ())):
        if overrides is not None:
            ok, t, z, more = backend.maximize_margin(problem, settings, overrides)
            diag = f"{diag}; retry {overrides}: {more}"
        if ok != "almost":
            break
        # reduced accuracy: accept only a verified point or a margin far below threshold
        if z is not None:
            z = np.where(problem.nonneg, np.maximum(z, 0.0), z)
        verified = _verify_inaccurate(problem, settings, t, z)
        if verified is not None:
            return FeasibilityOutcome(Status.FEASIBLE, verified, z, diag + " (inaccurate, point verified)")
        if math.isfinite(t) and t <= 0.1 * settings.eps_feas:
            return FeasibilityOutcome(Status.INFEASIBLE, t, None, diag + " (inaccurate, far below threshold)")
    if ok == "almost":
        return FeasibilityOutcome(Status.UNKNOWN, t, None, diag + " (inaccurate near threshold)")
    if ok == "failed" or not math.isfinite(t):
        return FeasibilityOutcome(Status.UNKNOWN, t, None, diag)
    if t > settings.eps_feas:
        z = np.where(problem.nonneg, np.maximum(z, 0.0), z)
        return FeasibilityOutcome(Status.FEASIBLE, t, z, diag)
    return FeasibilityOutcome(Status.INFEASIBLE, t, None, diag)


def _verify_inaccurate(problem, settings, t, z) -> float | None:
    """Exact margin of an inaccurate optimum, or None.

    Accepted when the strict constraints clear ``eps_feas`` and no other
    constraint is violated by more than ``eps_feas``.
    """
    if not math.isfinite(t) or t <= settings.eps_feas or z is None:
        return None
    worst_strict, worst_loose = math.inf, math.inf
    for c, slack in constraint_slacks(problem, z):
        if c.sense.strict:
            worst_strict = min(worst_strict, slack)
        else:
            worst_loose = min(worst_loose, slack)
    if worst_strict > settings.eps_feas and worst_loose >= -settings.eps_feas:
        return worst_strict
    return None


@dataclass
class LyapunovCertificate:
    """Rate certificate in the caller's units (before internal rescaling).

    ``P`` is the full symmetric quadratic part, ``p`` the linear part.
    Multiplier maps are keyed ``"lambda[i][j]"``, ``"eta[i][j]"`` and
    ``"nu[k]"`` with ``star`` as the optimum index.
    """

    rho: float
    P: np.ndarray
    p: np.ndarray
    lam: dict[str, float]
    eta: dict[str, float]
    nu: dict[str, float]
    margin: float
    problem: dict = field(default_factory=dict)
    solver: str = ""

    def variable_values(self) -> dict[str, float]:
        out = {}
        s = self.P.shape[0]
        for a in range(s):
            for b in range(a, s):
                out[f"P[{a}][{b}]"] = float(self.P[a, b])
        for r, v in enumerate(self.p):
            out[f"p[{r}]"] = float(v)
        out.update(self.lam)
        out.update(self.eta)
        out.update(self.nu)
        return out

    @classmethod
    def from_solution(cls, problem: SdpProblem, outcome: FeasibilityOutcome, solver: str = "") -> "LyapunovCertificate":
        values = problem.to_user_units(outcome.values)
        s = 0
        while f"P[{s}][{s}]" in values:
            s += 1
        P = np.zeros((s, s))
        for a in range(s):
            for b in range(a, s):
                P[a, b] = P[b, a] = values[f"P[{a}][{b}]"]
        p = np.array([values[f"p[{r}]"] for r in range(s // 2)])
        pick = lambda pre: {k: v for k, v in values.items() if k.startswith(pre + "[")}
        return cls(
            rho=float(problem.meta.get("rho", float("nan"))),
            P=P,
            p=p,
            lam=pick("lambda"),
            eta=pick("eta"),
            nu=pick("nu"),
            margin=float(outcome.margin),
            problem=dict(problem.meta),
            solver=solver or outcome.diagnostics,
        )

    def value(self, xs: Sequence[np.ndarray], gs: Sequence[np.ndarray], fs: Sequence[float]) -> float:
        """Lyapunov value on a state (x_k..x_{k-N}, g_k..g_{k-N}, f_k..f_{k-N}), already shifted."""
        S = np.vstack(list(xs) + list(gs))
        return float(np.sum(self.P * (S @ S.T)) + np.dot(self.p, np.asarray(fs, dtype=float)))

    def to_dict(self) -> dict:
        s = self.P.shape[0]
        return {
            "rho": self.rho,
            "problem": self.problem,
            "P_size": s,
            "P_upper": [float(self.P[a, b]) for a in range(s) for b in range(a, s)],
            "p": [float(v) for v in self.p],
            "lambda": self.lam,
            "eta": self.eta,
            "nu": self.nu,
            "margin": self.margin,
            "solver": self.solver,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LyapunovCertificate":
        s = int(d["P_size"])
        P = np.zeros((s, s))
        it = iter(d["P_upper"])
        for a in range(s):
            for b in range(a, s):
                P[a, b] = P[b, a] = float(next(it))
        return cls(
            rho=float(d["rho"]),
            P=P,
            p=np.asarray(d["p"], dtype=float),
            lam={k: float(v) for k, v in d.get("lambda", {}).items()},
            eta={k: float(v) for k, v in d.get("eta", {}).items()},
            nu={k: float(v) for k, v in d.get("nu", {}).items()},
            margin=float(d.get("margin", float("nan"))),
            problem=dict(d.get("problem", {})),
            solver=str(d.get("solver", "")),
        )

    def dumps(self) -> str:
        return dumps_exact(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "LyapunovCertificate":
        return cls.from_dict(json.loads(text))


def _fmt(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return json.dumps(str(obj))
        return format(obj, ".17g")
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_fmt(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_fmt(v, indent + 1) for v in obj) + "]"
    return json.dumps(obj)


def dumps_exact(obj) -> str:
    """JSON text with every float printed to 17 significant digits."""
    return _fmt(obj) + "\n"


@dataclass
class RateCertificate:
    rho_star: float
    certificate: LyapunovCertificate
    bracket_history: list[tuple[float, Status]]

    @property
    def contracting(self) -> bool:
        return self.rho_star < 1.0


ProblemFactory = Callable[[float], SdpProblem]


def bisect(
    factory: ProblemFactory, settings: SolverSettings = SolverSettings(), backend: Backend | None = None,
    rho_max: float | None = None,
) -> RateCertificate:
    """Smallest rate whose program is strictly feasible, to ``settings.tol_rho``."""
    hi = settings.rho_max if rho_max is None else rho_max
    history: list[tuple[float, Status]] = []

    def probe(rho):
        problem = factory(rho)
        out = solve_feasibility(problem, settings, backend)
        history.append((rho, out.status))
        log.debug("rho=%.6f %s margin=%.3e", rho, out.status.value, out.margin)
        if out.status is Status.UNKNOWN:
            raise BackendUnknown(f"probe at rho={rho:.6g}: {out.diagnostics}")
        return problem, out

    problem, out = probe(hi)
    if not out.feasible:
        raise NoCertificateWithinBracket(f"infeasible at rho_max={hi} (margin {out.margin:.3e})")
    best = (hi, problem, out)
    lo = 0.0
    while hi - lo > settings.tol_rho:
        mid = 0.5 * (lo + hi)
        problem, out = probe(mid)
        if out.feasible:
            hi = mid
            best = (mid, problem, out)
        else:
            lo = mid
    rho, problem, out = best
    cert = LyapunovCertificate.from_solution(problem, out)
    return RateCertificate(rho, cert, history)


def bracket_consistent(history: Sequence[tuple[float, Status]]) -> bool:
    feas = [r for r, s in history if s is Status.FEASIBLE]
    infeas = [r for r, s in history if s is Status.INFEASIBLE]
    return not feas or not infeas or min(feas) >= max(infeas)


def bisect_rate(
    spec: MethodSpec,
    cls: FunctionClass,
    settings: SolverSettings = SolverSettings(),
    restriction: Restriction | str = Restriction.NONE,
    backend: Backend | None = None,
) -> RateCertificate:
    spec = validate(spec).trimmed()
    cls = cls.widened()
    return bisect(lambda rho: build_rho_sdp(spec, cls, rho, restriction), settings, backend)


@dataclass
class SweepRow:
    kappa: float
    rho: float | None
    error: str = ""


def _rate_or_error(args):
    fn, kappa = args
    try:
        return SweepRow(kappa, fn(kappa))
    except (BackendUnknown, NoCertificateWithinBracket, ValueError) as exc:
        return SweepRow(kappa, None, f"{type(exc).__name__}: {exc}")


def sweep(rate_of_kappa: Callable[[float], float], kappas: Sequence[float], jobs: int = 1) -> list[SweepRow]:
    """Evaluate ``rate_of_kappa`` on each grid point; failures are recorded per row."""
    grid = sorted(float(k) for k in kappas)
    tasks = [(rate_of_kappa, k) for k in grid]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_rate_or_error, tasks))
    return [_rate_or_error(t) for t in tasks]


class PresetRate:
    """Picklable kappa -> certified rate for a preset at mu = 1."""

    def __init__(self, name: str, settings: SolverSettings = SolverSettings(),
                 restriction: Restriction | str = Restriction.NONE):
        self.name = name
        self.settings = settings
        self.restriction = Restriction(restriction)

    def __call__(self, kappa: float) -> float:
        from .core import make_preset

        cls = FunctionClass(1.0, kappa)
        return bisect_rate(make_preset(self.name, cls), cls, self.settings, self.restriction).rho_star
