"""Rate programs for methods outside the fixed-step family.

Steepest descent with exact line search, heavy-ball with a two-dimensional
subspace search, and the fast gradient method restarted on a fixed schedule.
Line searches enter through their optimality conditions, which are equalities
between inner products; each becomes a symmetric form with a free multiplier
added to the decrease block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import EqualityForm, SdpProblem, assemble_lyapunov_program, bilinear_form
from .core import FunctionClass
from .solver import (
    Backend,
    BackendUnknown,
    NoCertificateWithinBracket,
    RateCertificate,
    SolverSettings,
    Status,
    bisect,
    solve_feasibility,
)
from .symbolic import BasisWorkspace, unit

# <x_{k+1} - x_k, g_{k+1}> = 0 on rows (x_k, x_{k+1}, g_{k+1})
_STEP_ORTHOGONAL = [[0, 0, -1], [0, 0, 1], [-1, 1, 0]]
# <g_k, g_{k+1}> = 0 on rows (g_k, g_{k+1})
_GRAD_ORTHOGONAL = [[0, 1], [1, 0]]

RESTART_RHO_MAX = 1.0


@dataclass(frozen=True)
class RestartSchedule:
    """Inner-loop length and the momentum sequence theta_0..theta_N."""

    N_inner: int
    theta: tuple

    @property
    def momentum(self) -> np.ndarray:
        """Coefficients (theta_i - 1) / theta_{i+1} for i = 0..N-1."""
        t = np.asarray(self.theta)
        return (t[:-1] - 1.0) / t[1:]


def momentum_sequence(N_inner: int) -> RestartSchedule:
    if int(N_inner) != N_inner or N_inner < 1:
        raise ValueError(f"N_inner must be a positive integer, got {N_inner}")
    theta = [1.0]
    for _ in range(int(N_inner)):
        theta.append(0.5 * (1.0 + math.sqrt(4.0 * theta[-1] ** 2 + 1.0)))
    return RestartSchedule(int(N_inner), tuple(theta))


def _class_meta(kind: str, cls: FunctionClass, rho: float) -> dict:
    return {"kind": kind, "mu": cls.mu, "L": cls.L, "rho": float(rho), "restriction": "none", "steps": 1}


def _normalize(cls: FunctionClass, rescale: bool):
    if not rescale:
        return cls, 1.0
    return FunctionClass(cls.mu / cls.L, 1.0), cls.L


def _workspace(N: int, K: int, n: int, nf: int, x: dict, g: dict) -> BasisWorkspace:
    """Workspace whose y rows coincide with x rows (methods evaluate gradients at x)."""
    ws = BasisWorkspace(N, K, n, nf)
    ws.xbar = {k: unit(n, i) for k, i in x.items()}
    ws.ybar = {k: ws.xbar[k] for k in g}
    ws.gbar = {k: unit(n, i) for k, i in g.items()}
    ws.fbar = {k: unit(nf, r + 1) for r, k in enumerate(sorted(g))}
    return ws


# -- steepest descent with exact line search ------------------------------------


def els_gd_bases() -> tuple[BasisWorkspace, BasisWorkspace]:
    pd_ws = _workspace(0, 0, 2, 1, {0: 1}, {0: 2})
    dec_ws = _workspace(0, 1, 4, 2, {0: 1, 1: 2}, {0: 3, 1: 4})
    return pd_ws, dec_ws


def els_gd_forms(ws: BasisWorkspace) -> list[EqualityForm]:
    return [
        EqualityForm("nu[1]", bilinear_form([ws.xbar[0], ws.xbar[1], ws.gbar[1]], _STEP_ORTHOGONAL), 1),
        EqualityForm("nu[2]", bilinear_form([ws.gbar[0], ws.gbar[1]], _GRAD_ORTHOGONAL), 2),
    ]


def build_els_gd_sdp(cls: FunctionClass, rho: float, rescale: bool = True) -> SdpProblem:
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    s_cls, scale = _normalize(cls, rescale)
    problem = SdpProblem(_class_meta("els_gd", cls, rho), scale)
    pd_ws, dec_ws = els_gd_bases()
    assemble_lyapunov_program(
        problem, s_cls, pd_ws, 0, dec_ws, 0, 1, rho**2, 0, forms=els_gd_forms(dec_ws)
    )
    return problem


# -- heavy-ball with subspace search ---------------------------------------------


def els_hbm_bases() -> tuple[BasisWorkspace, BasisWorkspace]:
    pd_ws = _workspace(1, 1, 4, 2, {0: 1, 1: 2}, {0: 3, 1: 4})
    dec_ws = _workspace(1, 2, 7, 3, {-1: 1, 0: 2, 1: 3, 2: 4}, {0: 5, 1: 6, 2: 7})
    return pd_ws, dec_ws


def els_hbm_forms(ws: BasisWorkspace) -> list[EqualityForm]:
    x, g = ws.xbar, ws.gbar
    forms = []
    for k in (0, 1):
        forms.append(EqualityForm(f"nu[{1 + k}]", bilinear_form([x[k], x[k + 1], g[k + 1]], _STEP_ORTHOGONAL), 1))
    for k in (0, 1):
        forms.append(EqualityForm(f"nu[{3 + k}]", bilinear_form([x[k - 1], x[k], g[k + 1]], _STEP_ORTHOGONAL), 1))
    for k in (0, 1):
        forms.append(EqualityForm(f"nu[{5 + k}]", bilinear_form([g[k], g[k + 1]], _GRAD_ORTHOGONAL), 2))
    return forms


def build_els_hbm_sdp(cls: FunctionClass, rho: float, rescale: bool = True) -> SdpProblem:
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    s_cls, scale = _normalize(cls, rescale)
    problem = SdpProblem(_class_meta("els_hbm", cls, rho), scale)
    pd_ws, dec_ws = els_hbm_bases()
    assemble_lyapunov_program(
        problem, s_cls, pd_ws, 1, dec_ws, 1, 2, rho**2, 1, forms=els_hbm_forms(dec_ws)
    )
    return problem


# -- scheduled restarts ---------------------------------------------------------------


def restart_basis(schedule: RestartSchedule, L: float = 1.0) -> BasisWorkspace:
    """Rows of one restart cycle: y_0 = e_1, g_k = e_{2+k}, then the inner loop.

    ``zbar`` is attached as an extra attribute for inspection.
    """
    N = schedule.N_inner
    n, nf = N + 2, N + 1
    ws = BasisWorkspace(0, N, n, nf)
    ws.gbar = {k: unit(n, 2 + k) for k in range(N + 1)}
    ws.fbar = {k: unit(nf, 1 + k) for k in range(N + 1)}
    y = {0: unit(n, 1)}
    z = {0: y[0]}
    coef = schedule.momentum
    for i in range(N):
        z[i + 1] = y[i] - ws.gbar[i] / L
        y[i + 1] = z[i + 1] + coef[i] * (z[i + 1] - z[i])
    ws.ybar = y
    ws.xbar = dict(y)
    ws.zbar = z
    return ws


def build_restart_sdp(
    cls: FunctionClass, schedule: RestartSchedule, rho: float, rescale: bool = True
) -> SdpProblem:
    """Per-cycle decrease ``V_{k+1} <= rho^(2N) V_k`` with rho the per-gradient rate."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    N = schedule.N_inner
    s_cls, scale = _normalize(cls, rescale)
    meta = _class_meta("restart", cls, rho) | {"N_inner": N, "steps": N}
    problem = SdpProblem(meta, scale)
    pd_ws = _workspace(0, 0, 2, 1, {0: 1}, {0: 2})
    dec_ws = restart_basis(schedule, s_cls.L)
    assemble_lyapunov_program(problem, s_cls, pd_ws, 0, dec_ws, 0, N, rho ** (2 * N), 0)
    return problem


# -- rates -----------------------------------------------------------------------------


def els_gd_rate(cls, settings=SolverSettings(), backend: Backend | None = None) -> RateCertificate:
    cls = cls.widened()
    return bisect(lambda rho: build_els_gd_sdp(cls, rho), settings, backend)


def els_hbm_rate(cls, settings=SolverSettings(), backend: Backend | None = None) -> RateCertificate:
    cls = cls.widened()
    return bisect(lambda rho: build_els_hbm_sdp(cls, rho), settings, backend)


def restart_rate(
    cls, N_inner: int, settings=SolverSettings(), backend: Backend | None = None, rho_max: float = RESTART_RHO_MAX
) -> RateCertificate:
    schedule = momentum_sequence(N_inner)
    cls = cls.widened()
    return bisect(lambda rho: build_restart_sdp(cls, schedule, rho), settings, backend, rho_max=rho_max)


@dataclass
class RestartOptimum:
    N_star: int
    rho_star: float
    certificate: RateCertificate
    rates: dict = field(default_factory=dict)  # N -> rho, failures omitted
    failures: dict = field(default_factory=dict)  # N -> message


def optimize_restart_period(
    cls: FunctionClass, N_max: int, settings=SolverSettings(), backend: Backend | None = None,
    periods=None, prune: bool = False,
) -> RestartOptimum:
    """Restart period minimizing the certified per-gradient rate; ties go to the smaller period.

    With ``prune`` a period is first probed at the incumbent rate and skipped
    when that probe is infeasible, since it cannot improve on the incumbent.
    Skipped periods are absent from ``rates``.
    """
    if N_max < 1:
        raise ValueError("N_max must be at least 1")
    periods = range(1, N_max + 1) if periods is None else sorted(periods)
    best = None
    rates, failures = {}, {}
    for N in periods:
        try:
            if prune and best is not None:
                probe = solve_feasibility(build_restart_sdp(cls.widened(), momentum_sequence(N), best[1]), settings, backend)
                if probe.status is not Status.FEASIBLE:
                    continue
            res = restart_rate(cls, N, settings, backend)
        except (NoCertificateWithinBracket, BackendUnknown) as exc:
            failures[N] = f"{type(exc).__name__}: {exc}"
            continue
        rates[N] = res.rho_star
        if best is None or res.rho_star < best[1]:
            best = (N, res.rho_star, res)
    if best is None:
        raise NoCertificateWithinBracket(f"no restart period in 1..{N_max} was certified: {failures}")
    return RestartOptimum(best[0], best[1], best[2], rates, failures)


def restart_reference_bound(kappa: float) -> float:
    """exp(-1 / (e sqrt(8 kappa))), the known per-gradient rate at the best period."""
    return math.exp(-1.0 / (math.e * math.sqrt(8.0 * kappa)))


class VariantRate:
    """Picklable kappa -> certified rate at mu = 1 for 'gd', 'hbm' or a restart period."""

    def __init__(self, kind: str, settings: SolverSettings = SolverSettings(), N_inner: int | None = None):
        if kind not in ("gd", "hbm", "restart"):
            raise ValueError(f"unknown variant {kind!r}")
        if kind == "restart" and N_inner is None:
            raise ValueError("restart needs N_inner")
        self.kind, self.settings, self.N_inner = kind, settings, N_inner

    def __call__(self, kappa: float) -> float:
        cls = FunctionClass(1.0, kappa)
        if self.kind == "gd":
            return els_gd_rate(cls, self.settings).rho_star
        if self.kind == "hbm":
            return els_hbm_rate(cls, self.settings).rho_star
        return restart_rate(cls, self.N_inner, self.settings).rho_star


__all__ = [
    "RestartSchedule",
    "RestartOptimum",
    "VariantRate",
    "momentum_sequence",
    "els_gd_bases",
    "els_gd_forms",
    "build_els_gd_sdp",
    "els_hbm_bases",
    "els_hbm_forms",
    "build_els_hbm_sdp",
    "restart_basis",
    "build_restart_sdp",
    "els_gd_rate",
    "els_hbm_rate",
    "restart_rate",
    "optimize_restart_period",
    "restart_reference_bound",
]
