"""Lyapunov terms, sign certificates and the rate feasibility program.

Decision variables live in a flat vector owned by :class:`SdpProblem`. Every
constraint is an :class:`Affine` map from that vector to a symmetric matrix or
a vector, so backends and the residual checker only need coefficient arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .core import FunctionClass, MethodSpec, validate
from .interp import interpolation_kernel, interpolation_pair, ordered_pairs
from .symbolic import STAR, BasisWorkspace, rolled_basis


class Affine:
    """Affine expression ``const + sum_i z[i] * terms[i]`` with array values."""

    __slots__ = ("const", "terms")

    def __init__(self, const, terms: dict | None = None):
        self.const = np.asarray(const, dtype=float)
        self.terms = {} if terms is None else dict(terms)

    @classmethod
    def zeros(cls, shape) -> "Affine":
        return cls(np.zeros(shape))

    @classmethod
    def variable(cls, index: int, coef) -> "Affine":
        coef = np.asarray(coef, dtype=float)
        return cls(np.zeros(coef.shape), {index: coef})

    @property
    def shape(self):
        return self.const.shape

    def copy(self) -> "Affine":
        return Affine(self.const.copy(), {i: c.copy() for i, c in self.terms.items()})

    def add_term(self, index: int, coef) -> None:
        coef = np.asarray(coef, dtype=float)
        if index in self.terms:
            self.terms[index] = self.terms[index] + coef
        else:
            self.terms[index] = coef

    def __add__(self, other):
        if not isinstance(other, Affine):
            return Affine(self.const + other, self.terms)
        out = self.copy()
        out.const = out.const + other.const
        for i, c in other.terms.items():
            out.add_term(i, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s: float):
        s = float(s)
        return Affine(self.const * s, {i: c * s for i, c in self.terms.items()})

    __rmul__ = __mul__

    def value(self, z) -> np.ndarray:
        out = self.const.copy()
        for i, c in self.terms.items():
            out = out + z[i] * c
        return out


class Sense(str, Enum):
    STRICT_PSD = "psd_margin"  # expr >= t I
    PSD = "psd"  # expr >= 0
    NSD = "nsd"  # expr <= 0
    STRICT_POS = "pos_margin"  # expr >= t 1 (elementwise)
    NONNEG = "nonneg"
    NONPOS = "nonpos"

    @property
    def strict(self) -> bool:
        return self in (Sense.STRICT_PSD, Sense.STRICT_POS)

    @property
    def matrix(self) -> bool:
        return self in (Sense.STRICT_PSD, Sense.PSD, Sense.NSD)


class Restriction(str, Enum):
    NONE = "none"
    LAMBDA_ZERO = "lambda-zero"
    POSDEF_SHAPE = "posdef-shape"


@dataclass
class Constraint:
    name: str
    expr: Affine
    sense: Sense

    @property
    def size(self) -> int:
        return self.expr.shape[0]


class SdpProblem:
    """Maximize the margin ``t`` subject to affine LMIs in a normalized box.

    All decision variables and ``t`` are bounded by 1 in absolute value.
    Multipliers listed in ``nonneg`` are also constrained to be >= 0.
    ``scale`` and ``scale_exp`` record the internal rescaling: the value of
    variable ``i`` in the caller's units is ``z[i] / scale**scale_exp[i]``.
    """

    def __init__(self, meta: dict | None = None, scale: float = 1.0):
        self.var_names: list[str] = []
        self.nonneg: list[bool] = []
        self.scale_exp: list[int] = []
        self.constraints: list[Constraint] = []
        self.meta = dict(meta or {})
        self.scale = float(scale)
        self._index: dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def add_var(self, name: str, nonneg: bool = False, scale_exp: int = 0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        self._index[name] = len(self.var_names)
        self.var_names.append(name)
        self.nonneg.append(nonneg)
        self.scale_exp.append(scale_exp)
        return self._index[name]

    def index(self, name: str) -> int:
        return self._index[name]

    def add_constraint(self, name: str, expr: Affine, sense: Sense) -> None:
        sense = Sense(sense)
        if sense.matrix:
            if expr.const.ndim != 2 or expr.shape[0] != expr.shape[1]:
                raise ValueError(f"{name}: matrix constraint needs a square expression")
        elif expr.const.ndim != 1:
            raise ValueError(f"{name}: vector constraint needs a 1-d expression")
        self.constraints.append(Constraint(name, expr, sense))

    def names_with_prefix(self, prefix: str) -> list[str]:
        return [n for n in self.var_names if n.startswith(prefix + "[") or n == prefix]

    def to_user_units(self, z) -> dict[str, float]:
        z = np.asarray(z, dtype=float)
        return {
            name: float(z[i]) / self.scale ** self.scale_exp[i]
            for i, name in enumerate(self.var_names)
        }

    def from_user_units(self, values: dict[str, float]) -> np.ndarray:
        z = np.zeros(self.n_vars)
        for name, v in values.items():
            i = self._index[name]
            z[i] = v * self.scale ** self.scale_exp[i]
        return z

    def __repr__(self):
        return f"SdpProblem({self.n_vars} vars, {len(self.constraints)} constraints, meta={self.meta})"


def constraint_slacks(problem: SdpProblem, z) -> list[tuple[Constraint, float]]:
    """Signed slack of every constraint at ``z``; nonnegative means satisfied.

    Matrix constraints report an extreme eigenvalue, vector ones an extreme entry.
    """
    out = []
    for c in problem.constraints:
        val = c.expr.value(z)
        if c.sense.matrix:
            eig = np.linalg.eigvalsh(0.5 * (val + val.T))
            slack = float(-eig.max()) if c.sense is Sense.NSD else float(eig.min())
        else:
            slack = float(-val.max()) if c.sense is Sense.NONPOS else float(val.min())
        out.append((c, slack))
    return out


@dataclass
class StateSelectors:
    X: np.ndarray
    G: np.ndarray
    F: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.X, self.G])


@dataclass
class LyapunovShape:
    """Variable indices of the quadratic part ``P`` and linear part ``p``."""

    P: np.ndarray  # int array, symmetric, entry (a, b) -> variable index
    p: np.ndarray

    @property
    def size(self) -> int:
        return self.P.shape[0]


@dataclass
class SignCertificate:
    multipliers: dict = field(default_factory=dict)  # (i, j) -> variable index
    matrix_constraint: str = ""
    vector_constraint: str = ""


def pair_label(prefix: str, i, j) -> str:
    return f"{prefix}[{i}][{j}]"


def state_selectors(ws: BasisWorkspace, k: int, memory: int | None = None) -> StateSelectors:
    N = ws.N if memory is None else memory
    try:
        X = np.vstack([ws.xbar[k - r] for r in range(N + 1)])
        G = np.vstack([ws.gbar[k - r] for r in range(N + 1)])
        F = np.vstack([ws.fbar[k - r] for r in range(N + 1)])
    except KeyError as exc:
        raise ValueError(f"state at k={k} references unset row {exc.args[0]}") from None
    return StateSelectors(X, G, F)


def new_shape(problem: SdpProblem, memory: int) -> LyapunovShape:
    """Free variables for P (upper triangle) and p over a state of given memory."""
    s = 2 * (memory + 1)
    P = np.zeros((s, s), dtype=int)
    for a in range(s):
        for b in range(a, s):
            # gradient rows sit in the second half of the state
            exp = int(a > memory) + int(b > memory)
            P[a, b] = P[b, a] = problem.add_var(f"P[{a}][{b}]", scale_exp=exp)
    p = np.array([problem.add_var(f"p[{r}]", scale_exp=1) for r in range(memory + 1)], dtype=int)
    return LyapunovShape(P, p)


def lyapunov_expr(sel: StateSelectors, shape: LyapunovShape) -> tuple[Affine, Affine]:
    S = sel.stacked
    s = shape.size
    if S.shape[0] != s or sel.F.shape[0] != shape.p.shape[0]:
        raise ValueError("selectors do not match the Lyapunov shape")
    n = S.shape[1]
    V = Affine.zeros((n, n))
    for a in range(s):
        for b in range(a, s):
            if a == b:
                coef = np.outer(S[a], S[a])
            else:
                coef = np.outer(S[a], S[b]) + np.outer(S[b], S[a])
            V.add_term(int(shape.P[a, b]), coef)
    v = Affine.zeros(sel.F.shape[1])
    for r, idx in enumerate(shape.p):
        v.add_term(int(idx), sel.F[r])
    return V, v


def _decrease(ws, shape, k, k_next, weight, memory=None):
    V1, v1 = lyapunov_expr(state_selectors(ws, k_next, memory), shape)
    V0, v0 = lyapunov_expr(state_selectors(ws, k, memory), shape)
    return V1 - weight * V0, v1 - weight * v0


def decrease_expr(
    ws: BasisWorkspace, shape: LyapunovShape, rho: float, k: int | None = None, k_next: int | None = None,
    power: int = 2,
) -> tuple[Affine, Affine]:
    """``V_{k_next} - rho**power V_k``; defaults to one step ending at the horizon."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if k is None:
        k = ws.K - 1
    if k_next is None:
        k_next = k + 1
    return _decrease(ws, shape, k, k_next, rho**power)


_SIGN_SENSES = {
    "positive_definite": (Sense.STRICT_PSD, Sense.STRICT_POS, -1.0),
    "positive_semidefinite": (Sense.PSD, Sense.NONNEG, -1.0),
    "negative_semidefinite": (Sense.NSD, Sense.NONPOS, 1.0),
}


def certify_sign(
    problem: SdpProblem,
    Q: Affine,
    q: Affine,
    ws: BasisWorkspace,
    cls: FunctionClass,
    sense: str,
    prefix: str | None = None,
    use_multipliers: bool = True,
) -> SignCertificate:
    """Add the S-procedure block proving a sign of ``sigma = (Q, q)`` over trajectories."""
    if sense not in _SIGN_SENSES:
        raise ValueError(f"unsupported sense {sense!r}")
    msense, vsense, sign = _SIGN_SENSES[sense]
    if prefix is None:
        prefix = "lambda" if sense != "negative_semidefinite" else "eta"
    kernel = interpolation_kernel(cls)
    Qt, qt = Q.copy(), q.copy()
    cert = SignCertificate()
    if use_multipliers:
        for i, j in ordered_pairs(ws.indices()):
            pair = interpolation_pair(ws, kernel, cls, i, j)
            idx = problem.add_var(pair_label(prefix, i, j), nonneg=True, scale_exp=2)
            Qt.add_term(idx, sign * pair.Mij)
            qt.add_term(idx, sign * pair.mij)
            cert.multipliers[(i, j)] = idx
    cert.matrix_constraint = f"{prefix}:matrix"
    cert.vector_constraint = f"{prefix}:vector"
    problem.add_constraint(cert.matrix_constraint, Qt, msense)
    problem.add_constraint(cert.vector_constraint, qt, vsense)
    return cert


@dataclass
class EqualityForm:
    """Symmetric form ``A`` with a free multiplier; ``grad_order`` counts gradient factors."""

    name: str
    A: np.ndarray
    grad_order: int


def bilinear_form(rows: Iterable[np.ndarray], pattern) -> np.ndarray:
    S = np.vstack(list(rows))
    A = S.T @ np.asarray(pattern, dtype=float) @ S
    return 0.5 * (A + A.T)


def assemble_lyapunov_program(
    problem: SdpProblem,
    cls: FunctionClass,
    pd_ws: BasisWorkspace,
    pd_k: int,
    dec_ws: BasisWorkspace,
    dec_k: int,
    dec_k_next: int,
    weight: float,
    memory: int,
    restriction: Restriction = Restriction.NONE,
    forms: Iterable[EqualityForm] = (),
) -> LyapunovShape:
    """Shared (P, p), a positive-definiteness block and a decrease block."""
    restriction = Restriction(restriction)
    shape = new_shape(problem, memory)
    V, v = lyapunov_expr(state_selectors(pd_ws, pd_k, memory), shape)
    certify_sign(
        problem, V, v, pd_ws, cls, "positive_definite", "lambda",
        use_multipliers=restriction is not Restriction.LAMBDA_ZERO,
    )
    dV, dv = _decrease(dec_ws, shape, dec_k, dec_k_next, weight, memory)
    for form in forms:
        idx = problem.add_var(form.name, scale_exp=form.grad_order)
        dV.add_term(idx, form.A)
    certify_sign(problem, dV, dv, dec_ws, cls, "negative_semidefinite", "eta")
    if restriction is Restriction.POSDEF_SHAPE:
        s = shape.size
        Pexpr = Affine.zeros((s, s))
        for a in range(s):
            for b in range(a, s):
                E = np.zeros((s, s))
                E[a, b] = E[b, a] = 1.0
                Pexpr.add_term(int(shape.P[a, b]), E)
        pexpr = Affine.zeros(len(shape.p))
        for r, idx in enumerate(shape.p):
            pexpr.add_term(int(idx), np.eye(len(shape.p))[r])
        problem.add_constraint("shape:P", Pexpr, Sense.STRICT_PSD)
        problem.add_constraint("shape:p", pexpr, Sense.STRICT_POS)
    return shape


def method_meta(spec: MethodSpec, cls: FunctionClass) -> dict:
    return {
        "kind": "fixed_step",
        "method": spec.name,
        "N": spec.degree,
        "mu": cls.mu,
        "L": cls.L,
        "alpha": spec.alpha,
        "beta": list(spec.beta),
        "gamma": list(spec.gamma),
    }


def normalize(spec: MethodSpec, cls: FunctionClass, rescale: bool):
    """Map to L = 1 (gradients and function values divided by L)."""
    if not rescale:
        return spec, cls, 1.0
    L = cls.L
    return spec.with_alpha(spec.alpha * L), FunctionClass(cls.mu / L, 1.0), L


def build_rho_sdp(
    spec: MethodSpec,
    cls: FunctionClass,
    rho: float,
    restriction: Restriction | str = Restriction.NONE,
    rescale: bool = True,
) -> SdpProblem:
    validate(spec)
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    restriction = Restriction(restriction)
    N = spec.degree
    s_spec, s_cls, scale = normalize(spec, cls, rescale)
    meta = method_meta(spec, cls) | {"rho": float(rho), "restriction": restriction.value, "steps": 1}
    problem = SdpProblem(meta, scale)
    pd_ws = rolled_basis(s_spec, N)
    dec_ws = rolled_basis(s_spec, N + 1)
    assemble_lyapunov_program(
        problem, s_cls, pd_ws, N, dec_ws, N, N + 1, rho**2, N, restriction
    )
    return problem


__all__ = [
    "STAR",
    "Affine",
    "Sense",
    "Restriction",
    "Constraint",
    "SdpProblem",
    "StateSelectors",
    "LyapunovShape",
    "SignCertificate",
    "EqualityForm",
    "state_selectors",
    "constraint_slacks",
    "new_shape",
    "lyapunov_expr",
    "decrease_expr",
    "certify_sign",
    "bilinear_form",
    "assemble_lyapunov_program",
    "build_rho_sdp",
]
