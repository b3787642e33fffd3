"""Coordinate-free row-vector bases and symbolic roll-out of a method.

Every iterate, gradient and function value up to a horizon ``K`` is written
as a row vector acting on the stacked unknowns

    (x_{-N} - x*, ..., x_0 - x*, g_0, ..., g_K)   and   (f_0 - f*, ..., f_K - f*).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import MethodSpec

STAR = "star"
Index = Union[int, str]


def unit(n: int, i: int) -> np.ndarray:
    """Row ``e_i`` of length n with 1-based ``i``."""
    e = np.zeros(n)
    e[i - 1] = 1.0
    return e


@dataclass
class BasisWorkspace:
    """Row vectors for x, y, g, f indexed by iteration.

    ``n`` is the number of quadratic coordinates (``N+K+2`` for the standard
    construction) and ``nf`` the number of function-value coordinates. After
    :func:`roll_method`, ``xbar`` also holds ``K+1``, which the decrease
    condition at the horizon needs.
    """

    N: int
    K: int
    n: int
    nf: int
    xbar: dict = field(default_factory=dict)
    ybar: dict = field(default_factory=dict)
    gbar: dict = field(default_factory=dict)
    fbar: dict = field(default_factory=dict)

    @property
    def ybar_star(self) -> np.ndarray:
        return np.zeros(self.n)

    @property
    def gbar_star(self) -> np.ndarray:
        return np.zeros(self.n)

    @property
    def fbar_star(self) -> np.ndarray:
        return np.zeros(self.nf)

    def indices(self) -> list:
        return list(range(self.K + 1)) + [STAR]

    def y(self, i: Index) -> np.ndarray:
        return self.ybar_star if i == STAR else self.ybar[i]

    def g(self, i: Index) -> np.ndarray:
        return self.gbar_star if i == STAR else self.gbar[i]

    def f(self, i: Index) -> np.ndarray:
        return self.fbar_star if i == STAR else self.fbar[i]

    def x(self, i: Index) -> np.ndarray:
        return np.zeros(self.n) if i == STAR else self.xbar[i]


def build_basis(N: int, K: int) -> BasisWorkspace:
    if N < 0 or K < 0:
        raise ValueError(f"N and K must be nonnegative, got N={N}, K={K}")
    n, nf = N + K + 2, K + 1
    ws = BasisWorkspace(N, K, n, nf)
    for k in range(-N, 1):
        ws.xbar[k] = unit(n, k + N + 1)
    for k in range(K + 1):
        ws.gbar[k] = unit(n, k + N + 2)
        ws.fbar[k] = unit(nf, k + 1)
    return ws


def roll_method(spec: MethodSpec, ws: BasisWorkspace) -> BasisWorkspace:
    """Run the method on the row vectors for k = 0..K."""
    if spec.degree != ws.N:
        raise ValueError(f"spec has degree {spec.degree} but workspace has N={ws.N}")
    out = copy.deepcopy(ws)
    N = ws.N
    for k in range(ws.K + 1):
        past = [out.xbar[k - j] for j in range(N + 1)]
        out.ybar[k] = sum(gj * xj for gj, xj in zip(spec.gamma, past))
        out.xbar[k + 1] = sum(bj * xj for bj, xj in zip(spec.beta, past)) - spec.alpha * out.gbar[k]
    return out


def rolled_basis(spec: MethodSpec, K: int) -> BasisWorkspace:
    return roll_method(spec, build_basis(spec.degree, K))
