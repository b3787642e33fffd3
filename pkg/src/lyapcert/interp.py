"""Interpolation conditions for smooth strongly convex functions."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Mapping

import numpy as np

from .core import FunctionClass
from .symbolic import STAR, BasisWorkspace, Index


@dataclass(frozen=True)
class InterpKernel:
    """Symmetric 4x4 kernel in block order (y_i, y_j, g_i, g_j)."""

    M: np.ndarray


@dataclass(frozen=True)
class InterpPair:
    i: Index
    j: Index
    Mij: np.ndarray
    mij: np.ndarray


def interpolation_kernel(cls: FunctionClass) -> InterpKernel:
    mu, L = cls.mu, cls.L
    M = np.array(
        [
            [-mu * L, mu * L, mu, -L],
            [mu * L, -mu * L, -mu, L],
            [mu, -mu, -1.0, 1.0],
            [-L, L, 1.0, -1.0],
        ]
    )
    return InterpKernel(M)


def interpolation_pair(
    ws: BasisWorkspace, kernel: InterpKernel, cls: FunctionClass, i: Index, j: Index
) -> InterpPair:
    if i == j:
        raise ValueError(f"diagonal pair ({i}, {j}) gives an identically zero constraint")
    S = np.vstack([ws.y(i), ws.y(j), ws.g(i), ws.g(j)])
    A = 0.5 * S.T @ kernel.M @ S
    A = 0.5 * (A + A.T)
    m = (cls.L - cls.mu) * (ws.f(i) - ws.f(j))
    return InterpPair(i, j, A, m)


def ordered_pairs(indices) -> list[tuple]:
    return list(permutations(indices, 2))


def all_pairs(ws: BasisWorkspace, cls: FunctionClass) -> list[InterpPair]:
    kernel = interpolation_kernel(cls)
    return [interpolation_pair(ws, kernel, cls, i, j) for i, j in ordered_pairs(ws.indices())]


def _triple(point):
    y, g, f = point
    return np.atleast_1d(np.asarray(y, dtype=float)), np.atleast_1d(np.asarray(g, dtype=float)), float(f)


def phi_value(points: Mapping, cls: FunctionClass, i: Index, j: Index) -> float:
    """Interpolation slack for ordered pair (i, j).

    ``points`` maps an index to a triple ``(y, g, f)``. The quadratic term
    carries the same factor 1/2 used by :func:`interpolation_pair`.
    """
    yi, gi, fi = _triple(points[i])
    yj, gj, fj = _triple(points[j])
    if not (yi.shape == yj.shape == gi.shape == gj.shape):
        raise ValueError("all points must share one dimension")
    M = interpolation_kernel(cls).M
    V = np.vstack([yi, yj, gi, gj])
    quad = float(np.sum(M * (V @ V.T)))
    return (cls.L - cls.mu) * (fi - fj) + 0.5 * quad


def phi_matrix(points: Mapping, cls: FunctionClass) -> tuple[list, np.ndarray]:
    """All slacks at once; entry (a, b) is the slack of ordered pair (keys[a], keys[b])."""
    keys = list(points)
    trip = [_triple(points[k]) for k in keys]
    Y = np.vstack([t[0] for t in trip])
    G = np.vstack([t[1] for t in trip])
    if Y.shape != G.shape:
        raise ValueError("all points must share one dimension")
    F = np.array([t[2] for t in trip])
    mu, L = cls.mu, cls.L
    YY, YG, GG = Y @ Y.T, Y @ G.T, G @ G.T
    ny, ng, yg = np.diag(YY), np.diag(GG), np.diag(YG)
    dy2 = ny[:, None] + ny[None, :] - 2 * YY
    dg2 = ng[:, None] + ng[None, :] - 2 * GG
    # (y_i - y_j).g_i and (y_i - y_j).g_j
    dyg_i = yg[:, None] - YG.T
    dyg_j = YG - yg[None, :]
    quad = -mu * L * dy2 + 2 * mu * dyg_i - 2 * L * dyg_j - dg2
    return keys, (L - mu) * (F[:, None] - F[None, :]) + 0.5 * quad


def interpolable(points: Mapping, cls: FunctionClass, tol: float = 1e-9) -> bool:
    _, phi = phi_matrix(points, cls)
    np.fill_diagonal(phi, 0.0)
    return bool(np.all(phi >= -tol))


__all__ = [
    "STAR",
    "InterpKernel",
    "InterpPair",
    "interpolation_kernel",
    "interpolation_pair",
    "ordered_pairs",
    "all_pairs",
    "phi_value",
    "interpolable",
    "phi_matrix",
]
