"""Shared, cached certificates so expensive bisections run once per session."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from lyapcert import FunctionClass, bisect_rate, make_preset
from lyapcert.variants import els_gd_rate, els_hbm_rate, optimize_restart_period, restart_rate


@lru_cache(maxsize=None)
def preset_rate(name: str, kappa: float, restriction: str = "none"):
    cls = FunctionClass(1.0, kappa)
    return bisect_rate(make_preset(name, cls), cls, restriction=restriction)


@lru_cache(maxsize=None)
def els_rate(kind: str, kappa: float):
    cls = FunctionClass(1.0, kappa)
    return (els_gd_rate if kind == "gd" else els_hbm_rate)(cls)


@lru_cache(maxsize=None)
def restart_period_rate(N: int, kappa: float):
    return restart_rate(FunctionClass(1.0, kappa), N)


@lru_cache(maxsize=None)
def restart_optimum(kappa: float, N_max: int):
    return optimize_restart_period(FunctionClass(1.0, kappa), N_max, prune=True)


def gram_value(A: np.ndarray, B: np.ndarray) -> float:
    """trace(A B^T B) for a form A over the columns of B."""
    return float(np.sum(A * (B.T @ B)))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
