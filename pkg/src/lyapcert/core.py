"""Method and function-class descriptions, validation, and the preset catalog."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

SUM_TOL = 1e-12
CONDITION_PAD = 1e-4

PRESETS = ("GM", "HBM", "FGM", "TMM")


class InvalidMethodError(ValueError):
    """Raised when step-sizes do not define a valid fixed-step method."""


class SumNotOne(InvalidMethodError):
    def __init__(self, which: str, total: float):
        self.which = which
        self.total = total
        super().__init__(f"sum({which}) = {total!r}, expected 1")


class ZeroAlpha(InvalidMethodError):
    def __init__(self):
        super().__init__("alpha must be nonzero")


class ZeroGammaZero(InvalidMethodError):
    def __init__(self):
        super().__init__("gamma[0] must be nonzero")


@dataclass(frozen=True)
class FunctionClass:
    """Smooth strongly convex functions with moduli ``0 < mu <= L``."""

    mu: float
    L: float

    def __post_init__(self):
        mu, L = float(self.mu), float(self.L)
        if not (math.isfinite(mu) and math.isfinite(L)):
            raise ValueError("mu and L must be finite")
        if mu <= 0:
            raise ValueError(f"mu must be positive, got {mu}")
        if L < mu:
            raise ValueError(f"need mu <= L, got mu={mu}, L={L}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "L", L)

    def kappa(self) -> float:
        return self.L / self.mu

    def scaled(self, c: float) -> "FunctionClass":
        return FunctionClass(c * self.mu, c * self.L)

    def widened(self, pad: float = None) -> "FunctionClass":
        """Class with ``L >= (1 + pad) mu`` containing this one.

        With ``L == mu`` interpolation no longer constrains function values and
        no strictly positive Lyapunov function exists; any rate certified for
        the wider class is still valid here.
        """
        pad = CONDITION_PAD if pad is None else pad
        return self if self.L >= (1.0 + pad) * self.mu else FunctionClass(self.mu, (1.0 + pad) * self.mu)


@dataclass(frozen=True)
class MethodSpec:
    """Fixed-step method of degree ``N``.

    y_k     = sum_j gamma[j] x_{k-j}
    x_{k+1} = sum_j beta[j] x_{k-j} - alpha grad f(y_k)
    """

    degree: int
    alpha: float
    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.degree < 0:
            raise InvalidMethodError("degree must be nonnegative")
        if len(self.beta) != self.degree + 1 or len(self.gamma) != self.degree + 1:
            raise InvalidMethodError(
                f"beta and gamma need {self.degree + 1} entries, "
                f"got {len(self.beta)} and {len(self.gamma)}"
            )

    @classmethod
    def from_momentum(cls, alpha: float, beta: float, gamma: float, name: str = "custom") -> "MethodSpec":
        """Degree-1 method y = x + gamma (x - x_prev), x+ = x + beta (x - x_prev) - alpha g."""
        return cls(1, alpha, (1.0 + beta, -beta), (1.0 + gamma, -gamma), name)

    def with_alpha(self, alpha: float) -> "MethodSpec":
        return MethodSpec(self.degree, alpha, self.beta, self.gamma, self.name)

    def trimmed(self) -> "MethodSpec":
        """Same method with vanishing oldest coefficients dropped.

        A degree that the coefficients do not use leaves a state direction the
        Lyapunov function cannot see, so no strict certificate exists over it.
        """
        n = self.degree
        while n > 0 and self.beta[n] == 0 and self.gamma[n] == 0:
            n -= 1
        if n == self.degree:
            return self
        return MethodSpec(n, self.alpha, self.beta[: n + 1], self.gamma[: n + 1], self.name)


def validate(spec: MethodSpec) -> MethodSpec:
    sb = math.fsum(spec.beta)
    if abs(sb - 1.0) > SUM_TOL:
        raise SumNotOne("beta", sb)
    sg = math.fsum(spec.gamma)
    if abs(sg - 1.0) > SUM_TOL:
        raise SumNotOne("gamma", sg)
    if spec.alpha == 0:
        raise ZeroAlpha()
    if spec.gamma[0] == 0:
        raise ZeroGammaZero()
    return spec


def momentum_parameters(name: str, cls: FunctionClass) -> tuple[float, float, float]:
    """(alpha, beta, gamma) of the two-term momentum form for a named method."""
    key = name.upper()
    mu, L = cls.mu, cls.L
    kappa = cls.kappa()
    sk = math.sqrt(kappa)
    if key == "GM":
        return 1.0 / L, 0.0, 0.0
    if key == "HBM":
        r = (sk - 1.0) / (sk + 1.0)
        return 4.0 / (math.sqrt(L) + math.sqrt(mu)) ** 2, r * r, 0.0
    if key == "FGM":
        r = (sk - 1.0) / (sk + 1.0)
        return 1.0 / L, r, r
    if key == "TMM":
        alpha = (2.0 * math.sqrt(L) - math.sqrt(mu)) / (L * math.sqrt(L))
        beta = (sk - 1.0) ** 2 / (kappa + sk)
        gamma = (sk - 1.0) ** 2 / (2.0 * kappa + sk - 1.0)
        return alpha, beta, gamma
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def make_preset(name: str, cls: FunctionClass) -> MethodSpec:
    alpha, beta, gamma = momentum_parameters(name, cls)
    key = name.upper()
    if key == "GM":
        return MethodSpec(0, alpha, (1.0,), (1.0,), "GM")
    return MethodSpec.from_momentum(alpha, beta, gamma, key)


def custom_method(alpha: float, beta: Sequence[float], gamma: Sequence[float]) -> MethodSpec:
    if len(beta) != len(gamma):
        raise InvalidMethodError("beta and gamma must have equal length")
    return validate(MethodSpec(len(beta) - 1, alpha, tuple(beta), tuple(gamma)))
