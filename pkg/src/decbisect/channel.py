"""Binary symmetric channel used to answer bisection queries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = ["ChannelParams", "respond", "likelihood", "capacity", "check_eps"]


def check_eps(eps, *, allow_zero=False):
    lo_ok = eps >= 0.0 if allow_zero else eps > 0.0
    if not (lo_ok and eps <= 0.5):
        bound = "[0, 0.5]" if allow_zero else "(0, 0.5]"
        raise ParameterError(f"crossover probability eps={eps!r} must lie in {bound}")
    return float(eps)


@dataclass(frozen=True)
class ChannelParams:
    eps: float

    def __post_init__(self):
        check_eps(self.eps)

    @property
    def f1(self):
        """``(f1(0), f1(1))``: response pmf when the truth is on the query side."""
        return (self.eps, 1.0 - self.eps)


def respond(z: int, eps: float, rng: np.random.Generator) -> int:
    """Noisy answer to a query whose true answer is ``z``.

    Consumes exactly one uniform draw; the answer is flipped when the draw
    falls below ``eps``.
    """
    check_eps(eps)
    return 1 - z if rng.random() < eps else z


def likelihood(y: int, x: float, x_hat: float, eps: float) -> float:
    """Probability of response ``y`` if the target sits at ``x``."""
    check_eps(eps)
    z = 1 if x <= x_hat else 0
    return 1.0 - eps if y == z else eps


def capacity(eps: float) -> float:
    """BSC capacity in bits, ``1 - H2(eps)``."""
    check_eps(eps, allow_zero=True)
    if eps == 0.0:
        return 1.0
    return 1.0 + eps * math.log2(eps) + (1.0 - eps) * math.log2(1.0 - eps)
