"""Recombining binomial lattice for the factor process.

The Brownian motion is approximated by a symmetric Bernoulli walk with
increments ``+-sqrt(dt)``; node ``(n, k)`` has Brownian coordinate
``w = (2k - n) sqrt(dt)`` and the factor value is the exact solution of the
constant-coefficient SDE at that coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguityModel, drift
from .errors import BadStepCount, DriftOutOfSet, RangeError, StepTooCoarse

ARITHMETIC = "arithmetic"
GEOMETRIC = "geometric"


@dataclass(frozen=True)
class FactorModel:
    kind: str
    x0: float
    a: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in (ARITHMETIC, GEOMETRIC):
            raise RangeError(f"unknown factor model {self.kind!r}")
        for name in ("x0", "a", "sigma"):
            if not math.isfinite(getattr(self, name)):
                raise RangeError(f"factor {name} must be finite")
        if self.sigma <= 0:
            raise RangeError(f"vol must be > 0, got {self.sigma}")
        if self.kind == GEOMETRIC and self.x0 <= 0:
            raise RangeError(f"geometric model requires x0 > 0, got {self.x0}")


@dataclass(frozen=True, eq=False)
class Lattice:
    """Node table of an N-step lattice.

    ``x`` has shape ``(N+1, N+1)``; entry ``[n, k]`` is the factor value for
    ``k <= n`` and NaN above the diagonal.
    """

    factor: FactorModel
    T: float
    N: int
    x: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def time(self, n: int) -> float:
        return n * self.dt

    def layer(self, n: int) -> np.ndarray:
        return self.x[n, : n + 1]

    def node_count(self, n: int) -> int:
        return n + 1

    def mask(self) -> np.ndarray:
        """Boolean ``(N+1, N+1)`` array marking valid nodes ``k <= n``."""
        n, k = np.indices(self.x.shape)
        return k <= n


def brownian_coordinate(n, k, dt: float):
    return (2 * np.asarray(k) - np.asarray(n)) * math.sqrt(dt)


def build_lattice(factor: FactorModel, T: float, N: int) -> Lattice:
    if int(N) != N or N < 1:
        raise BadStepCount(f"number of steps must be >= 1, got {N}")
    if not T > 0:
        raise RangeError(f"horizon must be > 0, got {T}")
    N = int(N)
    dt = T / N
    n, k = np.indices((N + 1, N + 1))
    t = n * dt
    w = brownian_coordinate(n, k, dt)
    if factor.kind == ARITHMETIC:
        x = factor.x0 + factor.a * t + factor.sigma * w
    else:
        x = factor.x0 * np.exp((factor.a - 0.5 * factor.sigma**2) * t + factor.sigma * w)
    x = np.where(k <= n, x, np.nan)
    x.setflags(write=False)
    return Lattice(factor, float(T), N, x)


def controlled_up_probability(lat: Lattice, amb: AmbiguityModel, u, t=None, x=None):
    """Up-move probability under the drifted measure ``P^u``.

    ``p_up = (1 + b(t, x, u) sqrt(dt)) / 2``, which makes the one-step
    expectation equal ``(Y_up + Y_dn)/2 + dt * z * b`` with
    ``z = (Y_up - Y_dn) / (2 sqrt(dt))``.  Broadcasts over array ``u``.
    """
    if not np.all(amb.contains(u)):
        raise DriftOutOfSet(f"drift {u} is not in the prior set")
    shift = np.asarray(drift(amb, t, x, u), dtype=float) * lat.sqrt_dt
    if np.any(np.abs(shift) >= 1):
        raise StepTooCoarse(
            f"|b| * sqrt(dt) = {np.max(np.abs(shift)):.6g} >= 1; increase the number of steps")
    p = (1.0 + shift) / 2.0
    return float(p) if p.ndim == 0 else p
