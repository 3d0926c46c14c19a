"""Prior sets for drift ambiguity and the associated Hamiltonians.

The drift kernel is ``b(t, x, u) = u``, so ``H(t, x, u, z) = z * u`` and
``H*(t, x, z) = inf_{u in U} z * u``.  Two prior sets are supported:
kappa-ignorance ``U = [-kappa, kappa]`` and a finite list of drifts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DriftOutOfSet, RangeError

KAPPA = "kappa_ignorance"
FINITE = "finite_set"


@dataclass(frozen=True)
class AmbiguityModel:
    kind: str = KAPPA
    kappa: float = 0.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind == KAPPA:
            if not np.isfinite(self.kappa) or self.kappa < 0:
                raise RangeError(f"kappa must be finite and >= 0, got {self.kappa}")
        elif self.kind == FINITE:
            if len(self.values) == 0:
                raise RangeError("finite drift set must be non-empty")
            if not all(np.isfinite(v) for v in self.values):
                raise RangeError("finite drift values must be finite")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        else:
            raise RangeError(f"unknown ambiguity kind {self.kind!r}")

    @classmethod
    def kappa_ignorance(cls, kappa: float) -> "AmbiguityModel":
        return cls(KAPPA, float(kappa))

    @classmethod
    def finite_set(cls, values) -> "AmbiguityModel":
        return cls(FINITE, 0.0, tuple(values))

    @property
    def bound(self) -> float:
        """sup over U of |b|; the Lipschitz constant of H* in z."""
        if self.kind == KAPPA:
            return self.kappa
        return max(abs(v) for v in self.values)

    def contains(self, u) -> np.ndarray | bool:
        u = np.asarray(u, dtype=float)
        if self.kind == KAPPA:
            out = np.abs(u) <= self.kappa
        else:
            out = np.isin(u, np.array(self.values))
        return bool(out) if out.ndim == 0 else out

    def default_grid(self, size: int = 3) -> tuple:
        """Control grid containing the extreme points of U.

        For kappa-ignorance: ``size`` equispaced points on [-kappa, kappa]
        (size 3 gives {-kappa, 0, kappa}).  For a finite set: the full list.
        """
        if self.kind == FINITE:
            return self.values
        if size < 2:
            raise ValueError("grid size must be >= 2 to contain both endpoints")
        if self.kappa == 0:
            return (0.0,)
        grid = np.linspace(-self.kappa, self.kappa, size)
        grid[0], grid[-1] = -self.kappa, self.kappa
        if size % 2:
            grid[size // 2] = 0.0
        return tuple(float(g) for g in grid)


class HamiltonianResult(NamedTuple):
    value: float | np.ndarray
    minimizer: float | np.ndarray


def drift(amb: AmbiguityModel, t, x, u):
    """Drift kernel ``b(t, x, u)``; identity in ``u``."""
    return u


def hamiltonian(amb: AmbiguityModel, t, x, u, z):
    """``H(t, x, u, z) = z * b(t, x, u)``; raises ``DriftOutOfSet`` if u is not in U."""
    if not np.all(amb.contains(u)):
        raise DriftOutOfSet(f"drift {u} is not in the prior set")
    return z * drift(amb, t, x, u)


def hstar(amb: AmbiguityModel, t, x, z) -> HamiltonianResult:
    """Lower Hamiltonian ``inf_u z*u`` and a minimizing drift.

    Ties (z = 0 for kappa-ignorance, equal products for a finite set) go to
    ``u = 0`` and to the first listed value respectively.  Broadcasts over
    array ``z``.
    """
    z_arr = np.asarray(z, dtype=float)
    if amb.kind == KAPPA:
        u = -amb.kappa * np.sign(z_arr)
        u = u + 0.0  # turn -0.0 into 0.0
        value = z_arr * u
    else:
        values = np.array(amb.values)
        products = z_arr[..., None] * values
        idx = np.argmin(products, axis=-1)
        u = values[idx]
        value = np.take_along_axis(products, idx[..., None], axis=-1)[..., 0]
    if z_arr.ndim == 0:
        return HamiltonianResult(float(value), float(u))
    return HamiltonianResult(value, u)
