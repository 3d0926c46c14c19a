"""Backward schemes for the discrete system of reflected BSDEs.

At each node the unreflected one-step value of mode ``j`` is::

    y~_j = (Y_up + Y_dn)/2 + dt * (psi_j(t, x) + H*(t, x, Z_j)),
    Z_j  = (Y_up - Y_dn) / (2 sqrt(dt))

and the solution is the least vector ``y >= y~`` with
``y_j >= max_{i in A_j} (y_i - c_ji)``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ._csv import fmt
from .ambiguity import hstar
from .errors import NoConvergence, ReflectionDiverged, SpecRejected
from .lattice import Lattice
from .problem import NodeTables, ProblemSpec, validate

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


@dataclass(eq=False)
class SolutionField:
    """Per-mode values on the lattice.

    ``Y`` has shape ``(m, N+1, N+1)``; ``Z`` and ``dK`` have shape
    ``(m, N, N)`` since they live on layers ``n < N``.  Entries with
    ``k > n`` are NaN.
    """

    spec: ProblemSpec
    lattice: Lattice
    Y: np.ndarray
    Z: np.ndarray
    dK: np.ndarray
    method: str = "direct"
    tol: float = 0.0
    iterations: int = 0
    trace: list = field(default_factory=list)
    tables: NodeTables = field(default=None, repr=False)

    @property
    def y0(self) -> float:
        return float(self.Y[self.spec.start, 0, 0])

    def to_csv(self) -> str:
        return solution_csv(self)


def reflect_layer(pre_values, costs, switch_sets):
    """Least fixed point above ``pre_values`` of the switching obstacle map.

    Parameters
    ----------
    pre_values : array_like, shape (m,) or (m, K)
        Unreflected values, one row per mode (``K`` independent nodes).
    costs : mapping
        ``costs[(j, i)]`` for every ``i in switch_sets[j]``; scalars or arrays
        of shape ``(K,)``.
    switch_sets : sequence of sequences
        Allowed targets per mode.

    Returns
    -------
    (y, dk)
        Reflected values and increments ``dk = y - pre_values >= 0``.

    Sweeps over the modes in index order repeatedly until nothing changes;
    with strictly positive switching cycles this takes at most ``m`` sweeps.
    """
    pre = np.array(pre_values, dtype=float)
    m = pre.shape[0]
    y = pre.copy()
    if not any(switch_sets):
        return y, np.zeros_like(y)
    for _ in range(m + 1):
        changed = False
        for j in range(m):
            for i in switch_sets[j]:
                cand = y[i] - costs[(j, i)]
                if np.any(cand > y[j]):
                    y[j] = np.maximum(y[j], cand)
                    changed = True
        if not changed:
            return y, y - pre
    raise ReflectionDiverged(
        f"obstacle reflection still changing after {m + 1} sweeps; "
        "the switching costs admit a free loop")


def _check(spec: ProblemSpec, lat: Lattice) -> None:
    report = validate(spec, lat)
    if not report.ok:
        raise SpecRejected(report)


def _driver_step(spec, lat, tables, j, n, y_next):
    """Unreflected one-step update for mode ``j`` on layer ``n``."""
    up, dn = y_next[1 : n + 2], y_next[: n + 1]
    z = (up - dn) / (2.0 * lat.sqrt_dt)
    x = lat.layer(n)
    h = hstar(spec.ambiguity, lat.time(n), x, z).value
    pre = (up + dn) / 2.0 + lat.dt * (tables.psi[j][n, : n + 1] + h)
    return pre, z


def _empty(m, N):
    Y = np.full((m, N + 1, N + 1), np.nan)
    Z = np.full((m, N, N), np.nan)
    dK = np.full((m, N, N), np.nan)
    return Y, Z, dK


def solve_direct(spec: ProblemSpec, lat: Lattice, check: bool = True) -> SolutionField:
    """Backward induction with node-wise oblique reflection after each driver step."""
    if check:
        _check(spec, lat)
    tables = NodeTables(spec, lat)
    m, N = spec.modes, lat.N
    A = spec.switch_sets
    Y, Z, dK = _empty(m, N)
    for j in range(m):
        Y[j, N, :] = tables.xi[j]
    for n in range(N - 1, -1, -1):
        pre = np.empty((m, n + 1))
        for j in range(m):
            pre[j], Z[j, n, : n + 1] = _driver_step(spec, lat, tables, j, n, Y[j, n + 1])
        costs = {key: c[n, : n + 1] for key, c in tables.cost.items()}
        y, dk = reflect_layer(pre, costs, A)
        Y[:, n, : n + 1] = y
        dK[:, n, : n + 1] = dk
    return SolutionField(spec, lat, Y, Z, dK, "direct", 0.0, 0, [], tables)


@dataclass
class PicardTrace:
    """Sup-norm change and smallest node-wise increment of each Picard iterate."""

    deltas: list = field(default_factory=list)
    min_increments: list = field(default_factory=list)

    def __len__(self):
        return len(self.deltas)


def _obstacle(tables, A, j, Y_prev):
    obst = np.full(Y_prev.shape[1:], -np.inf)
    for i in A[j]:
        obst = np.maximum(obst, Y_prev[i] - tables.cost[(j, i)])
    return obst


def _single_mode_scheme(spec, lat, tables, j, obstacle=None):
    N = lat.N
    Yj = np.full((N + 1, N + 1), np.nan)
    Yj[N, :] = tables.xi[j]
    for n in range(N - 1, -1, -1):
        pre, _ = _driver_step(spec, lat, tables, j, n, Yj[n + 1])
        if obstacle is not None:
            pre = np.maximum(pre, obstacle[n, : n + 1])
        Yj[n, : n + 1] = pre
    return Yj


def solve_picard(
    spec: ProblemSpec,
    lat: Lattice,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    check: bool = True,
    keep_iterates: bool = False,
):
    """Global Picard iteration over single-obstacle reflected schemes.

    Iterate 0 solves every mode without reflection.  Iterate ``n`` solves
    mode ``j`` reflected on the frozen obstacle
    ``max_{i in A_j} (Y^{i,n-1} - c_ji)``.  Stops once the sup-norm change
    drops below ``tol``.

    Returns the solution field; its ``trace`` attribute is a
    :class:`PicardTrace`.  With ``keep_iterates`` the list of all iterates is
    returned alongside: ``(field, iterates)``.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if check:
        _check(spec, lat)
    tables = NodeTables(spec, lat)
    m, N = spec.modes, lat.N
    A = spec.switch_sets
    Y = np.stack([_single_mode_scheme(spec, lat, tables, j) for j in range(m)])
    iterates = [Y] if keep_iterates else None
    trace = PicardTrace()
    mask = lat.mask()
    for it in range(1, max_iter + 1):
        Y_new = np.stack([
            _single_mode_scheme(spec, lat, tables, j, _obstacle(tables, A, j, Y) if A[j] else None)
            for j in range(m)])
        diff = (Y_new - Y)[:, mask]
        trace.deltas.append(float(np.max(np.abs(diff))))
        trace.min_increments.append(float(np.min(diff)))
        Y = Y_new
        if keep_iterates:
            iterates.append(Y)
        if trace.deltas[-1] < tol:
            break
    else:
        raise NoConvergence(
            f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations "
            f"(last change {trace.deltas[-1]:.3g})", trace)

    Z = np.full((m, N, N), np.nan)
    dK = np.full((m, N, N), np.nan)
    for n in range(N):
        for j in range(m):
            pre, Z[j, n, : n + 1] = _driver_step(spec, lat, tables, j, n, Y[j, n + 1])
            dK[j, n, : n + 1] = Y[j, n, : n + 1] - pre
    sol = SolutionField(spec, lat, Y, Z, dK, "picard", tol, len(trace), trace, tables)
    if keep_iterates:
        return sol, iterates
    return sol


def solution_csv(sol: SolutionField) -> str:
    lat = sol.lattice
    N = lat.N
    out = io.StringIO()
    out.write("mode,n,k,t,x,Y,Z,dK\n")
    for j in range(sol.spec.modes):
        for n in range(N + 1):
            t = fmt(lat.time(n))
            for k in range(n + 1):
                if n < N:
                    z, dk = fmt(sol.Z[j, n, k]), fmt(sol.dK[j, n, k])
                else:
                    z = dk = ""
                out.write(f"{j + 1},{n},{k},{t},{fmt(lat.x[n, k])},{fmt(sol.Y[j, n, k])},{z},{dk}\n")
    return out.getvalue()
