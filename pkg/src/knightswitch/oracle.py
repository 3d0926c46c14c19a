"""Brute-force reference values for the switching game on the lattice.

Nothing here calls the solver or the Hamiltonian code.  Transition
probabilities are written out from ``p_up = (1 + u sqrt(dt)) / 2`` and the
inner infimum over drifts is an explicit minimum over a control grid.
Switching is resolved through shortest switching-cost paths rather than the
solver's sweep.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .ambiguity import FINITE
from .errors import InvalidControlGrid, SearchSpaceTooLarge, StepTooCoarse
from .lattice import Lattice
from .problem import NodeTables, ProblemSpec
from .strategy import STAY, Policy

MAX_POLICIES = 10**6


@dataclass(eq=False)
class OracleResult:
    """Start values per mode, plus the full value field or the best policy."""

    V0: tuple
    grid_size: int
    values: np.ndarray = None
    best_policy: Policy = None
    policies_searched: int = 0

    def value(self, mode: int) -> float:
        return self.V0[mode]


def _check_grid(spec: ProblemSpec, u_grid) -> np.ndarray:
    grid = np.asarray(sorted(set(float(u) for u in u_grid)))
    amb = spec.ambiguity
    if grid.size == 0:
        raise InvalidControlGrid("control grid is empty")
    if amb.kind == FINITE:
        if not set(amb.values) <= set(grid.tolist()) or not set(grid.tolist()) <= set(amb.values):
            raise InvalidControlGrid("grid must list exactly the finite drift values")
    else:
        if np.any(np.abs(grid) > amb.kappa):
            raise InvalidControlGrid("grid leaves [-kappa, kappa]")
        if grid[0] != -amb.kappa or grid[-1] != amb.kappa:
            raise InvalidControlGrid("grid must contain both -kappa and kappa")
    return np.asarray(list(dict.fromkeys(float(u) for u in u_grid)))


def _up_probabilities(grid: np.ndarray, lat: Lattice) -> np.ndarray:
    root = math.sqrt(lat.T / lat.N)
    shift = grid * root
    if np.any(np.abs(shift) >= 1):
        raise StepTooCoarse("control grid makes an up probability leave (0, 1)")
    return (1.0 + shift) / 2.0


def _shortest_costs(spec: ProblemSpec, tables: NodeTables, n: int) -> np.ndarray:
    """``D[j, i, k]``: cheapest chain of switches from j to i at node (n, k)."""
    m = spec.modes
    K = n + 1
    D = np.full((m, m, K), np.inf)
    for j in range(m):
        D[j, j] = 0.0
    for (j, i), c in tables.cost.items():
        D[j, i] = np.minimum(D[j, i], c[n, :K])
    for via in range(m):
        D = np.minimum(D, D[:, via : via + 1, :] + D[via : via + 1, :, :])
    return D


def game_dp(spec: ProblemSpec, lat: Lattice, u_grid) -> OracleResult:
    """Max-min dynamic program with explicit enumeration of drifts.

    ``V[j, n, k]`` is the best value over switch chains of
    ``min_u (p_u V_up + (1 - p_u) V_dn) + psi_j dt`` for the mode reached.
    """
    grid = _check_grid(spec, u_grid)
    tables = NodeTables(spec, lat)
    pg = _up_probabilities(grid, lat)[:, None]
    m, N = spec.modes, lat.N
    dt = lat.T / N
    V = np.full((m, N + 1, N + 1), np.nan)
    for j in range(m):
        V[j, N] = tables.xi[j]
    for n in range(N - 1, -1, -1):
        K = n + 1
        cont = np.empty((m, K))
        for j in range(m):
            up, dn = V[j, n + 1, 1 : K + 1], V[j, n + 1, :K]
            cont[j] = np.min(pg * up + (1.0 - pg) * dn, axis=0) + tables.psi[j][n, :K] * dt
        D = _shortest_costs(spec, tables, n)
        V[:, n, :K] = np.max(cont[None, :, :] - D, axis=1)
    return OracleResult(tuple(float(V[j, 0, 0]) for j in range(m)), len(grid), values=V)


def joint_actions(spec: ProblemSpec) -> list:
    """All loop-free assignments of ``stay`` / a target to every mode at one node."""
    options = [(STAY,) + tuple(A) for A in spec.switch_sets]
    out = []
    for combo in itertools.product(*options):
        ok = True
        for start in range(spec.modes):
            seen, cur = {start}, start
            while combo[cur] != STAY:
                cur = combo[cur]
                if cur in seen:
                    ok = False
                    break
                seen.add(cur)
            if not ok:
                break
        if ok:
            out.append(combo)
    return out


def enumerate_policies(spec: ProblemSpec, lat: Lattice, u_grid,
                       max_policies: int = MAX_POLICIES) -> OracleResult:
    """Exhaustive search over every loop-free Markov switching table.

    For each table the adversary's drift is optimized node by node over
    ``u_grid``.  Returns per-mode maxima and the maximizing table for the
    start mode (lexicographically smallest on ties).
    """
    grid = _check_grid(spec, u_grid)
    tables = NodeTables(spec, lat)
    pg = _up_probabilities(grid, lat)[:, None, None, None]
    m, N = spec.modes, lat.N
    dt = lat.T / N
    actions = np.array(joint_actions(spec), dtype=np.int64)  # (q, m)
    q = len(actions)
    nodes = [(n, k) for n in range(N) for k in range(n + 1)]
    S = len(nodes)
    if q**S > max_policies:
        raise SearchSpaceTooLarge(
            f"{q}^{S} = {q**S} policies exceed the limit of {max_policies}")
    P = q**S
    index = np.arange(P, dtype=np.int64)
    digits = np.empty((P, S), dtype=np.int64)
    for s in range(S):
        digits[:, s] = (index // q ** (S - 1 - s)) % q
    slot = {node: s for s, node in enumerate(nodes)}

    # final mode and accumulated cost of each joint action, per starting mode
    def chains(n, k):
        final = np.empty((q, m), dtype=np.int64)
        paid = np.zeros((q, m))
        for a, combo in enumerate(actions):
            for j in range(m):
                cur = j
                while combo[cur] != STAY:
                    paid[a, j] += tables.cost[(cur, combo[cur])][n, k]
                    cur = combo[cur]
                final[a, j] = cur
        return final, paid

    W = np.broadcast_to(np.stack(tables.xi)[None], (P, m, N + 1)).copy()
    rows = np.arange(P)
    for n in range(N - 1, -1, -1):
        K = n + 1
        psi = np.stack([tables.psi[j][n, :K] for j in range(m)])
        cont = np.min(pg * W[None, :, :, 1:] + (1.0 - pg) * W[None, :, :, :-1], axis=0) + psi * dt
        Wn = np.empty((P, m, K))
        for k in range(K):
            final, paid = chains(n, k)
            d = digits[:, slot[(n, k)]]
            for j in range(m):
                Wn[:, j, k] = cont[rows, final[d, j], k] - paid[d, j]
        W = Wn
    V0 = W[:, :, 0]
    best = int(np.argmax(V0[:, spec.start]))
    pol = np.full((m, N + 1, N + 1), STAY, dtype=np.int64)
    for s, (n, k) in enumerate(nodes):
        pol[:, n, k] = actions[digits[best, s]]
    return OracleResult(tuple(float(v) for v in V0.max(axis=0)), len(grid),
                        best_policy=Policy(pol), policies_searched=P)
