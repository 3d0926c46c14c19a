"""Switching policies, worst-case controls and their realization on paths."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ._csv import fmt
from .ambiguity import hstar
from .errors import InstantaneousCycle
from .lattice import Lattice
from .problem import NodeTables, ProblemSpec
from .solver import SolutionField

STAY = -1
DEFAULT_TOL = 1e-9
UP, DOWN = 1, 0


@dataclass(eq=False)
class Policy:
    """Markov action table.

    ``target[j, n, k]`` is the mode to switch to from mode ``j`` at node
    ``(n, k)``, or ``STAY``.  Shape ``(m, N+1, N+1)``.
    """

    target: np.ndarray

    @property
    def modes(self) -> int:
        return self.target.shape[0]

    @property
    def steps(self) -> int:
        return self.target.shape[1] - 1

    def action(self, n: int, k: int, j: int) -> int:
        return int(self.target[j, n, k])

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.target, other.target)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("n,k,mode,action,target\n")
        m, N = self.modes, self.steps
        for n in range(N + 1):
            for k in range(n + 1):
                for j in range(m):
                    tgt = int(self.target[j, n, k])
                    if tgt == STAY:
                        out.write(f"{n},{k},{j + 1},stay,\n")
                    else:
                        out.write(f"{n},{k},{j + 1},switch,{tgt + 1}\n")
        return out.getvalue()


@dataclass(eq=False)
class ControlTable:
    """Drift chosen by the adversary at ``(mode j, node n, k)``; shape ``(m, N, N)``."""

    u: np.ndarray

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("n,k,mode,u\n")
        m, N = self.u.shape[0], self.u.shape[1]
        for n in range(N):
            for k in range(n + 1):
                for j in range(m):
                    out.write(f"{n},{k},{j + 1},{fmt(self.u[j, n, k])}\n")
        return out.getvalue()


@dataclass(frozen=True)
class SwitchingStrategy:
    """Switch decisions realized on one path: ``((tau_0, eta_0), (tau_1, eta_1), ...)``."""

    decisions: tuple

    @property
    def times(self) -> tuple:
        return tuple(t for t, _ in self.decisions)

    @property
    def modes(self) -> tuple:
        return tuple(e for _, e in self.decisions)

    def __len__(self):
        return len(self.decisions)


def stay_policy(m: int, N: int) -> Policy:
    return Policy(np.full((m, N + 1, N + 1), STAY, dtype=np.int64))


def extract_policy(spec: ProblemSpec, sol: SolutionField, tol: float = DEFAULT_TOL) -> Policy:
    """Switch wherever a mode's value sits on its obstacle.

    At ``(n, k, j)`` with ``n < N`` the action is ``switch_to i*`` if
    ``Y_j <= max_{i in A_j} (Y_i - c_ji) + tol``, where ``i*`` is the smallest
    index attaining the maximum; otherwise ``stay``.
    """
    lat = sol.lattice
    tables = sol.tables or NodeTables(spec, lat)
    m, N = spec.modes, lat.N
    pol = stay_policy(m, N)
    for j, targets in enumerate(spec.switch_sets):
        if not targets:
            continue
        Y = sol.Y[:, :N, :N]
        best = np.full((N, N), -np.inf)
        arg = np.full((N, N), STAY, dtype=np.int64)
        for i in targets:
            cand = Y[i] - tables.cost[(j, i)][:N, :N]
            better = cand > best
            best = np.where(better, cand, best)
            arg = np.where(better, i, arg)
        switch = Y[j] <= best + tol
        pol.target[j, :N, :N] = np.where(switch, arg, STAY)
    pol.target[:, ~lat.mask()] = STAY
    return pol


def worst_control(spec: ProblemSpec, sol: SolutionField) -> ControlTable:
    """The minimizing drift ``u*(t, x, Z_j)`` at every node and mode."""
    lat = sol.lattice
    N = lat.N
    t = lat.times[:N, None]
    x = lat.x[:N, :N]
    u = np.full(sol.Z.shape, np.nan)
    valid = lat.mask()[:N, :N]
    for j in range(spec.modes):
        res = hstar(spec.ambiguity, t, x, np.where(valid, sol.Z[j], 0.0))
        u[j] = np.where(valid, res.minimizer, np.nan)
    return ControlTable(u)


def resolve_chain(pol: Policy, n: int, k: int, j: int) -> list:
    """Modes visited by following switch actions at one node, starting from ``j``."""
    chain = [j]
    seen = {j}
    while True:
        tgt = pol.action(n, k, chain[-1])
        if tgt == STAY:
            return chain
        if tgt in seen:
            raise InstantaneousCycle(
                f"policy switches in a loop {'->'.join(str(v + 1) for v in chain + [tgt])} "
                f"at node (n={n}, k={k})")
        seen.add(tgt)
        chain.append(tgt)


def realize_strategy(pol: Policy, path, start_mode: int) -> SwitchingStrategy:
    """Walk ``path`` (a sequence of N up/down moves) applying the policy.

    Several switches at the same step are followed through the chain of
    actions; a mode repeated within one step raises ``InstantaneousCycle``.
    """
    N = pol.steps
    if len(path) != N:
        raise ValueError(f"path has {len(path)} moves, lattice has {N} steps")
    decisions = [(0, start_mode)]
    mode, k = start_mode, 0
    for n in range(N + 1):
        chain = resolve_chain(pol, n, k, mode) if n < N else [mode]
        for nxt in chain[1:]:
            decisions.append((n, nxt))
        mode = chain[-1]
        if n < N:
            k += 1 if path[n] == UP else 0
    return SwitchingStrategy(tuple(decisions))


def _break_cycles(target: np.ndarray, switch_sets) -> None:
    m = target.shape[0]
    active = np.argwhere((target != STAY).sum(axis=0) >= 2)
    for n, k in active:
        for start in range(m):
            chain, seen = [start], {start}
            while True:
                tgt = target[chain[-1], n, k]
                if tgt == STAY:
                    break
                if tgt in seen:
                    target[chain[-1], n, k] = STAY
                    break
                seen.add(tgt)
                chain.append(tgt)


def random_policy(spec: ProblemSpec, lat: Lattice, seed: int, switch_prob: float = 0.1) -> Policy:
    """Random Markov policy for suboptimality tests.

    Independently at every ``(n, k, j)`` with ``n < N`` a uniformly chosen
    target from ``A_j`` is taken with probability ``switch_prob``, else
    ``stay``.  Any instantaneous loop this creates is cut at the switch that
    closes it.
    """
    rng = np.random.default_rng(seed)
    m, N = spec.modes, lat.N
    pol = stay_policy(m, N)
    shape = (N, N)
    valid = lat.mask()[:N, :N]
    for j, targets in enumerate(spec.switch_sets):
        flip = rng.random(shape) < switch_prob
        pick = rng.integers(0, max(len(targets), 1), size=shape)
        if not targets:
            continue
        choice = np.asarray(targets)[pick]
        pol.target[j, :N, :N] = np.where(flip & valid, choice, STAY)
    _break_cycles(pol.target, spec.switch_sets)
    return pol


def random_control(spec: ProblemSpec, lat: Lattice, seed: int, u_grid) -> ControlTable:
    """I.i.d. uniform draws from ``u_grid`` at every ``(mode, node)``."""
    rng = np.random.default_rng(seed)
    N = lat.N
    grid = np.asarray(u_grid, dtype=float)
    u = grid[rng.integers(0, len(grid), size=(spec.modes, N, N))]
    u[:, ~lat.mask()[:N, :N]] = np.nan
    return ControlTable(u)
