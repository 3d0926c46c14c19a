"""Yield of a (policy, control) pair: exact lattice expectation and Monte Carlo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._csv import fmt
from .errors import InstantaneousCycle
from .lattice import Lattice, controlled_up_probability
from .problem import NodeTables, ProblemSpec
from .strategy import (
    STAY,
    UP,
    ControlTable,
    Policy,
    SwitchingStrategy,
    realize_strategy,
)

EXACT = "exact"
MONTE_CARLO = "monte_carlo"
BLOCK_SIZE = 1024
REPORT_HEADER = "method,estimate,stderr,paths,seed"


@dataclass(frozen=True)
class EvalReport:
    estimate: float
    stderr: float = 0.0
    method: str = EXACT
    paths: int = 0
    seed: int = 0

    def to_csv_row(self) -> str:
        return f"{self.method},{fmt(self.estimate)},{fmt(self.stderr)},{self.paths},{self.seed}"

    def to_csv(self) -> str:
        return REPORT_HEADER + "\n" + self.to_csv_row() + "\n"


@dataclass(frozen=True)
class PathSample:
    moves: tuple
    nodes: tuple  # k index visited at n = 0..N
    strategy: SwitchingStrategy
    running: float  # sum of psi * dt along the path
    switching_cost: float
    terminal: float
    weight: float  # likelihood ratio dP^u/dP of the path, diagnostics only

    @property
    def payoff(self) -> float:
        return self.running - self.switching_cost + self.terminal


def _check_policy(spec: ProblemSpec, pol: Policy) -> None:
    for j, targets in enumerate(spec.switch_sets):
        row = pol.target[j]
        bad = (row != STAY) & ~np.isin(row, np.asarray(targets, dtype=np.int64))
        if bad.any():
            n, k = np.argwhere(bad)[0]
            raise ValueError(f"policy switches from mode {j + 1} to a mode outside A_{j + 1} "
                             f"at node (n={n}, k={k})")


def _cost_cube(tables: NodeTables, m: int) -> np.ndarray:
    """``cube[j, i, n, k] = c_ji(t_n, x)``, NaN where the switch is not allowed."""
    shape = tables.lattice.x.shape
    cube = np.full((m, m) + shape, np.nan)
    for (j, i), c in tables.cost.items():
        cube[j, i] = c
    return cube


def _follow(target, cube, n, k, mode):
    """Resolve switch chains at nodes ``(n, k)`` for vectors ``k``, ``mode``.

    Returns the final mode and the accumulated switching cost.
    """
    m = target.shape[0]
    cur = np.array(mode, dtype=np.int64, copy=True)
    acc = np.zeros(cur.shape)
    for _ in range(m):
        tgt = target[cur, n, k]
        sw = tgt != STAY
        if not sw.any():
            return cur, acc
        safe = np.where(sw, tgt, cur)
        acc = acc + np.where(sw, cube[cur, safe, n, k], 0.0)
        cur = safe
    if (target[cur, n, k] != STAY).any():
        bad = int(np.flatnonzero(target[cur, n, k] != STAY)[0])
        kk = int(np.broadcast_to(k, cur.shape)[bad])
        raise InstantaneousCycle(f"policy switches in a loop at node (n={n}, k={kk})")
    return cur, acc


def _probabilities(spec: ProblemSpec, lat: Lattice, ctl: ControlTable) -> np.ndarray:
    valid = lat.mask()[: lat.N, : lat.N]
    u = ctl.u[:, valid]
    p = np.full(ctl.u.shape, np.nan)
    p[:, valid] = controlled_up_probability(lat, spec.ambiguity, u)
    return p


def _policy_values(spec, lat, pol, tables, continuation):
    """Backward induction shared by exact evaluation and worst-case search.

    ``continuation(j, n, W_next)`` returns the value of running mode ``j``
    over step ``n``; switch chains are then resolved node by node.
    """
    m, N = spec.modes, lat.N
    cube = _cost_cube(tables, m)
    W = np.stack([tables.xi[j] for j in range(m)])
    for n in range(N - 1, -1, -1):
        C = np.stack([continuation(j, n, W[j]) for j in range(m)])
        k = np.arange(n + 1)
        Wn = np.empty((m, n + 1))
        for j in range(m):
            final, acc = _follow(pol.target, cube, n, k, np.full(n + 1, j))
            Wn[j] = C[final, k] - acc
        W = Wn
    return W


def evaluate_exact(spec: ProblemSpec, lat: Lattice, pol: Policy, ctl: ControlTable) -> EvalReport:
    """Exact ``J(policy, control)`` by backward induction on the finite chain."""
    _check_policy(spec, pol)
    tables = NodeTables(spec, lat)
    p = _probabilities(spec, lat, ctl)
    dt = lat.dt

    def continuation(j, n, w_next):
        pu = p[j, n, : n + 1]
        return tables.psi[j][n, : n + 1] * dt + pu * w_next[1:] + (1.0 - pu) * w_next[:-1]

    W = _policy_values(spec, lat, pol, tables, continuation)
    return EvalReport(float(W[spec.start, 0]), 0.0, EXACT, 0, 0)


def worst_case_control(spec: ProblemSpec, lat: Lattice, pol: Policy, u_grid):
    """Adversarial control from ``u_grid`` against a fixed policy.

    Minimizes node by node (first grid value on ties).  Returns
    ``(control_table, value)`` where value is the start-mode yield.
    """
    _check_policy(spec, pol)
    tables = NodeTables(spec, lat)
    grid = np.asarray(u_grid, dtype=float)
    pg = np.atleast_1d(controlled_up_probability(lat, spec.ambiguity, grid))
    N, dt = lat.N, lat.dt
    u = np.full((spec.modes, N, N), np.nan)

    def continuation(j, n, w_next):
        cand = pg[:, None] * w_next[1:] + (1.0 - pg[:, None]) * w_next[:-1]
        idx = np.argmin(cand, axis=0)
        u[j, n, : n + 1] = grid[idx]
        return tables.psi[j][n, : n + 1] * dt + cand[idx, np.arange(n + 1)]

    W = _policy_values(spec, lat, pol, tables, continuation)
    return ControlTable(u), float(W[spec.start, 0])


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------

def path_uniforms(seed: int, path: int, steps: int) -> np.ndarray:
    """The uniforms driving path number ``path`` in a seeded run.

    Paths are grouped in fixed blocks of ``BLOCK_SIZE``; each block has its
    own generator keyed by ``(seed, block)``, so a path's draws depend only on
    ``(seed, path, steps)``.
    """
    block, row = divmod(path, BLOCK_SIZE)
    rng = np.random.default_rng([seed, block])
    return rng.random((BLOCK_SIZE, steps))[row]


class _Simulator:
    def __init__(self, spec, lat, pol, ctl):
        _check_policy(spec, pol)
        self.spec, self.lat, self.pol = spec, lat, pol
        self.tables = NodeTables(spec, lat)
        m = spec.modes
        self.cube = _cost_cube(self.tables, m)
        self.psi = np.stack(self.tables.psi)
        self.xi = np.stack(self.tables.xi)
        self.p = _probabilities(spec, lat, ctl)

    def run(self, U: np.ndarray):
        """Simulate one path per row of ``U`` (shape ``(P, N)``)."""
        lat, N, dt = self.lat, self.lat.N, self.lat.dt
        P = U.shape[0]
        k = np.zeros(P, dtype=np.int64)
        mode = np.full(P, self.spec.start, dtype=np.int64)
        running = np.zeros(P)
        cost = np.zeros(P)
        weight = np.ones(P)
        for n in range(N):
            mode, acc = _follow(self.pol.target, self.cube, n, k, mode)
            cost += acc
            running += self.psi[mode, n, k] * dt
            pu = self.p[mode, n, k]
            up = U[:, n] < pu
            weight *= np.where(up, 2.0 * pu, 2.0 * (1.0 - pu))
            k += up
        terminal = self.xi[mode, k]
        return running, cost, terminal, weight


def simulate_path(spec: ProblemSpec, lat: Lattice, pol: Policy, ctl: ControlTable,
                  stream) -> PathSample:
    """Simulate one path under ``P^u``.

    ``stream`` is a numpy ``Generator`` or an array of ``N`` uniforms (as
    returned by :func:`path_uniforms`).  A step moves up when its uniform is
    below the controlled up probability.
    """
    N = lat.N
    if isinstance(stream, np.random.Generator):
        U = stream.random(N)
    else:
        U = np.asarray(stream, dtype=float)
    sim = _Simulator(spec, lat, pol, ctl)
    running, cost, terminal, weight = sim.run(U[None, :])
    moves, nodes = [], [0]
    k, mode = 0, spec.start
    for n in range(N):
        mode, _ = _follow(pol.target, sim.cube, n, np.array([k]), np.array([mode]))
        mode = int(mode[0])
        move = UP if U[n] < sim.p[mode, n, k] else 0
        moves.append(move)
        k += move
        nodes.append(k)
    strategy = realize_strategy(pol, moves, spec.start)
    return PathSample(tuple(moves), tuple(nodes), strategy, float(running[0]),
                      float(cost[0]), float(terminal[0]), float(weight[0]))


def mc_payoffs(spec: ProblemSpec, lat: Lattice, pol: Policy, ctl: ControlTable,
               paths: int, seed: int) -> np.ndarray:
    """Per-path payoffs, in path order, of a seeded Monte Carlo run."""
    if paths < 1:
        raise ValueError("paths must be >= 1")
    sim = _Simulator(spec, lat, pol, ctl)
    out = np.empty(paths)
    for block in range(-(-paths // BLOCK_SIZE)):
        lo = block * BLOCK_SIZE
        hi = min(lo + BLOCK_SIZE, paths)
        U = np.random.default_rng([seed, block]).random((BLOCK_SIZE, lat.N))[: hi - lo]
        running, cost, terminal, _ = sim.run(U)
        out[lo:hi] = running - cost + terminal
    return out


def evaluate_mc(spec: ProblemSpec, lat: Lattice, pol: Policy, ctl: ControlTable,
                paths: int, seed: int) -> EvalReport:
    """Monte Carlo estimate of ``J(policy, control)`` simulated directly under ``P^u``."""
    x = mc_payoffs(spec, lat, pol, ctl, paths, seed)
    if np.all(x == x[0]):
        return EvalReport(float(x[0]), 0.0, MONTE_CARLO, paths, seed)
    mean = float(np.sum(x) / paths)
    stderr = float(np.std(x, ddof=1) / np.sqrt(paths)) if paths > 1 else 0.0
    return EvalReport(mean, stderr, MONTE_CARLO, paths, seed)
