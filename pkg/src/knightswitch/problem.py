"""Problem definition, spec-file loading and node-wise assumption checks.

Modes are 0-based inside the package.  The spec file, CSV outputs and
validation messages use 1-based mode numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import expr as ex
from .ambiguity import FINITE, KAPPA, AmbiguityModel
from .errors import EvalError, ExprError, FormatError, RangeError
from .lattice import ARITHMETIC, GEOMETRIC, FactorModel, Lattice

__all__ = [
    "FactorModel",
    "ProblemSpec",
    "Finding",
    "ValidationReport",
    "load_spec",
    "dump_spec",
    "validate",
    "simple_cycles",
    "NodeTables",
]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    horizon: float
    modes: int
    psi: tuple
    xi: tuple
    costs: Mapping = field(default_factory=dict)
    factor: FactorModel = None
    ambiguity: AmbiguityModel = field(default_factory=AmbiguityModel)
    start: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise RangeError(f"T must be > 0, got {self.horizon}")
        if self.modes < 1:
            raise RangeError(f"modes must be >= 1, got {self.modes}")
        if not 0 <= self.start < self.modes:
            raise RangeError(f"start_mode must be in 1..{self.modes}, got {self.start + 1}")
        if len(self.psi) != self.modes or len(self.xi) != self.modes:
            raise RangeError("psi and xi need one expression per mode")
        if self.factor is None:
            raise FormatError("a factor model is required")
        for j, i in self.costs:
            if not (0 <= j < self.modes and 0 <= i < self.modes) or i == j:
                raise RangeError(f"invalid switch {j + 1}->{i + 1}")
        object.__setattr__(self, "psi", tuple(self.psi))
        object.__setattr__(self, "xi", tuple(self.xi))
        object.__setattr__(self, "costs", dict(sorted(self.costs.items())))

    @property
    def switch_sets(self) -> tuple:
        """``A_j``: modes reachable from ``j`` in one switch, sorted."""
        return tuple(
            tuple(sorted(i for (jj, i) in self.costs if jj == j)) for j in range(self.modes))

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# spec file
# --------------------------------------------------------------------------

_SECTION_KEYS = {
    "problem": ({"T", "modes"}, {"start_mode"}),
    "factor": ({"model", "x0", "vol"}, {"drift"}),
    "ambiguity": ({"kind"}, {"kappa", "values"}),
}


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _expression(value, where: str) -> ex.Expr:
    if isinstance(value, str):
        return ex.parse(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where}: expected an expression string or number")
    if not math.isfinite(value):
        raise RangeError(f"{where}: value must be finite")
    return ex.const(value)


def _index(key: str, m: int, where: str) -> int:
    try:
        j = int(key)
    except ValueError:
        raise FormatError(f"{where}: mode index {key!r} is not an integer") from None
    if not 1 <= j <= m:
        raise RangeError(f"{where}: mode {j} outside 1..{m}")
    return j - 1


def _check_keys(section: str, table, required, optional):
    if not isinstance(table, dict):
        raise FormatError(f"[{section}] must be a table")
    unknown = set(table) - required - optional
    if unknown:
        raise FormatError(f"[{section}]: unknown key(s) {', '.join(sorted(unknown))}")
    missing = required - set(table)
    if missing:
        raise FormatError(f"[{section}]: missing key(s) {', '.join(sorted(missing))}")


def load_spec(text: str) -> ProblemSpec:
    """Parse specification-file contents into a :class:`ProblemSpec`.

    Raises ``FormatError`` for syntax, section or key problems, ``RangeError``
    for out-of-range values and the expression parse errors unchanged.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise FormatError(f"malformed spec file: {err}") from None
    unknown = set(doc) - {"problem", "factor", "ambiguity", "mode", "cost"}
    if unknown:
        raise FormatError(f"unknown section(s): {', '.join(sorted(unknown))}")
    for name in ("problem", "factor"):
        if name not in doc:
            raise FormatError(f"missing section [{name}]")
    for name in ("problem", "factor", "ambiguity"):
        if name in doc:
            _check_keys(name, doc[name], *_SECTION_KEYS[name])

    prob = doc["problem"]
    T = _number(prob["T"], "problem.T")
    modes = prob["modes"]
    if isinstance(modes, bool) or not isinstance(modes, int):
        raise FormatError("problem.modes must be an integer")
    if modes < 1:
        raise RangeError(f"problem.modes must be >= 1, got {modes}")
    start = prob.get("start_mode", 1)
    if isinstance(start, bool) or not isinstance(start, int):
        raise FormatError("problem.start_mode must be an integer")
    if not 1 <= start <= modes:
        raise RangeError(f"start_mode {start} outside 1..{modes}")
    if not (math.isfinite(T) and T > 0):
        raise RangeError(f"problem.T must be > 0, got {T}")

    fac = doc["factor"]
    model = fac["model"]
    if model not in (ARITHMETIC, GEOMETRIC):
        raise RangeError(f"factor.model must be 'arithmetic' or 'geometric', got {model!r}")
    factor = FactorModel(
        model,
        _number(fac["x0"], "factor.x0"),
        _number(fac.get("drift", 0.0), "factor.drift"),
        _number(fac["vol"], "factor.vol"),
    )

    amb_doc = doc.get("ambiguity", {"kind": KAPPA, "kappa": 0.0})
    kind = amb_doc["kind"]
    if kind == KAPPA:
        if "values" in amb_doc:
            raise FormatError("ambiguity.values is only valid for kind = 'finite_set'")
        ambiguity = AmbiguityModel.kappa_ignorance(
            _number(amb_doc.get("kappa", 0.0), "ambiguity.kappa"))
    elif kind == FINITE:
        if "kappa" in amb_doc:
            raise FormatError("ambiguity.kappa is only valid for kind = 'kappa_ignorance'")
        values = amb_doc.get("values")
        if not isinstance(values, list):
            raise FormatError("ambiguity.values must be a list of numbers")
        ambiguity = AmbiguityModel.finite_set(
            [_number(v, "ambiguity.values") for v in values])
    else:
        raise RangeError(f"ambiguity.kind must be {KAPPA!r} or {FINITE!r}, got {kind!r}")

    mode_doc = doc.get("mode", {})
    if not isinstance(mode_doc, dict):
        raise FormatError("[mode.<j>] sections expected")
    psi, xi = [None] * modes, [None] * modes
    for key, table in mode_doc.items():
        j = _index(key, modes, f"[mode.{key}]")
        _check_keys(f"mode.{key}", table, {"psi", "xi"}, set())
        psi[j] = _expression(table["psi"], f"mode.{key}.psi")
        xi[j] = _expression(table["xi"], f"mode.{key}.xi")
    for j in range(modes):
        if psi[j] is None:
            raise FormatError(f"missing section [mode.{j + 1}]")

    costs = {}
    cost_doc = doc.get("cost", {})
    if not isinstance(cost_doc, dict):
        raise FormatError("[cost.<j>.<i>] sections expected")
    for jkey, row in cost_doc.items():
        j = _index(jkey, modes, f"[cost.{jkey}]")
        if not isinstance(row, dict):
            raise FormatError(f"[cost.{jkey}] must be written as [cost.{jkey}.<i>]")
        for ikey, table in row.items():
            where = f"cost.{jkey}.{ikey}"
            i = _index(ikey, modes, f"[{where}]")
            if i == j:
                raise RangeError(f"[{where}]: a mode cannot switch to itself")
            _check_keys(where, table, {"c"}, set())
            costs[(j, i)] = _expression(table["c"], f"{where}.c")

    return ProblemSpec(T, modes, tuple(psi), tuple(xi), costs, factor, ambiguity, start - 1)


def _toml_value(e: ex.Expr) -> str:
    return '"' + ex.to_string(e) + '"'


def dump_spec(spec: ProblemSpec) -> str:
    """Render ``spec`` in the spec-file format; ``load_spec`` inverts it."""
    f, amb = spec.factor, spec.ambiguity
    lines = [
        "[problem]",
        f"T = {spec.horizon!r}",
        f"modes = {spec.modes}",
        f"start_mode = {spec.start + 1}",
        "",
        "[factor]",
        f'model = "{f.kind}"',
        f"x0 = {f.x0!r}",
        f"drift = {f.a!r}",
        f"vol = {f.sigma!r}",
        "",
        "[ambiguity]",
        f'kind = "{amb.kind}"',
    ]
    if amb.kind == KAPPA:
        lines.append(f"kappa = {amb.kappa!r}")
    else:
        lines.append("values = [" + ", ".join(repr(v) for v in amb.values) + "]")
    for j in range(spec.modes):
        lines += ["", f"[mode.{j + 1}]", f"psi = {_toml_value(spec.psi[j])}",
                  f"xi = {_toml_value(spec.xi[j])}"]
    for (j, i), c in spec.costs.items():
        lines += ["", f"[cost.{j + 1}.{i + 1}]", f"c = {_toml_value(c)}"]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# node tables
# --------------------------------------------------------------------------

def _locate(err: EvalError, nodes: np.ndarray, label: str) -> EvalError:
    msg = str(err)
    marker = " at element "
    if marker in msg:
        head, idx = msg.rsplit(marker, 1)
        n, k = nodes[int(idx)]
        msg = f"{label}: {head} at node (n={n}, k={k})"
    else:
        msg = f"{label}: {msg}"
    return type(err)(msg, err.subtree)


class NodeTables:
    """Expressions of a spec evaluated at every lattice node.

    ``psi[j]`` and ``cost[(j, i)]`` have shape ``(N+1, N+1)`` (NaN above the
    diagonal); ``xi[j]`` has shape ``(N+1,)`` and lives on the terminal layer.
    """

    def __init__(self, spec: ProblemSpec, lat: Lattice):
        self.spec = spec
        self.lattice = lat
        mask = lat.mask()
        self._nodes = np.argwhere(mask)
        self._mask = mask
        t_flat = lat.times[self._nodes[:, 0]]
        x_flat = lat.x[mask]
        self._t, self._x = t_flat, x_flat
        self.psi = [self._table(e, f"psi of mode {j + 1}") for j, e in enumerate(spec.psi)]
        self.cost = {
            (j, i): self._table(c, f"cost {j + 1}->{i + 1}") for (j, i), c in spec.costs.items()}
        x_T = lat.layer(lat.N)
        term_nodes = np.array([(lat.N, k) for k in range(lat.N + 1)])
        self.xi = []
        for j, e in enumerate(spec.xi):
            try:
                self.xi.append(ex.evaluate(e, lat.T, x_T))
            except EvalError as err:
                raise _locate(err, term_nodes, f"terminal of mode {j + 1}") from None

    def _table(self, e: ex.Expr, label: str) -> np.ndarray:
        try:
            flat = ex.evaluate(e, self._t, self._x)
        except EvalError as err:
            raise _locate(err, self._nodes, label) from None
        out = np.full(self._mask.shape, np.nan)
        out[self._mask] = flat
        return out


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    severity: str
    code: str
    location: str
    message: str

    def __str__(self):
        return f"{self.severity} {self.code} [{self.location}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple = ()

    @property
    def errors(self) -> tuple:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def warnings(self) -> tuple:
        return tuple(f for f in self.findings if f.severity == "warning")

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set:
        return {f.code for f in self.errors}

    def __str__(self):
        if not self.findings:
            return "OK: no findings"
        status = "REJECTED" if self.errors else "OK"
        lines = [str(f) for f in self.findings]
        lines.append(f"{status}: {len(self.errors)} error(s), {len(self.warnings)} warning(s)")
        return "\n".join(lines)


def simple_cycles(succ) -> list:
    """All simple directed cycles of a graph given as successor lists.

    Each cycle is returned once, rooted at its smallest vertex.
    """
    cycles = []
    n = len(succ)

    def dfs(root, v, path, on_path):
        for w in succ[v]:
            if w == root:
                cycles.append(tuple(path))
            elif w > root and w not in on_path:
                on_path.add(w)
                path.append(w)
                dfs(root, w, path, on_path)
                path.pop()
                on_path.discard(w)

    for root in range(n):
        dfs(root, root, [root], {root})
    return cycles


MAX_ENUMERATED_MODES = 8


def _node_str(lat: Lattice, n: int, k: int) -> str:
    return f"n={n}, k={k}, t={lat.time(n):.6g}, x={lat.x[n, k]:.6g}"


def _first(mask: np.ndarray):
    idx = np.argwhere(mask)
    return tuple(int(v) for v in idx[0]), len(idx)


def validate(spec: ProblemSpec, lat: Lattice) -> ValidationReport:
    """Check the solver's hypotheses at every lattice node.

    Covers non-negative costs, strictly positive cost around every directed
    switching cycle, closure of the switch sets, the strict triangle
    inequality and terminal consistency.  One finding is emitted per failing
    (check, switch tuple), carrying the first offending node and the count.
    """
    findings = []
    m = spec.modes
    A = spec.switch_sets
    try:
        tables = NodeTables(spec, lat)
    except ExprError as err:
        return ValidationReport((Finding("error", err.code, "expression", str(err)),))
    cost = tables.cost
    mask = lat.mask()

    def mode_path(seq):
        return "->".join(str(v + 1) for v in seq)

    for (j, i), c in cost.items():
        bad = mask & (c < 0)
        if bad.any():
            (n, k), count = _first(bad)
            findings.append(Finding(
                "error", "NegativeCost", f"cost {j + 1}->{i + 1} at {_node_str(lat, n, k)}",
                f"switching cost {c[n, k]:.6g} < 0 ({count} node(s))"))

    if m <= MAX_ENUMERATED_MODES:
        for cyc in simple_cycles(A):
            edges = list(zip(cyc, cyc[1:] + cyc[:1]))
            total = sum(cost[e] for e in edges)
            bad = mask & (total <= 0)
            if bad.any():
                (n, k), count = _first(bad)
                findings.append(Finding(
                    "error", "FreeLoop", f"cycle {mode_path(cyc + cyc[:1])} at {_node_str(lat, n, k)}",
                    f"total switching cost {total[n, k]:.6g} <= 0 ({count} node(s))"))
    else:
        findings.extend(_zero_cycle_check(spec, lat, cost, mask))

    for j in range(m):
        for i in A[j]:
            for k in A[i]:
                if k != j and k not in A[j]:
                    findings.append(Finding(
                        "error", "ClosureViolated", f"switches {mode_path((j, i, k))}",
                        f"{i + 1} in A_{j + 1} and {k + 1} in A_{i + 1} but {k + 1} not in A_{j + 1}"))

    for j in range(m):
        for i in A[j]:
            for k in A[i]:
                if k == j or k not in A[j]:
                    continue
                direct, via = cost[(j, k)], cost[(j, i)] + cost[(i, k)]
                bad = mask & ~(direct < via)
                if bad.any():
                    (n, kk), count = _first(bad)
                    findings.append(Finding(
                        "error", "TriangleViolated",
                        f"switches {mode_path((j, i, k))} at {_node_str(lat, n, kk)}",
                        f"c_{j + 1}{k + 1} = {direct[n, kk]:.6g} >= c_{j + 1}{i + 1} + "
                        f"c_{i + 1}{k + 1} = {via[n, kk]:.6g} ({count} node(s))"))

    N = lat.N
    for j in range(m):
        for i in A[j]:
            bad = tables.xi[j] < tables.xi[i] - cost[(j, i)][N, : N + 1]
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                findings.append(Finding(
                    "error", "TerminalInconsistent",
                    f"modes {j + 1},{i + 1} at {_node_str(lat, N, k)}",
                    f"xi_{j + 1} = {tables.xi[j][k]:.6g} < xi_{i + 1} - c_{j + 1}{i + 1} = "
                    f"{tables.xi[i][k] - cost[(j, i)][N, k]:.6g} ({int(bad.sum())} node(s))"))

    if spec.ambiguity.bound * lat.sqrt_dt >= 1:
        findings.append(Finding(
            "warning", "StepTooCoarse", "lattice",
            f"sup|b| * sqrt(dt) = {spec.ambiguity.bound * lat.sqrt_dt:.6g} >= 1; "
            "controlled transition probabilities are undefined"))
    return ValidationReport(tuple(findings))


def _zero_cycle_check(spec, lat, cost, mask):
    # With non-negative costs a cycle has zero total iff all its edges are free,
    # so look for a cycle in the free-edge subgraph at each node.
    free = np.zeros(mask.shape, dtype=bool)
    for c in cost.values():
        free |= mask & (c <= 0)
    out = []
    for n, k in np.argwhere(free):
        succ = [[i for i in spec.switch_sets[j] if cost[(j, i)][n, k] <= 0]
                for j in range(spec.modes)]
        if _has_cycle(succ):
            out.append(Finding("error", "FreeLoop", f"node ({_node_str(lat, n, k)})",
                               "a cycle of zero-cost switches exists"))
            break
    return out


def _has_cycle(succ) -> bool:
    state = [0] * len(succ)

    def visit(v):
        state[v] = 1
        for w in succ[v]:
            if state[w] == 1 or (state[w] == 0 and visit(w)):
                return True
        state[v] = 2
        return False

    return any(state[v] == 0 and visit(v) for v in range(len(succ)))
