import csv
import io
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from knightswitch import build_lattice, load_spec, reflect_layer, solve_direct, solve_picard
from knightswitch.errors import NoConvergence, ReflectionDiverged, SpecRejected
from knightswitch.expr import BinOp, Num
from knightswitch.problem import NodeTables
from knightswitch.strategy import extract_policy
from randspec import deterministic_two_mode, random_spec, small_spec

FIXTURES = Path(__file__).parent / "fixtures"


def lattice_for(spec, N):
    return build_lattice(spec.factor, spec.horizon, N)


# --- reflect_layer -----------------------------------------------------------

PAIR = ((1,), (0,))


def test_reflect_one_sweep():
    y, dk = reflect_layer([0.0, 5.0], {(0, 1): 1.0, (1, 0): 1.0}, PAIR)
    assert y.tolist() == [4.0, 5.0] and dk.tolist() == [4.0, 0.0]


def test_reflect_inactive():
    y, dk = reflect_layer([3.0, 3.0], {(0, 1): 1.0, (1, 0): 1.0}, PAIR)
    assert y.tolist() == [3.0, 3.0] and dk.tolist() == [0.0, 0.0]


def test_reflect_chain():
    y, dk = reflect_layer([0.0, 0.0, 10.0], {(0, 1): 1.0, (1, 2): 1.0}, ((1,), (2,), ()))
    assert y.tolist() == [8.0, 9.0, 10.0] and dk.tolist() == [8.0, 9.0, 0.0]


def test_reflect_free_loop_diverges():
    with pytest.raises(ReflectionDiverged):
        reflect_layer([0.0, 1.0], {(0, 1): -0.5, (1, 0): 0.0}, PAIR)


def _fixed_point_reversed(pre, costs, sets):
    # Jacobi iteration of the obstacle map, modes visited last to first
    y = np.array(pre, dtype=float)
    while True:
        new = y.copy()
        for j in reversed(range(len(y))):
            for i in sets[j]:
                new[j] = max(new[j], y[i] - costs[(j, i)])
        if np.array_equal(new, y):
            return y
        y = new


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5).flatmap(lambda m: st.tuples(
    st.lists(st.floats(-10, 10), min_size=m, max_size=m),
    st.lists(st.floats(0.01, 3), min_size=m * m, max_size=m * m),
    st.lists(st.booleans(), min_size=m * m, max_size=m * m))))
def test_reflect_order_independent(case):
    pre, cvals, allowed = case
    m = len(pre)
    sets = tuple(tuple(i for i in range(m) if i != j and allowed[j * m + i]) for j in range(m))
    costs = {(j, i): cvals[j * m + i] for j in range(m) for i in sets[j]}
    y, dk = reflect_layer(pre, costs, sets)
    np.testing.assert_array_equal(y, _fixed_point_reversed(pre, costs, sets))
    assert np.all(dk >= 0)


def test_reflect_vectorized_matches_scalar():
    pre = np.array([[0.0, 3.0], [5.0, 3.0]])
    costs = {(0, 1): np.array([1.0, 1.0]), (1, 0): np.array([1.0, 1.0])}
    y, _ = reflect_layer(pre, costs, PAIR)
    assert y.tolist() == [[4.0, 3.0], [5.0, 3.0]]


# --- solve_direct --------------------------------------------------------------

@pytest.mark.parametrize("N", [1, 2, 7, 50])
def test_constant_running_utility(N):
    spec = small_spec(["1"], ["0"])
    assert solve_direct(spec, lattice_for(spec, N)).y0 == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("N", [1, 10, 100])
def test_linear_terminal(N):
    spec = small_spec(["0"], ["x"], kappa=0.5)
    sol = solve_direct(spec, lattice_for(spec, N))
    assert sol.y0 == pytest.approx(-0.5, abs=1e-12)
    np.testing.assert_allclose(sol.Z[0][lattice_for(spec, N).mask()[:N, :N]], 1.0, atol=1e-12)


@pytest.mark.parametrize("N", [1, 10, 40])
def test_deterministic_two_mode(N):
    spec = deterministic_two_mode()
    sol = solve_direct(spec, lattice_for(spec, N))
    assert sol.Y[0, 0, 0] == pytest.approx(0.9, abs=1e-12)
    assert sol.Y[1, 0, 0] == pytest.approx(1.0, abs=1e-12)


def test_rejects_invalid_spec():
    spec = small_spec(["0", "0"], ["0", "0"], {(0, 1): 0, (1, 0): 0})
    with pytest.raises(SpecRejected) as info:
        solve_direct(spec, lattice_for(spec, 4))
    assert "FreeLoop" in info.value.report.codes()
    with pytest.raises(SpecRejected):
        solve_picard(spec, lattice_for(spec, 4))


# --- solve_picard --------------------------------------------------------------

def test_picard_single_mode():
    spec = small_spec(["x"], ["x*x"], kappa=0.3)
    sol = solve_picard(spec, lattice_for(spec, 20))
    assert len(sol.trace) == 1 and sol.trace.deltas == [0.0]
    np.testing.assert_array_equal(sol.Y, solve_direct(spec, lattice_for(spec, 20)).Y)


def test_picard_deterministic_two_mode():
    spec = deterministic_two_mode()
    lat = lattice_for(spec, 10)
    sol = solve_picard(spec, lat, tol=1e-12)
    assert sol.Y[0, 0, 0] == pytest.approx(0.9, abs=1e-12)
    mask = lat.mask()
    assert np.max(np.abs(sol.Y[:, mask] - solve_direct(spec, lat).Y[:, mask])) <= 1e-12


def test_picard_no_convergence():
    spec, lat = random_spec(1, modes=3, steps=8)
    with pytest.raises(NoConvergence) as info:
        solve_picard(spec, lat, max_iter=1)
    assert len(info.value.trace) == 1


@pytest.mark.parametrize("seed", range(8))
def test_picard_monotone_and_agrees(seed):
    spec, lat = random_spec(seed)
    sol, iterates = solve_picard(spec, lat, keep_iterates=True)
    mask = lat.mask()
    for prev, cur in zip(iterates, iterates[1:]):
        assert np.min(cur[:, mask] - prev[:, mask]) >= -1e-12
    direct = solve_direct(spec, lat)
    assert np.max(np.abs(sol.Y[:, mask] - direct.Y[:, mask])) <= 10 * sol.tol
    np.testing.assert_allclose(sol.dK[:, mask[:-1, :-1]], direct.dK[:, mask[:-1, :-1]], atol=1e-9)


# --- invariants on solved fields ---------------------------------------------------

def _obstacle(sol, j):
    tables = NodeTables(sol.spec, sol.lattice)
    N = sol.lattice.N
    best = np.full((N + 1, N + 1), -np.inf)
    for i in sol.spec.switch_sets[j]:
        best = np.maximum(best, sol.Y[i] - tables.cost[(j, i)])
    return best


@pytest.mark.parametrize("seed", range(10))
def test_dominance_and_complementarity(seed):
    spec, lat = random_spec(seed)
    sol = solve_direct(spec, lat)
    N = lat.N
    inner = lat.mask()[:N, :N]
    for j in range(spec.modes):
        obst = _obstacle(sol, j)
        assert np.all(sol.Y[j][lat.mask()] >= obst[lat.mask()] - 1e-9)
        dk = sol.dK[j][inner]
        assert np.all(dk >= 0)
        pushed = dk > 0
        gap = (sol.Y[j, :N, :N] - obst[:N, :N])[inner]
        assert np.all(np.abs(gap[pushed]) <= 1e-9)


def test_no_reflection_without_switches():
    spec = small_spec(["0", "1", "x"], ["0", "0", "0"], {(0, 1): 0.2, (1, 2): 0.2, (0, 2): 0.3})
    sol = solve_direct(spec, lattice_for(spec, 12))
    assert spec.switch_sets[2] == ()
    assert np.all(sol.dK[2][lattice_for(spec, 12).mask()[:12, :12]] == 0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("field", ["psi", "xi"])
def test_comparison(seed, field):
    spec, lat = random_spec(seed + 100)
    base = solve_direct(spec, lat)
    seq = list(getattr(spec, field))
    seq[0] = BinOp("+", seq[0], Num(0.1))
    bumped = solve_direct(spec.replace(**{field: tuple(seq)}), lat)
    mask = lat.mask()
    assert np.min(bumped.Y[:, mask] - base.Y[:, mask]) >= -1e-12


@pytest.mark.parametrize("seed", range(5))
def test_translation(seed):
    spec, lat = random_spec(seed + 200)
    eps = 0.25
    shifted = spec.replace(xi=tuple(BinOp("+", e, Num(eps)) for e in spec.xi))
    a, b = solve_direct(spec, lat), solve_direct(shifted, lat)
    mask = lat.mask()
    np.testing.assert_allclose(b.Y[:, mask] - a.Y[:, mask], eps, atol=1e-12)
    inner = mask[:-1, :-1]
    np.testing.assert_allclose(b.Z[:, inner], a.Z[:, inner], atol=1e-9)
    np.testing.assert_allclose(b.dK[:, inner], a.dK[:, inner], atol=1e-12)
    assert extract_policy(spec, a) == extract_policy(shifted, b)


def test_lipschitz_ratio():
    spec = load_spec((FIXTURES / "two_mode.toml").read_text())
    lat = lattice_for(spec, 100)
    y0 = solve_direct(spec, lat).y0

    def bumped(eps):
        xi = list(spec.xi)
        xi[spec.start] = BinOp("+", xi[spec.start], Num(eps))
        return solve_direct(spec.replace(xi=tuple(xi)), lat).y0 - y0

    ratio = abs(bumped(2e-3)) / abs(bumped(1e-3))
    assert 1.8 <= ratio <= 2.2


def _max_layer_jump(sol, band=2.0):
    """Largest one-step change of Y over nodes with Brownian coordinate in [-band, band]."""
    Y, lat = sol.Y, sol.lattice
    worst = 0.0
    for n in range(lat.N):
        k = np.arange(n + 1)
        inside = np.abs((2 * k - n) * lat.sqrt_dt) <= band
        for nxt in (k + 1, k):
            step = np.abs(Y[:, n + 1, nxt] - Y[:, n, k])[:, inside]
            if step.size:
                worst = max(worst, float(step.max()))
    return worst


def test_jumps_shrink_under_refinement():
    spec = load_spec((FIXTURES / "two_mode.toml").read_text())
    jumps = [_max_layer_jump(solve_direct(spec, lattice_for(spec, N))) for N in (25, 50, 100, 200)]
    assert all(b < a for a, b in zip(jumps, jumps[1:]))


# --- CSV ----------------------------------------------------------------------------

def test_solution_csv_round_trip():
    spec, lat = random_spec(7, modes=2, steps=5)
    sol = solve_direct(spec, lat)
    rows = list(csv.DictReader(io.StringIO(sol.to_csv())))
    assert len(rows) == 2 * 21
    for row in rows:
        j, n, k = int(row["mode"]) - 1, int(row["n"]), int(row["k"])
        assert float(row["Y"]) == sol.Y[j, n, k]
        assert float(row["x"]) == lat.x[n, k]
        if n < lat.N:
            assert float(row["Z"]) == sol.Z[j, n, k]
        else:
            assert row["Z"] == "" and row["dK"] == ""
