import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from knightswitch import AmbiguityModel, FactorModel, build_lattice, controlled_up_probability
from knightswitch.errors import BadStepCount, DriftOutOfSet, RangeError, StepTooCoarse

STD = FactorModel("arithmetic", 0.0, 0.0, 1.0)


def test_arithmetic_terminal_layer():
    lat = build_lattice(STD, 1.0, 2)
    np.testing.assert_allclose(lat.layer(2), [-math.sqrt(2), 0, math.sqrt(2)], atol=1e-15)


def test_geometric_node():
    lat = build_lattice(FactorModel("geometric", 1.0, 0.0, 0.2), 1.0, 1)
    assert lat.x[1, 1] == pytest.approx(math.exp(0.18), rel=1e-15)


def test_zero_steps():
    with pytest.raises(BadStepCount):
        build_lattice(STD, 1.0, 0)


def test_factor_ranges():
    with pytest.raises(RangeError):
        FactorModel("arithmetic", 0.0, 0.0, -1.0)
    with pytest.raises(RangeError):
        FactorModel("geometric", 0.0, 0.0, 1.0)


def test_shape_and_mask():
    lat = build_lattice(STD, 2.0, 5)
    assert lat.x.shape == (6, 6)
    assert all(lat.node_count(n) == n + 1 for n in range(6))
    assert np.isnan(lat.x[2, 3]) and not lat.mask()[2, 3]
    assert lat.times[-1] == 2.0
    assert not lat.x.flags.writeable


def test_up_probability():
    lat = build_lattice(STD, 1.0, 100)
    amb = AmbiguityModel.kappa_ignorance(0.5)
    assert controlled_up_probability(lat, amb, 0.0) == 0.5
    assert controlled_up_probability(lat, amb, -0.5) == pytest.approx(0.475, abs=1e-15)
    with pytest.raises(StepTooCoarse):
        controlled_up_probability(lat, AmbiguityModel.kappa_ignorance(20), 20)
    with pytest.raises(DriftOutOfSet):
        controlled_up_probability(lat, amb, 0.6)


@given(st.sampled_from(["arithmetic", "geometric"]), st.floats(0.1, 3), st.floats(-1, 1),
       st.floats(0.05, 2), st.integers(1, 30))
def test_nodes_follow_brownian_coordinate(kind, x0, a, sigma, N):
    # every node is a function of (t_n, (2k - n) sqrt(dt)) only, so paths recombine
    lat = build_lattice(FactorModel(kind, x0, a, sigma), 1.0, N)
    n, k = np.nonzero(lat.mask())
    t = lat.times[n]
    x = lat.x[n, k]
    if kind == "geometric":
        assert np.all(x > 0)
        w = (np.log(x / x0) - (a - sigma**2 / 2) * t) / sigma
    else:
        w = (x - x0 - a * t) / sigma
    np.testing.assert_allclose(w, (2 * k - n) * lat.sqrt_dt, atol=1e-9)


@given(st.integers(1, 50), st.floats(0.1, 3))
def test_moment_match(N, T):
    lat = build_lattice(STD, T, N)
    steps = np.array([lat.sqrt_dt, -lat.sqrt_dt])
    assert steps.mean() == 0
    assert np.mean(steps**2) == pytest.approx(lat.dt, rel=1e-14)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-1, 1), st.integers(4, 400))
def test_exact_drift_identity(y_up, y_dn, frac, N):
    lat = build_lattice(STD, 1.0, N)
    amb = AmbiguityModel.kappa_ignorance(1.0)
    u = frac
    p = controlled_up_probability(lat, amb, u)
    lhs = p * y_up + (1 - p) * y_dn - (y_up + y_dn) / 2
    rhs = lat.dt * u * (y_up - y_dn) / (2 * lat.sqrt_dt)
    assert lhs == pytest.approx(rhs, abs=1e-14)
