"""Seeded generator of random problems that pass validation."""

import numpy as np

from knightswitch import AmbiguityModel, FactorModel, ProblemSpec, build_lattice, parse, validate


def _num(v):
    return f"{v:.4f}"


def _psi(rng):
    a, b, c = rng.uniform(-1, 1, 3)
    return parse(rng.choice([
        f"{_num(a)} + {_num(b)}*x",
        f"max({_num(a)}*x, {_num(b)})",
        f"{_num(a)}*abs(x - {_num(c)}) + {_num(b)}",
        f"min(x, {_num(a)}) - {_num(abs(b))}*t",
    ]))


def random_spec(seed, modes=None, steps=None, kappa=None, kind=None, finite=False):
    """Return ``(spec, lattice)``; defaults are drawn from the seed."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5)) if modes is None else modes
    N = int(rng.integers(4, 13)) if steps is None else steps
    kind = rng.choice(["arithmetic", "geometric"]) if kind is None else kind
    if kind == "geometric":
        factor = FactorModel("geometric", rng.uniform(0.5, 1.5), rng.uniform(-0.1, 0.1),
                             rng.uniform(0.1, 0.5))
    else:
        factor = FactorModel("arithmetic", rng.uniform(-1, 1), rng.uniform(-0.2, 0.2),
                             rng.uniform(0.2, 1.0))
    T = float(rng.uniform(0.5, 1.5))
    if finite:
        amb = AmbiguityModel.finite_set(np.round(rng.uniform(-0.8, 0.8, 3), 3))
    else:
        amb = AmbiguityModel.kappa_ignorance(rng.uniform(0, 1) if kappa is None else kappa)
    psi = tuple(_psi(rng) for _ in range(m))
    strike = rng.uniform(-0.5, 1.5)
    g = rng.choice([f"max(x - {_num(strike)}, 0)", f"{_num(rng.uniform(-1, 1))}*x"])
    xi = tuple(parse(f"{g} + {_num(d)}") for d in rng.uniform(0, 0.2, m))
    costs = {}
    for j in range(m):
        for i in range(m):
            if i != j:
                base = rng.uniform(0.25, 0.35)
                text = _num(base)
                if rng.random() < 0.5:
                    text += " + min(0.05, 0.02*abs(x))"
                costs[(j, i)] = parse(text)
    spec = ProblemSpec(T, m, psi, xi, costs, factor, amb, int(rng.integers(0, m)))
    lat = build_lattice(factor, T, N)
    report = validate(spec, lat)
    assert report.ok, str(report)
    return spec, lat


def small_spec(psi, xi, costs=None, kappa=0.0, model="arithmetic", x0=0.0, drift=0.0, vol=1.0,
               T=1.0, start=0):
    """Hand-built spec from expression strings; ``costs`` maps ``(j, i)`` to text."""
    costs = {key: parse(str(c)) for key, c in (costs or {}).items()}
    return ProblemSpec(T, len(psi), tuple(parse(str(p)) for p in psi),
                       tuple(parse(str(v)) for v in xi), costs,
                       FactorModel(model, x0, drift, vol),
                       AmbiguityModel.kappa_ignorance(kappa), start)


def deterministic_two_mode():
    """Idle mode 1, earning mode 2, switch cost 0.1 both ways."""
    return small_spec(["0", "1"], ["0", "0"], {(0, 1): "0.1", (1, 0): "0.1"})
