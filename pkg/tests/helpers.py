"""Random formula / trace generators shared by the MTL tests."""

import numpy as np

from frarl import mtl

SIGNALS = ("x", "y", "z")
PREDICATES = {
    "p": mtl.Predicate("p", lambda r: r["x"]),
    "q": mtl.Predicate("q", lambda r: r["y"] - 0.5),
    "r": mtl.Predicate("r", lambda r: 1.0 - r["z"]),
}


def random_trace(rng, length=None, dt=0.1):
    n = int(rng.integers(1, 51)) if length is None else length
    return mtl.Trace(dt, {k: rng.normal(size=n) for k in SIGNALS})


def random_interval(rng, dt=0.1):
    lo = int(rng.integers(0, 6))
    if rng.random() < 0.25:
        return mtl.Interval(lo * dt, mtl.INF)
    return mtl.Interval(lo * dt, (lo + int(rng.integers(0, 8))) * dt)


def random_formula(rng, depth=4):
    leaf = depth <= 1 or rng.random() < 0.25
    if leaf:
        if rng.random() < 0.1:
            return mtl.TrueF()
        name = ("p", "q", "r")[int(rng.integers(3))]
        return mtl.Atom(PREDICATES[name])
    kind = int(rng.integers(8))
    sub = lambda: random_formula(rng, depth - 1)
    if kind == 0:
        return mtl.Not(sub())
    if kind == 1:
        return mtl.Or(sub(), sub())
    if kind == 2:
        return mtl.And(sub(), sub())
    if kind == 3:
        return mtl.Until(random_interval(rng), sub(), sub())
    if kind == 4:
        return mtl.Globally(sub())
    if kind == 5:
        return mtl.GloballyI(random_interval(rng), sub())
    if kind == 6:
        return mtl.EventuallyI(random_interval(rng), sub())
    return mtl.Not(sub())


# acceptance criterion number -> PASS/FAIL line, printed in the terminal summary
ACCEPTANCE = {}
