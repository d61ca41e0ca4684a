from __future__ import annotations

import itertools
import os
import random

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from contagionx.ledger import BankRecord, Exposure, ExposureSnapshot, car_value, is_below_threshold
from contagionx.stress import StressParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_snapshot(edges, sheets=None, default=(100, 400), date=None) -> ExposureSnapshot:
    """``edges``: (borrower, lender, weight); ``sheets``: id -> (K, O[, class])."""
    sheets = dict(sheets or {})
    ids = {b for e in edges for b in e[:2]} | set(sheets)
    banks = []
    for b in sorted(ids):
        sheet = sheets.get(b, default)
        cls = sheet[2] if len(sheet) > 2 else "deposit_taking"
        banks.append(BankRecord(b, sheet[0], sheet[1], cls))
    return ExposureSnapshot.from_parts(date, banks, [Exposure(*e) for e in edges])


def random_snapshot(rng: random.Random, n: int, p: float, *, thin: bool = True) -> ExposureSnapshot:
    """Random netted digraph; ``thin`` puts balance sheets near their thresholds.

    Without ``thin`` every bank survives the loss of all its interbank claims.
    """
    ids = [f"b{i:02d}" for i in range(n)]
    edges = []
    for a, b in itertools.combinations(ids, 2):
        if rng.random() < p:
            w = round(rng.uniform(1, 50), 2)
            edges.append((a, b, w) if rng.random() < 0.5 else (b, a, w))
    claims = {b: 0.0 for b in ids}
    for _, lender, w in edges:
        claims[lender] += w
    sheets = {}
    for b in ids:
        other = round(rng.uniform(20, 200), 2)
        car = rng.uniform(0.09, 0.2) if thin else rng.uniform(0.5, 1.0)
        cap = car * (0.2 * claims[b] + other) + (0 if thin else claims[b])
        cap = round(cap, 2)
        sheets[b] = (cap, other, "other" if rng.random() < 0.2 else "deposit_taking")
    return make_snapshot(edges, sheets)


@st.composite
def snapshots(draw, min_n=2, max_n=9):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(min_n, max_n))
    p = draw(st.floats(0.15, 0.7))
    return random_snapshot(random.Random(seed), n, p)


@pytest.fixture
def chain():
    # A -> B -> C with B and C each toppled by the full loss of the exposure they hold
    return make_snapshot(
        [("A", "B", 8), ("B", "C", 8)],
        {"A": (50, 100), "B": (12, 74), "C": (12, 74)},
    )


def random_inputs(rng: random.Random, *, supercritical: bool = False, max_deg: int = 3):
    """Random conditional tables over a small (k, l) grid.

    Subcritical draws keep every row sum of the contagion matrix below 1. The
    supercritical variant puts every source on targets with u >= 2 and v >= 0.6,
    so every row sum is at least 1.2 and so is the Perron root.
    """
    from contagionx.analytic import AnalyticInputs

    cells = sorted({(rng.randint(0, max_deg), rng.randint(0, max_deg)) for _ in range(rng.randint(2, 7))})
    if supercritical:
        cells = [(max(k, 1), l) for k, l in cells]
        targets = sorted({(rng.randint(2, max_deg + 1), rng.randint(0, max_deg)) for _ in range(3)})
        cells = sorted(set(cells) | set(targets))
    else:
        targets = cells
    weights = [rng.random() for _ in cells]
    P_IO = {c: w / sum(weights) for c, w in zip(cells, weights)}
    P_IO_In, P_IO_IO, v_In, v_IO = {}, {}, {}, {}
    for cell in cells:
        k, l = cell
        if l:
            rs = rng.sample(range(1, 6), rng.randint(1, 3))
            ws = [rng.random() + 0.1 for _ in rs]
            P_IO_In[cell] = {r: w / sum(ws) for r, w in zip(sorted(rs), ws)}
            v_In.update({(cell, r): rng.random() for r in rs})
        if k:
            picks = {(*rng.choice(targets), rng.randint(1, 4)) for _ in range(rng.randint(1, 4))}
            if supercritical:
                picks = {utr for utr in picks if utr[0] >= 2} or {(2, 0, 1)}
                if (2, 0) not in cells and (2, 0, 1) in picks:
                    P_IO.setdefault((2, 0), 0.0)
            ws = [rng.random() + 0.1 for _ in picks]
            P_IO_IO[cell] = {utr: w / sum(ws) for utr, w in zip(sorted(picks), ws)}
            for utr in picks:
                if supercritical:
                    v_IO[(cell, utr)] = rng.uniform(0.6, 1.0)
                else:
                    v_IO[(cell, utr)] = rng.random() / (2.0 * max(1, utr[0]) * len(picks))
    if supercritical:
        for (u, t, r) in {utr for row in P_IO_IO.values() for utr in row}:
            P_IO.setdefault((u, t), 0.0)
        for cell in list(P_IO):
            if cell not in P_IO_IO:
                P_IO_IO[cell] = {(2, 0, 1): 1.0}
                v_IO[(cell, (2, 0, 1))] = 1.0
                P_IO.setdefault((2, 0), 0.0)
        if (2, 0) not in P_IO_IO:
            P_IO_IO[(2, 0)] = {(2, 0, 1): 1.0}
            v_IO[((2, 0), (2, 0, 1))] = 1.0
    return AnalyticInputs(P_IO, P_IO_In, P_IO_IO, v_In, v_IO)


def fixed_point(snap, seed, params=StressParams()):
    """Brute-force oracle: iterate the default rule over the whole bank set until stable."""
    defaulted = {seed}
    while True:
        nxt = {seed}
        for b, rec in snap.banks.items():
            if b == seed:
                continue
            prov = sum(float(w) * params.provision_rate for borrower, w in snap.predecessors[b]
                       if borrower in defaulted)
            car = car_value(float(rec.capital), float(rec.interbank_claims), prov, float(rec.other_risk))
            if is_below_threshold(car, params.threshold(rec.threshold_class)):
                nxt.add(b)
        if nxt == defaulted:
            return frozenset(defaulted)
        defaulted = nxt
