"""Synthetic exposure snapshots with bow-tie structure and tunable disassortativity.

Generation steps: assign components, draw stub counts, wire stubs with a
configuration model (no self-loops, duplicate or antiparallel pairs), rewire with
degree-preserving swaps toward negative degree correlation, draw exposures, and
back out capital so each bank starts at a sampled CAR.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import CalibrationError, GenerationError, InputValidationError
from .ledger import INTERBANK_RISK_WEIGHT, BankRecord, Exposure, ExposureSnapshot, ThresholdClass, money
from .topology import Component, bow_tie_decompose

COMPONENT_ORDER = (Component.IN, Component.OUT, Component.INOUT, Component.ISOLATED)
MAX_RESTARTS = 100


@dataclass
class DegreeLaw:
    """``poisson``: 1 + Poisson(mean - 1); ``powerlaw``: P(d) ~ d^-exponent on 1..cap."""

    kind: str = "poisson"
    mean: float = 3.0
    exponent: float = 2.5
    cap: int = 40

    def validate(self, n_banks):
        if self.kind not in ("poisson", "powerlaw"):
            raise InputValidationError(f"unknown degree law {self.kind!r}")
        if self.kind == "poisson" and self.mean < 1:
            raise InputValidationError("poisson degree mean must be >= 1")
        if self.cap >= n_banks or self.cap < 1:
            raise InputValidationError(f"degree cap {self.cap} must be in [1, n_banks)")

    def expected(self) -> float:
        if self.kind == "poisson":
            return self.mean
        return powerlaw_mean(self.exponent, self.cap)

    def sample(self, rng, size) -> np.ndarray:
        if size == 0:
            return np.zeros(0, dtype=int)
        if self.kind == "poisson":
            d = 1 + rng.poisson(self.mean - 1.0, size=size)
        else:
            ks = np.arange(1, self.cap + 1)
            p = ks.astype(float) ** -self.exponent
            d = rng.choice(ks, size=size, p=p / p.sum())
        return np.minimum(d, self.cap).astype(int)


def powerlaw_mean(exponent: float, cap: int) -> float:
    ks = np.arange(1, cap + 1, dtype=float)
    w = ks ** -exponent
    return float((ks * w).sum() / w.sum())


@dataclass
class ExposureLaw:
    kind: str = "lognormal"
    mu: float = 4.6
    sigma: float = 1.0
    alpha: float = 1.8
    minimum: float = 10.0

    def sample(self, rng, size) -> np.ndarray:
        if self.kind == "lognormal":
            return rng.lognormal(self.mu, self.sigma, size=size)
        if self.kind == "pareto":
            return self.minimum * (1.0 + rng.pareto(self.alpha, size=size))
        raise InputValidationError(f"unknown exposure law {self.kind!r}")


@dataclass
class GeneratorConfig:
    n_banks: int = 500
    component_fractions: tuple = (0.65, 0.15, 0.18, 0.02)  # In, Out, InOut, Isolated
    out_degree_law: DegreeLaw = field(default_factory=DegreeLaw)
    in_degree_law: DegreeLaw = field(default_factory=lambda: DegreeLaw(mean=1.5))
    disassortativity_strength: float = 0.0
    # InOut (core) banks draw both degrees scaled by this factor
    inout_degree_scale: float = 1.0
    exposure_law: ExposureLaw = field(default_factory=ExposureLaw)
    # exposure size multiplier (borrower out-degree / mean out-degree) ** exponent
    weight_degree_exponent: float = 0.0
    target_car_law: tuple = (0.147, 0.03)  # mean, spread
    # non-interbank risk-weighted assets relative to (claims + median exposure)
    other_risk_ratio: float = 10.0
    other_risk_sigma: float = 0.5
    other_class_fraction: float = 0.1
    date: str = "2013-01-01"
    seed: int = 0

    def validate(self):
        f = self.component_fractions
        if len(f) != 4 or any(x < 0 for x in f) or abs(sum(f) - 1.0) > 1e-9:
            raise InputValidationError(f"component fractions must be 4 non-negative values summing to 1: {f}")
        if self.n_banks < 1:
            raise InputValidationError("n_banks must be >= 1")
        self.out_degree_law.validate(self.n_banks)
        self.in_degree_law.validate(self.n_banks)
        if not 0.0 <= self.disassortativity_strength <= 1.0:
            raise InputValidationError("disassortativity_strength must be in [0, 1]")
        if self.inout_degree_scale <= 0:
            raise InputValidationError("inout_degree_scale must be > 0")
        mean, spread = self.target_car_law
        if spread < 0:
            raise InputValidationError("target CAR spread must be >= 0")
        for cls in ThresholdClass:
            if mean <= cls.threshold:
                raise InputValidationError(f"target CAR mean {mean} must exceed threshold {cls.threshold}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["component_fractions"] = list(self.component_fractions)
        d["target_car_law"] = list(self.target_car_law)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InputValidationError(f"unknown config keys: {sorted(unknown)}")
        if "out_degree_law" in d:
            d["out_degree_law"] = DegreeLaw(**d["out_degree_law"])
        if "in_degree_law" in d:
            d["in_degree_law"] = DegreeLaw(**d["in_degree_law"])
        if "exposure_law" in d:
            d["exposure_law"] = ExposureLaw(**d["exposure_law"])
        for key in ("component_fractions", "target_car_law"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "GeneratorConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def replace(self, **changes) -> "GeneratorConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def calibrated(cls, seed: int = 0, **overrides) -> "GeneratorConfig":
        """Preset with a dense disassortative core and heavy core exposures.

        Cascades stay subcritical, core seeds are riskier than periphery seeds and
        degree correlations visibly matter for the branching estimate.
        """
        base = cls(disassortativity_strength=0.5, inout_degree_scale=2.5,
                   weight_degree_exponent=1.0, other_risk_ratio=30.0, seed=seed)
        return base.replace(**overrides)


def _component_counts(n, fractions):
    raw = [f * n for f in fractions]
    counts = [int(math.floor(x)) for x in raw]
    order = sorted(range(4), key=lambda i: -(raw[i] - counts[i]))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _balance(out_deg, in_deg, out_cap, in_cap, rng):
    """Add stubs on the short side until both stub totals match."""
    diff = int(out_deg.sum() - in_deg.sum())
    side, cap = (in_deg, in_cap) if diff > 0 else (out_deg, out_cap)
    for _ in range(abs(diff)):
        room = np.flatnonzero(side < cap)
        if len(room) == 0:
            raise GenerationError("cannot balance stub totals under the degree caps")
        side[rng.choice(room)] += 1


def _match(sources, targets, rng):
    """Pair out-stubs with shuffled in-stubs; repair bad pairs by random swaps."""
    tg = targets.copy()
    rng.shuffle(tg)
    edges = set()
    good, bad = [], []
    for i, (a, b) in enumerate(zip(sources, tg)):
        if a != b and (a, b) not in edges and (b, a) not in edges:
            edges.add((a, b))
            good.append(i)
        else:
            bad.append(i)
    for i in bad:
        a = sources[i]
        for _ in range(200):
            if not good:
                return None
            gi = int(rng.integers(len(good)))
            j = good[gi]
            c, d = sources[j], tg[j]
            b = tg[i]
            edges.discard((c, d))
            ok = (a != d and c != b and a != c
                  and (a, d) not in edges and (d, a) not in edges
                  and (c, b) not in edges and (b, c) not in edges and (a, d) != (c, b))
            if ok:
                edges.add((a, d))
                edges.add((c, b))
                tg[i], tg[j] = d, b
                good.append(i)
                break
            edges.add((c, d))
        else:
            return None
    return [(int(sources[i]), int(tg[i])) for i in range(len(sources))]


def degree_correlation(edges, degree) -> float:
    """Pearson correlation of (source degree, target degree) over edges."""
    if len(edges) < 2:
        return 0.0
    x = np.array([degree[a] for a, _ in edges], dtype=float)
    y = np.array([degree[b] for _, b in edges], dtype=float)
    if x.std() == 0 or y.std() == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def disassortative_rewire(edges, degree, strength, rng, budget=None):
    """Degree-preserving swaps (a->b, c->d) -> (a->d, c->b) that lower the correlation.

    Swaps keep every out- and in-degree; only the mixed moment sum x_s * y_t
    changes, so acceptance needs the four endpoint degrees only.
    """
    edges = list(edges)
    m = len(edges)
    if m < 2 or strength <= 0:
        return edges
    budget = 20 * m if budget is None else budget
    present = set(edges)
    x = np.array([degree[a] for a, _ in edges], dtype=float)
    y = np.array([degree[b] for _, b in edges], dtype=float)
    if x.std() == 0 or y.std() == 0:
        return edges
    sxy = float((x * y).sum())
    mx, my = x.mean(), y.mean()
    norm = m * x.std() * y.std()
    target = -strength

    def corr():
        return (sxy - m * mx * my) / norm

    picks = rng.integers(m, size=(budget, 2))
    for i, j in picks:
        if corr() <= target:
            break
        if i == j:
            continue
        a, b = edges[i]
        c, d = edges[j]
        if a == c or b == d or a == d or c == b:
            continue
        if (a, d) in present or (d, a) in present or (c, b) in present or (b, c) in present:
            continue
        delta = degree[a] * degree[d] + degree[c] * degree[b] - degree[a] * degree[b] - degree[c] * degree[d]
        if delta >= 0:
            continue
        present.difference_update(((a, b), (c, d)))
        present.update(((a, d), (c, b)))
        edges[i], edges[j] = (a, d), (c, b)
        sxy += delta
    return edges


def generate(config: GeneratorConfig) -> ExposureSnapshot:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_banks
    width = max(4, len(str(n - 1)))
    ids = [f"B{i:0{width}d}" for i in range(n)]
    counts = _component_counts(n, config.component_fractions)
    comp = np.repeat(np.arange(4), counts)
    rng.shuffle(comp)
    is_in, is_out, is_io = comp == 0, comp == 1, comp == 2

    borrowers = np.flatnonzero(is_out | is_io)
    lenders = np.flatnonzero(is_in | is_io)
    out_deg = np.zeros(n, dtype=int)
    in_deg = np.zeros(n, dtype=int)
    out_cap = min(config.out_degree_law.cap, max(1, len(lenders) - 1))
    in_cap = min(config.in_degree_law.cap, max(1, len(borrowers) - 1))
    if len(borrowers) and len(lenders):
        out_deg[borrowers] = config.out_degree_law.sample(rng, len(borrowers))
        in_deg[lenders] = config.in_degree_law.sample(rng, len(lenders))
        if config.inout_degree_scale != 1.0:
            scaled = np.rint(config.inout_degree_scale * np.vstack([out_deg[is_io], in_deg[is_io]]))
            out_deg[is_io], in_deg[is_io] = np.maximum(scaled, 1).astype(int)
        np.minimum(out_deg, out_cap, out=out_deg)
        np.minimum(in_deg, in_cap, out=in_deg)
        caps_out = np.where(is_out | is_io, out_cap, 0)
        caps_in = np.where(is_in | is_io, in_cap, 0)
        _balance(out_deg, in_deg, caps_out, caps_in, rng)

    pairs = []
    if out_deg.sum():
        sources = np.repeat(np.arange(n), out_deg)
        targets = np.repeat(np.arange(n), in_deg)
        for _ in range(MAX_RESTARTS):
            pairs = _match(sources, targets, rng)
            if pairs is not None:
                break
        else:
            raise GenerationError(f"stub matching infeasible after {MAX_RESTARTS} restarts")

    total_deg = out_deg + in_deg
    pairs = disassortative_rewire(pairs, total_deg, config.disassortativity_strength, rng)
    pairs.sort()

    raw = config.exposure_law.sample(rng, len(pairs))
    if config.weight_degree_exponent and pairs:
        src = np.array([a for a, _ in pairs])
        rel = out_deg[src] / out_deg[borrowers].mean()
        raw = raw * rel ** config.weight_degree_exponent
    weights = [money(w) for w in raw]
    weights = [w if w > 0 else money("0.01") for w in weights]
    claims = np.zeros(n)
    for (a, b), w in zip(pairs, weights):
        claims[b] += float(w)
    base = float(np.median([float(w) for w in weights])) if weights else 1.0

    sig = config.other_risk_sigma
    ratio = config.other_risk_ratio * rng.lognormal(-sig * sig / 2, sig, size=n)
    other = ratio * (claims + base)
    classes = np.where(rng.random(n) < config.other_class_fraction, 1, 0)
    thr = np.array([0.10, 0.12])[classes]
    mean, spread = config.target_car_law
    head = mean - thr if spread == 0 else _headroom(rng, mean - thr, spread)
    car = thr + np.maximum(head, 1e-4)
    capital = car * (INTERBANK_RISK_WEIGHT * claims + other)

    cls_of = (ThresholdClass.DEPOSIT_TAKING, ThresholdClass.OTHER)
    banks = [BankRecord(ids[i], money(capital[i]), money(other[i]), cls_of[classes[i]]) for i in range(n)]
    edges = [Exposure(ids[a], ids[b], w) for (a, b), w in zip(pairs, weights)]
    return ExposureSnapshot.from_parts(dt.date.fromisoformat(config.date), banks, edges)


def _headroom(rng, means, spread):
    """Gamma headroom above each bank's threshold with the given per-bank mean."""
    means = np.asarray(means, dtype=float)
    shape = (means / spread) ** 2
    return rng.gamma(shape, spread ** 2 / means)


@dataclass
class CalibrationTargets:
    component_fractions: tuple = (0.65, 0.15, 0.18, 0.02)
    mean_out_degree: float = 3.0  # over Out and InOut banks
    mean_in_degree: float | None = None  # over In and InOut banks
    mean_car: float = 0.147
    fraction_tol: float = 0.03
    degree_rtol: float = 0.10
    car_tol: float = 0.01


def measure(snapshot: ExposureSnapshot) -> dict:
    """Statistics that calibration targets: component shares, mean degrees, mean CAR."""
    from .ledger import compute_car

    lab = bow_tie_decompose(snapshot)
    n = max(1, len(snapshot.banks))
    counts = lab.counts()
    borrowers = [b for b, c in lab.labels.items() if c in (Component.OUT, Component.INOUT)]
    lenders = [b for b, c in lab.labels.items() if c in (Component.IN, Component.INOUT)]
    cars = [compute_car(b) for b in snapshot.banks.values()]
    return {
        "component_fractions": tuple(counts[c] / n for c in COMPONENT_ORDER),
        "mean_out_degree": (sum(snapshot.out_degree(b) for b in borrowers) / len(borrowers)) if borrowers else 0.0,
        "mean_in_degree": (sum(snapshot.in_degree(b) for b in lenders) / len(lenders)) if lenders else 0.0,
        "mean_car": sum(cars) / len(cars) if cars else 0.0,
    }


def _residuals(targets: CalibrationTargets, got: dict) -> dict:
    res = {f"fraction_{c.value}": got["component_fractions"][i] - targets.component_fractions[i]
           for i, c in enumerate(COMPONENT_ORDER)}
    res["mean_out_degree"] = got["mean_out_degree"] / targets.mean_out_degree - 1.0
    if targets.mean_in_degree is not None:
        res["mean_in_degree"] = got["mean_in_degree"] / targets.mean_in_degree - 1.0
    res["mean_car"] = got["mean_car"] - targets.mean_car
    return res


def _within(targets, res) -> bool:
    for key, val in res.items():
        tol = (targets.fraction_tol if key.startswith("fraction") else
               targets.car_tol if key == "mean_car" else targets.degree_rtol)
        if abs(val) > tol:
            return False
    return True


def _set_mean(law: DegreeLaw, mean: float) -> DegreeLaw:
    if law.kind == "poisson":
        return dataclasses.replace(law, mean=max(1.0, mean))
    lo, hi = powerlaw_mean(8.0, law.cap), powerlaw_mean(0.01, law.cap)
    mean = min(max(mean, lo * 1.0001), hi * 0.9999)
    exponent = brentq(lambda a: powerlaw_mean(a, law.cap) - mean, 0.01, 8.0)
    return dataclasses.replace(law, exponent=float(exponent))


def calibrate_to_reference(targets: CalibrationTargets, base: GeneratorConfig | None = None,
                           max_rounds: int = 25) -> GeneratorConfig:
    """Bounded search over degree-law and CAR parameters until targets are met."""
    f = targets.component_fractions
    if len(f) != 4 or abs(sum(f) - 1.0) > 1e-6:
        raise InputValidationError("target component fractions must sum to 1")
    borrow_share, lend_share = f[1] + f[2], f[0] + f[2]
    if targets.mean_in_degree is not None and borrow_share > 0 and lend_share > 0:
        implied = targets.mean_out_degree * borrow_share / lend_share
        if abs(implied / targets.mean_in_degree - 1.0) > targets.degree_rtol:
            raise InputValidationError(
                f"inconsistent degree targets: out {targets.mean_out_degree} implies in {implied:.3g}")
    cfg = (base or GeneratorConfig()).replace(component_fractions=tuple(f))
    in_mean = targets.mean_in_degree
    if in_mean is None:
        in_mean = targets.mean_out_degree * borrow_share / lend_share if lend_share else 1.0
    out_goal, car_goal = targets.mean_out_degree, targets.mean_car
    cfg = cfg.replace(out_degree_law=_set_mean(cfg.out_degree_law, out_goal),
                      in_degree_law=_set_mean(cfg.in_degree_law, max(1.0, in_mean)),
                      target_car_law=(car_goal, cfg.target_car_law[1]))
    best, best_res = None, None
    for _ in range(max_rounds):
        try:
            got = measure(generate(cfg))
        except GenerationError as exc:
            if best_res is None:
                best_res = {"mean_out_degree": math.inf}
            raise CalibrationError(f"generation failed during calibration ({exc}); best residuals {best_res}",
                                   residuals=best_res) from exc
        res = _residuals(targets, got)
        score = max(abs(v) for v in res.values())
        if best_res is None or score < max(abs(v) for v in best_res.values()):
            best, best_res = cfg, res
        if _within(targets, res):
            return cfg
        out_goal *= targets.mean_out_degree / max(got["mean_out_degree"], 1e-9)
        car_goal += targets.mean_car - got["mean_car"]
        floor = max(c.threshold for c in ThresholdClass) + 1e-3
        cfg = cfg.replace(out_degree_law=_set_mean(cfg.out_degree_law, out_goal),
                          target_car_law=(max(car_goal, floor), cfg.target_car_law[1]))
    raise CalibrationError(f"targets not reached in {max_rounds} rounds; best residuals {best_res}",
                           residuals=best_res)
