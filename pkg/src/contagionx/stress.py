"""Single-seed default cascades and sweeps over seeds.

A cascade starts with one bank defaulting by fiat. In each round every lender of
the banks defaulted so far provisions its exposure to them, and the lenders whose
CAR falls strictly below their regulatory minimum default in the next round.
Defaults are absorbing, so the final set does not depend on processing order.
"""
from __future__ import annotations

import math
import os
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import DegenerateBalanceSheetError, InputValidationError
from .ledger import (Exposure, ExposureSnapshot, ThresholdClass, car_value, is_below_threshold,
                     provision_amount)
from .topology import (BowTieLabeling, Component, ConditionalTables, bow_tie_decompose,
                       conditional_tables, count_triangles_directed)

CAR_BINS = ((None, 0.10, "<10"), (0.10, 0.12, "10-12"), (0.12, 0.14, "12-14"),
            (0.14, 0.16, "14-16"), (0.16, None, ">=16"))


@dataclass(frozen=True)
class StressParams:
    provision_rate: float = 1.0
    thresholds: Mapping[ThresholdClass, float] | None = None

    def __post_init__(self):
        if not 0 < self.provision_rate <= 1:
            raise InputValidationError(f"provision_rate must be in (0, 1], got {self.provision_rate}")

    def threshold(self, cls: ThresholdClass) -> float:
        if self.thresholds and cls in self.thresholds:
            return float(self.thresholds[cls])
        return cls.threshold

    def scaled(self, factor: float) -> "StressParams":
        """Same run with every threshold multiplied by ``factor``."""
        return StressParams(self.provision_rate,
                            {c: self.threshold(c) * factor for c in ThresholdClass})


class CompiledSnapshot:
    """Float arrays and adjacency lists for fast repeated cascades."""

    def __init__(self, snapshot: ExposureSnapshot, params: StressParams = StressParams()):
        self.ids = list(snapshot.banks)
        self.index = {b: i for i, b in enumerate(self.ids)}
        banks = snapshot.banks.values()
        self.K = [float(b.capital) for b in banks]
        self.A = [float(b.interbank_claims) for b in banks]
        self.O = [float(b.other_risk) for b in banks]
        self.thr = [params.threshold(b.threshold_class) for b in banks]
        self.out = [[] for _ in self.ids]
        for e in snapshot.edges:
            prov = float(provision_amount(e.weight, params.provision_rate))
            self.out[self.index[e.borrower_id]].append((self.index[e.lender_id], prov))
        self.car0 = [self._car_or_nan(i, 0.0) for i in range(len(self.ids))]
        self.pre_breached = [i for i, c in enumerate(self.car0)
                             if not math.isnan(c) and is_below_threshold(c, self.thr[i])]

    def _car_or_nan(self, i, prov):
        try:
            return car_value(self.K[i], self.A[i], prov, self.O[i])
        except DegenerateBalanceSheetError:
            return math.nan

    def car(self, i: int, prov: float) -> float:
        try:
            return car_value(self.K[i], self.A[i], prov, self.O[i])
        except DegenerateBalanceSheetError as exc:
            raise DegenerateBalanceSheetError(f"bank {self.ids[i]}: {exc}", self.ids[i]) from None

    def cascade(self, seed: int) -> tuple[list[list[int]], dict[int, float]]:
        """Synchronous rounds from ``seed``; returns (rounds, provisions)."""
        defaulted = bytearray(len(self.ids))
        defaulted[seed] = 1
        prov: dict[int, float] = {}
        rounds = [[seed]]
        frontier = [seed]
        extra = self.pre_breached
        while True:
            touched = set()
            for b in frontier:
                for j, p in self.out[b]:
                    if not defaulted[j]:
                        prov[j] = prov.get(j, 0.0) + p
                        touched.add(j)
            if extra:
                touched.update(j for j in extra if not defaulted[j])
                extra = ()
            new = sorted(j for j in touched
                         if is_below_threshold(self.car(j, prov.get(j, 0.0)), self.thr[j]))
            if not new:
                return rounds, prov
            for j in new:
                defaulted[j] = 1
            rounds.append(new)
            frontier = new


@dataclass(frozen=True)
class CascadeResult:
    seed_id: str
    rounds: tuple[tuple[str, ...], ...]
    cluster_size: int
    final_cars: dict[str, float]
    motif_counts: tuple[int, int]
    max_depth: int

    @property
    def defaulted(self) -> frozenset:
        return frozenset(b for r in self.rounds for b in r)


def _result(compiled: CompiledSnapshot, snapshot: ExposureSnapshot, seed: int,
            with_cars: bool = True) -> CascadeResult:
    rounds, prov = compiled.cascade(seed)
    ids = compiled.ids
    named = tuple(tuple(ids[i] for i in r) for r in rounds)
    cars = {}
    if with_cars:
        cars = {b: compiled.car0[i] for i, b in enumerate(ids)}
        for i, p in prov.items():
            cars[ids[i]] = compiled._car_or_nan(i, p)
    members = [b for r in named for b in r]
    motifs = count_triangles_directed(members, snapshot) if len(members) >= 3 else (0, 0)
    return CascadeResult(
        seed_id=ids[seed],
        rounds=named,
        cluster_size=sum(len(r) for r in rounds[1:]),
        final_cars=cars,
        motif_counts=motifs,
        max_depth=len(rounds) - 1,
    )


def run_cascade(snapshot: ExposureSnapshot, seed_id: str, params: StressParams = StressParams(),
                compiled: CompiledSnapshot | None = None) -> CascadeResult:
    compiled = compiled or CompiledSnapshot(snapshot, params)
    if seed_id not in compiled.index:
        raise InputValidationError(f"unknown seed bank {seed_id!r}")
    return _result(compiled, snapshot, compiled.index[seed_id])


def cascade_in_order(snapshot: ExposureSnapshot, seed_id: str, order: Sequence[str],
                     params: StressParams = StressParams()) -> frozenset:
    """Bank-at-a-time variant: scan ``order`` repeatedly, defaulting banks immediately.

    Used to check that the final defaulted set is independent of processing order.
    """
    if seed_id not in snapshot.banks:
        raise InputValidationError(f"unknown seed bank {seed_id!r}")
    defaulted = {seed_id}
    prov = defaultdict(float)
    for lender, w in snapshot.successors[seed_id]:
        prov[lender] += float(provision_amount(w, params.provision_rate))
    changed = True
    while changed:
        changed = False
        for b in order:
            if b in defaulted:
                continue
            rec = snapshot.banks[b]
            car = car_value(float(rec.capital), float(rec.interbank_claims), prov[b], float(rec.other_risk))
            if is_below_threshold(car, params.threshold(rec.threshold_class)):
                defaulted.add(b)
                for lender, w in snapshot.successors[b]:
                    if lender not in defaulted:
                        prov[lender] += float(provision_amount(w, params.provision_rate))
                changed = True
    return frozenset(defaulted)


def edge_vulnerability(snapshot: ExposureSnapshot, edge, params: StressParams = StressParams()) -> bool:
    """Does provisioning this single exposure alone push the lender below its minimum?"""
    if isinstance(edge, Exposure):
        borrower, lender = edge.borrower_id, edge.lender_id
    else:
        borrower, lender = edge
    try:
        w = snapshot.weight_of[(borrower, lender)]
    except KeyError:
        raise InputValidationError(f"edge {borrower}->{lender} not in snapshot") from None
    rec = snapshot.banks[lender]
    car = car_value(float(rec.capital), float(rec.interbank_claims),
                    float(provision_amount(w, params.provision_rate)), float(rec.other_risk))
    return is_below_threshold(car, params.threshold(rec.threshold_class))


def vulnerable_edges(snapshot: ExposureSnapshot, params: StressParams = StressParams()) -> set[tuple[str, str]]:
    return {(e.borrower_id, e.lender_id) for e in snapshot.edges if edge_vulnerability(snapshot, e, params)}


def estimate_vulnerability_tables(snapshot: ExposureSnapshot, labeling: BowTieLabeling | None = None,
                                  params: StressParams = StressParams(),
                                  degree_cap: int | None = None) -> ConditionalTables:
    """Conditional degree tables with per-cell vulnerable-edge fractions filled in."""
    labeling = labeling or bow_tie_decompose(snapshot)
    vul = vulnerable_edges(snapshot, params)
    return conditional_tables(snapshot, labeling, lambda e: (e.borrower_id, e.lender_id) in vul,
                              degree_cap=degree_cap)


@dataclass(frozen=True)
class SeedSummary:
    seed_id: str
    component: str
    out_degree: int
    car: float
    cluster_size: int
    max_depth: int
    t1: int
    t2: int


def out_degree_bin(d: int) -> str:
    if d <= 10:
        return str(d)
    return "11-20" if d <= 20 else "21+"


OUT_DEGREE_BIN_ORDER = [str(i) for i in range(11)] + ["11-20", "21+"]


def car_bin(car: float) -> str:
    for lo, hi, label in CAR_BINS:
        if (lo is None or car >= lo) and (hi is None or car < hi):
            return label
    return CAR_BINS[-1][2]


@dataclass
class SweepReport:
    seeds: list[SeedSummary]
    histogram: dict[int, float]
    cascade_rate: dict[str, float]
    mean_size_by_out_degree: dict[str, tuple[int, float]]
    mean_size_by_car: dict[str, tuple[int, float]]
    mean_system_car: float
    params: dict = field(default_factory=dict)

    def mean_cluster_size(self, component: str | None = None) -> float:
        sizes = [s.cluster_size for s in self.seeds if component is None or s.component == component]
        return sum(sizes) / len(sizes) if sizes else 0.0

    @property
    def motif_totals(self) -> tuple[int, int]:
        return sum(s.t1 for s in self.seeds), sum(s.t2 for s in self.seeds)

    def to_json(self) -> dict:
        return {
            "params": self.params,
            "n_seeds": len(self.seeds),
            "mean_cluster_size": self.mean_cluster_size(),
            "mean_system_car": self.mean_system_car,
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "cascade_rate": self.cascade_rate,
            "mean_size_by_out_degree": {k: {"count": c, "mean": m}
                                        for k, (c, m) in self.mean_size_by_out_degree.items()},
            "mean_size_by_car": {k: {"count": c, "mean": m} for k, (c, m) in self.mean_size_by_car.items()},
            "motifs": dict(zip(("T1", "T2"), self.motif_totals)),
            "max_depth": max((s.max_depth for s in self.seeds), default=0),
            "seeds": [{**asdict(s), "car": None if math.isnan(s.car) else s.car} for s in self.seeds],
        }

    def histogram_csv(self) -> str:
        lines = ["size,probability"]
        lines += [f"{k},{v:.12g}" for k, v in self.histogram.items()]
        return "\n".join(lines) + "\n"


def default_seeds(labeling: BowTieLabeling) -> list[str]:
    return [b for b, c in labeling.labels.items() if c in (Component.OUT, Component.INOUT)]


def _run_chunk(compiled, snapshot, seeds):
    out = []
    for i in seeds:
        r = _result(compiled, snapshot, i, with_cars=False)
        out.append((r.cluster_size, r.max_depth, r.motif_counts))
    return out


def _grouped_means(pairs, order):
    acc = defaultdict(list)
    for key, size in pairs:
        acc[key].append(size)
    return {k: (len(acc[k]), sum(acc[k]) / len(acc[k])) for k in order if k in acc}


def sweep(snapshot: ExposureSnapshot, seed_set: Iterable[str] | None = None,
          params: StressParams = StressParams(), workers: int = 1,
          labeling: BowTieLabeling | None = None) -> SweepReport:
    """Independent cascades from each seed (default: all Out and InOut banks)."""
    labeling = labeling or bow_tie_decompose(snapshot)
    compiled = CompiledSnapshot(snapshot, params)
    seeds = sorted(default_seeds(labeling) if seed_set is None else set(seed_set))
    unknown = [s for s in seeds if s not in compiled.index]
    if unknown:
        raise InputValidationError(f"unknown seed banks: {', '.join(unknown)}")
    idx = [compiled.index[s] for s in seeds]

    if workers > 1 and len(idx) > 4 * workers:
        chunks = [idx[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [compiled] * workers, [snapshot] * workers, chunks))
        by_seed = {}
        for chunk, part in zip(chunks, parts):
            by_seed.update(zip(chunk, part))
        raw = [by_seed[i] for i in idx]
    else:
        raw = _run_chunk(compiled, snapshot, idx)

    summaries = []
    for sid, i, (size, depth, (t1, t2)) in zip(seeds, idx, raw):
        summaries.append(SeedSummary(sid, labeling.labels[sid].value, len(compiled.out[i]),
                                     compiled.car0[i], size, depth, t1, t2))

    n = len(summaries)
    counts = Counter(s.cluster_size for s in summaries)
    hist = {k: counts.get(k, 0) / n for k in range(max(counts, default=-1) + 1)}
    rate = {}
    for comp in (Component.INOUT, Component.OUT, Component.IN, Component.ISOLATED):
        group = [s for s in summaries if s.component == comp.value]
        if group:
            rate[comp.value] = sum(s.cluster_size >= 1 for s in group) / len(group)
    cars = [c for c in compiled.car0 if not math.isnan(c)]
    return SweepReport(
        seeds=summaries,
        histogram=hist,
        cascade_rate=rate,
        mean_size_by_out_degree=_grouped_means(((out_degree_bin(s.out_degree), s.cluster_size)
                                                for s in summaries), OUT_DEGREE_BIN_ORDER),
        mean_size_by_car=_grouped_means(((car_bin(s.car), s.cluster_size) for s in summaries),
                                        [b[2] for b in CAR_BINS]),
        mean_system_car=sum(cars) / len(cars) if cars else 0.0,
        params={"provision_rate": params.provision_rate,
                "thresholds": {c.value: params.threshold(c) for c in ThresholdClass}},
    )


def worker_count() -> int:
    """Parallelism cap from ``CONTAGIONX_THREADS`` (default: all CPUs)."""
    cpus = os.cpu_count() or 1
    env = os.environ.get("CONTAGIONX_THREADS")
    if env:
        try:
            return max(1, min(cpus, int(env)))
        except ValueError:
            pass
    return cpus
