"""Analytic mean cluster size next to the Monte Carlo sweep on the same snapshot."""
from __future__ import annotations

from dataclasses import dataclass

from .analytic import AnalyticInputs, AnalyticSolution, mean_cluster_size, mean_cluster_size_uncorrelated
from .ledger import ExposureSnapshot
from .stress import StressParams, SweepReport, estimate_vulnerability_tables, sweep
from .topology import Component, bow_tie_decompose


@dataclass
class Comparison:
    solution: AnalyticSolution
    S_analytic: float
    S_analytic_uncorrelated: float
    S_montecarlo: float
    report: SweepReport

    @property
    def rel_error(self) -> float:
        return _rel(self.S_analytic, self.S_montecarlo)

    @property
    def rel_error_uncorrelated(self) -> float:
        return _rel(self.S_analytic_uncorrelated, self.S_montecarlo)

    def block(self) -> dict:
        return {"S_analytic": self.S_analytic,
                "S_analytic_uncorrelated": self.S_analytic_uncorrelated,
                "S_montecarlo": self.S_montecarlo}


def _rel(a, b):
    if b == 0:
        return 0.0 if a == 0 else float("inf")
    return abs(a - b) / b


def analytic_inputs(snapshot: ExposureSnapshot, params: StressParams = StressParams(),
                    degree_cap: int | None = None, labeling=None) -> AnalyticInputs:
    labeling = labeling or bow_tie_decompose(snapshot)
    return AnalyticInputs.from_tables(estimate_vulnerability_tables(snapshot, labeling, params, degree_cap))


def compare_snapshot(snapshot: ExposureSnapshot, params: StressParams = StressParams(),
                     degree_cap: int | None = None, workers: int = 1) -> Comparison:
    """Solve the analytic model and sweep InOut seeds; Out seeds are left out of both."""
    labeling = bow_tie_decompose(snapshot)
    inputs = analytic_inputs(snapshot, params, degree_cap, labeling)
    sol = mean_cluster_size(inputs)
    s_unc = mean_cluster_size_uncorrelated(inputs)
    report = sweep(snapshot, labeling.members(Component.INOUT), params, workers=workers, labeling=labeling)
    return Comparison(sol, sol.S, s_unc, report.mean_cluster_size(), report)
