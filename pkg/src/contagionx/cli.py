"""Command-line entry point.

Exit codes: 0 success, 2 input validation, 3 model domain (e.g. supercritical
contagion matrix), 4 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, schema
from .analytic import solution_to_json
from .compare import compare_snapshot
from .errors import (CalibrationError, ConsistencyError, ContagionError, DegenerateBalanceSheetError,
                     GenerationError, InputValidationError, NumericalError, PercolativePhaseError)
from .ingest import (read_balance_sheets, read_transactions, snapshot_from_json, snapshot_series,
                     snapshot_to_json, write_snapshot_csv)
from .ledger import ExposureSnapshot
from .stress import StressParams, sweep, worker_count
from .syngen import GeneratorConfig, generate
from .topology import (Component, bow_tie_decompose, clustering_and_density, conditional_tables,
                       degree_distributions, labeling_to_json, tables_to_json)

log = logging.getLogger("contagionx")

EXIT_OK, EXIT_VALIDATION, EXIT_DOMAIN, EXIT_NUMERICAL = 0, 2, 3, 4
MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    command: str
    inputs: list[str]
    config_hash: str
    seed: int | None = None
    version: str = __version__
    outputs: list[str] = field(default_factory=list)
    duration_seconds: float = 0.0
    started_at: str = ""
    notes: dict = field(default_factory=dict)


def _hash_inputs(paths, config: dict) -> str:
    h = hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode())
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path: Path, obj: dict, manifest_name: str, kind: str) -> None:
    obj = {"manifest": manifest_name, **obj}
    schema.validate(kind, json.loads(_dump(obj)))
    path.write_text(_dump(obj), encoding="utf-8")


def _write_csv(path: Path, body: str, manifest_name: str) -> None:
    path.write_text(f"# manifest: {manifest_name}\n{body}", encoding="utf-8")


def _load_snapshot(path) -> ExposureSnapshot:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputValidationError(f"{path}: not JSON: {exc}") from None
    return snapshot_from_json(data.get("snapshot", data))


def _parse_range(s: str):
    parts = s.split(":")
    if len(parts) != 2:
        raise InputValidationError(f"--date-range expects FIRST:LAST, got {s!r}")
    try:
        return dt.date.fromisoformat(parts[0]), dt.date.fromisoformat(parts[1])
    except ValueError as exc:
        raise InputValidationError(f"--date-range: {exc}") from None


def _side_manifest(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


# --------------------------------------------------------------------- commands

def cmd_ingest(args, manifest: RunManifest) -> Path:
    out = Path(args.out)
    tx = read_transactions(args.transactions, strict=args.strict)
    bs = read_balance_sheets(args.balance_sheets, strict=args.strict)
    for _, msg in tx.errors + bs.errors:
        log.warning("skipped %s", msg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        days = snapshot_series(tx.records, bs.records, _parse_range(args.date_range), args.exclude)
    for w in caught:
        log.warning("%s", w.message)
    out.mkdir(parents=True, exist_ok=True)
    for snap in days:
        path = out / f"snapshot_{snap.date.isoformat()}.json"
        _write_json(path, {"snapshot": snapshot_to_json(snap)}, MANIFEST_NAME, "snapshot")
        manifest.outputs.append(str(path))
    manifest.notes = {"skipped_rows": tx.skipped + bs.skipped,
                      "skipped_messages": [m for _, m in tx.errors + bs.errors],
                      "forward_fill_warnings": [str(w.message) for w in caught],
                      "excluded": sorted(args.exclude)}
    return out / MANIFEST_NAME


def analyze_report(snapshot: ExposureSnapshot) -> dict:
    labeling = bow_tie_decompose(snapshot)
    counts = labeling.counts()
    n = len(snapshot.banks)
    total = snapshot.total_outstanding()
    core_volume = sum((e.weight for e in snapshot.edges
                       if e.borrower_id in labeling.scc_core and e.lender_id in labeling.scc_core),
                      start=type(total)(0))
    clustering, link_p = clustering_and_density(snapshot)
    profile = degree_distributions(snapshot, labeling)
    return {
        "date": snapshot.date.isoformat() if snapshot.date else None,
        "n_banks": n,
        "n_edges": len(snapshot.edges),
        "total_outstanding": str(total),
        "component_counts": {c.value: counts.get(c, 0) for c in Component},
        "component_shares": {c.value: (counts.get(c, 0) / n if n else 0.0) for c in Component},
        "scc_core_size": len(labeling.scc_core),
        "scc_core_share_of_banks": len(labeling.scc_core) / n if n else 0.0,
        "scc_core_share_of_outstanding": float(core_volume / total) if total else 0.0,
        "clustering": clustering,
        "link_probability": link_p,
        "in_degree_histogram": {str(k): v for k, v in profile.in_degree_hist.items()},
        "out_degree_histogram": {str(k): v for k, v in profile.out_degree_hist.items()},
        "conditional_tables": tables_to_json(conditional_tables(snapshot, labeling)),
        "bow_tie": labeling_to_json(labeling),
    }


def cmd_analyze(args, manifest: RunManifest) -> Path:
    out = Path(args.out)
    side = _side_manifest(out)
    _write_json(out, analyze_report(_load_snapshot(args.snapshot)), side.name, "analyze")
    manifest.outputs.append(str(out))
    return side


def _seed_set(choice: str, snapshot: ExposureSnapshot):
    labeling = bow_tie_decompose(snapshot)
    if choice == "all":
        return None, labeling
    if choice == "out":
        return labeling.members(Component.OUT), labeling
    if choice == "inout":
        return labeling.members(Component.INOUT), labeling
    ids = [s.strip() for s in choice.split(",") if s.strip()]
    if not ids:
        raise InputValidationError("--seeds: empty id list")
    return ids, labeling


def cmd_stress(args, manifest: RunManifest) -> Path:
    out = Path(args.out)
    side = _side_manifest(out)
    snapshot = _load_snapshot(args.snapshot)
    seeds, labeling = _seed_set(args.seeds, snapshot)
    report = sweep(snapshot, seeds, StressParams(provision_rate=args.provision_rate),
                   workers=worker_count(), labeling=labeling)
    _write_json(out, report.to_json(), side.name, "stress")
    stem = out.with_suffix("")
    hist = Path(f"{stem}_histogram.csv")
    _write_csv(hist, report.histogram_csv(), side.name)
    by_deg = Path(f"{stem}_out_degree.csv")
    _write_csv(by_deg, "out_degree_bin,count,mean_cluster_size\n" + "".join(
        f"{k},{c},{m:.12g}\n" for k, (c, m) in report.mean_size_by_out_degree.items()), side.name)
    by_car = Path(f"{stem}_car.csv")
    _write_csv(by_car, "car_bin,count,mean_cluster_size\n" + "".join(
        f"{k},{c},{m:.12g}\n" for k, (c, m) in report.mean_size_by_car.items()), side.name)
    manifest.outputs += [str(out), str(hist), str(by_deg), str(by_car)]
    return side


def cmd_solve(args, manifest: RunManifest) -> Path:
    out = Path(args.out)
    side = _side_manifest(out)
    snapshot = _load_snapshot(args.snapshot)
    comp = compare_snapshot(snapshot, StressParams(provision_rate=args.provision_rate),
                            degree_cap=args.degree_cap, workers=worker_count())
    sol = comp.solution
    body = solution_to_json(sol, comp.S_analytic_uncorrelated)
    body["cells"] = [{"k": k, "l": l, "dM": float(d), "omega": float(o), "gamma": float(g)}
                     for (k, l), d, o, g in zip(sol.index, sol.dM, sol.omega_sums, sol.gamma)]
    body["comparison"] = comp.block()
    _write_json(out, body, side.name, "solve")
    manifest.outputs.append(str(out))
    return side


def cmd_generate(args, manifest: RunManifest) -> Path:
    out = Path(args.out)
    cfg = GeneratorConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    manifest.seed = cfg.seed
    snap = generate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    tx, bs, js = out / "transactions.csv", out / "balance_sheets.csv", out / "snapshot.json"
    write_snapshot_csv(snap, tx, bs, comment=f"manifest: {MANIFEST_NAME}")
    _write_json(js, {"config": cfg.to_dict(), "snapshot": snapshot_to_json(snap)}, MANIFEST_NAME, "snapshot")
    manifest.outputs += [str(tx), str(bs), str(js)]
    return out / MANIFEST_NAME


# ------------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contagionx", description="Interbank default contagion toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="build daily snapshots from transaction CSVs")
    s.add_argument("transactions")
    s.add_argument("balance_sheets")
    s.add_argument("--date-range", required=True, help="FIRST:LAST, ISO dates, inclusive")
    s.add_argument("--exclude", nargs="*", default=[], metavar="BANK_ID")
    s.add_argument("--strict", action="store_true", help="fail on the first malformed row")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("analyze", help="topology report for one snapshot")
    s.add_argument("snapshot")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("stress", help="single-seed default sweep")
    s.add_argument("snapshot")
    s.add_argument("--seeds", default="all", help="all | out | inout | comma-separated bank ids")
    s.add_argument("--provision-rate", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stress)

    s = sub.add_parser("solve", help="analytic mean cluster size with Monte Carlo comparison")
    s.add_argument("snapshot")
    s.add_argument("--provision-rate", type=float, default=1.0)
    s.add_argument("--degree-cap", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("generate", help="synthetic snapshot from a generator config")
    s.add_argument("config")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_generate)
    return p


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (InputValidationError, ConsistencyError, DegenerateBalanceSheetError)):
        return EXIT_VALIDATION
    if isinstance(exc, (PercolativePhaseError, GenerationError, CalibrationError)):
        return EXIT_DOMAIN
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    inputs = [getattr(args, k) for k in ("transactions", "balance_sheets", "snapshot", "config")
              if getattr(args, k, None)]
    config = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    t0 = time.perf_counter()
    try:
        manifest = RunManifest(args.command, [str(p) for p in inputs], _hash_inputs(inputs, config),
                               started_at=dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"))
        manifest_path = args.func(args, manifest)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ContagionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    manifest.duration_seconds = round(time.perf_counter() - t0, 6)
    schema.validate("manifest", asdict(manifest))
    manifest_path.write_text(_dump(asdict(manifest)), encoding="utf-8")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
