import json
import random
from collections import Counter
from pathlib import Path

import pytest

from contagionx import schema
from contagionx.cli import main
from contagionx.ingest import snapshot_to_json
from contagionx.syngen import GeneratorConfig

from conftest import fixed_point, make_snapshot, random_snapshot

TX_HEADER = "date,lender_id,borrower_id,amount,maturity_days\n"
BS_HEADER = "date,bank_id,capital,other_risk,threshold_class\n"


def write_snapshot(path, snap):
    path.write_text(json.dumps({"snapshot": snapshot_to_json(snap)}))
    return str(path)


def load(path):
    return json.loads(Path(path).read_text())


def three_day_inputs(tmp_path, bad_row=False):
    tx = TX_HEADER + "".join(f"2024-01-0{d},L,B,{10 * d}.00,1\n" for d in (1, 2, 3))
    if bad_row:
        tx += "2024-01-02,L,B,not-a-number,1\n"
    bs = BS_HEADER + "2024-01-01,L,100.00,400.00,deposit_taking\n2024-01-01,B,100.00,400.00,other\n"
    (tmp_path / "tx.csv").write_text(tx)
    (tmp_path / "bs.csv").write_text(bs)
    return str(tmp_path / "tx.csv"), str(tmp_path / "bs.csv")


def tournament():
    # every bank lends to two others and is toppled by either borrower's default
    ids = "ABCDE"
    edges = [(ids[i], ids[(i + s) % 5], 10) for i in range(5) for s in (1, 2)]
    return make_snapshot(edges, {b: (10.5, 100) for b in ids})


class TestIngest:
    def test_three_days(self, tmp_path):
        tx, bs = three_day_inputs(tmp_path)
        out = tmp_path / "snaps"
        assert main(["ingest", tx, bs, "--date-range", "2024-01-01:2024-01-03", "--out", str(out)]) == 0
        files = sorted(out.glob("snapshot_*.json"))
        assert [f.name for f in files] == [f"snapshot_2024-01-0{d}.json" for d in (1, 2, 3)]
        assert [load(f)["snapshot"]["edges"][0]["weight"] for f in files] == ["10.00", "20.00", "30.00"]
        man = load(out / "manifest.json")
        assert man["command"] == "ingest" and len(man["outputs"]) == 3
        assert len(man["notes"]["forward_fill_warnings"]) == 2

    def test_lenient_counts_skips(self, tmp_path):
        tx, bs = three_day_inputs(tmp_path, bad_row=True)
        out = tmp_path / "snaps"
        assert main(["ingest", tx, bs, "--date-range", "2024-01-01:2024-01-03", "--out", str(out)]) == 0
        assert load(out / "manifest.json")["notes"]["skipped_rows"] == 1

    def test_strict_fails_without_outputs(self, tmp_path, capsys):
        tx, bs = three_day_inputs(tmp_path, bad_row=True)
        out = tmp_path / "snaps"
        code = main(["ingest", tx, bs, "--date-range", "2024-01-01:2024-01-03", "--strict", "--out", str(out)])
        assert code == 2
        assert ":5" in capsys.readouterr().err
        assert not out.exists() or not any(out.iterdir())

    def test_bad_date_range(self, tmp_path):
        tx, bs = three_day_inputs(tmp_path)
        assert main(["ingest", tx, bs, "--date-range", "2024-01-01", "--out", str(tmp_path / "o")]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["ingest", "nope.csv", "nope.csv", "--date-range", "2024-01-01:2024-01-02",
                     "--out", str(tmp_path)]) == 2


class TestAnalyze:
    def test_triangle(self, tmp_path):
        snap = write_snapshot(tmp_path / "s.json", make_snapshot([("A", "B", 1), ("B", "C", 1), ("A", "C", 1)]))
        assert main(["analyze", snap, "--out", str(tmp_path / "r.json")]) == 0
        rep = load(tmp_path / "r.json")
        assert rep["clustering"] == 1.0 and rep["manifest"] == "r.manifest.json"
        assert (tmp_path / "r.manifest.json").exists()

    def test_empty(self, tmp_path):
        snap = write_snapshot(tmp_path / "s.json", make_snapshot([], {"A": (1, 1)}))
        assert main(["analyze", snap, "--out", str(tmp_path / "r.json")]) == 0
        rep = load(tmp_path / "r.json")
        assert rep["n_edges"] == 0 and rep["scc_core_size"] == 0
        assert rep["conditional_tables"]["P_IO"] == {} and rep["out_degree_histogram"] == {"0": 1}

    def test_calibrated_in_share(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(GeneratorConfig.calibrated(seed=3).to_dict()))
        assert main(["generate", str(cfg), "--out", str(tmp_path / "g")]) == 0
        assert main(["analyze", str(tmp_path / "g" / "snapshot.json"), "--out", str(tmp_path / "r.json")]) == 0
        assert 0.60 <= load(tmp_path / "r.json")["component_shares"]["In"] <= 0.70

    def test_not_json(self, tmp_path):
        (tmp_path / "s.json").write_text("{oops")
        assert main(["analyze", str(tmp_path / "s.json"), "--out", str(tmp_path / "r.json")]) == 2


class TestStress:
    def test_over_capitalised(self, tmp_path):
        snap = write_snapshot(tmp_path / "s.json", random_snapshot(random.Random(0), 12, 0.4, thin=False))
        assert main(["stress", snap, "--out", str(tmp_path / "st.json")]) == 0
        assert load(tmp_path / "st.json")["histogram"] == {"0": 1.0}
        assert (tmp_path / "st_histogram.csv").read_text() == "# manifest: st.manifest.json\nsize,probability\n0,1\n"

    def test_six_node_corpus_matches_oracle_files(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONTAGIONX_THREADS", "1")
        rng = random.Random(66)
        for case in range(25):
            snap = random_snapshot(rng, 6, 0.5)
            path = write_snapshot(tmp_path / f"s{case}.json", snap)
            out = tmp_path / f"st{case}.json"
            assert main(["stress", path, "--seeds", ",".join(snap.banks), "--out", str(out)]) == 0
            sizes = Counter(len(fixed_point(snap, b)) - 1 for b in snap.banks)
            body = "".join(f"{k},{sizes.get(k, 0) / 6:.12g}\n" for k in range(max(sizes) + 1))
            expected = f"# manifest: st{case}.manifest.json\nsize,probability\n{body}"
            assert (tmp_path / f"st{case}_histogram.csv").read_text() == expected

    def test_seed_options(self, tmp_path):
        snap = write_snapshot(tmp_path / "s.json", random_snapshot(random.Random(3), 20, 0.2))
        for opt in ("all", "out", "inout"):
            assert main(["stress", snap, "--seeds", opt, "--out", str(tmp_path / f"{opt}.json")]) == 0
        n = {opt: load(tmp_path / f"{opt}.json")["n_seeds"] for opt in ("all", "out", "inout")}
        assert n["all"] == n["out"] + n["inout"]
        assert main(["stress", snap, "--seeds", "ghost", "--out", str(tmp_path / "x.json")]) == 2

    def test_grouped_csvs(self, tmp_path):
        snap = write_snapshot(tmp_path / "s.json", random_snapshot(random.Random(4), 25, 0.2))
        assert main(["stress", snap, "--out", str(tmp_path / "st.json")]) == 0
        assert (tmp_path / "st_out_degree.csv").read_text().splitlines()[1] == \
            "out_degree_bin,count,mean_cluster_size"
        assert (tmp_path / "st_car.csv").read_text().splitlines()[1] == "car_bin,count,mean_cluster_size"


class TestSolve:
    def test_invulnerable(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(GeneratorConfig(n_banks=100, seed=2, target_car_law=(0.9, 0.01)).to_dict()))
        assert main(["generate", str(cfg), "--out", str(tmp_path / "g")]) == 0
        assert main(["solve", str(tmp_path / "g" / "snapshot.json"), "--out", str(tmp_path / "so.json")]) == 0
        assert load(tmp_path / "so.json")["comparison"] == {
            "S_analytic": 0.0, "S_analytic_uncorrelated": 0.0, "S_montecarlo": 0.0}

    def test_supercritical_exit(self, tmp_path, capsys):
        snap = write_snapshot(tmp_path / "s.json", tournament())
        assert main(["solve", snap, "--out", str(tmp_path / "so.json")]) == 3
        assert "lambda_max" in capsys.readouterr().err
        assert not (tmp_path / "so.json").exists()


class TestGenerate:
    def test_round_trip_through_ingest(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(GeneratorConfig(n_banks=80, seed=4).to_dict()))
        g = tmp_path / "g"
        assert main(["generate", str(cfg), "--out", str(g)]) == 0
        gen = load(g / "snapshot.json")["snapshot"]
        day = gen["date"]
        assert main(["ingest", str(g / "transactions.csv"), str(g / "balance_sheets.csv"),
                     "--date-range", f"{day}:{day}", "--out", str(tmp_path / "i")]) == 0
        back = load(tmp_path / "i" / f"snapshot_{day}.json")["snapshot"]
        key = lambda d: sorted(json.dumps(x, sort_keys=True) for x in d)  # noqa: E731
        assert key(back["edges"]) == key(gen["edges"]) and key(back["banks"]) == key(gen["banks"])

    def test_seed_flag(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(GeneratorConfig(n_banks=80, seed=4).to_dict()))
        for name, seed in (("a", "1"), ("b", "2")):
            assert main(["generate", str(cfg), "--seed", seed, "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / "transactions.csv").read_bytes() != (tmp_path / "b" / "transactions.csv").read_bytes()
        assert load(tmp_path / "a" / "manifest.json")["seed"] == 1

    def test_bad_config(self, tmp_path):
        (tmp_path / "cfg.json").write_text(json.dumps({"n_banks": 5}))
        assert main(["generate", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "g")]) == 2


def run_everything(root: Path):
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(GeneratorConfig.calibrated(seed=8, n_banks=150).to_dict()))
    g = root / "g"
    assert main(["generate", str(cfg), "--out", str(g)]) == 0
    snap = str(g / "snapshot.json")
    assert main(["analyze", snap, "--out", str(root / "a.json")]) == 0
    assert main(["stress", snap, "--out", str(root / "st.json")]) == 0
    assert main(["solve", snap, "--out", str(root / "so.json")]) == 0
    day = load(snap)["snapshot"]["date"]
    assert main(["ingest", str(g / "transactions.csv"), str(g / "balance_sheets.csv"),
                 "--date-range", f"{day}:{day}", "--out", str(root / "i")]) == 0


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("run_a"), tmp_path_factory.mktemp("run_b")
    run_everything(a)
    run_everything(b)
    return a, b


class TestReproducibility:
    def test_byte_identical_outputs(self, two_runs):
        a, b = two_runs
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert len(files) > 10
        for rel in files:
            if rel.name.endswith("manifest.json"):
                ma, mb = load(a / rel), load(b / rel)
                for m in (ma, mb):
                    m.pop("started_at"), m.pop("duration_seconds")
                    m["inputs"] = [Path(p).name for p in m["inputs"]]
                    m["outputs"] = [Path(p).name for p in m["outputs"]]
                assert {k: v for k, v in ma.items() if k != "config_hash"} == \
                       {k: v for k, v in mb.items() if k != "config_hash"}
            else:
                assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_outputs_validate_and_reference_manifest(self, two_runs):
        a, _ = two_runs
        kinds = {"a.json": "analyze", "st.json": "stress", "so.json": "solve"}
        for name, kind in kinds.items():
            doc = load(a / name)
            schema.validate(kind, doc)
            assert (a / doc["manifest"]).exists()
        for p in list((a / "g").glob("snapshot*.json")) + list((a / "i").glob("snapshot_*.json")):
            doc = load(p)
            schema.validate("snapshot", doc)
            assert (p.parent / doc["manifest"]).exists()
        for p in a.rglob("*.csv"):
            first = p.read_text().splitlines()[0]
            assert first.startswith("# manifest: ") and (p.parent / first.split(": ")[1]).exists()
        for p in a.rglob("*manifest.json"):
            man = load(p)
            schema.validate("manifest", man)
            assert all(Path(o).exists() for o in man["outputs"])


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0 and "contagionx" in capsys.readouterr().out
