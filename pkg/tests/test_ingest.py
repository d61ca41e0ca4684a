import datetime as dt
import random
import warnings
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from contagionx.errors import IngestionError, InputValidationError
from contagionx.ingest import (BalanceSheetRecord, IngestWarning, TransactionRecord, build_snapshot,
                               read_balance_sheets, read_transactions, snapshot_from_json, snapshot_series,
                               snapshot_to_json, write_snapshot_csv)
from contagionx.syngen import GeneratorConfig, generate

D0 = dt.date(2024, 3, 1)


def day(n):
    return D0 + dt.timedelta(days=n - 1)


def sheets(*ids, date=D0):
    return [BalanceSheetRecord(b, date, 100, 500) for b in ids]


def edges_of(snap):
    return {(e.borrower_id, e.lender_id): e.weight for e in snap.edges}


class TestBuildSnapshot:
    def test_loan_inside_window(self):
        tx = [TransactionRecord(day(1), "L", "B", 10, 7)]
        assert edges_of(build_snapshot(tx, sheets("L", "B"), day(5))) == {("B", "L"): Decimal("10.00")}

    def test_matured_loan_absent(self):
        tx = [TransactionRecord(day(1), "L", "B", 10, 7)]
        assert build_snapshot(tx, sheets("L", "B"), day(9)).edges == ()
        assert build_snapshot(tx, sheets("L", "B"), day(8)).edges == ()
        assert build_snapshot(tx, sheets("L", "B"), day(7)).edges != ()

    def test_offsetting_loans_net_out(self):
        tx = [TransactionRecord(day(1), "X", "Y", 10, 3), TransactionRecord(day(1), "Y", "X", 10, 3)]
        assert build_snapshot(tx, sheets("X", "Y"), day(2)).edges == ()

    def test_missing_sheet_lists_banks(self):
        tx = [TransactionRecord(day(1), "L", "B", 10, 2), TransactionRecord(day(1), "M", "B", 1, 2)]
        with pytest.raises(IngestionError) as info:
            build_snapshot(tx, sheets("B"), day(1))
        assert info.value.bank_ids == ("L", "M")

    def test_forward_fill_warns(self):
        tx = [TransactionRecord(day(1), "L", "B", 10, 5)]
        with pytest.warns(IngestWarning):
            snap = build_snapshot(tx, sheets("L", "B"), day(3))
        assert snap.banks["L"].capital == Decimal("100.00")

    def test_latest_sheet_is_used(self):
        bs = sheets("L", "B") + [BalanceSheetRecord("L", day(2), 70, 500)]
        tx = [TransactionRecord(day(1), "L", "B", 10, 5)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert build_snapshot(tx, bs, day(3)).banks["L"].capital == 70
            assert build_snapshot(tx, bs, day(1)).banks["L"].capital == 100

    def test_exclusion_only_drops_incident_edges(self):
        tx = [TransactionRecord(day(1), "A", "B", 5, 1), TransactionRecord(day(1), "B", "C", 6, 1),
              TransactionRecord(day(1), "X", "A", 2, 1)]
        full = edges_of(build_snapshot(tx, sheets("A", "B", "C", "X"), day(1)))
        cut = edges_of(build_snapshot(tx, sheets("A", "B", "C", "X"), day(1), {"X"}))
        assert cut == {k: v for k, v in full.items() if "X" not in k}

    @given(st.lists(st.tuples(st.sampled_from("ABCD"), st.sampled_from("ABCD"),
                              st.integers(1, 500), st.integers(1, 4), st.integers(1, 3)), max_size=20),
           st.integers(1, 5))
    def test_outstanding_matches_brute_force(self, rows, query):
        tx = [TransactionRecord(day(d), lender, borrower, a, m)
              for lender, borrower, a, d, m in rows if lender != borrower]
        snap = build_snapshot(tx, sheets("A", "B", "C", "D"), day(query))
        live = [t for t in tx if t.trade_date <= day(query) < t.trade_date + dt.timedelta(days=t.maturity_days)]
        gross = sum(t.amount for t in live)
        overlap = 0
        for a in "ABCD":
            for b in "ABCD":
                if a < b:
                    ab = sum(t.amount for t in live if (t.borrower_id, t.lender_id) == (a, b))
                    ba = sum(t.amount for t in live if (t.borrower_id, t.lender_id) == (b, a))
                    overlap += min(ab, ba)
        assert snap.total_outstanding() == gross - 2 * overlap


class TestSeries:
    def test_empty_transactions(self):
        out = snapshot_series([], sheets("A"), (day(1), day(3)))
        assert len(out) == 3 and all(s.edges == () for s in out)

    def test_three_day_loan(self):
        tx = [TransactionRecord(day(2), "L", "B", 10, 3)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = snapshot_series(tx, sheets("L", "B"), (day(1), day(10)))
        assert len(out) == 10
        assert [bool(s.edges) for s in out] == [False, True, True, True] + [False] * 6

    def test_inverted_range(self):
        with pytest.raises(InputValidationError):
            snapshot_series([], [], (day(3), day(1)))


class TestCsv:
    def test_strict_reports_line(self, tmp_path):
        p = tmp_path / "tx.csv"
        p.write_text("date,lender_id,borrower_id,amount,maturity_days\n"
                     "2024-03-01,A,B,10,1\n2024-03-01,A,B,ten,1\n")
        with pytest.raises(IngestionError) as info:
            read_transactions(p, strict=True)
        assert info.value.line == 3

    def test_lenient_skips_and_counts(self, tmp_path):
        p = tmp_path / "tx.csv"
        p.write_text("date,lender_id,borrower_id,amount,maturity_days\n"
                     "2024-03-01,A,B,10,1\n2024-03-01,A,A,1,1\nbad\n2024-03-01,C,B,-1,1\n")
        res = read_transactions(p)
        assert len(res.records) == 1 and res.skipped == 3

    def test_header_checked(self, tmp_path):
        p = tmp_path / "bs.csv"
        p.write_text("bank,capital\n")
        with pytest.raises(IngestionError):
            read_balance_sheets(p)

    def test_round_trip_through_csv(self, tmp_path):
        snap = generate(GeneratorConfig(n_banks=60, seed=4))
        write_snapshot_csv(snap, tmp_path / "t.csv", tmp_path / "b.csv", comment="manifest: m.json")
        tx = read_transactions(tmp_path / "t.csv", strict=True).records
        bs = read_balance_sheets(tmp_path / "b.csv", strict=True).records
        back = build_snapshot(tx, bs, snap.date)
        assert back.banks == snap.banks and back.edges == snap.edges


def test_json_round_trip():
    snap = generate(GeneratorConfig(n_banks=60, seed=random.Random(1).randrange(100)))
    back = snapshot_from_json(snapshot_to_json(snap))
    assert back.banks == snap.banks and back.edges == snap.edges and back.date == snap.date


def test_json_rejects_garbage():
    with pytest.raises(InputValidationError):
        snapshot_from_json({"date": None, "banks": [{"bank_id": "A"}], "edges": []})
