"""Transaction-level CSV ingestion and daily snapshot construction.

A loan traded on day ``d`` with maturity ``m`` days is outstanding on every day
in ``[d, d + m)``. Maturities are not otherwise resolved: all live amounts for an
ordered pair are summed and then netted.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import warnings
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence

from .errors import IngestionError, InputValidationError
from .ledger import BankRecord, Exposure, ExposureSnapshot, ThresholdClass, money, net_exposures

log = logging.getLogger(__name__)

TRANSACTION_HEADER = ("date", "lender_id", "borrower_id", "amount", "maturity_days")
BALANCE_SHEET_HEADER = ("date", "bank_id", "capital", "other_risk", "threshold_class")


class IngestWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TransactionRecord:
    trade_date: dt.date
    lender_id: str
    borrower_id: str
    amount: Decimal
    maturity_days: int = 1

    def __post_init__(self):
        object.__setattr__(self, "amount", money(self.amount))
        if self.amount <= 0:
            raise InputValidationError("amount must be > 0")
        if self.lender_id == self.borrower_id:
            raise InputValidationError("lender_id equals borrower_id")
        if int(self.maturity_days) < 1:
            raise InputValidationError("maturity_days must be >= 1")

    def is_live(self, day: dt.date) -> bool:
        return self.trade_date <= day < self.trade_date + dt.timedelta(days=int(self.maturity_days))


@dataclass(frozen=True)
class BalanceSheetRecord:
    bank_id: str
    date: dt.date
    capital: Decimal
    other_risk: Decimal
    threshold_class: ThresholdClass = ThresholdClass.DEPOSIT_TAKING

    def __post_init__(self):
        object.__setattr__(self, "capital", money(self.capital))
        object.__setattr__(self, "other_risk", money(self.other_risk))
        object.__setattr__(self, "threshold_class", ThresholdClass.parse(self.threshold_class))
        if self.capital < 0 or self.other_risk < 0:
            raise InputValidationError("capital and other_risk must be >= 0")


@dataclass
class ParseResult:
    records: list
    errors: list  # (line number, message)

    @property
    def skipped(self) -> int:
        return len(self.errors)


def _parse_date(s: str) -> dt.date:
    return dt.date.fromisoformat(s.strip())


def _parse_amount(s: str) -> Decimal:
    try:
        return Decimal(s.strip())
    except InvalidOperation:
        raise InputValidationError(f"bad decimal {s!r}") from None


def _read_rows(path, header, make, strict):
    records, errors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = ((n, line) for n, line in enumerate(fh, start=1) if not line.startswith("#"))
        first = next(lines, None)
        if first is None:
            raise IngestionError(f"{path}: empty file, expected header {','.join(header)}")
        got = tuple(c.strip() for c in next(csv.reader([first[1]])))
        if got != header:
            raise IngestionError(f"{path}:{first[0]}: header {got} != {header}", line=first[0])
        for lineno, line in lines:
            if not line.strip():
                continue
            row = next(csv.reader([line]))
            try:
                if len(row) != len(header):
                    raise InputValidationError(f"expected {len(header)} fields, got {len(row)}")
                records.append(make(row))
            except (InputValidationError, ValueError) as exc:
                msg = f"{path}:{lineno}: {exc}"
                if strict:
                    raise IngestionError(msg, line=lineno) from None
                errors.append((lineno, msg))
    return ParseResult(records, errors)


def read_transactions(path: str | Path, strict: bool = False) -> ParseResult:
    def make(row):
        d, lender, borrower, amount, mat = row
        return TransactionRecord(_parse_date(d), lender.strip(), borrower.strip(),
                                 _parse_amount(amount), int(mat))
    return _read_rows(path, TRANSACTION_HEADER, make, strict)


def read_balance_sheets(path: str | Path, strict: bool = False) -> ParseResult:
    def make(row):
        d, bank, cap, other, cls = row
        return BalanceSheetRecord(bank.strip(), _parse_date(d), _parse_amount(cap),
                                  _parse_amount(other), ThresholdClass.parse(cls))
    return _read_rows(path, BALANCE_SHEET_HEADER, make, strict)


def _latest_sheets(balance_sheets: Iterable[BalanceSheetRecord], date: dt.date) -> dict:
    latest = {}
    for rec in balance_sheets:
        if rec.date <= date:
            cur = latest.get(rec.bank_id)
            if cur is None or rec.date > cur.date:
                latest[rec.bank_id] = rec
    return latest


def build_snapshot(transactions: Sequence[TransactionRecord],
                   balance_sheets: Sequence[BalanceSheetRecord],
                   date: dt.date,
                   exclusions: Iterable[str] = ()) -> ExposureSnapshot:
    """Outstanding exposures on ``date`` after netting and exclusion filtering."""
    excluded = set(exclusions)
    gross = [(t.borrower_id, t.lender_id, t.amount) for t in transactions
             if t.is_live(date) and t.borrower_id not in excluded and t.lender_id not in excluded]
    edges = net_exposures(gross)
    active = {e.borrower_id for e in edges} | {e.lender_id for e in edges}

    sheets = _latest_sheets(balance_sheets, date)
    missing = sorted(active - sheets.keys())
    if missing:
        raise IngestionError(f"{date}: missing balance sheet for active banks {', '.join(missing)}",
                             bank_ids=missing, date=date)
    stale = sorted(b for b, rec in sheets.items() if rec.date < date and b not in excluded)
    if stale:
        warnings.warn(IngestWarning(f"{date}: forward-filled balance sheets for {len(stale)} banks"),
                      stacklevel=2)
    banks = [BankRecord(rec.bank_id, rec.capital, rec.other_risk, rec.threshold_class)
             for b, rec in sheets.items() if b not in excluded]
    return ExposureSnapshot.from_parts(date, banks, edges)


def snapshot_series(transactions, balance_sheets, date_range, exclusions=()) -> list[ExposureSnapshot]:
    """One snapshot per calendar day in the inclusive ``(first, last)`` range."""
    first, last = date_range
    if last < first:
        raise InputValidationError(f"empty date range {first}..{last}")
    out = []
    day = first
    while day <= last:
        try:
            out.append(build_snapshot(transactions, balance_sheets, day, exclusions))
        except IngestionError as exc:
            if exc.date is None:
                exc.date = day
            raise
        day += dt.timedelta(days=1)
    return out


def write_snapshot_csv(snapshot: ExposureSnapshot, transactions_path, balance_sheets_path,
                       comment: str | None = None) -> None:
    """Export a snapshot in the two ingest CSV schemas (one-day loans)."""
    date = (snapshot.date or dt.date(1970, 1, 1)).isoformat()
    with open(transactions_path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSACTION_HEADER)
        for e in snapshot.edges:
            w.writerow([date, e.lender_id, e.borrower_id, str(e.weight), 1])
    with open(balance_sheets_path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BALANCE_SHEET_HEADER)
        for b in snapshot.banks.values():
            w.writerow([date, b.bank_id, str(b.capital), str(b.other_risk), b.threshold_class.value])


def snapshot_to_json(snapshot: ExposureSnapshot) -> dict:
    """JSON form of a snapshot; money stays exact as decimal strings."""
    return {
        "date": snapshot.date.isoformat() if snapshot.date else None,
        "banks": [{"bank_id": b.bank_id, "capital": str(b.capital), "other_risk": str(b.other_risk),
                   "threshold_class": b.threshold_class.value, "interbank_claims": str(b.interbank_claims)}
                  for b in snapshot.banks.values()],
        "edges": [{"borrower_id": e.borrower_id, "lender_id": e.lender_id, "weight": str(e.weight)}
                  for e in snapshot.edges],
    }


def snapshot_from_json(d: dict) -> ExposureSnapshot:
    try:
        date = _parse_date(d["date"]) if d.get("date") else None
        banks = {b["bank_id"]: BankRecord(b["bank_id"], _parse_amount(b["capital"]),
                                          _parse_amount(b["other_risk"]), b["threshold_class"],
                                          _parse_amount(b["interbank_claims"]))
                 for b in d["banks"]}
        edges = tuple(Exposure(e["borrower_id"], e["lender_id"], _parse_amount(e["weight"]))
                      for e in d["edges"])
    except InputValidationError:
        raise
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise InputValidationError(f"malformed snapshot JSON: {exc!r}") from None
    return ExposureSnapshot(date, banks, edges)
