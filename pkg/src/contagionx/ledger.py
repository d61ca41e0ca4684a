"""Banks, netted exposures and the simplified capital adequacy ratio.

Money is stored as :class:`decimal.Decimal` quantized to cents and only turned
into floats inside CAR arithmetic.
"""
from __future__ import annotations

import datetime as dt
import enum
from collections import defaultdict
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from functools import cached_property
from typing import Iterable, Mapping

from .errors import ConsistencyError, DegenerateBalanceSheetError, InputValidationError

CENT = Decimal("0.01")
ZERO = Decimal("0.00")
INTERBANK_RISK_WEIGHT = 0.2
THRESHOLD_RTOL = 1e-12


def money(value) -> Decimal:
    """Coerce ``value`` to a cent-quantized Decimal."""
    if isinstance(value, Decimal):
        d = value
    elif isinstance(value, (int, str)):
        d = Decimal(str(value))
    else:
        d = Decimal(repr(float(value)))
    if not d.is_finite():
        raise InputValidationError(f"non-finite money amount: {value!r}")
    return d.quantize(CENT, rounding=ROUND_HALF_EVEN)


class ThresholdClass(enum.Enum):
    DEPOSIT_TAKING = "deposit_taking"
    OTHER = "other"

    @property
    def threshold(self) -> float:
        return _THRESHOLDS[self]

    @classmethod
    def parse(cls, value) -> "ThresholdClass":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"deposittaking": "deposit_taking", "deposit": "deposit_taking"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InputValidationError(f"unknown threshold class: {value!r}") from None


_THRESHOLDS = {ThresholdClass.DEPOSIT_TAKING: 0.10, ThresholdClass.OTHER: 0.12}


def is_below_threshold(car: float, threshold: float) -> bool:
    """Strictly below ``threshold``; values within the relative tolerance survive."""
    return car < threshold - THRESHOLD_RTOL * abs(threshold)


@dataclass(frozen=True)
class BankRecord:
    bank_id: str
    capital: Decimal
    other_risk: Decimal
    threshold_class: ThresholdClass = ThresholdClass.DEPOSIT_TAKING
    interbank_claims: Decimal = ZERO
    provisions: Decimal = ZERO

    def __post_init__(self):
        object.__setattr__(self, "bank_id", str(self.bank_id))
        for name in ("capital", "other_risk", "interbank_claims", "provisions"):
            object.__setattr__(self, name, money(getattr(self, name)))
        object.__setattr__(self, "threshold_class", ThresholdClass.parse(self.threshold_class))
        if self.capital < 0 or self.other_risk < 0 or self.interbank_claims < 0:
            raise InputValidationError(
                f"bank {self.bank_id}: capital, other_risk and interbank_claims must be >= 0"
            )
        if not (ZERO <= self.provisions <= self.interbank_claims):
            raise ConsistencyError(
                f"bank {self.bank_id}: provisions {self.provisions} outside [0, {self.interbank_claims}]"
            )

    @property
    def threshold(self) -> float:
        return self.threshold_class.threshold


@dataclass(frozen=True, order=True)
class Exposure:
    """Netted obligation of ``borrower_id`` towards ``lender_id``."""

    borrower_id: str
    lender_id: str
    weight: Decimal = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "borrower_id", str(self.borrower_id))
        object.__setattr__(self, "lender_id", str(self.lender_id))
        object.__setattr__(self, "weight", money(self.weight))
        if self.weight <= 0:
            raise InputValidationError(f"exposure {self.borrower_id}->{self.lender_id}: weight must be > 0")
        if self.borrower_id == self.lender_id:
            raise InputValidationError(f"self exposure on {self.borrower_id}")

    def __hash__(self):
        return hash((self.borrower_id, self.lender_id, self.weight))

    def __eq__(self, other):
        if not isinstance(other, Exposure):
            return NotImplemented
        return (self.borrower_id, self.lender_id, self.weight) == (
            other.borrower_id, other.lender_id, other.weight)


@dataclass(frozen=True)
class ExposureSnapshot:
    """Dated netted exposure graph; edges point from borrower to lender."""

    date: dt.date | None
    banks: Mapping[str, BankRecord]
    edges: tuple[Exposure, ...]

    def __post_init__(self):
        banks = dict(sorted(self.banks.items()))
        edges = tuple(sorted(self.edges))
        object.__setattr__(self, "banks", banks)
        object.__setattr__(self, "edges", edges)
        pairs = set()
        claims = defaultdict(lambda: ZERO)
        for e in edges:
            if e.borrower_id not in banks or e.lender_id not in banks:
                raise InputValidationError(f"edge {e.borrower_id}->{e.lender_id} references unknown bank")
            if (e.borrower_id, e.lender_id) in pairs:
                raise InputValidationError(f"duplicate edge {e.borrower_id}->{e.lender_id}")
            if (e.lender_id, e.borrower_id) in pairs:
                raise InputValidationError(f"antiparallel pair {e.borrower_id}<->{e.lender_id}")
            pairs.add((e.borrower_id, e.lender_id))
            claims[e.lender_id] += e.weight
        for bid, rec in banks.items():
            if rec.bank_id != bid:
                raise InputValidationError(f"bank key {bid!r} != record id {rec.bank_id!r}")
            if rec.interbank_claims != claims[bid]:
                raise ConsistencyError(
                    f"bank {bid}: interbank_claims {rec.interbank_claims} != incoming weights {claims[bid]}"
                )

    @classmethod
    def from_parts(cls, date, banks: Iterable[BankRecord], edges: Iterable[Exposure]) -> "ExposureSnapshot":
        """Build a snapshot, deriving each bank's interbank claims from its in-edges."""
        edges = tuple(edges)
        claims = defaultdict(lambda: ZERO)
        for e in edges:
            claims[e.lender_id] += e.weight
        recs = {}
        for b in banks:
            recs[b.bank_id] = replace(b, interbank_claims=claims[b.bank_id], provisions=ZERO)
        return cls(date, recs, edges)

    @property
    def bank_ids(self) -> list[str]:
        return list(self.banks)

    @cached_property
    def successors(self) -> dict[str, list[tuple[str, Decimal]]]:
        """Borrower -> [(lender, weight)]: where a default propagates to."""
        out = {b: [] for b in self.banks}
        for e in self.edges:
            out[e.borrower_id].append((e.lender_id, e.weight))
        return out

    @cached_property
    def predecessors(self) -> dict[str, list[tuple[str, Decimal]]]:
        inc = {b: [] for b in self.banks}
        for e in self.edges:
            inc[e.lender_id].append((e.borrower_id, e.weight))
        return inc

    @cached_property
    def weight_of(self) -> dict[tuple[str, str], Decimal]:
        return {(e.borrower_id, e.lender_id): e.weight for e in self.edges}

    def out_degree(self, bank_id: str) -> int:
        return len(self.successors[bank_id])

    def in_degree(self, bank_id: str) -> int:
        return len(self.predecessors[bank_id])

    def total_outstanding(self) -> Decimal:
        return sum((e.weight for e in self.edges), ZERO)


def net_exposures(bilateral_claims: Iterable[tuple]) -> set[Exposure]:
    """Net gross bilateral positions into directed exposures.

    Each item is ``(i, j, amount)`` meaning *j lent amount to i*. Repeated pairs
    are summed before netting.
    """
    gross = defaultdict(lambda: ZERO)
    for i, j, amount in bilateral_claims:
        amt = money(amount)
        if amt < 0:
            raise InputValidationError(f"negative amount {amount} for {i}->{j}")
        if str(i) == str(j):
            continue
        gross[(str(i), str(j))] += amt
    out = set()
    seen = set()
    for (i, j) in gross:
        key = (i, j) if i < j else (j, i)
        if key in seen:
            continue
        seen.add(key)
        a, b = key
        net = gross.get((a, b), ZERO) - gross.get((b, a), ZERO)
        if net > 0:
            out.add(Exposure(a, b, net))
        elif net < 0:
            out.add(Exposure(b, a, -net))
    return out


def car_value(capital: float, claims: float, provisions: float, other_risk: float) -> float:
    denom = INTERBANK_RISK_WEIGHT * (claims - provisions) + other_risk
    if denom <= 0:
        raise DegenerateBalanceSheetError(f"non-positive CAR denominator {denom!r}")
    return (capital - provisions) / denom


def compute_car(bank: BankRecord) -> float:
    """(K - P_IC) / (0.2 (A_IC - P_IC) + O); may be negative."""
    try:
        return car_value(float(bank.capital), float(bank.interbank_claims),
                         float(bank.provisions), float(bank.other_risk))
    except DegenerateBalanceSheetError as exc:
        raise DegenerateBalanceSheetError(f"bank {bank.bank_id}: {exc}", bank.bank_id) from None


def provision_amount(exposure, provision_rate) -> Decimal:
    return money(money(exposure) * Decimal(str(provision_rate)))


def apply_default_provision(bank: BankRecord, exposure_to_defaulter, provision_rate=1.0) -> BankRecord:
    if not 0 < float(provision_rate) <= 1:
        raise InputValidationError(f"provision_rate must be in (0, 1], got {provision_rate}")
    new = bank.provisions + provision_amount(exposure_to_defaulter, provision_rate)
    if new > bank.interbank_claims:
        raise ConsistencyError(
            f"bank {bank.bank_id}: provisions {new} would exceed interbank claims {bank.interbank_claims}"
        )
    return replace(bank, provisions=new)
