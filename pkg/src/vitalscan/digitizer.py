"""Reading validation: character correction, numeric parsing, physiological range gating.

Raw OCR strings pass through three gates before becoming records: a score
cutoff, a syntactic cleanup that repairs classic digit/letter confusions, and
a per-label plausibility range. Rejection is a value, never an exception.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .core import (
    VITAL_LABELS,
    Detection,
    VitalLabel,
    VitalRecord,
    VitalscanError,
    label_parse,
)

__all__ = [
    "CorrectionTable",
    "RangeGate",
    "GateRange",
    "ValueKind",
    "ValidationOutcome",
    "RejectionReason",
    "LengthMismatch",
    "syntactic_correct",
    "validate",
    "assemble",
    "canonical_for_label",
    "load_validation_config",
    "DEFAULT_MIN_SCORE",
]


class LengthMismatch(VitalscanError):
    """Detection and OCR lists passed to assemble were not parallel."""


#: OCR acceptance cutoff applied inside validation (separate from the
#: detection-stage confidence threshold).
DEFAULT_MIN_SCORE = 0.5

_DEFAULT_CONFUSIONS: dict[str, str] = {
    "O": "0",
    "o": "0",
    "Q": "0",
    "I": "1",
    "l": "1",
    "|": "1",
    "Z": "2",
    "S": "5",
    "s": "5",
    "B": "8",
    "G": "6",
    ",": ".",
}

_UNIT_SUFFIX = re.compile(r"(?:\s*(?:%|°\s*c|bpm|mmhg))+\s*$", re.IGNORECASE)
_WHITESPACE = re.compile(r"\s+")
_INT_PATTERN = re.compile(r"\d+")
_DECIMAL_PATTERN = re.compile(r"\d+(?:\.\d+)?")


@dataclass(frozen=True)
class CorrectionTable:
    """Confusable-character substitutions applied to raw OCR text."""

    mapping: Mapping[str, str] = field(default_factory=lambda: dict(_DEFAULT_CONFUSIONS))

    def __post_init__(self):
        for src, dst in self.mapping.items():
            if len(src) != 1 or len(dst) != 1:
                raise ValueError(f"corrections map single characters, got {src!r}->{dst!r}")
            if dst not in "0123456789.":
                raise ValueError(f"correction target must be a digit or '.', got {dst!r}")
        object.__setattr__(self, "mapping", dict(self.mapping))

    def apply(self, text: str) -> str:
        return "".join(self.mapping.get(ch, ch) for ch in text)


class ValueKind(Enum):
    INTEGER = "integer"
    ONE_DECIMAL = "one-decimal"


@dataclass(frozen=True)
class GateRange:
    lo: float
    hi: float
    kind: ValueKind
    unit: str

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"gate range needs lo < hi, got [{self.lo}, {self.hi}]")


def _default_ranges() -> dict[VitalLabel, GateRange]:
    return {
        VitalLabel.HR: GateRange(10, 300, ValueKind.INTEGER, "bpm"),
        VitalLabel.PR: GateRange(10, 300, ValueKind.INTEGER, "bpm"),
        VitalLabel.SPO2: GateRange(0, 100, ValueKind.INTEGER, "%"),
        VitalLabel.SYS: GateRange(30, 300, ValueKind.INTEGER, "mmHg"),
        VitalLabel.DIA: GateRange(10, 200, ValueKind.INTEGER, "mmHg"),
        VitalLabel.MAP: GateRange(20, 250, ValueKind.INTEGER, "mmHg"),
        VitalLabel.RR: GateRange(2, 80, ValueKind.INTEGER, "breaths/min"),
        VitalLabel.TEMP: GateRange(25.0, 45.0, ValueKind.ONE_DECIMAL, "°C"),
    }


@dataclass(frozen=True)
class RangeGate:
    """Per-label plausibility bounds (inclusive).

    Most bounds are configuration, but two are structural and cannot be
    reconfigured: SpO2 saturates at 100 and heart rate is bounded to
    [10, 300].
    """

    ranges: Mapping[VitalLabel, GateRange] = field(default_factory=_default_ranges)

    def __post_init__(self):
        ranges = dict(self.ranges)
        for label in VITAL_LABELS:
            if label not in ranges:
                raise ValueError(f"gate is missing a range for {label}")
        for label in ranges:
            if not label.is_vital:
                raise ValueError("SCREEN has no physiological range")
        spo2 = ranges[VitalLabel.SPO2]
        if spo2.hi != 100:
            raise ValueError("the SpO2 upper bound is fixed at 100")
        hr = ranges[VitalLabel.HR]
        if (hr.lo, hr.hi) != (10, 300):
            raise ValueError("heart-rate bounds are fixed at [10, 300]")
        object.__setattr__(self, "ranges", ranges)

    @classmethod
    def defaults(cls) -> "RangeGate":
        return cls()

    def range_for(self, label: VitalLabel) -> GateRange:
        return self.ranges[label]


class RejectionReason(Enum):
    NON_NUMERIC = "NonNumeric"
    OUT_OF_RANGE = "OutOfRange"
    LOW_SCORE = "LowScore"


@dataclass(frozen=True)
class ValidationOutcome:
    """Accepted carries the canonical value string; Rejected carries a reason."""

    value: Optional[str]
    reason: Optional[RejectionReason]

    def __post_init__(self):
        if (self.value is None) == (self.reason is None):
            raise ValueError("outcome is exactly one of accepted or rejected")

    @property
    def accepted(self) -> bool:
        return self.value is not None

    @classmethod
    def accept(cls, value: str) -> "ValidationOutcome":
        return cls(value=value, reason=None)

    @classmethod
    def reject(cls, reason: RejectionReason) -> "ValidationOutcome":
        return cls(value=None, reason=reason)


def syntactic_correct(raw: str, table: CorrectionTable | None = None) -> str:
    """Normalize a raw OCR string: drop whitespace and unit suffixes, repair
    confusable characters, keep only the first decimal point.

    Idempotent: applying it twice changes nothing.
    """
    table = table or CorrectionTable()
    s = _UNIT_SUFFIX.sub("", raw.strip())
    s = _WHITESPACE.sub("", s)
    s = table.apply(s)
    if s.count(".") > 1:
        head, _, tail = s.partition(".")
        s = head + "." + tail.replace(".", "")
    return s


def _canonicalize(cleaned: str, kind: ValueKind) -> Optional[str]:
    """Canonical rendering of a cleaned numeric string, or None if non-numeric."""
    if kind is ValueKind.INTEGER:
        if not _INT_PATTERN.fullmatch(cleaned):
            return None
        return str(int(cleaned))
    if not _DECIMAL_PATTERN.fullmatch(cleaned):
        return None
    q = Decimal(cleaned).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return str(q)


_KIND_BY_LABEL = {label: rng.kind for label, rng in _default_ranges().items()}


def canonical_for_label(label: VitalLabel, text: str, table: CorrectionTable | None = None) -> Optional[str]:
    """Canonical numeric rendering used for exact-match comparison.

    Applies the same cleanup and rendering as validation without range
    gating, so "098" and "98" compare equal and TEMP always shows one
    decimal digit.
    """
    return _canonicalize(syntactic_correct(text, table), _KIND_BY_LABEL[label])


def _gate_check(cleaned: str, label: VitalLabel, gate: RangeGate) -> ValidationOutcome:
    rng = gate.range_for(label)
    canonical = _canonicalize(cleaned, rng.kind)
    if canonical is None:
        return ValidationOutcome.reject(RejectionReason.NON_NUMERIC)
    numeric = float(canonical)
    if numeric < rng.lo or numeric > rng.hi:
        return ValidationOutcome.reject(RejectionReason.OUT_OF_RANGE)
    return ValidationOutcome.accept(canonical)


def validate(
    raw: str,
    score: float,
    label: VitalLabel,
    gate: RangeGate | None = None,
    min_score: float = DEFAULT_MIN_SCORE,
    table: CorrectionTable | None = None,
) -> ValidationOutcome:
    """Full validation of one OCR reading for one labelled ROI.

    Order matters: the score cutoff first, then syntactic correction, then
    numeric parsing per the label's value kind, then the range gate.
    Composite "SYS/DIA" strings are split only for the blood-pressure labels
    and only when both halves pass their own gates.
    """
    if not label.is_vital:
        raise ValueError("SCREEN readings are not validated")
    gate = gate or RangeGate.defaults()
    if score < min_score:
        return ValidationOutcome.reject(RejectionReason.LOW_SCORE)
    cleaned = syntactic_correct(raw, table)
    if "/" in cleaned:
        if label in (VitalLabel.SYS, VitalLabel.DIA) and cleaned.count("/") == 1:
            left, right = cleaned.split("/")
            sys_out = _gate_check(left, VitalLabel.SYS, gate)
            dia_out = _gate_check(right, VitalLabel.DIA, gate)
            if sys_out.accepted and dia_out.accepted:
                return sys_out if label is VitalLabel.SYS else dia_out
        return ValidationOutcome.reject(RejectionReason.NON_NUMERIC)
    return _gate_check(cleaned, label, gate)


def assemble(
    detections: Sequence[Detection],
    ocr_results: Sequence[Optional[tuple[str, float]]],
    gate: RangeGate | None = None,
    min_score: float = DEFAULT_MIN_SCORE,
    table: CorrectionTable | None = None,
) -> dict[VitalLabel, list[VitalRecord]]:
    """Pair detections with their OCR readings and keep the validated ones.

    Absent OCR results and rejected readings are skipped; accepted records
    keep detection order within each label.
    """
    if len(detections) != len(ocr_results):
        raise LengthMismatch(
            f"{len(detections)} detections vs {len(ocr_results)} OCR results"
        )
    out: dict[VitalLabel, list[VitalRecord]] = {}
    for det, ocr in zip(detections, ocr_results):
        if ocr is None:
            continue
        text, score = ocr
        outcome = validate(text, score, det.label, gate=gate, min_score=min_score, table=table)
        if not outcome.accepted:
            continue
        record = VitalRecord(
            label=det.label, value=outcome.value, confidence=score, box=det.box
        )
        out.setdefault(det.label, []).append(record)
    return out


def load_validation_config(path: str | Path) -> tuple[RangeGate, CorrectionTable]:
    """Load gate ranges and the correction table from a JSON config file.

    Schema: {"gates": {LABEL: {"min": n, "max": n, "kind": "integer" |
    "one-decimal", "unit": str}}, "corrections": {char: char}}. Both sections
    are optional; omitted labels keep their defaults.
    """
    doc = json.loads(Path(path).read_text())
    ranges = _default_ranges()
    for key, spec in doc.get("gates", {}).items():
        label = label_parse(key)
        base = ranges[label]
        ranges[label] = GateRange(
            lo=float(spec.get("min", base.lo)),
            hi=float(spec.get("max", base.hi)),
            kind=ValueKind(spec.get("kind", base.kind.value)),
            unit=str(spec.get("unit", base.unit)),
        )
    table_map = dict(_DEFAULT_CONFUSIONS)
    table_map.update({str(k): str(v) for k, v in doc.get("corrections", {}).items()})
    return RangeGate(ranges), CorrectionTable(table_map)
