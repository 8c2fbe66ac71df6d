"""Shared domain types: images, labels, boxes, records, and the extraction result model."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


class VitalscanError(Exception):
    """Base class for every error raised by this package."""


class UnknownLabel(VitalscanError):
    """A string did not name any known class label."""


class VitalLabel(Enum):
    """Class labels: the eight vital-sign readouts plus the monitor screen itself.

    SCREEN is the localization-stage class and never appears in extraction
    output; the eight vitals are the ROI-detection class space.
    """

    HR = "HR"
    PR = "PR"
    SPO2 = "SPO2"
    SYS = "SYS"
    DIA = "DIA"
    MAP = "MAP"
    RR = "RR"
    TEMP = "TEMP"
    SCREEN = "SCREEN"

    @property
    def is_vital(self) -> bool:
        return self is not VitalLabel.SCREEN

    def __str__(self) -> str:
        return self.value


#: The eight vital-sign labels in canonical reporting order.
VITAL_LABELS: tuple[VitalLabel, ...] = tuple(
    l for l in VitalLabel if l is not VitalLabel.SCREEN
)

_LABEL_BY_KEY = {l.value.upper(): l for l in VitalLabel}


def label_parse(text: str) -> VitalLabel:
    """Parse a label name case-insensitively ("SpO2", "hr", "Screen", ...)."""
    try:
        return _LABEL_BY_KEY[text.strip().upper()]
    except KeyError:
        raise UnknownLabel(f"unknown label {text!r}") from None


def label_format(label: VitalLabel) -> str:
    return label.value


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable or not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """An 8-bit RGB raster, row-major, immutable after construction."""

    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
        object.__setattr__(self, "pixels", _as_readonly(arr))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    @classmethod
    def zeros(cls, width: int, height: int) -> "ImageBuffer":
        return cls(np.zeros((height, width, 3), dtype=np.uint8))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        return cls(np.asarray(arr, dtype=np.uint8))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel foreground mask with the dimensions of the image it came from."""

    data: np.ndarray  # (H, W) bool

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"expected (H, W) mask, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("mask must be at least 1x1")
        if arr.dtype != np.bool_:
            arr = arr.astype(bool)
        object.__setattr__(self, "data", _as_readonly(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def matches(self, img: ImageBuffer) -> bool:
        return self.width == img.width and self.height == img.height

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")


def _shoelace(pts: Sequence[Point2D]) -> float:
    # Positive for clockwise order in image coordinates (y grows downward).
    n = len(pts)
    s = 0.0
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        s += a.x * b.y - b.x * a.y
    return 0.5 * s


def _segments_cross(p1: Point2D, p2: Point2D, q1: Point2D, q2: Point2D) -> bool:
    def orient(a, b, c):
        v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


@dataclass(frozen=True)
class ScreenQuad:
    """Four ordered monitor corners: top-left, top-right, bottom-right, bottom-left.

    The stored order is clockwise as seen on screen (positive shoelace area in
    image coordinates). Use geometry.order_corners to canonicalize unordered
    points.
    """

    corners: tuple[Point2D, Point2D, Point2D, Point2D]

    def __post_init__(self):
        pts = tuple(self.corners)
        if len(pts) != 4:
            raise ValueError(f"a quad has exactly 4 corners, got {len(pts)}")
        object.__setattr__(self, "corners", pts)
        for i in range(4):
            for j in range(i + 1, 4):
                if pts[i] == pts[j]:
                    raise ValueError("quad corners must be distinct")
        if _shoelace(pts) <= 1e-9:
            raise ValueError("quad must have positive area in TL,TR,BR,BL clockwise order")
        # Opposite edges of a simple quad never cross.
        if _segments_cross(pts[0], pts[1], pts[2], pts[3]) or _segments_cross(
            pts[1], pts[2], pts[3], pts[0]
        ):
            raise ValueError("quad edges must not self-intersect")

    @classmethod
    def from_array(cls, arr) -> "ScreenQuad":
        a = np.asarray(arr, dtype=float)
        if a.shape != (4, 2):
            raise ValueError(f"expected 4x2 corner array, got shape {a.shape}")
        return cls(tuple(Point2D(float(x), float(y)) for x, y in a))  # type: ignore[arg-type]

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.corners], dtype=float)

    @property
    def area(self) -> float:
        return _shoelace(self.corners)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; max edges are exclusive so width = x_max - x_min."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"box coordinates must be non-negative: {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"box must have positive extent: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def to_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, vals: Sequence[int]) -> "BoundingBox":
        x0, y0, x1, y1 = vals
        return cls(int(x0), int(y0), int(x1), int(y1))


def _check_confidence(confidence: float) -> None:
    if not (0.0 <= confidence <= 1.0):
        raise ValueError(f"confidence must be within [0, 1], got {confidence}")


@dataclass(frozen=True)
class Detection:
    """One ROI hypothesis from the detection stage."""

    label: VitalLabel
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not self.label.is_vital:
            raise ValueError("detections carry vital-sign labels, not SCREEN")
        _check_confidence(self.confidence)


@dataclass(frozen=True)
class VitalRecord:
    """A validated reading: canonical value string plus the OCR confidence.

    The box is the ROI the value was read from, in the coordinates of the
    image the detector saw (the rectified frame when rectification is on).
    """

    label: VitalLabel
    value: str
    confidence: float
    box: BoundingBox

    def __post_init__(self):
        if not self.label.is_vital:
            raise ValueError("vital records carry vital-sign labels, not SCREEN")
        if not self.value:
            raise ValueError("record value must be a non-empty string")
        _check_confidence(self.confidence)


#: Tolerance for the stage-timing sum invariant, in milliseconds.
TIMING_TOLERANCE_MS = 0.1


@dataclass(frozen=True)
class StageTimings:
    """Per-stage wall-clock ledger; components always sum to the total."""

    seg_ms: float
    det_ms: float
    ocr_ms: float
    overhead_ms: float
    total_ms: float

    def __post_init__(self):
        for name in ("seg_ms", "det_ms", "ocr_ms", "overhead_ms", "total_ms"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a non-negative real, got {v}")
        parts = self.seg_ms + self.det_ms + self.ocr_ms + self.overhead_ms
        if abs(parts - self.total_ms) > TIMING_TOLERANCE_MS:
            raise ValueError(
                f"total_ms {self.total_ms} does not match component sum {parts}"
            )

    @classmethod
    def of(cls, seg_ms: float, det_ms: float, ocr_ms: float, overhead_ms: float) -> "StageTimings":
        return cls(seg_ms, det_ms, ocr_ms, overhead_ms, seg_ms + det_ms + ocr_ms + overhead_ms)

    @classmethod
    def zero(cls) -> "StageTimings":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ExtractionResult:
    """Structured output of one pipeline run.

    screen is None exactly when the monitor was not found, in which case
    vitals is empty (the early-termination contract).
    """

    source_id: str
    screen: Optional[tuple[ScreenQuad, float]]
    vitals: Mapping[VitalLabel, tuple[VitalRecord, ...]]
    timings: StageTimings

    def __post_init__(self):
        if self.screen is not None:
            _check_confidence(self.screen[1])
        cleaned: dict[VitalLabel, tuple[VitalRecord, ...]] = {}
        for label, records in self.vitals.items():
            recs = tuple(records)
            if not recs:
                continue
            for r in recs:
                if r.label is not label:
                    raise ValueError(f"record labelled {r.label} filed under {label}")
            cleaned[label] = recs
        if self.screen is None and cleaned:
            raise ValueError("a result without a screen cannot carry vitals")
        object.__setattr__(self, "vitals", cleaned)

    @classmethod
    def empty(cls, source_id: str, timings: StageTimings) -> "ExtractionResult":
        return cls(source_id=source_id, screen=None, vitals={}, timings=timings)

    def best(self, label: VitalLabel) -> Optional[VitalRecord]:
        """Highest-confidence record for a label, if any."""
        records = self.vitals.get(label, ())
        return max(records, key=lambda r: r.confidence) if records else None


def result_to_json(result: ExtractionResult) -> str:
    """Serialize a result to its canonical JSON form.

    Byte-deterministic: top-level and nested object keys are emitted sorted,
    except the vitals mapping whose keys follow the fixed label reporting
    order.
    """
    if result.screen is None:
        screen = None
    else:
        quad, conf = result.screen
        screen = {
            "conf": float(conf),
            "corners": [[p.x, p.y] for p in quad.corners],
        }
    vitals = {}
    for label in VITAL_LABELS:
        records = result.vitals.get(label)
        if not records:
            continue
        vitals[label.value] = [
            {"bbox": r.box.to_list(), "conf": float(r.confidence), "value": r.value}
            for r in records
        ]
    t = result.timings
    doc = {
        "screen": screen,
        "source_id": result.source_id,
        "timings": {
            "det_ms": t.det_ms,
            "ocr_ms": t.ocr_ms,
            "overhead_ms": t.overhead_ms,
            "seg_ms": t.seg_ms,
            "total_ms": t.total_ms,
        },
        "vitals": vitals,
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=False)


def result_from_json(text: str) -> ExtractionResult:
    """Inverse of result_to_json. Raises ValueError on malformed documents."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"invalid result JSON: {e}") from e
    try:
        screen = None
        if doc["screen"] is not None:
            corners = tuple(
                Point2D(float(x), float(y)) for x, y in doc["screen"]["corners"]
            )
            screen = (ScreenQuad(corners), float(doc["screen"]["conf"]))  # type: ignore[arg-type]
        vitals: dict[VitalLabel, tuple[VitalRecord, ...]] = {}
        for key, entries in doc["vitals"].items():
            label = label_parse(key)
            vitals[label] = tuple(
                VitalRecord(
                    label=label,
                    value=str(e["value"]),
                    confidence=float(e["conf"]),
                    box=BoundingBox.from_list(e["bbox"]),
                )
                for e in entries
            )
        t = doc["timings"]
        timings = StageTimings(
            seg_ms=float(t["seg_ms"]),
            det_ms=float(t["det_ms"]),
            ocr_ms=float(t["ocr_ms"]),
            overhead_ms=float(t["overhead_ms"]),
            total_ms=float(t["total_ms"]),
        )
        return ExtractionResult(
            source_id=str(doc["source_id"]),
            screen=screen,
            vitals=vitals,
            timings=timings,
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"result JSON missing or malformed field: {e}") from e
