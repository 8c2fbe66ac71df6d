"""The three-stage extraction orchestrator.

Stage 1 localizes the screen and rectifies it to the canonical frame, stage 2
detects vital-sign ROIs on the rectified view, stage 3 reads and validates
each ROI. Every run carries a per-stage timing ledger whose components sum to
the measured total.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .backends import BackendSet, validated
from .core import (
    BoundingBox,
    ExtractionResult,
    ImageBuffer,
    StageTimings,
    VitalscanError,
)
from .digitizer import DEFAULT_MIN_SCORE, CorrectionTable, RangeGate, assemble
from .geometry import CanonicalFrame, compute_homography, extract_corners, warp_perspective

__all__ = ["PipelineConfig", "StageError", "EmptyIntersection", "run", "crop"]


class StageError(VitalscanError):
    """A pipeline stage failed; carries the stage tag and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class EmptyIntersection(VitalscanError):
    """The crop box does not intersect the image."""


@dataclass(frozen=True)
class PipelineConfig:
    """Run parameters. tau gates segmentation and detection; OCR acceptance is
    gated separately by min_score inside validation."""

    tau: float = 0.8
    frame: CanonicalFrame = CanonicalFrame()
    gate: RangeGate = field(default_factory=RangeGate.defaults)
    corrections: CorrectionTable = field(default_factory=CorrectionTable)
    min_score: float = DEFAULT_MIN_SCORE
    crop_pad: int = 2
    rectify: bool = True
    backend: str = "mock"

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not (0.0 <= self.min_score <= 1.0):
            raise ValueError(f"min_score must lie in [0, 1], got {self.min_score}")
        if self.crop_pad < 0:
            raise ValueError("crop_pad must be non-negative")


def crop(img: ImageBuffer, box: BoundingBox, pad: int = 0) -> ImageBuffer:
    """Sub-image of box expanded by pad on each side, clamped to the image."""
    x0 = max(0, box.x_min - pad)
    y0 = max(0, box.y_min - pad)
    x1 = min(img.width, box.x_max + pad)
    y1 = min(img.height, box.y_max + pad)
    if x0 >= x1 or y0 >= y1:
        raise EmptyIntersection(f"box {box} does not intersect {img.width}x{img.height} image")
    return ImageBuffer(img.pixels[y0:y1, x0:x1])


def run(
    img: ImageBuffer,
    cfg: PipelineConfig,
    backends: BackendSet,
    source_id: str = "",
) -> ExtractionResult:
    """Execute the full pipeline on one image.

    Returns an empty result (screen=None, no vitals, det/ocr timings zero)
    when segmentation finds no monitor. Backend and geometry failures raise
    StageError tagged stage1/stage2/stage3.
    """
    checked = validated(backends)
    t_run = time.perf_counter()

    t0 = time.perf_counter()
    try:
        seg_out = checked.seg.segment(img, cfg.tau)
    except VitalscanError as e:
        raise StageError("stage1", e) from e
    seg_ms = (time.perf_counter() - t0) * 1000.0

    if seg_out is None:
        total = (time.perf_counter() - t_run) * 1000.0
        overhead = max(total - seg_ms, 0.0)
        return ExtractionResult.empty(source_id, StageTimings.of(seg_ms, 0.0, 0.0, overhead))

    mask, seg_conf = seg_out
    try:
        quad = extract_corners(mask)
        hom = compute_homography(quad, cfg.frame.quad)
        rect = warp_perspective(img, hom, cfg.frame) if cfg.rectify else img
    except VitalscanError as e:
        raise StageError("stage1", e) from e

    t0 = time.perf_counter()
    try:
        detections = checked.det.detect(rect, cfg.tau)
    except VitalscanError as e:
        raise StageError("stage2", e) from e
    det_ms = (time.perf_counter() - t0) * 1000.0

    ocr_ms = 0.0
    ocr_results = []
    for det in detections:
        try:
            cropped = crop(rect, det.box, cfg.crop_pad)
        except VitalscanError as e:
            raise StageError("stage3", e) from e
        t0 = time.perf_counter()
        try:
            ocr_results.append(checked.ocr.recognize(cropped))
        except VitalscanError as e:
            raise StageError("stage3", e) from e
        ocr_ms += (time.perf_counter() - t0) * 1000.0

    vitals = assemble(
        detections,
        ocr_results,
        gate=cfg.gate,
        min_score=cfg.min_score,
        table=cfg.corrections,
    )

    total = (time.perf_counter() - t_run) * 1000.0
    overhead = max(total - seg_ms - det_ms - ocr_ms, 0.0)
    timings = StageTimings.of(seg_ms, det_ms, ocr_ms, overhead)
    return ExtractionResult(
        source_id=source_id,
        screen=(quad, seg_conf),
        vitals={k: tuple(v) for k, v in vitals.items()},
        timings=timings,
    )
