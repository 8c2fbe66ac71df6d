"""Pluggable inference backends for the three pipeline stages.

Three interfaces (segmentation, ROI detection, OCR) with interchangeable
implementations: ground-truth replay mocks, a template-matching reference
OCR, and adapters for exported neural-network graphs. Every backend handed
to the pipeline is wrapped in a contract validator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, runtime_checkable

from ..core import BinaryMask, Detection, ImageBuffer, VitalscanError


class ContractViolation(VitalscanError):
    """A backend returned output violating its interface invariants."""


@runtime_checkable
class SegmentationBackend(Protocol):
    def segment(self, img: ImageBuffer, tau: float) -> Optional[tuple[BinaryMask, float]]:
        """Screen mask and confidence, or None when no screen clears tau."""
        ...


@runtime_checkable
class DetectionBackend(Protocol):
    def detect(self, img: ImageBuffer, tau: float) -> list[Detection]:
        """ROI detections with confidence >= tau, boxes inside the image."""
        ...


@runtime_checkable
class OcrBackend(Protocol):
    def recognize(self, crop: ImageBuffer) -> Optional[tuple[str, float]]:
        """Raw text and score in [0, 1]; None when the crop reads as empty."""
        ...


@dataclass(frozen=True)
class BackendSet:
    seg: SegmentationBackend
    det: DetectionBackend
    ocr: OcrBackend


class _CheckedSeg:
    def __init__(self, inner: SegmentationBackend):
        self._inner = inner

    def segment(self, img: ImageBuffer, tau: float):
        out = self._inner.segment(img, tau)
        if out is None:
            return None
        mask, conf = out
        if not mask.matches(img):
            raise ContractViolation(
                f"segmentation mask {mask.width}x{mask.height} does not match "
                f"image {img.width}x{img.height}"
            )
        if not (tau <= conf <= 1.0):
            raise ContractViolation(f"segmentation confidence {conf} outside [tau={tau}, 1]")
        return mask, conf


class _CheckedDet:
    def __init__(self, inner: DetectionBackend):
        self._inner = inner

    def detect(self, img: ImageBuffer, tau: float):
        dets = self._inner.detect(img, tau)
        for d in dets:
            if not (tau <= d.confidence <= 1.0):
                raise ContractViolation(
                    f"detection confidence {d.confidence} outside [tau={tau}, 1]"
                )
            b = d.box
            if b.x_max > img.width or b.y_max > img.height:
                raise ContractViolation(f"detection box {b} exceeds image bounds")
        return dets


class _CheckedOcr:
    def __init__(self, inner: OcrBackend):
        self._inner = inner

    def recognize(self, crop: ImageBuffer):
        out = self._inner.recognize(crop)
        if out is None:
            return None
        text, score = out
        if not text:
            raise ContractViolation("OCR must report absence as None, never an empty string")
        if not (0.0 <= score <= 1.0):
            raise ContractViolation(f"OCR score {score} outside [0, 1]")
        return text, score


def validated(backends: BackendSet) -> BackendSet:
    """Wrap every backend in an invariant-checking shim (stateless, idempotent)."""
    seg = backends.seg if isinstance(backends.seg, _CheckedSeg) else _CheckedSeg(backends.seg)
    det = backends.det if isinstance(backends.det, _CheckedDet) else _CheckedDet(backends.det)
    ocr = backends.ocr if isinstance(backends.ocr, _CheckedOcr) else _CheckedOcr(backends.ocr)
    return BackendSet(seg=seg, det=det, ocr=ocr)


from .glyphs import ALPHABET, GlyphAtlas  # noqa: E402
from .manifest import (  # noqa: E402
    ClassMismatch,
    MissingModelFile,
    ModelEntry,
    ModelManifest,
    ParseError,
    load_manifest,
)
from .mock import NoiseSpec, UnknownImageId, mock_backends_from_fixture  # noqa: E402
from .template import TemplateOcrBackend, template_ocr  # noqa: E402
from .interchange import (  # noqa: E402
    InferenceError,
    RuntimeUnavailable,
    interchange_backends,
)

__all__ = [
    "SegmentationBackend",
    "DetectionBackend",
    "OcrBackend",
    "BackendSet",
    "ContractViolation",
    "validated",
    "GlyphAtlas",
    "ALPHABET",
    "ModelManifest",
    "ModelEntry",
    "load_manifest",
    "ParseError",
    "MissingModelFile",
    "ClassMismatch",
    "NoiseSpec",
    "UnknownImageId",
    "mock_backends_from_fixture",
    "TemplateOcrBackend",
    "template_ocr",
    "RuntimeUnavailable",
    "InferenceError",
    "interchange_backends",
]
