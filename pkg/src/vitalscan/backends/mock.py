"""Ground-truth replay backends.

Built from a synthetic-corpus manifest, these backends identify each input
image by content hash and replay its known quad, ROI boxes and value strings,
optionally perturbed by seeded noise (corner jitter, character substitution).
They make the whole pipeline testable without trained models.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Optional

import numpy as np

from ..core import VITAL_LABELS, BoundingBox, Detection, ImageBuffer, VitalLabel, VitalscanError
from ..geometry import (
    CanonicalFrame,
    DegenerateShape,
    compute_homography,
    fill_quad,
    order_corners,
)
from ..imgio import load_image

if TYPE_CHECKING:  # pragma: no cover
    from ..synthscreen import GroundTruthManifest

__all__ = ["NoiseSpec", "UnknownImageId", "mock_backends_from_fixture"]


class UnknownImageId(VitalscanError):
    """The input image is not part of the replay fixture."""


#: Digit -> confusable character, the inverse of the digitizer's correction
#: table; used to inject realistic OCR confusions.
REVERSE_CONFUSIONS = {"0": "O", "1": "I", "2": "Z", "5": "S", "6": "G", "8": "B"}


@dataclass(frozen=True)
class NoiseSpec:
    """Deterministic noise injected into replayed ground truth."""

    corner_jitter_px: float = 0.0
    ocr_substitution_rate: float = 0.0
    seg_confidence: float = 0.97
    det_confidence_hi: float = 0.99
    det_confidence_lo: float = 0.90
    ocr_score: float = 0.96
    seed: int = 0

    def det_confidence(self, label: VitalLabel) -> float:
        """Per-label detection confidence, spread across [lo, hi] by label index."""
        i = VITAL_LABELS.index(label)
        span = self.det_confidence_hi - self.det_confidence_lo
        return self.det_confidence_hi - span * i / max(len(VITAL_LABELS) - 1, 1)


def _image_key(img: ImageBuffer) -> str:
    digest = hashlib.sha1(img.pixels.tobytes()).hexdigest()
    return f"{digest}:{img.width}x{img.height}"


class _ReplayState:
    """Per-backend-set context shared across the three stages of one run."""

    def __init__(self):
        self.entry = None
        self.entry_index = -1
        self.queue: list[tuple[VitalLabel, str]] = []
        self.cursor = 0


class _FixtureSeg:
    def __init__(self, index, noise: NoiseSpec, state: _ReplayState):
        self._index = index
        self._noise = noise
        self._state = state

    def segment(self, img: ImageBuffer, tau: float):
        key = _image_key(img)
        try:
            entry, entry_index = self._index[key]
        except KeyError:
            raise UnknownImageId(f"image {img.width}x{img.height} is not in the fixture") from None
        st = self._state
        st.entry, st.entry_index = entry, entry_index
        st.queue, st.cursor = [], 0
        if entry.quad is None:
            return None
        conf = self._noise.seg_confidence
        if conf < tau:
            return None
        quad = entry.quad
        if self._noise.corner_jitter_px > 0:
            rng = np.random.default_rng([self._noise.seed, entry_index, 1])
            pts = quad.as_array() + rng.normal(0.0, self._noise.corner_jitter_px, size=(4, 2))
            try:
                quad = order_corners(pts)
            except DegenerateShape:
                pass  # keep the clean quad if jitter collapsed it
        return fill_quad(quad, img.width, img.height), conf


class _FixtureDet:
    def __init__(self, noise: NoiseSpec, state: _ReplayState, space: str, frame: CanonicalFrame):
        if space not in ("canonical", "image"):
            raise ValueError(f"detect space must be 'canonical' or 'image', got {space!r}")
        self._noise = noise
        self._state = state
        self._space = space
        self._frame = frame
        self._image_boxes: dict[int, list[BoundingBox]] = {}

    def _boxes_in_image_space(self, entry, entry_index: int) -> list[BoundingBox]:
        """Enclosing image-space boxes of the canonical ROIs, via the true warp."""
        cached = self._image_boxes.get(entry_index)
        if cached is not None:
            return cached
        hom = compute_homography(self._frame.quad, entry.quad)
        boxes = []
        for fld in entry.vitals:
            b = fld.bbox
            corners = np.array(
                [
                    [b.x_min, b.y_min],
                    [b.x_max - 1, b.y_min],
                    [b.x_max - 1, b.y_max - 1],
                    [b.x_min, b.y_max - 1],
                ],
                dtype=float,
            )
            mapped = hom.apply(corners)
            x0 = max(0, int(np.floor(mapped[:, 0].min())))
            y0 = max(0, int(np.floor(mapped[:, 1].min())))
            x1 = min(entry.width, int(np.ceil(mapped[:, 0].max())) + 1)
            y1 = min(entry.height, int(np.ceil(mapped[:, 1].max())) + 1)
            boxes.append(BoundingBox(x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)))
        self._image_boxes[entry_index] = boxes
        return boxes

    def detect(self, img: ImageBuffer, tau: float) -> list[Detection]:
        st = self._state
        if st.entry is None:
            raise UnknownImageId("detection replay requires a prior segmentation call")
        entry = st.entry
        if self._space == "image":
            raw_boxes = self._boxes_in_image_space(entry, st.entry_index)
        else:
            raw_boxes = [fld.bbox for fld in entry.vitals]
        dets: list[Detection] = []
        queue: list[tuple[VitalLabel, str]] = []
        for fld, box in zip(entry.vitals, raw_boxes):
            conf = self._noise.det_confidence(fld.label)
            if conf < tau:
                continue
            x1 = min(box.x_max, img.width)
            y1 = min(box.y_max, img.height)
            if box.x_min >= x1 or box.y_min >= y1:
                continue
            dets.append(Detection(fld.label, BoundingBox(box.x_min, box.y_min, x1, y1), conf))
            queue.append((fld.label, fld.value))
        st.queue, st.cursor = queue, 0
        return dets


class _FixtureOcr:
    def __init__(self, noise: NoiseSpec, state: _ReplayState):
        self._noise = noise
        self._state = state

    def recognize(self, crop: ImageBuffer) -> Optional[tuple[str, float]]:
        st = self._state
        if st.cursor >= len(st.queue):
            raise UnknownImageId("OCR replay called more times than detections emitted")
        _, value = st.queue[st.cursor]
        st.cursor += 1
        text = value
        rate = self._noise.ocr_substitution_rate
        if rate > 0:
            rng = np.random.default_rng([self._noise.seed, st.entry_index, 2, st.cursor])
            text = "".join(
                REVERSE_CONFUSIONS.get(ch, ch)
                if ch in REVERSE_CONFUSIONS and rng.random() < rate
                else ch
                for ch in text
            )
        return text, self._noise.ocr_score


def mock_backends_from_fixture(
    manifest: "GroundTruthManifest",
    noise: NoiseSpec | None = None,
    detect_space: str = "canonical",
    frame: CanonicalFrame | None = None,
):
    """Build a replay BackendSet from a ground-truth manifest.

    detect_space selects the coordinate frame of replayed ROI boxes:
    "canonical" matches a rectifying pipeline, "image" serves the
    rectification-disabled ablation. Input images are identified by content
    hash, so the fixture only answers for its own corpus files.
    """
    from . import BackendSet

    noise = noise or NoiseSpec()
    frame = frame or CanonicalFrame()
    index: dict[str, tuple] = {}
    root = Path(manifest.root)
    for i, entry in enumerate(manifest.images):
        img = load_image(root / entry.file)
        if img.width != entry.width or img.height != entry.height:
            raise VitalscanError(
                f"fixture image {entry.file} is {img.width}x{img.height}, "
                f"manifest says {entry.width}x{entry.height}"
            )
        index[_image_key(img)] = (entry, i)
    state = _ReplayState()
    return BackendSet(
        seg=_FixtureSeg(index, noise, state),
        det=_FixtureDet(noise, state, detect_space, frame),
        ocr=_FixtureOcr(noise, state),
    )
