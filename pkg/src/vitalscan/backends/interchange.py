"""Adapters for exported neural-network graphs (ONNX).

The adapters own all pre/post-processing: letterbox resizing, box decoding,
confidence filtering, per-class NMS, mask un-letterboxing and CTC decoding.
Graph execution is delegated to an injected session factory so the decode
paths stay testable without the runtime; when onnxruntime is absent the
default factory raises RuntimeUnavailable.

Expected graph contracts:
  seg: input (1,3,S,S) float, output a single-channel score map (logits or
       probabilities) broadcastable to (S, S); foreground at p >= 0.5.
  det: input (1,3,S,S) float, output (1, 4+C, N) or (1, N, 4+C) with
       center-x, center-y, width, height in letterboxed pixels followed by C
       per-class scores.
  ocr: input (1,1,H,W) float, output (1, T, V) step logits with blank at
       index 0 and charset order following the manifest entry.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..core import BinaryMask, BoundingBox, Detection, ImageBuffer, VitalLabel, VitalscanError, label_parse
from .glyphs import resize_bilinear
from .manifest import ModelEntry, ModelManifest

__all__ = [
    "RuntimeUnavailable",
    "InferenceError",
    "interchange_backends",
    "letterbox",
    "unletterbox_boxes",
    "nms",
    "decode_detections",
    "decode_ctc",
]

#: Per-class NMS overlap threshold applied after the confidence filter.
NMS_IOU = 0.5

_LETTERBOX_FILL = 114


class RuntimeUnavailable(VitalscanError):
    """The interchange-format runtime is not importable in this environment."""


class InferenceError(VitalscanError):
    """A model run failed; carries the stage tag."""

    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause if isinstance(cause, BaseException) else None


def letterbox(pixels: np.ndarray, size: int) -> tuple[np.ndarray, float, tuple[int, int]]:
    """Aspect-preserving resize onto a size x size gray canvas.

    Returns the uint8 canvas plus the scale and (pad_x, pad_y) needed to map
    boxes back to the source frame.
    """
    h, w = pixels.shape[:2]
    scale = min(size / h, size / w)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    resized = np.stack(
        [resize_bilinear(pixels[..., c].astype(np.float32), new_h, new_w) for c in range(3)],
        axis=-1,
    )
    canvas = np.full((size, size, 3), _LETTERBOX_FILL, dtype=np.uint8)
    pad_x = (size - new_w) // 2
    pad_y = (size - new_h) // 2
    canvas[pad_y : pad_y + new_h, pad_x : pad_x + new_w] = (
        np.rint(resized).clip(0, 255).astype(np.uint8)
    )
    return canvas, scale, (pad_x, pad_y)


def unletterbox_boxes(
    boxes: np.ndarray, scale: float, pad: tuple[int, int], width: int, height: int
) -> np.ndarray:
    """Map xyxy boxes from letterboxed coordinates back to the source frame."""
    out = boxes.astype(np.float64).copy()
    out[:, [0, 2]] = (out[:, [0, 2]] - pad[0]) / scale
    out[:, [1, 3]] = (out[:, [1, 3]] - pad[1]) / scale
    out[:, [0, 2]] = np.clip(out[:, [0, 2]], 0, width)
    out[:, [1, 3]] = np.clip(out[:, [1, 3]], 0, height)
    return out


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float = NMS_IOU) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices, best first."""
    if len(boxes) == 0:
        return []
    b = np.asarray(boxes, dtype=np.float64)
    order = np.argsort(-np.asarray(scores))
    areas = (b[:, 2] - b[:, 0]).clip(min=0) * (b[:, 3] - b[:, 1]).clip(min=0)
    keep: list[int] = []
    alive = np.ones(len(b), dtype=bool)
    for i in order:
        if not alive[i]:
            continue
        keep.append(int(i))
        x0 = np.maximum(b[i, 0], b[:, 0])
        y0 = np.maximum(b[i, 1], b[:, 1])
        x1 = np.minimum(b[i, 2], b[:, 2])
        y1 = np.minimum(b[i, 3], b[:, 3])
        inter = (x1 - x0).clip(min=0) * (y1 - y0).clip(min=0)
        union = areas[i] + areas - inter
        with np.errstate(divide="ignore", invalid="ignore"):
            iou = np.where(union > 0, inter / union, 0.0)
        alive &= iou <= iou_threshold
        alive[i] = False
    return keep


def decode_detections(
    output: np.ndarray,
    labels: list[VitalLabel],
    tau: float,
    scale: float,
    pad: tuple[int, int],
    width: int,
    height: int,
    iou_threshold: float = NMS_IOU,
) -> list[Detection]:
    """Decode a YOLO-style head into validated detections.

    Confidence filter at tau first, then per-class NMS, then mapping back to
    source coordinates with integer, in-bounds boxes.
    """
    out = np.asarray(output, dtype=np.float64)
    out = out.reshape(out.shape[-2], out.shape[-1]) if out.ndim == 3 else out
    n_cols = 4 + len(labels)
    if out.shape[0] == n_cols and out.shape[1] != n_cols:
        out = out.T
    if out.shape[1] != n_cols:
        raise InferenceError("det", f"unexpected detector output shape {output.shape}")
    cx, cy, bw, bh = out[:, 0], out[:, 1], out[:, 2], out[:, 3]
    boxes = np.stack([cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2], axis=1)
    class_scores = out[:, 4:]
    cls = np.argmax(class_scores, axis=1)
    conf = class_scores[np.arange(len(out)), cls]

    passing = conf >= tau
    boxes, cls, conf = boxes[passing], cls[passing], conf[passing]
    boxes = unletterbox_boxes(boxes, scale, pad, width, height)

    detections: list[Detection] = []
    for c in np.unique(cls):
        sel = np.nonzero(cls == c)[0]
        for j in nms(boxes[sel], conf[sel], iou_threshold):
            i = sel[j]
            x0, y0 = int(np.floor(boxes[i, 0])), int(np.floor(boxes[i, 1]))
            x1, y1 = int(np.ceil(boxes[i, 2])), int(np.ceil(boxes[i, 3]))
            x0, y0 = max(0, x0), max(0, y0)
            x1, y1 = min(width, x1), min(height, y1)
            if x1 <= x0 or y1 <= y0:
                continue
            detections.append(
                Detection(labels[int(c)], BoundingBox(x0, y0, x1, y1), float(min(conf[i], 1.0)))
            )
    detections.sort(key=lambda d: -d.confidence)
    return detections


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def decode_ctc(logits: np.ndarray, charset: str) -> Optional[tuple[str, float]]:
    """Greedy CTC decode: argmax path, collapse repeats, drop blanks (index 0).

    The score is the mean probability of the emitting steps. None when the
    path emits nothing.
    """
    arr = np.asarray(logits, dtype=np.float64)
    arr = arr.reshape(arr.shape[-2], arr.shape[-1]) if arr.ndim == 3 else arr
    if arr.shape[1] != len(charset) + 1:
        raise InferenceError("ocr", f"OCR output width {arr.shape[1]} != charset+blank {len(charset) + 1}")
    rows = arr.sum(axis=1)
    if np.any(arr < 0) or not np.allclose(rows, 1.0, atol=1e-3):
        arr = _softmax(arr)
    path = np.argmax(arr, axis=1)
    probs = arr[np.arange(len(path)), path]
    chars: list[str] = []
    kept_probs: list[float] = []
    prev = 0
    for idx, p in zip(path, probs):
        if idx != 0 and idx != prev:
            chars.append(charset[idx - 1])
            kept_probs.append(float(p))
        prev = idx
    if not chars:
        return None
    return "".join(chars), float(np.clip(np.mean(kept_probs), 0.0, 1.0))


def _default_session_factory(path) -> Callable[[np.ndarray], list[np.ndarray]]:
    try:
        import onnxruntime as ort  # type: ignore
    except ImportError:
        raise RuntimeUnavailable(
            "onnxruntime is not installed; the mock and template backends remain usable "
            "(pip install 'vitalscan[onnx]' to enable interchange models)"
        ) from None
    session = ort.InferenceSession(str(path), providers=["CPUExecutionProvider"])
    name = session.get_inputs()[0].name

    def run(arr: np.ndarray) -> list[np.ndarray]:
        return session.run(None, {name: arr})

    return run


def _to_nchw(canvas: np.ndarray) -> np.ndarray:
    return (canvas.astype(np.float32) / 255.0).transpose(2, 0, 1)[None, ...]


class InterchangeSegmentation:
    def __init__(self, run, input_size: int):
        self._run = run
        self._size = input_size

    def segment(self, img: ImageBuffer, tau: float):
        canvas, scale, pad = letterbox(img.pixels, self._size)
        try:
            outputs = self._run(_to_nchw(canvas))
        except VitalscanError:
            raise
        except Exception as e:
            raise InferenceError("seg", e) from e
        prob = np.asarray(outputs[0], dtype=np.float64).reshape(self._size, self._size)
        if prob.min() < 0.0 or prob.max() > 1.0:
            prob = 1.0 / (1.0 + np.exp(-prob))
        # strip letterbox padding, then resize scores back to the source frame
        new_w = max(1, round(img.width * scale))
        new_h = max(1, round(img.height * scale))
        content = prob[pad[1] : pad[1] + new_h, pad[0] : pad[0] + new_w]
        full = resize_bilinear(content, img.height, img.width)
        fg = full >= 0.5
        if not fg.any():
            return None
        conf = float(np.clip(full[fg].mean(), 0.0, 1.0))
        if conf < tau:
            return None
        return BinaryMask(fg), conf


class InterchangeDetection:
    def __init__(self, run, input_size: int, labels: list[VitalLabel]):
        self._run = run
        self._size = input_size
        self._labels = labels

    def detect(self, img: ImageBuffer, tau: float) -> list[Detection]:
        canvas, scale, pad = letterbox(img.pixels, self._size)
        try:
            outputs = self._run(_to_nchw(canvas))
        except VitalscanError:
            raise
        except Exception as e:
            raise InferenceError("det", e) from e
        return decode_detections(
            outputs[0], self._labels, tau, scale, pad, img.width, img.height
        )


class InterchangeOcr:
    def __init__(self, run, input_height: int, charset: str):
        self._run = run
        self._height = input_height
        self._charset = charset

    def recognize(self, crop: ImageBuffer) -> Optional[tuple[str, float]]:
        px = crop.pixels.astype(np.float32)
        gray = (0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]) / 255.0
        w = max(8, round(crop.width * self._height / crop.height))
        resized = resize_bilinear(gray, self._height, w)
        batch = resized[None, None, ...].astype(np.float32)
        try:
            outputs = self._run(batch)
        except VitalscanError:
            raise
        except Exception as e:
            raise InferenceError("ocr", e) from e
        return decode_ctc(outputs[0], self._charset)


def interchange_backends(manifest: ModelManifest, session_factory=None):
    """Build the backend triple from an interchange-model manifest.

    session_factory(path) must return a callable arr -> list of outputs; the
    default lazily imports onnxruntime and raises RuntimeUnavailable when it
    is absent.
    """
    from . import BackendSet

    factory = session_factory or _default_session_factory
    seg_entry: ModelEntry = manifest.require("seg")
    det_entry: ModelEntry = manifest.require("det")
    ocr_entry: ModelEntry = manifest.require("ocr")
    labels = [label_parse(name) for name in (det_entry.classes or ())]
    return BackendSet(
        seg=InterchangeSegmentation(factory(seg_entry.path), seg_entry.input_size),
        det=InterchangeDetection(factory(det_entry.path), det_entry.input_size, labels),
        ocr=InterchangeOcr(factory(ocr_entry.path), ocr_entry.input_size, ocr_entry.charset or "0123456789./"),
    )
