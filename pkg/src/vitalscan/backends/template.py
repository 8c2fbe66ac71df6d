"""Reference OCR: Otsu binarization, column-run glyph segmentation, and
normalized cross-correlation against the glyph atlas.

Built for the numeric alphabet of monitor readouts; recognition and the
synthetic renderer share the same atlas, which makes the pair a closed-loop
oracle.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import ImageBuffer
from .glyphs import GlyphAtlas, builtin_atlas, resize_bilinear

__all__ = ["template_ocr", "TemplateOcrBackend", "otsu_threshold", "MATCH_THRESHOLD"]

#: Minimum best-glyph correlation for a crop to count as containing text.
MATCH_THRESHOLD = 0.6

#: Glyph candidates with fewer foreground pixels are treated as speckle.
_MIN_GLYPH_PIXELS = 4


def otsu_threshold(gray01: np.ndarray) -> float:
    """Otsu's threshold over a [0, 1] grayscale array, returned in [0, 1]."""
    levels = np.clip(np.rint(gray01 * 255.0), 0, 255).astype(np.intp)
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if total == 0:
        return 0.5
    bins = np.arange(256, dtype=np.float64)
    omega = np.cumsum(hist) / total
    mu = np.cumsum(hist * bins) / total
    mu_t = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_t * omega - mu) ** 2 / (omega * (1.0 - omega))
    between[~np.isfinite(between)] = -1.0
    # the maximizer is a plateau across empty histogram gaps; take its middle
    peak = np.nonzero(between >= between.max() - 1e-9)[0]
    return float(peak.mean()) / 255.0


def _luma01(img: ImageBuffer) -> np.ndarray:
    px = img.pixels.astype(np.float32)
    return (0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]) / 255.0


def _binarize(gray01: np.ndarray) -> np.ndarray:
    t = otsu_threshold(gray01)
    fg = gray01 > t
    # Readouts are bright on dark; a majority-foreground split means the crop
    # is inverted (or washed out), so flip.
    if fg.mean() > 0.6:
        fg = ~fg
    return fg


def _glyph_boxes(fg: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Tight (x0, x1, y0, y1) boxes of column-connected glyph runs, left to right."""
    cols = fg.any(axis=0)
    boxes = []
    x = 0
    w = fg.shape[1]
    while x < w:
        if not cols[x]:
            x += 1
            continue
        x0 = x
        while x < w and cols[x]:
            x += 1
        x1 = x
        rows = fg[:, x0:x1].any(axis=1)
        ys = np.nonzero(rows)[0]
        y0, y1 = int(ys[0]), int(ys[-1]) + 1
        if int(fg[y0:y1, x0:x1].sum()) >= _MIN_GLYPH_PIXELS:
            boxes.append((x0, x1, y0, y1))
    return boxes


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = float(np.sqrt((da * da).sum() * (db * db).sum()))
    if denom < 1e-12:
        return 1.0 if float(np.abs(a - b).mean()) < 1e-6 else 0.0
    return float((da * db).sum() / denom)


def match_glyph(patch01: np.ndarray, atlas: GlyphAtlas) -> tuple[str, float]:
    """Best atlas character for a tight glyph patch.

    The patch is resized to each character's tight content and compared on a
    shared background ring; the correlation is scaled by aspect-ratio
    similarity so near-square blobs do not collapse onto '.'.
    """
    ph, pw = patch01.shape
    patch_aspect = pw / ph
    pad = atlas.pad
    best_ch, best_score = "?", -1.0
    for ch in atlas.templates:
        content = atlas.content(ch)
        ih, iw = content.shape
        resized = resize_bilinear(patch01, ih, iw)
        canvas = np.zeros((ih + 2 * pad, iw + 2 * pad), dtype=np.float32)
        canvas[pad : pad + ih, pad : pad + iw] = resized
        reference = np.zeros_like(canvas)
        reference[pad : pad + ih, pad : pad + iw] = content
        aspect = iw / ih
        ratio = min(aspect, patch_aspect) / max(aspect, patch_aspect)
        score = _ncc(canvas, reference) * ratio
        if score > best_score:
            best_ch, best_score = ch, score
    return best_ch, best_score


def template_ocr(crop: ImageBuffer, atlas: GlyphAtlas | None = None) -> Optional[tuple[str, float]]:
    """Recognize the numeric string in a crop, or None when no text is found."""
    atlas = atlas or builtin_atlas()
    if crop.width < 3 or crop.height < 3:
        return None
    gray = _luma01(crop)
    if gray.max() - gray.min() < 0.05:
        return None  # flat crop: nothing to threshold
    fg = _binarize(gray)
    if not fg.any():
        return None
    boxes = _glyph_boxes(fg)
    if not boxes:
        return None
    chars = []
    scores = []
    for x0, x1, y0, y1 in boxes:
        ch, score = match_glyph(fg[y0:y1, x0:x1].astype(np.float32), atlas)
        chars.append(ch)
        scores.append(score)
    if max(scores) <= MATCH_THRESHOLD:
        return None
    text = "".join(chars)
    score = float(np.clip(np.mean([max(0.0, s) for s in scores]), 0.0, 1.0))
    return text, score


class TemplateOcrBackend:
    """OcrBackend over template_ocr with a fixed atlas."""

    def __init__(self, atlas: GlyphAtlas | None = None):
        self._atlas = atlas or builtin_atlas()

    def recognize(self, crop: ImageBuffer) -> Optional[tuple[str, float]]:
        return template_ocr(crop, self._atlas)
