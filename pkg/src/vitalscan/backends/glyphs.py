"""Numeric glyph atlas: the character templates shared by the synthetic screen
renderer and the template-matching OCR, which closes the test loop.

The alphabet is the digits plus '.' and '/', which covers every value a
monitor readout displays. Stored templates share one canvas height; matching
happens on tight-cropped content embedded in a background ring, so solid
glyphs like '.' still correlate meaningfully.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..core import VitalscanError

__all__ = [
    "GlyphAtlas",
    "ALPHABET",
    "glyph_bitmap",
    "render_glyph",
    "resize_bilinear",
    "builtin_atlas",
]


_FONT: dict[str, tuple[str, ...]] = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00110", "01000", "10000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
    ".": ("00", "00", "00", "00", "00", "11", "11"),
    "/": ("00001", "00001", "00010", "00100", "01000", "10000", "10000"),
}

ALPHABET = "".join(_FONT)

#: Glyph grid height in cells; every character shares it.
CELL_ROWS = 7


def glyph_bitmap(ch: str) -> np.ndarray:
    """Boolean cell pattern of one character, shape (7, width)."""
    try:
        rows = _FONT[ch]
    except KeyError:
        raise VitalscanError(f"no glyph for character {ch!r}") from None
    return np.array([[c == "1" for c in row] for row in rows], dtype=bool)


def render_glyph(ch: str, scale: int) -> np.ndarray:
    """Render one character at an integer scale as a 0/255 uint8 array."""
    if scale < 1:
        raise ValueError("glyph scale must be >= 1")
    bits = glyph_bitmap(ch)
    return np.kron(bits, np.ones((scale, scale), dtype=bool)).astype(np.uint8) * 255


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2-D float array (align-corners sampling)."""
    a = np.asarray(arr, dtype=np.float32)
    h, w = a.shape
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, max(h - 2, 0))
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, max(w - 2, 0))
    fy = (ys - y0).astype(np.float32)[:, None]
    fx = (xs - x0).astype(np.float32)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    top = a[np.ix_(y0, x0)] * (1 - fx) + a[np.ix_(y0, x1)] * fx
    bot = a[np.ix_(y1, x0)] * (1 - fx) + a[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _tight(arr: np.ndarray) -> np.ndarray:
    fg = arr > 0.5
    if not fg.any():
        raise ValueError("glyph image is empty")
    ys, xs = np.nonzero(fg)
    return arr[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


@dataclass(frozen=True, eq=False)
class GlyphAtlas:
    """Per-character grayscale templates at one reference canvas height.

    templates hold the storable canvases (uniform height, [0, 1] values);
    matching uses the tight content regions exposed by content()."""

    templates: dict[str, np.ndarray]
    inner_height: int
    pad: int

    def __post_init__(self):
        if not self.templates:
            raise ValueError("atlas needs at least one character")
        heights = {t.shape[0] for t in self.templates.values()}
        if len(heights) != 1:
            raise ValueError(f"all templates must share one height, got {sorted(heights)}")
        for ch in self.templates:
            if len(ch) != 1:
                raise ValueError(f"atlas keys are single characters, got {ch!r}")
        object.__setattr__(
            self, "_content", {ch: _tight(t) for ch, t in self.templates.items()}
        )

    @property
    def alphabet(self) -> str:
        return "".join(self.templates)

    def content(self, ch: str) -> np.ndarray:
        """Tight-cropped glyph content used for matching."""
        return self._content[ch]  # type: ignore[attr-defined]

    @classmethod
    def builtin(cls, scale: int = 4) -> "GlyphAtlas":
        """Atlas rendered from the built-in pixel font."""
        pad = max(2, scale // 2)
        templates = {}
        for ch in ALPHABET:
            inner = render_glyph(ch, scale).astype(np.float32) / 255.0
            canvas = np.zeros(
                (CELL_ROWS * scale + 2 * pad, inner.shape[1] + 2 * pad), dtype=np.float32
            )
            canvas[pad : pad + inner.shape[0], pad : pad + inner.shape[1]] = inner
            templates[ch] = canvas
        return cls(templates=templates, inner_height=CELL_ROWS * scale, pad=pad)

    @classmethod
    def from_images(cls, images: dict[str, np.ndarray], inner_height: int = 28) -> "GlyphAtlas":
        """Build an atlas from raw grayscale character images.

        Content is tight-cropped and rescaled so the tallest character spans
        the reference height and the others keep their relative size, then
        bottom-aligned on a shared canvas.
        """
        pad = max(2, inner_height // 14)
        tights: dict[str, np.ndarray] = {}
        for ch, img in images.items():
            a = np.asarray(img, dtype=np.float32)
            if a.max() > 1.0:
                a = a / 255.0
            tights[ch] = _tight(a)
        h_ref = max(t.shape[0] for t in tights.values())
        templates: dict[str, np.ndarray] = {}
        for ch, tight in tights.items():
            new_h = max(1, round(tight.shape[0] * inner_height / h_ref))
            new_w = max(1, round(tight.shape[1] * new_h / tight.shape[0]))
            content = resize_bilinear(tight, new_h, new_w)
            canvas = np.zeros((inner_height + 2 * pad, new_w + 2 * pad), dtype=np.float32)
            canvas[pad + inner_height - new_h : pad + inner_height, pad : pad + new_w] = content
            templates[ch] = canvas
        return cls(templates=templates, inner_height=inner_height, pad=pad)

    def save_dir(self, path: str | Path) -> None:
        """Write one PNG per character, named by codepoint (e.g. 48.png for '0')."""
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        for ch, template in self.templates.items():
            arr = np.rint(template * 255.0).clip(0, 255).astype(np.uint8)
            Image.fromarray(arr, mode="L").save(root / f"{ord(ch)}.png")

    @classmethod
    def load_dir(cls, path: str | Path, inner_height: int = 28) -> "GlyphAtlas":
        root = Path(path)
        images: dict[str, np.ndarray] = {}
        for png in sorted(root.glob("*.png")):
            try:
                ch = chr(int(png.stem))
            except ValueError:
                continue
            images[ch] = np.asarray(Image.open(png).convert("L"))
        if not images:
            raise VitalscanError(f"no codepoint-named PNG glyphs found in {root}")
        return cls.from_images(images, inner_height=inner_height)


_BUILTIN_CACHE: dict[int, GlyphAtlas] = {}


def builtin_atlas(scale: int = 4) -> GlyphAtlas:
    """Shared instance of the built-in atlas (templates are immutable in use)."""
    atlas = _BUILTIN_CACHE.get(scale)
    if atlas is None:
        atlas = GlyphAtlas.builtin(scale)
        _BUILTIN_CACHE[scale] = atlas
    return atlas
