"""Synthetic monitor screens with exact ground truth.

Renders bedside-monitor style panels from known layouts and values, pushes
them through a known perspective distortion with photometric noise, and
writes paired manifests. The rendered glyphs come from the same atlas the
template OCR matches against, closing the test loop end to end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from scipy import ndimage

from .core import (
    VITAL_LABELS,
    BoundingBox,
    ImageBuffer,
    Point2D,
    ScreenQuad,
    VitalLabel,
    VitalscanError,
    label_parse,
)
from .geometry import CanonicalFrame, Homography, compute_homography, warp_arrays
from .backends.glyphs import GlyphAtlas, builtin_atlas, glyph_bitmap
from .imgio import save_image

__all__ = [
    "LayoutOverflow",
    "Slot",
    "Layout",
    "LAYOUTS",
    "ScreenSpec",
    "DistortionSpec",
    "GlareSpec",
    "VitalField",
    "ManifestEntry",
    "GroundTruthManifest",
    "render",
    "distort",
    "generate_corpus",
    "load_corpus_manifest",
    "SCENE_WIDTH",
    "SCENE_HEIGHT",
]


class LayoutOverflow(VitalscanError):
    """A value renders wider than its slot allows."""


class IoError(VitalscanError):
    """Corpus files could not be written or read."""


SCENE_WIDTH = 800
SCENE_HEIGHT = 600

_CELL_H = 7  # glyph grid height in cells


@dataclass(frozen=True)
class Slot:
    label: VitalLabel
    x: int
    y: int
    scale: int
    color: tuple[int, int, int]
    width_px: int

    @property
    def height_px(self) -> int:
        return _CELL_H * self.scale


@dataclass(frozen=True)
class Decoration:
    """A non-ROI glyph drawn for realism (the BP separator slash)."""

    char: str
    x: int
    y: int
    scale: int
    color: tuple[int, int, int]


@dataclass(frozen=True)
class Layout:
    name: str
    slots: tuple[Slot, ...]
    decorations: tuple[Decoration, ...] = ()

    def slot_for(self, label: VitalLabel) -> Optional[Slot]:
        for s in self.slots:
            if s.label is label:
                return s
        return None

    @property
    def labels(self) -> tuple[VitalLabel, ...]:
        return tuple(s.label for s in self.slots)


_GREEN = (40, 255, 90)
_CYAN = (60, 230, 235)
_WHITE = (235, 235, 235)
_YELLOW = (250, 225, 70)
_RED = (255, 90, 80)
_SOFT_RED = (255, 140, 130)


LAYOUTS: dict[str, Layout] = {
    "right_rail": Layout(
        name="right_rail",
        slots=(
            Slot(VitalLabel.HR, 470, 30, 8, _GREEN, 150),
            Slot(VitalLabel.SPO2, 470, 120, 7, _CYAN, 135),
            Slot(VitalLabel.PR, 470, 205, 5, _WHITE, 95),
            Slot(VitalLabel.RR, 470, 280, 6, _YELLOW, 110),
            Slot(VitalLabel.SYS, 40, 360, 7, _RED, 135),
            Slot(VitalLabel.DIA, 200, 360, 7, _RED, 135),
            Slot(VitalLabel.MAP, 360, 390, 5, _SOFT_RED, 95),
            Slot(VitalLabel.TEMP, 40, 432, 5, _WHITE, 115),
        ),
    ),
    "grid": Layout(
        name="grid",
        slots=(
            Slot(VitalLabel.HR, 60, 40, 9, _GREEN, 170),
            Slot(VitalLabel.SPO2, 350, 40, 8, _CYAN, 150),
            Slot(VitalLabel.PR, 60, 155, 6, _WHITE, 110),
            Slot(VitalLabel.RR, 350, 155, 6, _YELLOW, 110),
            Slot(VitalLabel.SYS, 60, 265, 6, _RED, 110),
            Slot(VitalLabel.DIA, 230, 265, 6, _RED, 110),
            Slot(VitalLabel.MAP, 400, 265, 6, _SOFT_RED, 110),
            Slot(VitalLabel.TEMP, 60, 380, 6, _WHITE, 135),
        ),
    ),
    "compact_bp": Layout(
        name="compact_bp",
        slots=(
            Slot(VitalLabel.HR, 40, 40, 10, _GREEN, 185),
            Slot(VitalLabel.SYS, 300, 140, 7, _RED, 135),
            Slot(VitalLabel.DIA, 478, 140, 7, _RED, 135),
            Slot(VitalLabel.SPO2, 40, 210, 8, _CYAN, 150),
            Slot(VitalLabel.MAP, 300, 250, 6, _SOFT_RED, 110),
            Slot(VitalLabel.PR, 40, 340, 6, _WHITE, 110),
            Slot(VitalLabel.RR, 300, 340, 6, _YELLOW, 110),
        ),
        decorations=(Decoration("/", 430, 140, 7, _RED),),
    ),
}


@dataclass(frozen=True)
class ScreenSpec:
    """One screen to render: a layout plus the value shown in each slot."""

    layout: str
    values: Mapping[VitalLabel, str]
    atlas: GlyphAtlas = field(default_factory=builtin_atlas)
    colors: Mapping[VitalLabel, tuple[int, int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}; have {sorted(LAYOUTS)}")
        layout = LAYOUTS[self.layout]
        alphabet = set(self.atlas.alphabet)
        for label, value in self.values.items():
            if layout.slot_for(label) is None:
                raise ValueError(f"layout {self.layout!r} has no slot for {label}")
            if not value:
                raise ValueError(f"empty value for {label}")
            bad = set(value) - alphabet
            if bad:
                raise ValueError(f"value {value!r} uses characters outside the atlas: {sorted(bad)}")


def _text_geometry(text: str, scale: int) -> tuple[int, list[tuple[str, int]]]:
    """Total pixel width and per-character x offsets at one cell of spacing."""
    offsets: list[tuple[str, int]] = []
    x = 0
    for i, ch in enumerate(text):
        if i > 0:
            x += scale  # one-cell inter-glyph gap
        offsets.append((ch, x))
        x += glyph_bitmap(ch).shape[1] * scale
    return x, offsets


def slot_text_bbox(slot: Slot, value: str) -> BoundingBox:
    """The exact box a value occupies in its slot; raises LayoutOverflow."""
    width, _ = _text_geometry(value, slot.scale)
    if width > slot.width_px:
        raise LayoutOverflow(
            f"{slot.label} value {value!r} needs {width} px, slot allows {slot.width_px}"
        )
    return BoundingBox(slot.x, slot.y, slot.x + width, slot.y + slot.height_px)


def _draw_text(canvas: np.ndarray, text: str, x: int, y: int, scale: int, color) -> tuple[int, int]:
    """Draw glyphs; returns the exclusive x and y extents of the drawn text."""
    width, offsets = _text_geometry(text, scale)
    col = np.array(color, dtype=np.uint8)
    for ch, dx in offsets:
        bits = np.kron(glyph_bitmap(ch), np.ones((scale, scale), dtype=bool))
        h, w = bits.shape
        region = canvas[y : y + h, x + dx : x + dx + w]
        region[bits] = col
    return x + width, y + _CELL_H * scale


def render(spec: ScreenSpec) -> tuple[ImageBuffer, dict[VitalLabel, BoundingBox]]:
    """Render a canonical 640x480 screen; returns the image and per-label boxes.

    Deterministic: the same spec always produces identical bytes.
    """
    layout = LAYOUTS[spec.layout]
    frame = CanonicalFrame()
    w, h = frame.width, frame.height

    canvas = np.zeros((h, w, 3), dtype=np.uint8)
    grad = np.linspace(8, 18, h, dtype=np.float64)[:, None]
    canvas[..., 0] = np.rint(grad * 0.8)
    canvas[..., 1] = np.rint(grad)
    canvas[..., 2] = np.rint(grad * 1.3)
    canvas[0:3, :] = (70, 78, 88)
    canvas[-3:, :] = (70, 78, 88)
    canvas[:, 0:3] = (70, 78, 88)
    canvas[:, -3:] = (70, 78, 88)

    boxes: dict[VitalLabel, BoundingBox] = {}
    for slot in layout.slots:
        value = spec.values.get(slot.label)
        # colour tick marking the slot, kept clear of the ROI
        tick_color = spec.colors.get(slot.label, slot.color)
        canvas[slot.y : slot.y + slot.height_px, slot.x - 16 : slot.x - 10] = tick_color
        if value is None:
            continue
        box = slot_text_bbox(slot, value)
        _draw_text(canvas, value, slot.x, slot.y, slot.scale, tick_color)
        boxes[slot.label] = box
    for deco in layout.decorations:
        _draw_text(canvas, deco.char, deco.x, deco.y, deco.scale, deco.color)

    placed = list(boxes.values())
    for i in range(len(placed)):
        for j in range(i + 1, len(placed)):
            a, b = placed[i], placed[j]
            if a.x_min < b.x_max and b.x_min < a.x_max and a.y_min < b.y_max and b.y_min < a.y_max:
                raise VitalscanError(f"layout {layout.name!r} produced overlapping ROIs")
    return ImageBuffer(canvas), boxes


@dataclass(frozen=True)
class GlareSpec:
    """Elliptical highlight, all coordinates as scene fractions."""

    cx: float
    cy: float
    rx: float
    ry: float
    strength: float

    def __post_init__(self):
        if not (0.0 <= self.strength <= 1.0):
            raise ValueError("glare strength must lie in [0, 1]")
        if self.rx <= 0 or self.ry <= 0:
            raise ValueError("glare radii must be positive")


@dataclass(frozen=True)
class DistortionSpec:
    """A known perspective + photometric corruption of a canonical screen.

    The screen plane is tilted by yaw/pitch (the obliqueness), rolled
    slightly in-plane, and projected into the scene; the resulting quad is
    checked to stay inside the frame at construction.
    """

    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    roll_deg: float = 0.0
    scale: float = 0.62
    center: tuple[float, float] = (0.5, 0.5)
    noise_sigma: float = 0.0
    blur_sigma: float = 0.0
    glare: Optional[GlareSpec] = None
    seed: int = 0
    scene_width: int = SCENE_WIDTH
    scene_height: int = SCENE_HEIGHT

    def __post_init__(self):
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ValueError("noise and blur sigmas must be non-negative")
        if not (0.05 <= self.scale <= 0.95):
            raise ValueError("screen scale must lie in [0.05, 0.95]")
        self.quad()  # validates projectability and frame containment

    @property
    def oblique_deg(self) -> float:
        return max(abs(self.yaw_deg), abs(self.pitch_deg))

    def quad(self) -> ScreenQuad:
        """The true distorted screen quad in scene coordinates."""
        w0, h0 = 4.0, 3.0  # canonical aspect
        dist = 6.0
        yaw = math.radians(self.yaw_deg)
        pitch = math.radians(self.pitch_deg)
        roll = math.radians(self.roll_deg)
        ry = np.array(
            [[math.cos(yaw), 0, math.sin(yaw)], [0, 1, 0], [-math.sin(yaw), 0, math.cos(yaw)]]
        )
        rx = np.array(
            [[1, 0, 0], [0, math.cos(pitch), -math.sin(pitch)], [0, math.sin(pitch), math.cos(pitch)]]
        )
        rz = np.array(
            [[math.cos(roll), -math.sin(roll), 0], [math.sin(roll), math.cos(roll), 0], [0, 0, 1]]
        )
        rot = rz @ rx @ ry
        corners = np.array(
            [
                [-w0 / 2, -h0 / 2, 0.0],
                [w0 / 2, -h0 / 2, 0.0],
                [w0 / 2, h0 / 2, 0.0],
                [-w0 / 2, h0 / 2, 0.0],
            ]
        )
        cam = corners @ rot.T
        cam[:, 2] += dist
        if np.any(cam[:, 2] <= 0.1):
            raise ValueError("screen tilts behind the camera")
        f = self.scale * self.scene_height * dist / h0
        u = f * cam[:, 0] / cam[:, 2] + self.center[0] * self.scene_width
        v = f * cam[:, 1] / cam[:, 2] + self.center[1] * self.scene_height
        margin = 4.0
        if (
            u.min() < margin
            or v.min() < margin
            or u.max() > self.scene_width - margin
            or v.max() > self.scene_height - margin
        ):
            raise ValueError("distorted quad leaves the scene frame")
        pts = tuple(Point2D(float(x), float(y)) for x, y in zip(u, v))
        return ScreenQuad(pts)  # type: ignore[arg-type]

    def homography(self, frame: CanonicalFrame | None = None) -> Homography:
        """Map from canonical coordinates onto the distorted scene quad."""
        frame = frame or CanonicalFrame()
        return compute_homography(frame.quad, self.quad())

    def to_dict(self) -> dict:
        return {
            "yaw_deg": self.yaw_deg,
            "pitch_deg": self.pitch_deg,
            "roll_deg": self.roll_deg,
            "scale": self.scale,
            "center": list(self.center),
            "noise_sigma": self.noise_sigma,
            "blur_sigma": self.blur_sigma,
            "glare": None
            if self.glare is None
            else {
                "cx": self.glare.cx,
                "cy": self.glare.cy,
                "rx": self.glare.rx,
                "ry": self.glare.ry,
                "strength": self.glare.strength,
            },
            "seed": self.seed,
            "scene_width": self.scene_width,
            "scene_height": self.scene_height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistortionSpec":
        glare = d.get("glare")
        return cls(
            yaw_deg=float(d.get("yaw_deg", 0.0)),
            pitch_deg=float(d.get("pitch_deg", 0.0)),
            roll_deg=float(d.get("roll_deg", 0.0)),
            scale=float(d.get("scale", 0.62)),
            center=tuple(d.get("center", (0.5, 0.5))),  # type: ignore[arg-type]
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            blur_sigma=float(d.get("blur_sigma", 0.0)),
            glare=None if glare is None else GlareSpec(**glare),
            seed=int(d.get("seed", 0)),
            scene_width=int(d.get("scene_width", SCENE_WIDTH)),
            scene_height=int(d.get("scene_height", SCENE_HEIGHT)),
        )


def _background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Procedural ward-room clutter: gradient wall plus boxy shapes."""
    top = rng.integers(70, 120, size=3)
    bottom = rng.integers(30, 70, size=3)
    t = np.linspace(0.0, 1.0, height)[:, None, None]
    canvas = (top[None, None, :] * (1 - t) + bottom[None, None, :] * t).astype(np.float64)
    canvas = np.broadcast_to(canvas, (height, width, 3)).copy()
    for _ in range(int(rng.integers(4, 9))):
        x0 = int(rng.integers(0, width - 40))
        y0 = int(rng.integers(0, height - 40))
        x1 = x0 + int(rng.integers(30, max(31, width // 3)))
        y1 = y0 + int(rng.integers(30, max(31, height // 3)))
        color = rng.integers(25, 140, size=3).astype(np.float64)
        canvas[y0 : min(y1, height), x0 : min(x1, width)] = color
    for _ in range(int(rng.integers(2, 6))):
        y = int(rng.integers(0, height))
        canvas[y : min(y + 3, height), :] = rng.integers(20, 90, size=3).astype(np.float64)
    return canvas


def _apply_photometrics(scene: np.ndarray, d: DistortionSpec, rng: np.random.Generator) -> np.ndarray:
    out = scene.astype(np.float64)
    if d.glare is not None:
        g = d.glare
        ys, xs = np.mgrid[0 : out.shape[0], 0 : out.shape[1]].astype(np.float64)
        cx, cy = g.cx * out.shape[1], g.cy * out.shape[0]
        rx, ry = g.rx * out.shape[1], g.ry * out.shape[0]
        bump = np.exp(-(((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2))
        out += (g.strength * 255.0 * bump)[..., None]
    if d.blur_sigma > 0:
        out = ndimage.gaussian_filter(out, sigma=(d.blur_sigma, d.blur_sigma, 0.0))
    if d.noise_sigma > 0:
        out += rng.normal(0.0, d.noise_sigma * 255.0, size=out.shape)
    return np.rint(out).clip(0, 255).astype(np.uint8)


def distort(canonical: ImageBuffer, d: DistortionSpec) -> tuple[ImageBuffer, ScreenQuad]:
    """Warp a canonical screen into a cluttered scene; returns the true quad."""
    rng = np.random.default_rng(d.seed)
    quad = d.quad()
    hom = d.homography()
    warped, valid = warp_arrays(canonical.pixels, hom.matrix, d.scene_width, d.scene_height)
    scene = _background(rng, d.scene_width, d.scene_height)
    scene[valid] = warped[valid].astype(np.float64)
    scene = _apply_photometrics(scene, d, rng)
    return ImageBuffer(scene), quad


def background_scene(d: DistortionSpec) -> ImageBuffer:
    """A monitor-free scene with the same photometric treatment."""
    rng = np.random.default_rng(d.seed)
    scene = _background(rng, d.scene_width, d.scene_height)
    return ImageBuffer(_apply_photometrics(scene, d, rng))


# ---------------------------------------------------------------------------
# ground-truth manifests and corpus generation


@dataclass(frozen=True)
class VitalField:
    label: VitalLabel
    bbox: BoundingBox  # canonical-frame coordinates
    value: str
    in_range: bool


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    file: str
    width: int
    height: int
    quad: Optional[ScreenQuad]
    layout: Optional[str]
    vitals: tuple[VitalField, ...]
    distortion: dict

    def spec(self) -> DistortionSpec:
        return DistortionSpec.from_dict(self.distortion)


@dataclass(frozen=True)
class GroundTruthManifest:
    root: Path
    seed: int
    images: tuple[ManifestEntry, ...]

    def entry(self, image_id: str) -> ManifestEntry:
        for e in self.images:
            if e.id == image_id:
                return e
        raise KeyError(image_id)

    def field_values(self, in_range_only: bool = True) -> dict[tuple[str, VitalLabel], str]:
        """(image id, label) -> value string for every ground-truth field."""
        out: dict[tuple[str, VitalLabel], str] = {}
        for e in self.images:
            for f in e.vitals:
                if in_range_only and not f.in_range:
                    continue
                out[(e.id, f.label)] = f.value
        return out

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "frame": [CanonicalFrame().width, CanonicalFrame().height],
            "images": [
                {
                    "id": e.id,
                    "file": e.file,
                    "width": e.width,
                    "height": e.height,
                    "quad": None if e.quad is None else [[p.x, p.y] for p in e.quad.corners],
                    "layout": e.layout,
                    "vitals": [
                        {
                            "label": f.label.value,
                            "bbox": f.bbox.to_list(),
                            "value": f.value,
                            "in_range": f.in_range,
                        }
                        for f in e.vitals
                    ],
                    "distortion": e.distortion,
                }
                for e in self.images
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def save(self, path: str | Path | None = None) -> Path:
        target = Path(path) if path is not None else Path(self.root) / "manifest.json"
        try:
            target.write_text(self.to_json())
        except OSError as e:
            raise IoError(f"cannot write manifest {target}: {e}") from e
        return target


def load_corpus_manifest(path: str | Path) -> GroundTruthManifest:
    """Load manifest.json from a corpus directory (or the file itself)."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    try:
        doc = json.loads(p.read_text())
    except OSError as e:
        raise IoError(f"cannot read manifest {p}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoError(f"manifest {p} is not valid JSON: {e}") from e
    entries = []
    for item in doc["images"]:
        quad = None
        if item["quad"] is not None:
            quad = ScreenQuad.from_array(np.asarray(item["quad"], dtype=float))
        vitals = tuple(
            VitalField(
                label=label_parse(v["label"]),
                bbox=BoundingBox.from_list(v["bbox"]),
                value=str(v["value"]),
                in_range=bool(v["in_range"]),
            )
            for v in item["vitals"]
        )
        entries.append(
            ManifestEntry(
                id=str(item["id"]),
                file=str(item["file"]),
                width=int(item["width"]),
                height=int(item["height"]),
                quad=quad,
                layout=item.get("layout"),
                vitals=vitals,
                distortion=dict(item.get("distortion", {})),
            )
        )
    return GroundTruthManifest(root=p.parent, seed=int(doc.get("seed", 0)), images=tuple(entries))


_IN_RANGE_SAMPLING: dict[VitalLabel, tuple[int, int]] = {
    VitalLabel.HR: (40, 180),
    VitalLabel.PR: (40, 180),
    VitalLabel.SPO2: (70, 100),
    VitalLabel.SYS: (80, 220),
    VitalLabel.DIA: (40, 120),
    VitalLabel.MAP: (50, 150),
    VitalLabel.RR: (8, 40),
}

_OUT_OF_RANGE_POOLS: dict[VitalLabel, tuple[tuple[int, int], ...]] = {
    VitalLabel.HR: ((301, 399), (1, 9)),
    VitalLabel.PR: ((301, 399), (1, 9)),
    VitalLabel.SPO2: ((101, 140),),
    VitalLabel.SYS: ((301, 399), (10, 29)),
    VitalLabel.DIA: ((201, 299), (1, 9)),
    VitalLabel.MAP: ((251, 299), (5, 19)),
    VitalLabel.RR: ((81, 99), (0, 1)),
}


def _sample_value(label: VitalLabel, rng: np.random.Generator, out_of_range: bool) -> str:
    if label is VitalLabel.TEMP:
        if out_of_range:
            lo, hi = (45.1, 49.9) if rng.random() < 0.5 else (20.0, 24.9)
        else:
            lo, hi = 35.0, 40.0
        return f"{rng.uniform(lo, hi):.1f}"
    if out_of_range:
        pools = _OUT_OF_RANGE_POOLS[label]
        lo, hi = pools[int(rng.integers(0, len(pools)))]
    else:
        lo, hi = _IN_RANGE_SAMPLING[label]
    return str(int(rng.integers(lo, hi + 1)))


#: 20-image layout cycle; the TEMP-less layout appears at 15% so every label
#: still shows up in >= 80% of a stratified corpus.
_LAYOUT_CYCLE = tuple(
    "compact_bp" if i in (6, 13, 19) else ("right_rail" if i % 2 == 0 else "grid")
    for i in range(20)
)

_OBLIQUE_BINS = ((0.0, 10.0), (10.0, 20.0), (20.0, 35.0))


def _sample_distortion(
    rng: np.random.Generator,
    oblique_lo: float,
    oblique_hi: float,
    noise_sigma_max: float,
    blur_sigma_max: float,
    glare: bool,
    seed: int,
) -> DistortionSpec:
    for attempt in range(10):
        # obliqueness = max(|yaw|, |pitch|) lands exactly in the requested bin
        magnitude = float(rng.uniform(oblique_lo, oblique_hi))
        minor = magnitude * float(rng.uniform(0.0, 0.8))
        if rng.random() < 0.5:
            yaw, pitch = magnitude, minor
        else:
            yaw, pitch = minor, magnitude
        yaw *= -1 if rng.random() < 0.5 else 1
        pitch *= -1 if rng.random() < 0.5 else 1
        glare_spec = None
        if glare and rng.random() < 0.5:
            glare_spec = GlareSpec(
                cx=float(rng.uniform(0.2, 0.8)),
                cy=float(rng.uniform(0.2, 0.8)),
                rx=float(rng.uniform(0.06, 0.16)),
                ry=float(rng.uniform(0.05, 0.12)),
                strength=float(rng.uniform(0.05, 0.22)),
            )
        try:
            return DistortionSpec(
                yaw_deg=yaw,
                pitch_deg=pitch,
                roll_deg=float(rng.uniform(-6.0, 6.0)),
                scale=float(rng.uniform(0.55, 0.72)) * (0.9 ** attempt),
                center=(float(rng.uniform(0.44, 0.56)), float(rng.uniform(0.44, 0.56))),
                noise_sigma=float(rng.uniform(0.0, noise_sigma_max)),
                blur_sigma=float(rng.uniform(0.0, blur_sigma_max)),
                glare=glare_spec,
                seed=seed,
            )
        except ValueError:
            continue
    raise VitalscanError("could not place a distorted screen inside the scene frame")


def generate_corpus(
    n: int,
    seed: int,
    out_dir: str | Path,
    n_absent: int = 0,
    oor_fraction: float = 0.1,
    oblique_max_deg: float = 35.0,
    noise_sigma_max: float = 10.0 / 255.0,
    blur_sigma_max: float = 0.6,
    glare: bool = True,
    write_images: bool = True,
) -> GroundTruthManifest:
    """Write n screen images (+ n_absent monitor-free scenes) with ground truth.

    Deterministic given the seed: layouts and obliqueness bins follow fixed
    cycles, values and distortions come from the seeded generator, and about
    oor_fraction of values are deliberately outside their physiological gates.
    write_images=False emits the manifest only (same sampling path), useful
    for distribution checks over large n.
    """
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create corpus directory {root}: {e}") from e

    rng = np.random.default_rng(seed)
    oblique_max_deg = min(oblique_max_deg, 35.0)
    entries: list[ManifestEntry] = []
    for i in range(n):
        image_id = f"{i:04d}"
        layout_name = _LAYOUT_CYCLE[i % len(_LAYOUT_CYCLE)]
        layout = LAYOUTS[layout_name]
        values: dict[VitalLabel, str] = {}
        in_range_flags: dict[VitalLabel, bool] = {}
        for label in layout.labels:
            oor = bool(rng.random() < oor_fraction)
            values[label] = _sample_value(label, rng, oor)
            in_range_flags[label] = not oor

        lo, hi = _OBLIQUE_BINS[i % len(_OBLIQUE_BINS)]
        hi = min(hi, oblique_max_deg)
        lo = min(lo, hi)
        dspec = _sample_distortion(
            rng, lo, hi, noise_sigma_max, blur_sigma_max, glare, seed=int(rng.integers(0, 2**31))
        )
        file_name = f"{image_id}.png"
        if write_images:
            spec = ScreenSpec(layout=layout_name, values=values)
            canonical, boxes = render(spec)
            scene, quad = distort(canonical, dspec)
            try:
                save_image(scene, root / file_name)
            except OSError as e:
                raise IoError(f"cannot write {root / file_name}: {e}") from e
        else:
            boxes = {
                slot.label: slot_text_bbox(slot, values[slot.label]) for slot in layout.slots
            }
            quad = dspec.quad()
        vitals = tuple(
            VitalField(label=label, bbox=boxes[label], value=values[label], in_range=in_range_flags[label])
            for label in VITAL_LABELS
            if label in boxes
        )
        entries.append(
            ManifestEntry(
                id=image_id,
                file=file_name,
                width=dspec.scene_width,
                height=dspec.scene_height,
                quad=quad,
                layout=layout_name,
                vitals=vitals,
                distortion=dspec.to_dict(),
            )
        )

    for j in range(n_absent):
        image_id = f"{n + j:04d}"
        dspec = DistortionSpec(
            noise_sigma=float(rng.uniform(0.0, noise_sigma_max)),
            blur_sigma=float(rng.uniform(0.0, blur_sigma_max)),
            seed=int(rng.integers(0, 2**31)),
        )
        file_name = f"{image_id}.png"
        if write_images:
            scene = background_scene(dspec)
            try:
                save_image(scene, root / file_name)
            except OSError as e:
                raise IoError(f"cannot write {root / file_name}: {e}") from e
        entries.append(
            ManifestEntry(
                id=image_id,
                file=file_name,
                width=dspec.scene_width,
                height=dspec.scene_height,
                quad=None,
                layout=None,
                vitals=(),
                distortion=dspec.to_dict(),
            )
        )

    manifest = GroundTruthManifest(root=root, seed=seed, images=tuple(entries))
    manifest.save()
    return manifest
