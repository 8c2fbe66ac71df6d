"""Export recipes: from a source weight identifier to an ONNX file + manifest entry.

Source identifier schemes:
  file:<path>              an already-exported ONNX graph, copied as-is
  ultralytics:<model>      a YOLO checkpoint exported via the ultralytics
                           package (e.g. ultralytics:yolo11n-seg)
  paddleocr:<model>        a PaddleOCR recognition model converted via
                           paddle2onnx (e.g. paddleocr:PP-OCRv5_mobile_rec)

The file: scheme needs no ML toolchain and is what the tests exercise; the
others raise SourceUnavailable when their toolchain is not installed.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

KINDS = ("seg", "det", "ocr")

#: Detector class names, in the canonical reporting order of the vitalscan
#: manifest contract. A detector recipe must cover exactly this set.
DETECTOR_CLASSES = ("HR", "PR", "SPO2", "SYS", "DIA", "MAP", "RR", "TEMP")

DEFAULT_CHARSET = "0123456789./"

_DEFAULT_INPUT = {"seg": 640, "det": 640, "ocr": 48}


class ExportError(Exception):
    """Base error for export failures."""


class SourceUnavailable(ExportError):
    """The source weights (or the toolchain to convert them) are unreachable."""


class ConversionFailure(ExportError):
    """The conversion toolchain ran but did not produce a usable graph."""


@dataclass(frozen=True)
class ExportRecipe:
    """One model to export: stage kind, source identifier, target geometry."""

    kind: str
    source: str
    input_size: Optional[int] = None
    classes: Sequence[str] = field(default_factory=tuple)
    charset: str = DEFAULT_CHARSET

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"recipe kind must be one of {KINDS}, got {self.kind!r}")
        if ":" not in self.source:
            raise ValueError(
                f"source needs a scheme (file:, ultralytics:, paddleocr:), got {self.source!r}"
            )
        if self.kind == "det":
            classes = tuple(self.classes) or DETECTOR_CLASSES
            if sorted(c.upper() for c in classes) != sorted(DETECTOR_CLASSES):
                raise ValueError(
                    f"detector recipes must cover exactly {DETECTOR_CLASSES}, got {classes}"
                )
            object.__setattr__(self, "classes", classes)
        elif self.classes:
            raise ValueError(f"{self.kind!r} recipes carry no class list")
        size = self.input_size if self.input_size is not None else _DEFAULT_INPUT[self.kind]
        if size < 8:
            raise ValueError(f"input size {size} is too small")
        object.__setattr__(self, "input_size", size)

    @property
    def scheme(self) -> str:
        return self.source.split(":", 1)[0]

    @property
    def locator(self) -> str:
        return self.source.split(":", 1)[1]

    def manifest_entry(self, model_file: str) -> dict:
        entry = {"kind": self.kind, "path": model_file, "input_size": self.input_size}
        if self.kind == "det":
            entry["classes"] = list(self.classes)
        if self.kind == "ocr":
            entry["charset"] = self.charset
        return entry


def _obtain_file(recipe: ExportRecipe, target: Path) -> None:
    src = Path(recipe.locator)
    if not src.is_file():
        raise SourceUnavailable(f"source file not found: {src}")
    shutil.copyfile(src, target)


def _obtain_ultralytics(recipe: ExportRecipe, target: Path) -> None:
    try:
        from ultralytics import YOLO  # type: ignore
    except ImportError:
        raise SourceUnavailable(
            "the ultralytics package is not installed; "
            "pip install 'model-export[ultralytics]' or export the weights elsewhere "
            "and use a file: source"
        ) from None
    try:
        model = YOLO(recipe.locator)
        exported = model.export(format="onnx", imgsz=recipe.input_size, simplify=True)
    except Exception as e:
        raise ConversionFailure(f"ultralytics export of {recipe.locator!r} failed: {e}") from e
    exported_path = Path(exported)
    if not exported_path.is_file():
        raise ConversionFailure(f"ultralytics reported {exported} but no file exists")
    shutil.move(str(exported_path), target)


def _obtain_paddleocr(recipe: ExportRecipe, target: Path) -> None:
    try:
        import paddle2onnx  # type: ignore  # noqa: F401
    except ImportError:
        raise SourceUnavailable(
            "the paddle2onnx toolchain is not installed; "
            "pip install 'model-export[paddle]' or convert the recognizer elsewhere "
            "and use a file: source"
        ) from None
    raise ConversionFailure(
        f"automatic PaddleOCR conversion for {recipe.locator!r} is not wired up; "
        "run paddle2onnx manually and pass the result as a file: source"
    )


_OBTAINERS = {
    "file": _obtain_file,
    "ultralytics": _obtain_ultralytics,
    "paddleocr": _obtain_paddleocr,
}


def export(recipe: ExportRecipe, out_dir: str | Path) -> Path:
    """Export one model and update the bundle manifest in out_dir.

    Returns the manifest path. The manifest is created if absent; an existing
    entry of the same kind is replaced, so a bundle can be assembled one
    recipe at a time.
    """
    obtain = _OBTAINERS.get(recipe.scheme)
    if obtain is None:
        raise SourceUnavailable(f"unknown source scheme {recipe.scheme!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_file = f"{recipe.kind}.onnx"
    obtain(recipe, out / model_file)

    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        doc = json.loads(manifest_path.read_text())
        if not isinstance(doc, dict) or "models" not in doc:
            raise ConversionFailure(f"existing {manifest_path} is not a bundle manifest")
    else:
        doc = {"format": "onnx", "tau": 0.8, "models": []}
    doc["models"] = [m for m in doc["models"] if m.get("kind") != recipe.kind]
    doc["models"].append(recipe.manifest_entry(model_file))
    doc["models"].sort(key=lambda m: KINDS.index(m["kind"]))
    manifest_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return manifest_path


def export_bundle(recipes: Sequence[ExportRecipe], out_dir: str | Path, tau: float = 0.8) -> Path:
    """Export several recipes into one bundle manifest."""
    if len({r.kind for r in recipes}) != len(recipes):
        raise ValueError("one recipe per kind in a bundle")
    manifest_path = None
    for recipe in recipes:
        manifest_path = export(recipe, out_dir)
    if manifest_path is None:
        raise ValueError("a bundle needs at least one recipe")
    doc = json.loads(manifest_path.read_text())
    doc["tau"] = tau
    manifest_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return manifest_path
