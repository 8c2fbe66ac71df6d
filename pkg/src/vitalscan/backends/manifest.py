"""Model manifest: the on-disk description of exported inference graphs.

A manifest is one JSON document naming the model file, input geometry and
class list for each stage it provides. Paths are resolved relative to the
manifest's own directory so bundles are relocatable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from ..core import VITAL_LABELS, UnknownLabel, VitalscanError, label_parse

__all__ = [
    "ModelEntry",
    "ModelManifest",
    "load_manifest",
    "ParseError",
    "MissingModelFile",
    "ClassMismatch",
    "MODEL_KINDS",
    "DEFAULT_CHARSET",
]

MODEL_KINDS = ("seg", "det", "ocr")
DEFAULT_CHARSET = "0123456789./"


class ParseError(VitalscanError):
    """The manifest document is unreadable or structurally invalid."""


class MissingModelFile(VitalscanError):
    """A referenced model file does not exist."""


class ClassMismatch(VitalscanError):
    """The detector class list does not match the vital-sign label set."""


@dataclass(frozen=True)
class ModelEntry:
    kind: str
    path: Path
    input_size: int
    classes: Optional[tuple[str, ...]] = None
    charset: Optional[str] = None


@dataclass(frozen=True)
class ModelManifest:
    format: str
    tau: float
    entries: Mapping[str, ModelEntry]

    def require(self, kind: str) -> ModelEntry:
        try:
            return self.entries[kind]
        except KeyError:
            raise ParseError(f"manifest does not define a {kind!r} model") from None


def _validate_classes(classes: list) -> tuple[str, ...]:
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise ClassMismatch("detector classes must be a list of strings")
    labels = []
    for name in classes:
        try:
            label = label_parse(name)
        except UnknownLabel:
            raise ClassMismatch(f"unknown detector class {name!r}") from None
        if not label.is_vital:
            raise ClassMismatch("SCREEN is not a detector class")
        labels.append(label)
    if len(set(labels)) != len(labels):
        raise ClassMismatch("duplicate detector classes")
    if set(labels) != set(VITAL_LABELS):
        missing = sorted(l.value for l in set(VITAL_LABELS) - set(labels))
        raise ClassMismatch(f"detector classes must cover all vital labels; missing {missing}")
    return tuple(classes)


def load_manifest(path: str | Path) -> ModelManifest:
    """Parse and validate a manifest file.

    Raises ParseError for structural problems, MissingModelFile when a
    referenced weights file is absent, ClassMismatch when the detector class
    list is not exactly the vital-sign label set.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ParseError(f"cannot read manifest {p}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"manifest {p} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("manifest must be a JSON object")

    fmt = doc.get("format", "onnx")
    try:
        tau = float(doc.get("tau", 0.8))
    except (TypeError, ValueError):
        raise ParseError("manifest tau must be a number") from None
    if not (0.0 < tau <= 1.0):
        raise ParseError(f"manifest tau must lie in (0, 1], got {tau}")

    models = doc.get("models")
    if not isinstance(models, list) or not models:
        raise ParseError("manifest must carry a non-empty 'models' list")

    entries: dict[str, ModelEntry] = {}
    for m in models:
        if not isinstance(m, dict):
            raise ParseError("each model entry must be an object")
        kind = m.get("kind")
        if kind not in MODEL_KINDS:
            raise ParseError(f"model kind must be one of {MODEL_KINDS}, got {kind!r}")
        if kind in entries:
            raise ParseError(f"duplicate model entry for kind {kind!r}")
        raw_path = m.get("path")
        if not isinstance(raw_path, str) or not raw_path:
            raise ParseError(f"model entry {kind!r} needs a 'path'")
        model_path = (p.parent / raw_path).resolve()
        if not model_path.is_file():
            raise MissingModelFile(f"model file not found: {model_path}")
        try:
            input_size = int(m.get("input_size", 48 if kind == "ocr" else 640))
        except (TypeError, ValueError):
            raise ParseError(f"model entry {kind!r} input_size must be an integer") from None
        if input_size < 8:
            raise ParseError(f"model entry {kind!r} input_size {input_size} is too small")

        classes = None
        if kind == "det":
            classes = _validate_classes(m.get("classes", []))
        charset = None
        if kind == "ocr":
            charset = str(m.get("charset", DEFAULT_CHARSET))
            if len(set(charset)) != len(charset) or not charset:
                raise ParseError("OCR charset must be non-empty without duplicates")
        entries[kind] = ModelEntry(
            kind=kind, path=model_path, input_size=input_size, classes=classes, charset=charset
        )
    return ModelManifest(format=str(fmt), tau=tau, entries=entries)
