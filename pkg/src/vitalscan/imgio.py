"""PNG/JPEG loading and saving for ImageBuffer."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .core import ImageBuffer

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def load_image(path: str | Path) -> ImageBuffer:
    with Image.open(path) as im:
        return ImageBuffer(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_image(img: ImageBuffer, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def image_files(directory: str | Path) -> list[Path]:
    """Image files in a directory, sorted by name for deterministic order."""
    root = Path(directory)
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
