"""Export pretrained monitor-reading models into the vitalscan bundle format.

The deliverable is a directory holding ONNX graphs plus a manifest.json in
the schema vitalscan's interchange backend loads. This package never imports
vitalscan; the manifest file is the contract between the two.
"""

from .recipes import (
    DETECTOR_CLASSES,
    ConversionFailure,
    ExportError,
    ExportRecipe,
    SourceUnavailable,
    export,
    export_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ExportRecipe",
    "export",
    "export_bundle",
    "ExportError",
    "SourceUnavailable",
    "ConversionFailure",
    "DETECTOR_CLASSES",
]
