"""vitalscan: screen-to-data extraction of vital signs from bedside monitors.

The pipeline localizes the monitor with a segmentation backend, rectifies it
to a canonical view, detects per-vital ROIs, reads them with OCR and
validates every reading against physiological gates. A synthetic-screen
oracle and an evaluation kit make the whole chain testable without trained
models or clinical data.
"""

from .core import (
    VITAL_LABELS,
    BinaryMask,
    BoundingBox,
    Detection,
    ExtractionResult,
    ImageBuffer,
    Point2D,
    ScreenQuad,
    StageTimings,
    UnknownLabel,
    VitalLabel,
    VitalRecord,
    VitalscanError,
    label_format,
    label_parse,
    result_from_json,
    result_to_json,
)
from .geometry import (
    CanonicalFrame,
    DegenerateShape,
    EmptyMask,
    Homography,
    SingularSystem,
    compute_homography,
    extract_corners,
    fill_quad,
    order_corners,
    warp_perspective,
)
from .digitizer import (
    CorrectionTable,
    RangeGate,
    RejectionReason,
    ValidationOutcome,
    assemble,
    syntactic_correct,
    validate,
)
from .pipeline import PipelineConfig, StageError, crop, run

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "VitalscanError",
    "UnknownLabel",
    "VitalLabel",
    "VITAL_LABELS",
    "ImageBuffer",
    "BinaryMask",
    "BoundingBox",
    "Point2D",
    "ScreenQuad",
    "Detection",
    "VitalRecord",
    "StageTimings",
    "ExtractionResult",
    "label_parse",
    "label_format",
    "result_to_json",
    "result_from_json",
    "CanonicalFrame",
    "Homography",
    "EmptyMask",
    "DegenerateShape",
    "SingularSystem",
    "order_corners",
    "extract_corners",
    "compute_homography",
    "warp_perspective",
    "fill_quad",
    "CorrectionTable",
    "RangeGate",
    "ValidationOutcome",
    "RejectionReason",
    "syntactic_correct",
    "validate",
    "assemble",
    "PipelineConfig",
    "StageError",
    "run",
    "crop",
]
