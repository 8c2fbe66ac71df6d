"""Batch entry point: python -m model_export --out models/ --seg file:seg.onnx ..."""

from __future__ import annotations

import argparse
import sys

from .recipes import DEFAULT_CHARSET, ExportError, ExportRecipe, export_bundle


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model_export",
        description="Convert pretrained weights into a vitalscan ONNX bundle + manifest.",
    )
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--seg", help="segmentation source (e.g. ultralytics:yolo11n-seg)")
    parser.add_argument("--det", help="detector source (e.g. ultralytics:yolo11s)")
    parser.add_argument("--ocr", help="recognizer source (e.g. file:rec.onnx)")
    parser.add_argument("--seg-size", type=int, default=640)
    parser.add_argument("--det-size", type=int, default=640)
    parser.add_argument("--ocr-size", type=int, default=48)
    parser.add_argument("--charset", default=DEFAULT_CHARSET)
    parser.add_argument("--classes", help="comma-separated detector classes (default: canonical set)")
    parser.add_argument("--tau", type=float, default=0.8)
    args = parser.parse_args(argv)

    recipes = []
    try:
        if args.seg:
            recipes.append(ExportRecipe(kind="seg", source=args.seg, input_size=args.seg_size))
        if args.det:
            classes = tuple(args.classes.split(",")) if args.classes else ()
            recipes.append(
                ExportRecipe(kind="det", source=args.det, input_size=args.det_size, classes=classes)
            )
        if args.ocr:
            recipes.append(
                ExportRecipe(kind="ocr", source=args.ocr, input_size=args.ocr_size, charset=args.charset)
            )
    except ValueError as e:
        parser.error(str(e))
    if not recipes:
        parser.error("nothing to export: pass at least one of --seg/--det/--ocr")

    try:
        manifest = export_bundle(recipes, args.out, tau=args.tau)
    except ExportError as e:
        print(f"model_export: error: {e}", file=sys.stderr)
        return 1
    print(f"wrote bundle manifest {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
