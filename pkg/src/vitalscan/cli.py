"""Operator command line: extract, ingest, synth, eval, bench.

Exit codes: 0 success, 2 bad arguments, 3 backend or runtime failure,
4 I/O failure. Commands accepting --seed (synth, extract) are
byte-reproducible; a seeded extract zeroes the wall-clock timing fields in
its JSON output, since measured milliseconds can never reproduce (use bench
for timing).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import evalkit
from .backends import (
    BackendSet,
    ClassMismatch,
    ContractViolation,
    GlyphAtlas,
    InferenceError,
    MissingModelFile,
    NoiseSpec,
    ParseError,
    RuntimeUnavailable,
    TemplateOcrBackend,
    UnknownImageId,
    interchange_backends,
    load_manifest,
    mock_backends_from_fixture,
)
from .core import (
    BinaryMask,
    Detection,
    ExtractionResult,
    StageTimings,
    VitalscanError,
    result_from_json,
    result_to_json,
)
from .digitizer import load_validation_config
from .geometry import fill_quad
from .imgio import IMAGE_SUFFIXES, image_files, load_image
from .pipeline import PipelineConfig, StageError, run
from .synthscreen import IoError as CorpusIoError
from .synthscreen import generate_corpus, load_corpus_manifest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3
EXIT_IO = 4

_BACKEND_ERRORS = (
    RuntimeUnavailable,
    InferenceError,
    StageError,
    UnknownImageId,
    ContractViolation,
    ParseError,
    MissingModelFile,
    ClassMismatch,
)


def _fail(code: int, message: str) -> int:
    print(f"vitalscan: error: {message}", file=sys.stderr)
    return code


def _add_backend_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--backend",
        choices=("mock", "template", "interchange"),
        default="template",
        help="inference backend profile (default: template)",
    )
    p.add_argument("--fixture", help="ground-truth manifest for mock/template replay "
                                     "(default: manifest.json next to the input)")
    p.add_argument("--manifest", help="model manifest for the interchange backend "
                                      "(default: $VITALSCAN_MODELS/manifest.json)")
    p.add_argument("--atlas", help="glyph atlas directory for the template OCR "
                                   "(default: built-in font)")
    p.add_argument("--tau", type=float, default=0.8, help="confidence threshold (default: 0.8)")
    p.add_argument("--min-score", type=float, default=0.5,
                   help="OCR acceptance score inside validation (default: 0.5)")
    p.add_argument("--gate-config", help="JSON file overriding range gates / corrections")
    p.add_argument("--pad", type=int, default=2, help="crop padding in px (default: 2)")
    p.add_argument("--no-rectify", action="store_true",
                   help="skip perspective rectification (ablation mode)")
    p.add_argument("--jitter-px", type=float, default=0.0,
                   help="mock backend: corner jitter sigma in px")
    p.add_argument("--sub-rate", type=float, default=0.0,
                   help="mock backend: per-character OCR substitution rate")


def _build_config(args) -> PipelineConfig:
    gate_kwargs = {}
    if args.gate_config:
        gate, table = load_validation_config(args.gate_config)
        gate_kwargs = {"gate": gate, "corrections": table}
    try:
        return PipelineConfig(
            tau=args.tau,
            min_score=args.min_score,
            crop_pad=args.pad,
            rectify=not args.no_rectify,
            backend=args.backend,
            **gate_kwargs,
        )
    except ValueError as e:
        raise _UsageError(str(e)) from e


class _UsageError(Exception):
    pass


class _ExtractIoError(Exception):
    pass


class _ExtractBackendError(Exception):
    pass


def _build_backends(args, input_path: Path, seed: Optional[int]) -> BackendSet:
    """Assemble the backend triple for the selected profile."""
    if args.backend == "interchange":
        manifest_path = args.manifest or (
            Path(os.environ["VITALSCAN_MODELS"]) / "manifest.json"
            if "VITALSCAN_MODELS" in os.environ
            else None
        )
        if manifest_path is None:
            raise _UsageError(
                "--manifest (or $VITALSCAN_MODELS) is required for the interchange backend"
            )
        return interchange_backends(load_manifest(manifest_path))

    fixture_path = Path(args.fixture) if args.fixture else (
        input_path if input_path.is_dir() else input_path.parent
    ) / "manifest.json"
    if not Path(fixture_path).exists():
        raise FileNotFoundError(
            f"replay fixture not found: {fixture_path} "
            "(mock/template backends replay a synthetic corpus; see 'vitalscan synth')"
        )
    fixture = load_corpus_manifest(fixture_path)
    noise = NoiseSpec(
        corner_jitter_px=args.jitter_px,
        ocr_substitution_rate=args.sub_rate,
        seed=seed if seed is not None else 0,
    )
    space = "image" if args.no_rectify else "canonical"
    mocks = mock_backends_from_fixture(fixture, noise=noise, detect_space=space)
    if args.backend == "mock":
        return mocks
    atlas = GlyphAtlas.load_dir(args.atlas) if args.atlas else None
    return BackendSet(seg=mocks.seg, det=mocks.det, ocr=TemplateOcrBackend(atlas))


def _input_images(input_path: Path) -> list[Path]:
    if input_path.is_dir():
        files = image_files(input_path)
        if not files:
            raise FileNotFoundError(f"no images ({', '.join(IMAGE_SUFFIXES)}) in {input_path}")
        return files
    if not input_path.is_file():
        raise FileNotFoundError(f"input path does not exist: {input_path}")
    return [input_path]


def _zero_timings(result: ExtractionResult) -> ExtractionResult:
    return dataclasses.replace(result, timings=StageTimings.zero())


def cmd_extract(args) -> int:
    input_path = Path(args.input)
    try:
        files = _input_images(input_path)
    except (FileNotFoundError, OSError) as e:
        return _fail(EXIT_IO, str(e))
    try:
        cfg = _build_config(args)
        backends = _build_backends(args, input_path, args.seed)
    except _UsageError as e:
        return _fail(EXIT_USAGE, str(e))
    except (FileNotFoundError, CorpusIoError) as e:
        return _fail(EXIT_IO, str(e))
    except _BACKEND_ERRORS as e:
        return _fail(EXIT_BACKEND, str(e))

    def process(path: Path, worker_backends: BackendSet) -> str:
        try:
            img = load_image(path)
        except (OSError, ValueError) as e:
            raise _ExtractIoError(f"cannot read image {path}: {e}") from e
        try:
            result = run(img, cfg, worker_backends, source_id=path.stem)
        except _BACKEND_ERRORS as e:
            raise _ExtractBackendError(f"{path.name}: {e}") from e
        if args.seed is not None:
            result = _zero_timings(result)
        return result_to_json(result)

    lines: list[Optional[str]] = [None] * len(files)
    try:
        jobs = min(args.jobs, len(files))
        if jobs <= 1:
            for i, path in enumerate(files):
                lines[i] = process(path, backends)
        else:
            # each worker owns its backend instances; output order stays fixed
            sets = [backends] + [_build_backends(args, input_path, args.seed) for _ in range(jobs - 1)]

            def worker(k: int) -> None:
                for i in range(k, len(files), jobs):
                    lines[i] = process(files[i], sets[k])

            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for future in [pool.submit(worker, k) for k in range(jobs)]:
                    future.result()
    except _ExtractIoError as e:
        return _fail(EXIT_IO, str(e))
    except _ExtractBackendError as e:
        return _fail(EXIT_BACKEND, str(e))

    payload = "\n".join(line for line in lines if line is not None) + "\n"
    if args.out:
        try:
            Path(args.out).write_text(payload)
        except OSError as e:
            return _fail(EXIT_IO, f"cannot write {args.out}: {e}")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_ingest(args) -> int:
    watch_dir = Path(args.watch_dir)
    if not watch_dir.is_dir():
        return _fail(EXIT_IO, f"watch directory does not exist: {watch_dir}")
    out_path = Path(args.out_jsonl)
    processed_path = Path(str(out_path) + ".processed")
    try:
        cfg = _build_config(args)
        backends = _build_backends(args, watch_dir, args.seed)
    except _UsageError as e:
        return _fail(EXIT_USAGE, str(e))
    except (FileNotFoundError, CorpusIoError) as e:
        return _fail(EXIT_IO, str(e))
    except _BACKEND_ERRORS as e:
        return _fail(EXIT_BACKEND, str(e))

    processed: set[str] = set()
    if processed_path.exists():
        processed = {line.strip() for line in processed_path.read_text().splitlines() if line.strip()}

    def mark(name: str) -> None:
        processed.add(name)
        with processed_path.open("a") as f:
            f.write(name + "\n")
            f.flush()

    def scan_once() -> None:
        candidates = [
            p for p in watch_dir.iterdir()
            if p.suffix.lower() in IMAGE_SUFFIXES and p.name not in processed
        ]
        candidates.sort(key=lambda p: (p.stat().st_mtime, p.name))
        for path in candidates:
            try:
                img = load_image(path)
                result = run(img, cfg, backends, source_id=path.stem)
            except Exception as e:  # skip the file, keep the service alive
                print(f"vitalscan: ingest: skipping {path.name}: {e}", file=sys.stderr)
                mark(path.name)
                continue
            if args.seed is not None:
                result = _zero_timings(result)
            line = result_to_json(result) + "\n"
            with out_path.open("a") as f:
                f.write(line)  # single write keeps the append line-atomic
                f.flush()
                os.fsync(f.fileno())
            mark(path.name)

    try:
        scan_once()
        while not args.once:
            time.sleep(args.poll)
            scan_once()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        manifest = generate_corpus(
            n=args.n,
            seed=args.seed,
            out_dir=args.out,
            n_absent=args.absent,
            oor_fraction=args.oor_fraction,
            oblique_max_deg=args.oblique_max,
            noise_sigma_max=args.noise_max,
            blur_sigma_max=args.blur_max,
            glare=not args.no_glare,
        )
    except ValueError as e:
        return _fail(EXIT_USAGE, str(e))
    except CorpusIoError as e:
        return _fail(EXIT_IO, str(e))
    print(f"wrote {len(manifest.images)} images + manifest.json to {args.out}")
    return EXIT_OK


def _load_results(pred_path: Path) -> list[ExtractionResult]:
    results = []
    for i, line in enumerate(pred_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            results.append(result_from_json(line))
        except ValueError as e:
            raise ValueError(f"{pred_path}:{i}: {e}") from e
    return results


def _emit_report(report, args) -> int:
    if args.json:
        text = evalkit.to_json(report)
    elif getattr(args, "csv", False) and hasattr(report, "to_csv"):
        text = report.to_csv()
    else:
        text = report.to_text()
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as e:
            return _fail(EXIT_IO, f"cannot write {args.out}: {e}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        results = _load_results(Path(args.pred))
        manifest = load_corpus_manifest(args.gt)
    except (OSError, ValueError, CorpusIoError) as e:
        return _fail(EXIT_IO, str(e))

    if args.kind == "ocr":
        records = evalkit.best_record_values(results)
        report = evalkit.field_accuracy(records, manifest.field_values(in_range_only=True))
        return _emit_report(report, args)

    if args.kind == "det":
        preds = {
            r.source_id: [
                Detection(label=rec.label, box=rec.box, confidence=rec.confidence)
                for records in r.vitals.values()
                for rec in records
            ]
            for r in results
        }
        gts = {e.id: [(f.label, f.bbox) for f in e.vitals] for e in manifest.images}
        scores = evalkit.detection_scores(preds, gts)
        rc = _emit_report(scores, args)
        if rc == EXIT_OK and not args.json:
            matrix = evalkit.confusion(preds, gts)
            sys.stdout.write("\n" + matrix.to_text() + "\n")
        return rc

    # seg: rebuild quads as masks and score pixel overlap
    by_id = {r.source_id: r for r in results}
    instances = []
    for entry in manifest.images:
        result = by_id.get(entry.id)
        if entry.quad is None:
            continue
        gt_mask = fill_quad(entry.quad, entry.width, entry.height)
        if result is None or result.screen is None:
            pred_mask = BinaryMask(np.zeros((entry.height, entry.width), dtype=bool))
        else:
            pred_mask = fill_quad(result.screen[0], entry.width, entry.height)
        instances.append(evalkit.mask_scores(pred_mask, gt_mask))
    if not instances:
        return _fail(EXIT_IO, "no screen-bearing entries to score")
    return _emit_report(evalkit.aggregate_seg_scores(instances), args)


class _RecordingDetection:
    """Wrapper capturing per-call detection confidences for bench reporting."""

    def __init__(self, inner):
        self._inner = inner
        self.last_confidences: list[float] = []

    def detect(self, img, tau):
        dets = self._inner.detect(img, tau)
        self.last_confidences = [d.confidence for d in dets]
        return dets


def cmd_bench(args) -> int:
    input_path = Path(args.input)
    try:
        files = _input_images(input_path)
    except (FileNotFoundError, OSError) as e:
        return _fail(EXIT_IO, str(e))
    try:
        cfg = _build_config(args)
        backends = _build_backends(args, input_path, None)
    except _UsageError as e:
        return _fail(EXIT_USAGE, str(e))
    except (FileNotFoundError, CorpusIoError) as e:
        return _fail(EXIT_IO, str(e))
    except _BACKEND_ERRORS as e:
        return _fail(EXIT_BACKEND, str(e))

    recorder = _RecordingDetection(backends.det)
    backends = BackendSet(seg=backends.seg, det=recorder, ocr=backends.ocr)

    timings: list[StageTimings] = []
    confidences: list[dict] = []
    successes: list[dict] = []
    try:
        for path in files:
            img = load_image(path)
            for _ in range(args.warmup):
                run(img, cfg, backends, source_id=path.stem)
            for _ in range(args.repeat):
                result = run(img, cfg, backends, source_id=path.stem)
                timings.append(result.timings)
                det_confs = recorder.last_confidences if result.screen else []
                record_confs = [
                    rec.confidence for records in result.vitals.values() for rec in records
                ]
                screen_conf = result.screen[1] if result.screen else None
                confidences.append(
                    {
                        "seg": screen_conf,
                        "det": (sum(det_confs) / len(det_confs)) if det_confs else None,
                        "ocr": (sum(record_confs) / len(record_confs)) if record_confs else None,
                        "overhead": None,
                        "total": screen_conf,
                    }
                )
                successes.append(
                    {
                        "seg": result.screen is not None,
                        "det": bool(det_confs),
                        "ocr": bool(record_confs),
                        "total": bool(record_confs),
                    }
                )
    except (OSError, ValueError) as e:
        return _fail(EXIT_IO, str(e))
    except _BACKEND_ERRORS as e:
        return _fail(EXIT_BACKEND, str(e))

    report = evalkit.latency_aggregate(timings, confidences, successes)
    return _emit_report(report, args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitalscan",
        description="Extract vital-sign readings from bedside monitor screen images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract vitals from an image or directory")
    p.add_argument("input", help="image file or directory")
    p.add_argument("--out", help="write JSON lines here instead of stdout")
    p.add_argument("--seed", type=int, default=None,
                   help="seed mock noise and zero timing fields (byte-reproducible output)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default: 1)")
    _add_backend_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("ingest", help="watch a directory, appending one JSON line per image")
    p.add_argument("watch_dir")
    p.add_argument("out_jsonl")
    p.add_argument("--poll", type=float, default=0.5, help="poll interval seconds")
    p.add_argument("--once", action="store_true", help="process current files and exit")
    p.add_argument("--seed", type=int, default=None)
    _add_backend_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth corpus")
    p.add_argument("--n", type=int, required=True, help="number of monitor images")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--absent", type=int, default=0, help="extra monitor-free scenes")
    p.add_argument("--oor-fraction", type=float, default=0.1,
                   help="fraction of deliberately out-of-range values")
    p.add_argument("--oblique-max", type=float, default=35.0)
    p.add_argument("--noise-max", type=float, default=10.0 / 255.0)
    p.add_argument("--blur-max", type=float, default=0.6)
    p.add_argument("--no-glare", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score extraction output against a corpus manifest")
    p.add_argument("kind", choices=("seg", "det", "ocr"))
    p.add_argument("--pred", required=True, help="JSONL produced by extract")
    p.add_argument("--gt", required=True, help="corpus directory or manifest.json")
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.add_argument("--csv", action="store_true", help="emit CSV where supported")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="measure per-stage latency over a corpus")
    p.add_argument("input", help="image directory")
    p.add_argument("--repeat", type=int, default=1, help="timed runs per image (>= 1)")
    p.add_argument("--warmup", type=int, default=0, help="discarded runs per image")
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--out", help="write the report here instead of stdout")
    _add_backend_args(p)
    p.set_defaults(func=cmd_bench)

    return parser


def _validate_args(parser: argparse.ArgumentParser, args) -> None:
    if getattr(args, "tau", None) is not None and not (0.0 < args.tau <= 1.0):
        parser.error(f"--tau must lie in (0, 1], got {args.tau}")
    if getattr(args, "min_score", None) is not None and not (0.0 <= args.min_score <= 1.0):
        parser.error(f"--min-score must lie in [0, 1], got {args.min_score}")
    if getattr(args, "pad", None) is not None and args.pad < 0:
        parser.error("--pad must be non-negative")
    if args.command == "bench":
        if args.repeat < 1:
            parser.error("--repeat must be >= 1")
        if args.warmup < 0:
            parser.error("--warmup must be >= 0")
    if args.command == "synth" and args.n < 1:
        parser.error("--n must be >= 1")
    if args.command == "extract" and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.command == "ingest" and args.poll <= 0:
        parser.error("--poll must be positive")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_args(parser, args)
    try:
        return args.func(args)
    except VitalscanError as e:
        return _fail(EXIT_BACKEND, str(e))


if __name__ == "__main__":
    sys.exit(main())
