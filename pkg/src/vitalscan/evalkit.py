"""Evaluation metrics: segmentation overlap, detection mAP and confusion,
field-level accuracy, and latency aggregation.

Matching conventions: greedy by descending confidence, IoU on
exclusive-max boxes, 101-point interpolated average precision, thresholds
0.50:0.05:0.95 for the strict mAP. Classes without ground-truth instances
are excluded from means.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    VITAL_LABELS,
    BinaryMask,
    BoundingBox,
    Detection,
    StageTimings,
    VitalLabel,
    VitalscanError,
)
from .digitizer import canonical_for_label

__all__ = [
    "DimensionMismatch",
    "EmptySample",
    "PixelScores",
    "SegScores",
    "ClassDetScores",
    "DetectionScores",
    "ConfusionMatrix",
    "FieldAccuracyReport",
    "LatencyRow",
    "LatencyReport",
    "mask_scores",
    "aggregate_seg_scores",
    "box_iou",
    "detection_scores",
    "confusion",
    "field_accuracy",
    "latency_aggregate",
    "COCO_THRESHOLDS",
]


class DimensionMismatch(VitalscanError):
    """Prediction and ground-truth masks have different shapes."""


class EmptySample(VitalscanError):
    """No samples to aggregate."""


COCO_THRESHOLDS: tuple[float, ...] = tuple(0.5 + 0.05 * i for i in range(10))

#: Stage keys of the latency ledger, in reporting order.
LATENCY_ROWS = ("seg", "det", "ocr", "overhead", "total")


# ---------------------------------------------------------------------------
# segmentation


@dataclass(frozen=True)
class PixelScores:
    iou: float
    dice: float
    precision: float
    recall: float


def _ratio(num: float, den: float) -> float:
    # 0/0 is scored 1.0: claiming nothing about nothing is not an error.
    if den == 0:
        return 1.0
    return num / den


def mask_scores(pred: BinaryMask, gt: BinaryMask) -> PixelScores:
    """Pixel-set overlap scores between a predicted and a true mask."""
    if pred.data.shape != gt.data.shape:
        raise DimensionMismatch(f"pred {pred.data.shape} vs gt {gt.data.shape}")
    p = pred.data
    g = gt.data
    inter = float(np.logical_and(p, g).sum())
    np_ = float(p.sum())
    ng = float(g.sum())
    union = np_ + ng - inter
    return PixelScores(
        iou=_ratio(inter, union),
        dice=_ratio(2.0 * inter, np_ + ng),
        precision=_ratio(inter, np_),
        recall=_ratio(inter, ng),
    )


@dataclass(frozen=True)
class SegScores:
    """Mean +/- std of each overlap metric over a set of instances."""

    n: int
    iou_mean: float
    iou_std: float
    dice_mean: float
    dice_std: float
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "iou": {"mean": self.iou_mean, "std": self.iou_std},
            "dice": {"mean": self.dice_mean, "std": self.dice_std},
            "precision": {"mean": self.precision_mean, "std": self.precision_std},
            "recall": {"mean": self.recall_mean, "std": self.recall_std},
        }

    def to_text(self) -> str:
        lines = [f"Pixel-level segmentation metrics (N={self.n})"]
        for name in ("iou", "dice", "precision", "recall"):
            mean = getattr(self, f"{name}_mean")
            std = getattr(self, f"{name}_std")
            lines.append(f"  {name.capitalize():<10} {mean:.4f} ± {std:.4f}")
        return "\n".join(lines)


def aggregate_seg_scores(instances: Sequence[PixelScores]) -> SegScores:
    if not instances:
        raise EmptySample("no segmentation instances")
    arr = np.array([[s.iou, s.dice, s.precision, s.recall] for s in instances], dtype=float)
    means = arr.mean(axis=0)
    stds = arr.std(axis=0)
    return SegScores(
        n=len(instances),
        iou_mean=float(means[0]),
        iou_std=float(stds[0]),
        dice_mean=float(means[1]),
        dice_std=float(stds[1]),
        precision_mean=float(means[2]),
        precision_std=float(stds[2]),
        recall_mean=float(means[3]),
        recall_std=float(stds[3]),
    )


# ---------------------------------------------------------------------------
# detection


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = float(ix * iy)
    return inter / (a.area + b.area - inter)


GtBoxes = Mapping[str, Sequence[tuple[VitalLabel, BoundingBox]]]
PredBoxes = Mapping[str, Sequence[Detection]]


def _sorted_preds(preds: Sequence[tuple[str, Detection]]) -> list[tuple[str, Detection]]:
    return sorted(
        preds,
        key=lambda p: (
            -p[1].confidence,
            p[0],
            p[1].box.x_min,
            p[1].box.y_min,
            p[1].box.x_max,
            p[1].box.y_max,
        ),
    )


def _class_matches(
    preds: list[tuple[str, Detection]],
    gts: dict[str, list[BoundingBox]],
    threshold: float,
) -> list[bool]:
    """Greedy confidence-priority matching; one flag per prediction (TP?)."""
    taken: dict[str, list[bool]] = {img: [False] * len(boxes) for img, boxes in gts.items()}
    flags: list[bool] = []
    for img, det in preds:
        boxes = gts.get(img, [])
        best_iou, best_j = 0.0, -1
        for j, gt_box in enumerate(boxes):
            if taken[img][j]:
                continue
            iou = box_iou(det.box, gt_box)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= threshold:
            taken[img][best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _ap_101(flags: Sequence[bool], n_gt: int) -> float:
    """101-point interpolated average precision from ordered match flags."""
    if n_gt == 0:
        return float("nan")
    if not flags:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    fp = np.cumsum(~np.asarray(flags, dtype=bool))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        mask = recall >= r - 1e-12
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / 101.0


@dataclass(frozen=True)
class ClassDetScores:
    n_gt: int
    n_pred: int
    precision: float
    recall: float
    ap50: float
    ap_50_95: float


@dataclass(frozen=True)
class DetectionScores:
    per_class: Mapping[VitalLabel, ClassDetScores]
    mean_precision: float
    mean_recall: float
    mean_ap50: float
    mean_ap_50_95: float

    def to_dict(self) -> dict:
        return {
            "per_class": {
                l.value: {
                    "n_gt": s.n_gt,
                    "n_pred": s.n_pred,
                    "precision": s.precision,
                    "recall": s.recall,
                    "ap50": s.ap50,
                    "ap_50_95": s.ap_50_95,
                }
                for l, s in self.per_class.items()
            },
            "mean": {
                "precision": self.mean_precision,
                "recall": self.mean_recall,
                "ap50": self.mean_ap50,
                "ap_50_95": self.mean_ap_50_95,
            },
        }

    def to_text(self) -> str:
        header = f"{'Class':<6} {'P':>7} {'R':>7} {'AP@50':>7} {'AP@50-95':>9} {'GT':>6}"
        lines = ["Per-class detection performance", header, "-" * len(header)]
        for label, s in self.per_class.items():
            lines.append(
                f"{label.value:<6} {s.precision:>7.3f} {s.recall:>7.3f} "
                f"{s.ap50:>7.3f} {s.ap_50_95:>9.3f} {s.n_gt:>6d}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'Mean':<6} {self.mean_precision:>7.3f} {self.mean_recall:>7.3f} "
            f"{self.mean_ap50:>7.3f} {self.mean_ap_50_95:>9.3f}"
        )
        return "\n".join(lines)


def detection_scores(
    preds: PredBoxes,
    gts: GtBoxes,
    iou_thresholds: Sequence[float] = COCO_THRESHOLDS,
) -> DetectionScores:
    """Per-class precision/recall (at IoU 0.50) and interpolated AP.

    Predictions are matched greedily in descending confidence order within
    each class; mAP@[50:95] averages the per-threshold APs. Classes with no
    ground-truth instances are reported with NaN AP and excluded from means.
    """
    per_class: dict[VitalLabel, ClassDetScores] = {}
    for label in VITAL_LABELS:
        class_preds = _sorted_preds(
            [(img, d) for img, dets in preds.items() for d in dets if d.label is label]
        )
        class_gts = {
            img: [box for l, box in boxes if l is label] for img, boxes in gts.items()
        }
        class_gts = {img: b for img, b in class_gts.items() if b}
        n_gt = sum(len(b) for b in class_gts.values())
        n_pred = len(class_preds)
        if n_gt == 0 and n_pred == 0:
            continue

        flags50 = _class_matches(class_preds, {k: list(v) for k, v in class_gts.items()}, 0.5)
        tp50 = sum(flags50)
        precision = (tp50 / n_pred) if n_pred else (1.0 if n_gt == 0 else 0.0)
        recall = (tp50 / n_gt) if n_gt else 0.0

        aps = []
        for t in iou_thresholds:
            flags = _class_matches(class_preds, {k: list(v) for k, v in class_gts.items()}, t)
            aps.append(_ap_101(flags, n_gt))
        ap50 = _ap_101(flags50, n_gt)
        per_class[label] = ClassDetScores(
            n_gt=n_gt,
            n_pred=n_pred,
            precision=precision,
            recall=recall,
            ap50=ap50,
            ap_50_95=float(np.mean(aps)) if aps else float("nan"),
        )

    scored = [s for s in per_class.values() if s.n_gt > 0]
    if scored:
        mean_p = float(np.mean([s.precision for s in scored]))
        mean_r = float(np.mean([s.recall for s in scored]))
        mean_ap50 = float(np.mean([s.ap50 for s in scored]))
        mean_ap = float(np.mean([s.ap_50_95 for s in scored]))
    else:
        mean_p = mean_r = mean_ap50 = mean_ap = float("nan")
    return DetectionScores(
        per_class=per_class,
        mean_precision=mean_p,
        mean_recall=mean_r,
        mean_ap50=mean_ap50,
        mean_ap_50_95=mean_ap,
    )


# ---------------------------------------------------------------------------
# confusion matrix


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """(K+1)x(K+1) counts: rows are predicted classes (last row = missed),
    columns are ground-truth classes (last column = background)."""

    counts: np.ndarray
    labels: tuple[VitalLabel, ...] = VITAL_LABELS

    def __post_init__(self):
        k = len(self.labels) + 1
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.shape != (k, k):
            raise ValueError(f"expected {k}x{k} counts, got {arr.shape}")
        object.__setattr__(self, "counts", arr)

    @property
    def missed_row(self) -> int:
        return len(self.labels)

    @property
    def background_col(self) -> int:
        return len(self.labels)

    def gt_totals(self) -> np.ndarray:
        """Per-class ground-truth instance counts (column sums over label columns)."""
        return self.counts[:, : len(self.labels)].sum(axis=0)

    def column_normalized(self) -> np.ndarray:
        sums = self.counts.sum(axis=0, keepdims=True).astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.counts / sums
        return np.where(sums > 0, out, 0.0)

    def to_dict(self) -> dict:
        names = [l.value for l in self.labels]
        return {
            "rows": names + ["missed"],
            "columns": names + ["background"],
            "counts": self.counts.tolist(),
            "column_normalized": self.column_normalized().round(6).tolist(),
        }

    def to_text(self) -> str:
        names = [l.value for l in self.labels] + ["missed"]
        cols = [l.value for l in self.labels] + ["bg"]
        width = max(6, max(len(n) for n in names) + 1)
        header = " " * width + "".join(f"{c:>{width}}" for c in cols)
        lines = ["Confusion matrix (rows: predicted, columns: ground truth)", header]
        for i, name in enumerate(names):
            row = "".join(f"{int(v):>{width}d}" for v in self.counts[i])
            lines.append(f"{name:<{width}}" + row)
        return "\n".join(lines)


def confusion(preds: PredBoxes, gts: GtBoxes, iou_match: float = 0.5) -> ConfusionMatrix:
    """Class-agnostic one-to-one matching at IoU >= iou_match, confidence first.

    A matched pair increments (predicted label row, true label column); an
    unmatched ground truth lands in the missed row of its column; an
    unmatched prediction lands in the background column of its row.
    """
    k = len(VITAL_LABELS)
    idx = {label: i for i, label in enumerate(VITAL_LABELS)}
    counts = np.zeros((k + 1, k + 1), dtype=np.int64)
    for img in sorted(set(preds) | set(gts)):
        dets = _sorted_preds([(img, d) for d in preds.get(img, ())])
        gt_list = list(gts.get(img, ()))
        taken = [False] * len(gt_list)
        for _, det in dets:
            best_iou, best_j = 0.0, -1
            for j, (_, gt_box) in enumerate(gt_list):
                if taken[j]:
                    continue
                iou = box_iou(det.box, gt_box)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_match:
                taken[best_j] = True
                counts[idx[det.label], idx[gt_list[best_j][0]]] += 1
            else:
                counts[idx[det.label], k] += 1
        for j, (gt_label, _) in enumerate(gt_list):
            if not taken[j]:
                counts[k, idx[gt_label]] += 1
    return ConfusionMatrix(counts=counts)


# ---------------------------------------------------------------------------
# field-level accuracy


@dataclass(frozen=True)
class FieldAccuracyReport:
    """Per-label correct/total counts; accuracy as a percentage.

    Labels without instances report accuracy None and are excluded from the
    overall denominator.
    """

    rows: Mapping[VitalLabel, tuple[int, int]]
    overall_correct: int
    overall_total: int

    def __post_init__(self):
        total_c = sum(c for c, _ in self.rows.values())
        total_t = sum(t for _, t in self.rows.values())
        if (total_c, total_t) != (self.overall_correct, self.overall_total):
            raise ValueError("overall row must equal the per-label sums")
        for label, (c, t) in self.rows.items():
            if c > t or c < 0:
                raise ValueError(f"impossible counts for {label}: {c}/{t}")

    def accuracy(self, label: VitalLabel) -> Optional[float]:
        c, t = self.rows.get(label, (0, 0))
        return (100.0 * c / t) if t else None

    @property
    def overall_accuracy(self) -> Optional[float]:
        if self.overall_total == 0:
            return None
        return 100.0 * self.overall_correct / self.overall_total

    def to_dict(self) -> dict:
        return {
            "per_label": {
                l.value: {
                    "correct": c,
                    "total": t,
                    "accuracy_pct": None if t == 0 else round(100.0 * c / t, 4),
                }
                for l, (c, t) in self.rows.items()
            },
            "overall": {
                "correct": self.overall_correct,
                "total": self.overall_total,
                "accuracy_pct": None
                if self.overall_accuracy is None
                else round(self.overall_accuracy, 4),
            },
        }

    def to_text(self) -> str:
        header = f"{'Field':<6} {'Correct':>9} {'Total':>9} {'Accuracy (%)':>13}"
        lines = ["Field-level extraction accuracy", header, "-" * len(header)]
        for label in VITAL_LABELS:
            if label not in self.rows:
                continue
            c, t = self.rows[label]
            acc = f"{100.0 * c / t:>13.2f}" if t else f"{'N/A':>13}"
            lines.append(f"{label.value:<6} {c:>9d} {t:>9d} {acc}")
        lines.append("-" * len(header))
        acc = self.overall_accuracy
        acc_text = f"{acc:>13.2f}" if acc is not None else f"{'N/A':>13}"
        lines.append(f"{'All':<6} {self.overall_correct:>9d} {self.overall_total:>9d} {acc_text}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["label", "correct", "total", "accuracy_pct"])
        for label, (c, t) in self.rows.items():
            writer.writerow([label.value, c, t, "" if t == 0 else f"{100.0 * c / t:.4f}"])
        writer.writerow(
            [
                "overall",
                self.overall_correct,
                self.overall_total,
                "" if self.overall_accuracy is None else f"{self.overall_accuracy:.4f}",
            ]
        )
        return buf.getvalue()


def field_accuracy(
    records: Mapping[tuple[str, VitalLabel], str],
    gt_values: Mapping[tuple[str, VitalLabel], str],
) -> FieldAccuracyReport:
    """Exact-match scoring of extracted values against ground truth.

    Both sides pass through the digitizer's canonical rendering before
    comparison, so formatting differences ("098" vs "98") are not mismatches.
    A ground-truth field with no extracted value counts as incorrect.
    """
    rows: dict[VitalLabel, list[int]] = {}
    for (image_id, label), gt_value in gt_values.items():
        row = rows.setdefault(label, [0, 0])
        row[1] += 1
        extracted = records.get((image_id, label))
        if extracted is None:
            continue
        if canonical_for_label(label, extracted) == canonical_for_label(label, gt_value):
            row[0] += 1
    ordered = {
        label: (rows[label][0], rows[label][1]) for label in VITAL_LABELS if label in rows
    }
    return FieldAccuracyReport(
        rows=ordered,
        overall_correct=sum(c for c, _ in ordered.values()),
        overall_total=sum(t for _, t in ordered.values()),
    )


def best_record_values(results) -> dict[tuple[str, VitalLabel], str]:
    """(source id, label) -> highest-confidence extracted value per result."""
    out: dict[tuple[str, VitalLabel], str] = {}
    for result in results:
        for label in result.vitals:
            best = result.best(label)
            if best is not None:
                out[(result.source_id, label)] = best.value
    return out


# ---------------------------------------------------------------------------
# latency


@dataclass(frozen=True)
class LatencyRow:
    mean_ms: float
    fps: Optional[float]
    avg_conf: Optional[float]
    success_pct: Optional[float]


@dataclass(frozen=True)
class LatencyReport:
    """Per-stage and end-to-end latency ledger over a benchmark run."""

    rows: Mapping[str, LatencyRow]
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "rows": {
                name: {
                    "mean_ms": r.mean_ms,
                    "fps": r.fps,
                    "avg_conf": r.avg_conf,
                    "success_pct": r.success_pct,
                }
                for name, r in self.rows.items()
            },
        }

    def to_text(self) -> str:
        header = f"{'Stage':<10} {'Latency (ms)':>13} {'FPS':>9} {'Avg. Conf.':>11} {'Success (%)':>12}"
        lines = [f"Inference benchmark (N={self.n})", header, "-" * len(header)]
        for name, r in self.rows.items():
            fps = f"{r.fps:>9.1f}" if r.fps is not None else f"{'—':>9}"
            conf = f"{r.avg_conf:>11.3f}" if r.avg_conf is not None else f"{'—':>11}"
            succ = f"{r.success_pct:>12.1f}" if r.success_pct is not None else f"{'—':>12}"
            lines.append(f"{name:<10} {r.mean_ms:>13.2f} {fps} {conf} {succ}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["stage", "mean_ms", "fps", "avg_conf", "success_pct"])
        for name, r in self.rows.items():
            writer.writerow(
                [
                    name,
                    f"{r.mean_ms:.4f}",
                    "" if r.fps is None else f"{r.fps:.4f}",
                    "" if r.avg_conf is None else f"{r.avg_conf:.4f}",
                    "" if r.success_pct is None else f"{r.success_pct:.2f}",
                ]
            )
        return buf.getvalue()


def latency_aggregate(
    timings: Sequence[StageTimings],
    confidences: Sequence[Mapping[str, Optional[float]]] | None = None,
    successes: Sequence[Mapping[str, bool]] | None = None,
) -> LatencyReport:
    """Arithmetic means per stage; FPS is 1000 / mean. Warmup samples are the
    caller's concern. confidences/successes are optional per-sample mappings
    keyed by stage name."""
    if not timings:
        raise EmptySample("no timing samples")
    values = {
        "seg": [t.seg_ms for t in timings],
        "det": [t.det_ms for t in timings],
        "ocr": [t.ocr_ms for t in timings],
        "overhead": [t.overhead_ms for t in timings],
        "total": [t.total_ms for t in timings],
    }
    rows: dict[str, LatencyRow] = {}
    for name in LATENCY_ROWS:
        mean = float(np.mean(values[name]))
        fps = (1000.0 / mean) if mean > 0 else None
        confs = []
        if confidences is not None:
            confs = [c[name] for c in confidences if c.get(name) is not None]
        avg_conf = float(np.mean(confs)) if confs else None
        succ = None
        if successes is not None:
            flags = [s[name] for s in successes if name in s]
            if flags:
                succ = 100.0 * sum(flags) / len(flags)
        rows[name] = LatencyRow(mean_ms=mean, fps=fps, avg_conf=avg_conf, success_pct=succ)
    return LatencyReport(rows=rows, n=len(timings))


def to_json(report) -> str:
    """Stable JSON rendering for any report object exposing to_dict()."""
    return json.dumps(report.to_dict(), indent=1, sort_keys=True)
