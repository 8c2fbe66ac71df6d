"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
report. Criteria A1-A7 cover the extraction library; the export-integration
check (A8) ships with the model_export package's own test suite and is
skipped automatically when the interchange runtime is absent.
"""

from __future__ import annotations

import json
import string
import time
from pathlib import Path

import numpy as np
import pytest

from vitalscan import evalkit
from vitalscan.backends import (
    BackendSet,
    NoiseSpec,
    TemplateOcrBackend,
    mock_backends_from_fixture,
)
from vitalscan.cli import main as cli_main
from vitalscan.core import (
    VITAL_LABELS,
    BinaryMask,
    BoundingBox,
    Detection,
    StageTimings,
    VitalLabel,
)
from vitalscan.digitizer import RangeGate, RejectionReason, syntactic_correct, validate
from vitalscan.geometry import (
    CanonicalFrame,
    compute_homography,
    extract_corners,
    fill_quad,
    order_corners,
)
from vitalscan.imgio import load_image
from vitalscan.pipeline import PipelineConfig, run
from vitalscan.synthscreen import DistortionSpec, _sample_distortion, generate_corpus

from oracles import naive_ap, naive_confusion, naive_mask_scores, random_boxes


def report(criterion: str, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: PASS — {detail}")


def _loaded(manifest):
    root = Path(manifest.root)
    return [(e, load_image(root / e.file)) for e in manifest.images]


# ---------------------------------------------------------------------------


def test_a1_pipeline_fidelity_zero_noise(acceptance_corpus):
    """A1: zero-noise replay over 200 screens + 20 absent scenes, < 30 s."""
    pairs = _loaded(acceptance_corpus)
    backends = mock_backends_from_fixture(acceptance_corpus)
    cfg = PipelineConfig()

    started = time.perf_counter()
    results = {e.id: run(img, cfg, backends, source_id=e.id) for e, img in pairs}
    elapsed = time.perf_counter() - started

    with_screen = [e for e, _ in pairs if e.quad is not None]
    absent = [e for e, _ in pairs if e.quad is None]
    assert len(with_screen) == 200
    assert len(absent) == 20

    for entry in absent:
        r = results[entry.id]
        assert r.screen is None
        assert r.vitals == {}
        assert r.timings.det_ms == 0.0 and r.timings.ocr_ms == 0.0

    checked_fields = 0
    for entry in with_screen:
        r = results[entry.id]
        assert r.screen is not None
        for fld in entry.vitals:
            records = r.vitals.get(fld.label, ())
            if fld.in_range:
                assert len(records) == 1, (entry.id, fld.label)
                assert records[0].value == fld.value, (entry.id, fld.label)
            else:
                assert records == (), (entry.id, fld.label, "gated value leaked")
            checked_fields += 1

    record_values = evalkit.best_record_values(results.values())
    accuracy = evalkit.field_accuracy(
        record_values, acceptance_corpus.field_values(in_range_only=True)
    )
    assert accuracy.overall_accuracy == pytest.approx(100.0)
    assert elapsed < 30.0, f"extraction took {elapsed:.1f}s"
    report(
        "A1",
        f"{len(pairs)} images, {checked_fields} fields exact, "
        f"early termination on {len(absent)} scenes, {elapsed:.1f}s",
    )


def test_a2_rectification_geometry():
    """A2: 500 random distortions; corners <= 2 px; homography tolerances."""
    rng = np.random.default_rng(1234)
    frame = CanonicalFrame()
    worst_corner = 0.0
    worst_reproj = 0.0
    bins = ((0.0, 10.0), (10.0, 20.0), (20.0, 35.0))
    for i in range(500):
        lo, hi = bins[i % 3]
        d = _sample_distortion(
            rng, lo, hi, noise_sigma_max=0.0, blur_sigma_max=0.0, glare=False,
            seed=int(rng.integers(0, 2**31)),
        )
        quad = d.quad()
        mask = fill_quad(quad, d.scene_width, d.scene_height)
        got = extract_corners(mask)
        err = np.hypot(*(got.as_array() - quad.as_array()).T).max()
        worst_corner = max(worst_corner, err)
        assert err <= 2.0, f"distortion {i}: corner error {err:.2f}px"

        hom = compute_homography(got, frame.quad)
        reproj = np.hypot(*(hom.apply(got.as_array()) - frame.quad.as_array()).T).max()
        worst_reproj = max(worst_reproj, reproj)
        assert reproj < 1e-6

    # identity and pure-scale cases exact to 1e-9
    for _ in range(50):
        base = frame.quad.as_array() + rng.uniform(-40, 40, size=(4, 2)) + 50.0
        q = order_corners(base)
        ident = compute_homography(q, q)
        assert np.max(np.abs(ident.matrix - np.eye(3))) < 1e-9
    doubled = CanonicalFrame().quad.as_array() * 2.0
    scale = compute_homography(order_corners(doubled), frame.quad)
    assert np.max(np.abs(scale.matrix - np.diag([0.5, 0.5, 1.0]))) < 1e-9
    report(
        "A2",
        f"500 distortions: worst corner {worst_corner:.3f}px, "
        f"worst reprojection {worst_reproj:.2e}px, identity/scale exact to 1e-9",
    )


def _field_accuracy_on_subset(manifest, results, ids):
    gt = {
        k: v
        for k, v in manifest.field_values(in_range_only=True).items()
        if k[0] in ids
    }
    records = evalkit.best_record_values(r for r in results if r.source_id in ids)
    return evalkit.field_accuracy(records, gt)


def test_a3_rectification_matters(acceptance_corpus):
    """A3: template OCR; rectification strictly helps on the >= 20 deg subset."""
    pairs = _loaded(acceptance_corpus)
    oblique = {
        e.id: DistortionSpec.from_dict(e.distortion).oblique_deg
        for e in acceptance_corpus.images
        if e.quad is not None
    }
    subset = {i for i, deg in oblique.items() if deg >= 20.0}
    assert len(subset) >= 40

    def run_all(rectify: bool):
        mocks = mock_backends_from_fixture(
            acceptance_corpus, detect_space="canonical" if rectify else "image"
        )
        backends = BackendSet(seg=mocks.seg, det=mocks.det, ocr=TemplateOcrBackend())
        cfg = PipelineConfig(rectify=rectify)
        return [
            run(img, cfg, backends, source_id=e.id)
            for e, img in pairs
            if e.id in subset
        ]

    enabled = _field_accuracy_on_subset(acceptance_corpus, run_all(True), subset)
    disabled = _field_accuracy_on_subset(acceptance_corpus, run_all(False), subset)

    assert enabled.overall_accuracy > disabled.overall_accuracy, (
        f"rectified {enabled.overall_accuracy:.2f}% vs "
        f"unrectified {disabled.overall_accuracy:.2f}%"
    )
    for label in VITAL_LABELS:
        acc = enabled.accuracy(label)
        assert acc is not None and acc >= 95.0, (label, acc)
    report(
        "A3",
        f">=20° subset (n={len(subset)}): rectified "
        f"{enabled.overall_accuracy:.2f}% > unrectified {disabled.overall_accuracy:.2f}%; "
        f"per-label min {min(enabled.accuracy(l) for l in VITAL_LABELS):.1f}%",
    )


def test_a4_validation_rules():
    """A4: the hard physiological constraints plus validation properties."""
    # verbatim constraints
    assert validate("101", 0.95, VitalLabel.SPO2).reason is RejectionReason.OUT_OF_RANGE
    assert validate("100", 0.95, VitalLabel.SPO2).accepted
    assert validate("301", 0.95, VitalLabel.HR).reason is RejectionReason.OUT_OF_RANGE
    assert validate("9", 0.95, VitalLabel.HR).reason is RejectionReason.OUT_OF_RANGE
    assert validate("10", 0.95, VitalLabel.HR).accepted
    assert validate("300", 0.95, VitalLabel.HR).accepted
    # correction before gating
    assert validate("S8", 0.95, VitalLabel.HR).value == "58"
    assert validate("1O1", 0.95, VitalLabel.SPO2).reason is RejectionReason.OUT_OF_RANGE
    assert validate("1OO", 0.95, VitalLabel.SPO2).value == "100"

    rng = np.random.default_rng(77)
    gate = RangeGate.defaults()
    alphabet = np.array(list(string.printable + "°|,OSolIZBGQ"))
    labels = list(gate.ranges)
    n_fuzz = 12000
    accepted = 0
    for _ in range(n_fuzz):
        s = "".join(rng.choice(alphabet, size=rng.integers(0, 12)))
        label = labels[int(rng.integers(0, len(labels)))]
        score = float(rng.uniform(0, 1))
        # idempotence of the syntactic layer
        once = syntactic_correct(s)
        assert syntactic_correct(once) == once
        out = validate(s, score, label, min_score=0.5)
        if out.accepted:
            accepted += 1
            # soundness: accepted values always inside the gate
            rng_l = gate.range_for(label)
            assert rng_l.lo <= float(out.value) <= rng_l.hi
            # monotonicity in score
            higher = validate(s, min(1.0, score + (1.0 - score) * 0.5), label, min_score=0.5)
            assert higher.accepted and higher.value == out.value
    report(
        "A4",
        f"hard constraints verbatim; idempotence/soundness/monotonicity over "
        f"{n_fuzz} fuzzed strings ({accepted} accepted)",
    )


def test_a5_metric_oracles():
    """A5: metric kit equals brute-force oracles; reported aggregates reproduce."""
    rng = np.random.default_rng(55)

    # mask scores vs naive pixel counting, and the dice-iou identity
    for _ in range(1000):
        shape = (int(rng.integers(2, 32)), int(rng.integers(2, 32)))
        p = rng.random(shape) < rng.uniform(0, 1)
        g = rng.random(shape) < rng.uniform(0, 1)
        s = evalkit.mask_scores(BinaryMask(p), BinaryMask(g))
        iou, dice, prec, rec = naive_mask_scores(p, g)
        assert s.iou == pytest.approx(iou, abs=1e-12)
        assert s.dice == pytest.approx(dice, abs=1e-12)
        assert s.precision == pytest.approx(prec, abs=1e-12)
        assert s.recall == pytest.approx(rec, abs=1e-12)
        assert abs(s.dice - 2 * s.iou / (1 + s.iou)) < 1e-12

    # detection AP vs the by-definition oracle
    for _ in range(1000):
        label = VitalLabel.HR
        gt_boxes = random_boxes(rng, int(rng.integers(1, 4)))
        dets = []
        for _ in range(int(rng.integers(0, 6))):
            if rng.random() < 0.6:
                base = gt_boxes[int(rng.integers(0, len(gt_boxes)))]
                dx, dy = int(rng.integers(-4, 5)), int(rng.integers(-4, 5))
                box = BoundingBox(
                    max(0, base.x_min + dx),
                    max(0, base.y_min + dy),
                    max(max(0, base.x_min + dx) + 1, base.x_max + dx),
                    max(max(0, base.y_min + dy) + 1, base.y_max + dy),
                )
            else:
                box = random_boxes(rng, 1)[0]
            dets.append(Detection(label, box, float(rng.uniform(0.1, 1.0))))
        scores = evalkit.detection_scores(
            {"img": dets}, {"img": [(label, b) for b in gt_boxes]}, iou_thresholds=(0.5, 0.75)
        )
        got = scores.per_class[label]
        flat_preds = [("img", d.box.to_list(), d.confidence) for d in dets]
        flat_gts = {"img": [b.to_list() for b in gt_boxes]}
        assert got.ap50 == pytest.approx(naive_ap(flat_preds, flat_gts, 0.5), abs=1e-12)

    # confusion vs the plain-loop oracle
    for _ in range(1000):
        preds, gts = {"x": []}, {"x": []}
        for _ in range(int(rng.integers(0, 5))):
            gts["x"].append((VITAL_LABELS[int(rng.integers(0, 8))], random_boxes(rng, 1)[0]))
        for _ in range(int(rng.integers(0, 5))):
            preds["x"].append(
                Detection(
                    VITAL_LABELS[int(rng.integers(0, 8))],
                    random_boxes(rng, 1)[0],
                    float(rng.uniform(0.3, 1.0)),
                )
            )
        assert evalkit.confusion(preds, gts).counts.tolist() == naive_confusion(preds, gts)

    # field accuracy vs a literal comparator
    for _ in range(1000):
        gt, records = {}, {}
        for _ in range(int(rng.integers(1, 12))):
            key = (f"i{rng.integers(0, 4)}", VITAL_LABELS[int(rng.integers(0, 8))])
            value = str(rng.integers(10, 300))
            gt[key] = value
            if rng.random() < 0.8:
                records[key] = value if rng.random() < 0.9 else str(rng.integers(10, 300))
        rep = evalkit.field_accuracy(records, gt)
        correct = sum(1 for k, v in gt.items() if records.get(k) == v)
        assert (rep.overall_correct, rep.overall_total) == (correct, len(gt))

    # reported aggregates reproduce arithmetically
    table = evalkit.FieldAccuracyReport(
        rows={VitalLabel.HR: (11892, 12002)}, overall_correct=11892, overall_total=12002
    )
    assert table.overall_accuracy == pytest.approx(99.08, abs=0.01)
    cpu = StageTimings.of(75.7, 79.1, 222.9, 15.0)
    assert cpu.total_ms == pytest.approx(392.7, abs=1e-9)
    fps = evalkit.latency_aggregate([cpu]).rows["total"].fps
    assert round(fps, 1) == 2.5
    report(
        "A5",
        "4 metric oracles × 1000 instances each; dice-iou to 1e-12; "
        "11892/12002 → 99.08%; 392.7 ms → 2.5 FPS",
    )


def test_a6_timing_ledger_and_tau_monotonicity(small_corpus, capsys):
    """A6: bench rows additive and FPS-consistent; tau never adds records."""
    rc = cli_main(
        [
            "bench", str(small_corpus.root), "--backend", "mock",
            "--repeat", "2", "--warmup", "1", "--json",
        ]
    )
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    rows = doc["rows"]
    total = rows["total"]["mean_ms"]
    parts = sum(rows[k]["mean_ms"] for k in ("seg", "det", "ocr", "overhead"))
    assert abs(total - parts) <= 0.1
    for name, row in rows.items():
        if row["fps"] is not None:
            assert row["fps"] * row["mean_ms"] == pytest.approx(1000.0, rel=1e-9), name

    pairs = _loaded(small_corpus)
    counts = []
    for tau in (0.5, 0.8, 0.95):
        backends = mock_backends_from_fixture(small_corpus)
        cfg = PipelineConfig(tau=tau)
        counts.append(
            sum(
                len(records)
                for e, img in pairs
                for records in run(img, cfg, backends, source_id=e.id).vitals.values()
            )
        )
    assert counts[0] >= counts[1] >= counts[2]
    assert counts[0] > counts[2]
    report(
        "A6",
        f"bench ledger additive (±0.1 ms) and FPS·mean=1000 on every row; "
        f"records at τ=0.5/0.8/0.95: {counts[0]}/{counts[1]}/{counts[2]}",
    )


def test_a7_seeded_commands_reproducible(tmp_path):
    """A7: seeded synth and extract are byte-identical across runs."""
    for sub in ("one", "two"):
        rc = cli_main(
            ["synth", "--n", "4", "--seed", "99", "--out", str(tmp_path / sub), "--absent", "1"]
        )
        assert rc == 0
    names = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "two").iterdir())
    for name in names:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    outs = []
    for sub in ("p1.jsonl", "p2.jsonl"):
        out = tmp_path / sub
        rc = cli_main(
            [
                "extract", str(tmp_path / "one"), "--backend", "mock",
                "--seed", "7", "--sub-rate", "0.15", "--jitter-px", "1.0",
                "--out", str(out),
            ]
        )
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    report("A7", f"synth ({len(names)} files) and seeded extract byte-identical across runs")
