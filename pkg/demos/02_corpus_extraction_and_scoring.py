"""Walkthrough: synthesize a ground-truth corpus, extract, and score it.

Generates 24 synthetic bedside scenes (plus 3 monitor-free ones), runs the
pipeline with replayed localization and real template OCR, and prints the
field-accuracy, detection and segmentation reports.
"""

import tempfile
from pathlib import Path

from vitalscan import evalkit
from vitalscan.backends import BackendSet, TemplateOcrBackend, mock_backends_from_fixture
from vitalscan.core import Detection
from vitalscan.geometry import fill_quad
from vitalscan.imgio import load_image
from vitalscan.pipeline import PipelineConfig, run
from vitalscan.synthscreen import generate_corpus

workdir = Path(tempfile.mkdtemp(prefix="vitalscan_demo_"))
print(f"writing corpus to {workdir}")
manifest = generate_corpus(24, seed=7, out_dir=workdir, n_absent=3)

# localization replays ground truth; recognition is the real template matcher
mocks = mock_backends_from_fixture(manifest)
backends = BackendSet(seg=mocks.seg, det=mocks.det, ocr=TemplateOcrBackend())
cfg = PipelineConfig()

results = []
for entry in manifest.images:
    img = load_image(Path(manifest.root) / entry.file)
    results.append(run(img, cfg, backends, source_id=entry.id))
found = sum(1 for r in results if r.screen is not None)
print(f"processed {len(results)} images; screen found in {found}")

# field-level accuracy against the manifest (out-of-range plants excluded:
# the pipeline is supposed to reject those)
records = evalkit.best_record_values(results)
accuracy = evalkit.field_accuracy(records, manifest.field_values(in_range_only=True))
print()
print(accuracy.to_text())

# detection quality of the boxes behind the accepted records
preds = {
    r.source_id: [
        Detection(rec.label, rec.box, rec.confidence)
        for recs in r.vitals.values()
        for rec in recs
    ]
    for r in results
}
gts = {e.id: [(f.label, f.bbox) for f in e.vitals] for e in manifest.images}
print()
print(evalkit.detection_scores(preds, gts).to_text())

# screen localization overlap
instances = []
for entry, result in zip(manifest.images, results):
    if entry.quad is None:
        continue
    gt_mask = fill_quad(entry.quad, entry.width, entry.height)
    pred_mask = fill_quad(result.screen[0], entry.width, entry.height)
    instances.append(evalkit.mask_scores(pred_mask, gt_mask))
print()
print(evalkit.aggregate_seg_scores(instances).to_text())
