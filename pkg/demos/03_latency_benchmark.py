"""Walkthrough: the per-stage latency ledger.

Times the pipeline stage by stage over a small corpus (with warmup discards)
and prints the benchmark table: latency, throughput, confidence and success
per stage. Also shows how raising the confidence threshold can only shrink
the output.
"""

import tempfile
from pathlib import Path

from vitalscan import evalkit
from vitalscan.backends import mock_backends_from_fixture
from vitalscan.imgio import load_image
from vitalscan.pipeline import PipelineConfig, run
from vitalscan.synthscreen import generate_corpus

workdir = Path(tempfile.mkdtemp(prefix="vitalscan_bench_"))
manifest = generate_corpus(10, seed=31, out_dir=workdir, n_absent=1)
backends = mock_backends_from_fixture(manifest)
pairs = [(e, load_image(Path(manifest.root) / e.file)) for e in manifest.images]

cfg = PipelineConfig()
timings, confidences, successes = [], [], []
for entry, img in pairs:
    run(img, cfg, backends, source_id=entry.id)  # warmup, discarded
    result = run(img, cfg, backends, source_id=entry.id)
    timings.append(result.timings)
    record_confs = [r.confidence for recs in result.vitals.values() for r in recs]
    confidences.append(
        {
            "seg": result.screen[1] if result.screen else None,
            "ocr": sum(record_confs) / len(record_confs) if record_confs else None,
            "total": result.screen[1] if result.screen else None,
        }
    )
    successes.append(
        {
            "seg": result.screen is not None,
            "det": bool(result.vitals),
            "ocr": bool(record_confs),
            "total": bool(record_confs),
        }
    )

report = evalkit.latency_aggregate(timings, confidences, successes)
print(report.to_text())
print()
print("threshold sweep (records extracted across the corpus):")
for tau in (0.5, 0.8, 0.95):
    backends = mock_backends_from_fixture(manifest)
    cfg = PipelineConfig(tau=tau)
    n = sum(
        len(recs)
        for e, img in pairs
        for recs in run(img, cfg, backends, source_id=e.id).vitals.values()
    )
    print(f"  tau={tau:<5} -> {n} records")
