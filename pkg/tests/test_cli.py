import json
import shutil
from pathlib import Path

import pytest

from vitalscan import evalkit
from vitalscan.cli import main
from vitalscan.core import VitalLabel, result_from_json
from vitalscan.synthscreen import load_corpus_manifest


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    rc = main(["synth", "--n", "6", "--seed", "3", "--out", str(out), "--absent", "1"])
    assert rc == 0
    return out


class TestSynth:
    def test_synth_writes_corpus(self, cli_corpus):
        files = sorted(p.name for p in cli_corpus.glob("*.png"))
        assert len(files) == 7
        assert (cli_corpus / "manifest.json").exists()

    def test_synth_seeded_reruns_are_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            rc = main(["synth", "--n", "2", "--seed", "9", "--out", str(tmp_path / sub)])
            assert rc == 0
        for name in [p.name for p in (tmp_path / "a").iterdir()]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_n_is_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--n", "0", "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestExtract:
    def test_extract_directory_to_file(self, cli_corpus, tmp_path):
        out = tmp_path / "pred.jsonl"
        rc = main(["extract", str(cli_corpus), "--backend", "mock", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 7
        results = [result_from_json(l) for l in lines]
        absent = [r for r in results if r.screen is None]
        assert len(absent) == 1 and absent[0].vitals == {}

    def test_extract_single_image_to_stdout(self, cli_corpus, capsys):
        image = sorted(cli_corpus.glob("*.png"))[0]
        rc = main(["extract", str(image), "--backend", "mock"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out.strip())
        assert doc["source_id"] == image.stem

    def test_seeded_extract_is_byte_identical(self, cli_corpus, tmp_path):
        outs = []
        for sub in ("a.jsonl", "b.jsonl"):
            out = tmp_path / sub
            rc = main(
                [
                    "extract", str(cli_corpus), "--backend", "mock",
                    "--seed", "11", "--sub-rate", "0.2", "--out", str(out),
                ]
            )
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_seeded_extract_zeroes_timings(self, cli_corpus, tmp_path):
        out = tmp_path / "seeded.jsonl"
        assert main(["extract", str(cli_corpus), "--backend", "mock", "--seed", "1", "--out", str(out)]) == 0
        for line in out.read_text().splitlines():
            doc = json.loads(line)
            assert set(doc["timings"].values()) == {0.0}

    def test_extract_template_backend_with_atlas_dir(self, cli_corpus, tmp_path, capsys):
        from vitalscan.backends import GlyphAtlas

        atlas_dir = tmp_path / "atlas"
        GlyphAtlas.builtin().save_dir(atlas_dir)
        image = sorted(cli_corpus.glob("*.png"))[0]
        rc = main(
            [
                "extract", str(image), "--backend", "template",
                "--atlas", str(atlas_dir), "--tau", "0.8",
                "--fixture", str(cli_corpus / "manifest.json"),
            ]
        )
        assert rc == 0
        doc = json.loads(capsys.readouterr().out.strip())
        assert doc["vitals"], "expected extracted vitals"

    def test_missing_input_is_io_error(self, capsys):
        assert main(["extract", "/definitely/not/here.png"]) == 4
        assert "/definitely/not/here.png" in capsys.readouterr().err

    def test_bad_tau_is_usage_error(self, cli_corpus):
        with pytest.raises(SystemExit) as exc:
            main(["extract", str(cli_corpus), "--tau", "1.5"])
        assert exc.value.code == 2

    def test_jobs_parallel_output_matches_serial(self, cli_corpus, tmp_path):
        serial = tmp_path / "serial.jsonl"
        parallel = tmp_path / "parallel.jsonl"
        assert main(["extract", str(cli_corpus), "--backend", "mock", "--seed", "4", "--out", str(serial)]) == 0
        assert main(
            ["extract", str(cli_corpus), "--backend", "mock", "--seed", "4", "--jobs", "3", "--out", str(parallel)]
        ) == 0
        assert serial.read_bytes() == parallel.read_bytes()

    def test_interchange_without_runtime_degrades(self, cli_corpus, tmp_path, capsys):
        try:
            import onnxruntime  # noqa: F401

            pytest.skip("onnxruntime present")
        except ImportError:
            pass
        model_dir = tmp_path / "models"
        model_dir.mkdir()
        for name in ("seg.onnx", "det.onnx", "ocr.onnx"):
            (model_dir / name).write_bytes(b"x")
        (model_dir / "manifest.json").write_text(
            json.dumps(
                {
                    "format": "onnx",
                    "models": [
                        {"kind": "seg", "path": "seg.onnx"},
                        {"kind": "det", "path": "det.onnx",
                         "classes": ["HR", "PR", "SPO2", "SYS", "DIA", "MAP", "RR", "TEMP"]},
                        {"kind": "ocr", "path": "ocr.onnx"},
                    ],
                }
            )
        )
        rc = main(
            [
                "extract", str(cli_corpus), "--backend", "interchange",
                "--manifest", str(model_dir / "manifest.json"),
            ]
        )
        assert rc == 3
        err = capsys.readouterr().err
        assert "mock" in err and "template" in err


class TestEval:
    def test_eval_ocr_matches_inline_scoring(self, cli_corpus, tmp_path, capsys):
        pred = tmp_path / "pred.jsonl"
        assert main(["extract", str(cli_corpus), "--backend", "mock", "--out", str(pred)]) == 0
        rc = main(["eval", "ocr", "--pred", str(pred), "--gt", str(cli_corpus), "--json"])
        assert rc == 0
        offline = json.loads(capsys.readouterr().out)

        results = [result_from_json(l) for l in pred.read_text().splitlines()]
        manifest = load_corpus_manifest(cli_corpus)
        inline = evalkit.field_accuracy(
            evalkit.best_record_values(results), manifest.field_values()
        )
        assert offline == json.loads(evalkit.to_json(inline))
        assert inline.overall_accuracy == pytest.approx(100.0)

    def test_eval_det_text_report(self, cli_corpus, tmp_path, capsys):
        pred = tmp_path / "pred.jsonl"
        assert main(["extract", str(cli_corpus), "--backend", "mock", "--out", str(pred)]) == 0
        rc = main(["eval", "det", "--pred", str(pred), "--gt", str(cli_corpus)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "Per-class detection performance" in out
        assert "Confusion matrix" in out

    def test_eval_seg_report(self, cli_corpus, tmp_path, capsys):
        pred = tmp_path / "pred.jsonl"
        assert main(["extract", str(cli_corpus), "--backend", "mock", "--out", str(pred)]) == 0
        rc = main(["eval", "seg", "--pred", str(pred), "--gt", str(cli_corpus), "--json"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["iou"]["mean"] > 0.98

    def test_eval_missing_pred_is_io_error(self, cli_corpus):
        assert main(["eval", "ocr", "--pred", "/nope.jsonl", "--gt", str(cli_corpus)]) == 4


class TestBench:
    def test_bench_report_invariants(self, cli_corpus, capsys):
        rc = main(
            ["bench", str(cli_corpus), "--backend", "mock", "--repeat", "2", "--warmup", "1", "--json"]
        )
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["n"] == 14  # 7 files x 2 repeats
        rows = doc["rows"]
        total = rows["total"]["mean_ms"]
        parts = sum(rows[k]["mean_ms"] for k in ("seg", "det", "ocr", "overhead"))
        assert abs(total - parts) <= 0.1
        for row in rows.values():
            if row["fps"] is not None:
                assert row["fps"] * row["mean_ms"] == pytest.approx(1000.0, abs=1e-6)
        assert rows["seg"]["success_pct"] == pytest.approx(100 * 6 / 7)

    def test_repeat_zero_is_usage_error(self, cli_corpus):
        with pytest.raises(SystemExit) as exc:
            main(["bench", str(cli_corpus), "--repeat", "0"])
        assert exc.value.code == 2


class TestIngest:
    def _drop(self, src_corpus, dst, names):
        for name in names:
            shutil.copy(src_corpus / name, dst / name)

    def test_ingest_once_processes_in_order(self, cli_corpus, tmp_path):
        watch = tmp_path / "watch"
        watch.mkdir()
        fixture = str(cli_corpus / "manifest.json")
        out = tmp_path / "log.jsonl"
        self._drop(cli_corpus, watch, ["0000.png", "0001.png", "0002.png"])
        rc = main(
            ["ingest", str(watch), str(out), "--once", "--backend", "mock", "--fixture", fixture]
        )
        assert rc == 0
        ids = [json.loads(l)["source_id"] for l in out.read_text().splitlines()]
        assert ids == ["0000", "0001", "0002"]

    def test_ingest_skips_duplicates_across_runs(self, cli_corpus, tmp_path):
        watch = tmp_path / "watch"
        watch.mkdir()
        fixture = str(cli_corpus / "manifest.json")
        out = tmp_path / "log.jsonl"
        self._drop(cli_corpus, watch, ["0000.png"])
        for _ in range(2):
            rc = main(
                ["ingest", str(watch), str(out), "--once", "--backend", "mock", "--fixture", fixture]
            )
            assert rc == 0
        assert len(out.read_text().splitlines()) == 1

    def test_ingest_survives_corrupt_file(self, cli_corpus, tmp_path, capsys):
        watch = tmp_path / "watch"
        watch.mkdir()
        fixture = str(cli_corpus / "manifest.json")
        out = tmp_path / "log.jsonl"
        (watch / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
        self._drop(cli_corpus, watch, ["0003.png"])
        rc = main(
            ["ingest", str(watch), str(out), "--once", "--backend", "mock", "--fixture", fixture]
        )
        assert rc == 0
        err = capsys.readouterr().err
        assert "broken.png" in err
        ids = [json.loads(l)["source_id"] for l in out.read_text().splitlines()]
        assert ids == ["0003"]

    def test_missing_watch_dir_is_io_error(self, tmp_path):
        assert main(["ingest", str(tmp_path / "nope"), str(tmp_path / "o.jsonl"), "--once"]) == 4
