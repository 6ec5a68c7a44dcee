"""End-to-end command-line surfaces and their exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from sepseq.catalog import SClass, format_instant, load_event_store
from sepseq.cli import main
from sepseq.synthetic import synth_event_set, write_event_set
from sepseq.training import load_checkpoint

from conftest import build_event
from sepseq.catalog import CatalogEntry, EventCatalog, write_catalog, write_flux_csv


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    """A small synthetic event store shared across CLI tests.

    Five S1 events guarantee every one of four folds holds a test event.
    """
    out = tmp_path_factory.mktemp("store")
    events = synth_event_set(
        8,
        {SClass.S1: 5, SClass.S2: 2, SClass.S3: 1},
        seed=21,
        duration_range_s=(5400.0, 9000.0),
    )
    write_event_set(events, out)
    return out


@pytest.fixture(scope="module")
def trained_checkpoint(store, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    rc = main([
        "train", "--data", str(store), "--strategy", "P_orig_OS",
        "--structure", "12-3", "--epochs", "2", "--batch-size", "16",
        "--input-len", "24", "--output-len", "24", "--seed", "1",
        "--out", str(out),
    ])
    assert rc == 0
    return out


class TestSynthAndIngest:
    def test_synth_then_ingest_round_trip(self, tmp_path):
        synth_dir = tmp_path / "synth"
        rc = main([
            "synth", "--out", str(synth_dir), "--seed", "3",
            "--mix", "S1=1,S2=1", "--duration-hours", "2", "2.5",
        ])
        assert rc == 0
        assert (synth_dir / "catalog.csv").exists()

        ingest_dir = tmp_path / "ingested"
        rc = main(["ingest", "--catalog", str(synth_dir / "catalog.csv"), "--out", str(ingest_dir)])
        assert rc == 0
        original = load_event_store(synth_dir / "catalog.csv")
        ingested = load_event_store(ingest_dir / "catalog.csv")
        assert [e.id for e in ingested] == [e.id for e in original]
        for a, b in zip(original, ingested):
            np.testing.assert_array_equal(a.proton.values, b.proton.values)

    def test_ingest_missing_file_exits_1(self, tmp_path):
        catalog = tmp_path / "catalog.csv"
        entry = CatalogEntry(
            "ghost", SClass.S1, build_event().flare_peak, None, None, "nope.csv", None
        )
        write_catalog(EventCatalog([entry]), catalog)
        rc = main(["ingest", "--catalog", str(catalog), "--out", str(tmp_path / "out")])
        assert rc == 1

    def test_ingest_insufficient_margin_exits_1(self, tmp_path, capsys):
        event = build_event(margin=100, with_xray=False)
        flux = tmp_path / "p.csv"
        with open(flux, "w") as fh:
            write_flux_csv(event.proton, fh)
        catalog = tmp_path / "catalog.csv"
        write_catalog(
            EventCatalog([
                CatalogEntry(event.id, event.s_class, event.flare_peak, None, None, "p.csv", None)
            ]),
            catalog,
        )
        rc = main(["ingest", "--catalog", str(catalog), "--out", str(tmp_path / "out")])
        assert rc == 1
        assert event.id in capsys.readouterr().err

    def test_bad_mix_exits_1(self, tmp_path):
        rc = main(["synth", "--out", str(tmp_path / "x"), "--mix", "S9=1"])
        assert rc == 1


class TestTrainEvaluateForecast:
    def test_checkpoint_loads(self, trained_checkpoint):
        params, config, spec, meta = load_checkpoint(trained_checkpoint)
        assert config.structure == "12-3"
        assert meta["epoch"] == 2

    def test_evaluate(self, store, trained_checkpoint, tmp_path, capsys):
        out = tmp_path / "metrics.json"
        rc = main([
            "evaluate", "--data", str(store),
            "--checkpoint", str(trained_checkpoint), "--out", str(out),
        ])
        assert rc == 0
        result = json.loads(out.read_text())
        assert result["events"] == 8
        assert np.isfinite(result["rmse_log"])

    def test_forecast_csv(self, store, trained_checkpoint, tmp_path):
        events = load_event_store(store / "catalog.csv")
        event = events[0]
        start = format_instant(event.onset)
        out = tmp_path / "forecast.csv"
        rc = main([
            "forecast", "--data", str(store), "--checkpoint", str(trained_checkpoint),
            "--event", event.id, "--start", start, "--out", str(out),
        ])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "timestamp,kind,value_log10"
        kinds = [line.split(",")[1] for line in lines[1:]]
        assert kinds.count("input") == 24
        assert kinds.count("predicted") == 24
        assert kinds.count("observed") == 24  # plenty of post-onset data here

    def test_forecast_insufficient_history(self, store, trained_checkpoint, tmp_path):
        events = load_event_store(store / "catalog.csv")
        event = events[0]
        early = format_instant(event.proton.time_at(10))
        rc = main([
            "forecast", "--data", str(store), "--checkpoint", str(trained_checkpoint),
            "--event", event.id, "--start", early, "--out", str(tmp_path / "x.csv"),
        ])
        assert rc == 1

    def test_forecast_unknown_event(self, store, trained_checkpoint, tmp_path):
        rc = main([
            "forecast", "--data", str(store), "--checkpoint", str(trained_checkpoint),
            "--event", "nope", "--start", "2000-01-01T00:00:00Z",
            "--out", str(tmp_path / "x.csv"),
        ])
        assert rc == 1


def grid_config(store, out, tmp_path):
    config = {
        "data": {"catalog": str(store / "catalog.csv")},
        "fold_seed": 0,
        "k": 4,
        "strategies": ["P_orig_OS", "P_orig_AR"],
        "structures": ["12-3", "8-2"],
        "train": {"epochs": 1, "batch_size": 32, "seed": 0},
        "window": {"input_len": 24, "output_len": 24},
        "out": str(out),
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    return path


class TestGrid:
    def test_grid_runs_and_resumes(self, store, tmp_path):
        out = tmp_path / "grid"
        config = grid_config(store, out, tmp_path)
        rc = main(["grid", "--config", str(config)])
        assert rc == 0
        csv_lines = (out / "grid.csv").read_text().splitlines()
        assert len(csv_lines) == 1 + 2 * 2 * (4 + 1)
        assert (out / "table2.txt").exists() and (out / "table3.txt").exists()

        # resume: completed cells keep their manifests untouched
        manifests = sorted(out.glob("cells/*/cell.json"))
        stamps = {p: p.stat().st_mtime_ns for p in manifests}
        contents = {p: p.read_text() for p in manifests}
        rc = main(["grid", "--config", str(config)])
        assert rc == 0
        for p in manifests:
            assert p.stat().st_mtime_ns == stamps[p]
            assert p.read_text() == contents[p]

    def test_grid_cell_determinism(self, store, tmp_path):
        outs = []
        for name in ("a", "b"):
            cfg_dir = tmp_path / f"cfg_{name}"
            cfg_dir.mkdir()
            out = tmp_path / name
            config = grid_config(store, out, cfg_dir)
            rc = main(["grid", "--config", str(config)])
            assert rc == 0
            outs.append(out)
        a, b = outs
        assert (a / "grid.csv").read_text() == (b / "grid.csv").read_text()
        for ckpt in sorted(a.glob("cells/*/fold*.ckpt")):
            twin = b / ckpt.relative_to(a)
            assert ckpt.read_bytes() == twin.read_bytes()

    def test_trend_ar_rejected_at_parse(self, store, tmp_path):
        out = tmp_path / "grid"
        config = {
            "data": {"catalog": str(store / "catalog.csv")},
            "strategies": ["P_trend_AR"],
            "structures": ["8-2"],
            "train": {"epochs": 1},
            "window": {"input_len": 24, "output_len": 24},
            "out": str(out),
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(config))
        rc = main(["grid", "--config", str(path)])
        assert rc == 1


class TestGradcheckCommand:
    def test_passes_on_tiny_model(self, capsys):
        rc = main([
            "gradcheck", "--hidden", "6", "--embed", "2", "--seq-len", "8",
            "--probes", "40", "--mode", "both",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "AR: PASS" in out and "OS: PASS" in out


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "sepseq", "gradcheck", "--hidden", "4", "--embed", "2",
         "--seq-len", "6", "--probes", "10", "--mode", "OS"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout
