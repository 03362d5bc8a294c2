"""End-to-end pipeline, reporting and CLI tests on a miniature cohort."""
import dataclasses
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from rosa.cli import main as cli_main
from rosa.pipeline import (
    ConfigError,
    PipelineConfig,
    ReportError,
    run_pipeline,
    sweep_omega,
    write_report,
)


def tiny_config(outdir: str) -> PipelineConfig:
    return PipelineConfig(outdir=outdir, seed=1, n_subjects=4, folds=2,
                          duration_s=3600.0, detector_epochs=2,
                          detector_chunks_per_epoch=8, detector_eval_every=1,
                          stager_stage1_epochs=2, stager_stage2_epochs=1,
                          fusion_epochs=30)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("run")
    cfg = tiny_config(str(outdir))
    report = run_pipeline(cfg)
    cfg_path = outdir / "config.json"
    cfg.save(cfg_path)
    return cfg, report, cfg_path


# -- configuration ------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(folds=1)
    with pytest.raises(ConfigError):
        PipelineConfig(n_subjects=2, folds=4)
    with pytest.raises(ConfigError):
        PipelineConfig(omega=1.5)
    with pytest.raises(ConfigError):
        PipelineConfig(severities=("extreme",))
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"bogus_field": 1})


def test_config_roundtrip(tmp_path):
    cfg = PipelineConfig(seed=7, n_subjects=6, folds=3)
    path = tmp_path / "cfg.json"
    cfg.save(path)
    assert PipelineConfig.load(path) == cfg


def test_config_load_rejects_garbage(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        PipelineConfig.load(path)


def test_content_keys_track_their_inputs():
    a = PipelineConfig(seed=1)
    b = PipelineConfig(seed=2)
    c = PipelineConfig(seed=1, detector_lr=9e-4)
    assert a.cohort_key(0) != b.cohort_key(0)
    assert a.cohort_key(0) != a.cohort_key(1)
    # training hyperparameters must not invalidate upstream artifacts
    assert a.cohort_key(0) == c.cohort_key(0)
    assert a.stack_key(0) == c.stack_key(0)
    assert a.training_key(0) != c.training_key(0)
    assert a.inference_key(0, 0) != c.inference_key(0, 0)
    # outdir is a location, not content
    d = dataclasses.replace(a, outdir="elsewhere")
    assert a.training_key(0) == d.training_key(0)


# -- pipeline structure -------------------------------------------------------

def test_report_structure(tiny_run):
    cfg, report, _ = tiny_run
    assert report["schema_version"] == 1
    assert len(report["folds"]) == cfg.folds
    subjects = [s for f in report["folds"] for s in f["subjects"]]
    assert len(subjects) == cfg.n_subjects
    for block in report["folds"]:
        assert set(block["staging"]) == {"WS", "WRLD", "WRNN"}
        assert "overall" in block["ap"] and "overall" in block["ap_fused"]
    pooled = report["pooled"]
    for key in ("ap", "ap_fused", "staging", "ahi", "tst", "diagnostics",
                "severity_confusion"):
        assert key in pooled
    assert np.asarray(pooled["severity_confusion"]).shape == (4, 4)
    assert int(np.asarray(pooled["severity_confusion"]).sum()) == cfg.n_subjects
    assert len(pooled["diagnostics"]) == 3


def test_report_written_to_disk(tiny_run):
    cfg, report, _ = tiny_run
    on_disk = json.loads((Path(cfg.outdir) / "report.json").read_text())
    assert on_disk == json.loads(json.dumps(report, sort_keys=True))


def test_staging_accuracy_in_unit_interval(tiny_run):
    _, report, _ = tiny_run
    for gran, st in report["pooled"]["staging"].items():
        assert 0.0 <= st["accuracy"] <= 1.0


def test_cached_rerun_is_byte_identical_and_reuses_models(tiny_run):
    cfg, _, _ = tiny_run
    report_path = Path(cfg.outdir) / "report.json"
    before = report_path.read_bytes()
    model_files = sorted((Path(cfg.outdir) / "models").iterdir())
    assert model_files, "fold training should leave checkpoints behind"
    mtimes = [p.stat().st_mtime_ns for p in model_files]
    run_pipeline(cfg)
    assert report_path.read_bytes() == before
    assert [p.stat().st_mtime_ns for p in model_files] == mtimes


def test_fresh_run_is_deterministic(tiny_run, tmp_path):
    cfg, report, _ = tiny_run
    cfg2 = dataclasses.replace(cfg, outdir=str(tmp_path / "again"))
    report2 = run_pipeline(cfg2)
    a = dict(report, config=None)
    b = dict(report2, config=None)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    ca = dict(report["config"], outdir=None)
    cb = dict(report2["config"], outdir=None)
    assert ca == cb


def test_sweep_omega_zero_equals_radar_only(tiny_run):
    cfg, report, _ = tiny_run
    rows = sweep_omega(cfg, omegas=(0.0, 0.5, 1.0))
    assert [r["omega"] for r in rows] == [0.0, 0.5, 1.0]
    assert rows[0]["ap_fused"] == report["pooled"]["ap"]["overall"]


# -- reporting ----------------------------------------------------------------

def test_write_report_artifacts(tiny_run, tmp_path):
    _, report, _ = tiny_run
    written = write_report(report, tmp_path / "rep")
    names = {p.name for p in written}
    assert {"report.txt", "report.json", "ahi_scatter.svg",
            "ahi_bland_altman.svg", "tst_scatter.svg",
            "severity_table.svg", "timelines.svg"} <= names
    for p in written:
        if p.suffix == ".svg":
            root = ET.fromstring(p.read_text())
            assert root.tag.endswith("svg")
    text = (tmp_path / "rep" / "report.txt").read_text()
    assert "pooled" in text and "severity confusion" in text


def test_write_report_rejects_empty_cohort(tmp_path):
    empty = {"schema_version": 1, "config": {}, "folds": [], "pooled": {}}
    with pytest.raises(ReportError, match="empty cohort"):
        write_report(empty, tmp_path)


def test_write_report_rejects_unwritable_outdir(tiny_run, tmp_path):
    _, report, _ = tiny_run
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    with pytest.raises(ReportError, match="not writable"):
        write_report(report, blocker / "sub")


def test_svg_plots_reject_empty_input():
    from rosa.pipeline import scatter_svg, timeline_svg
    with pytest.raises(ReportError):
        scatter_svg([], [], "t", "u")
    with pytest.raises(ReportError):
        timeline_svg([], 100.0)


# -- command line -------------------------------------------------------------

def test_cli_evaluate_and_report(tiny_run):
    cfg, _, cfg_path = tiny_run
    runner = CliRunner()
    res = runner.invoke(cli_main, ["evaluate", "--config", str(cfg_path)])
    assert res.exit_code == 0, res.output
    assert "report.json" in res.output
    res = runner.invoke(cli_main, ["report", "--config", str(cfg_path)])
    assert res.exit_code == 0, res.output
    assert (Path(cfg.outdir) / "report" / "ahi_scatter.svg").exists()


def test_cli_stage_level_commands(tiny_run):
    _, _, cfg_path = tiny_run
    runner = CliRunner()
    res = runner.invoke(cli_main, ["detect", "--config", str(cfg_path),
                                   "--subject", "0"])
    assert res.exit_code == 0, res.output
    json.loads(res.output)
    res = runner.invoke(cli_main, ["stage", "--config", str(cfg_path),
                                   "--subject", "1", "--granularity", "WS"])
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output)
    assert set(payload["stages"]) <= {"W", "S"}
    res = runner.invoke(cli_main, ["fuse", "--config", str(cfg_path),
                                   "--subject", "2"])
    assert res.exit_code == 0, res.output


def test_cli_sweep_omega(tiny_run):
    _, _, cfg_path = tiny_run
    runner = CliRunner()
    res = runner.invoke(cli_main, ["sweep-omega", "--config", str(cfg_path),
                                   "--omegas", "0,1"])
    assert res.exit_code == 0, res.output
    assert "omega=0" in res.output


def test_cli_exit_codes(tiny_run, tmp_path):
    _, _, cfg_path = tiny_run
    runner = CliRunner()
    bad = tmp_path / "bad.json"
    bad.write_text('{"folds": 1}')
    res = runner.invoke(cli_main, ["gen-cohort", "--config", str(bad)])
    assert res.exit_code == 2
    res = runner.invoke(cli_main, ["detect", "--config", str(cfg_path),
                                   "--subject", "99"])
    assert res.exit_code == 2
    res = runner.invoke(cli_main, ["sweep-omega", "--config", str(cfg_path),
                                   "--omegas", "0,spam"])
    assert res.exit_code == 2
    res = runner.invoke(cli_main, ["report", "--outdir", str(tmp_path / "nowhere")])
    assert res.exit_code == 4
