"""Command-line entry points for the radar sleep screening pipeline.

Exit codes: 0 success, 2 configuration error, 3 pipeline stage failure,
4 reporting/validation failure."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .cohort import split_folds
from .pipeline import (
    ConfigError,
    PipelineConfig,
    ReportError,
    StageError,
    generate_cohort,
    infer_subject,
    preprocess_cohort,
    run_pipeline,
    sweep_omega,
    train_fold,
    write_report,
)

EXIT_CONFIG, EXIT_STAGE, EXIT_REPORT = 2, 3, 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _build_config(config, outdir, seed, folds, n_subjects) -> PipelineConfig:
    try:
        cfg = PipelineConfig.load(config) if config else PipelineConfig()
        overrides = {"outdir": outdir, "seed": seed, "folds": folds,
                     "n_subjects": n_subjects}
        payload = cfg.to_dict()
        payload.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig.from_dict(payload)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


def _common(fn):
    fn = click.option("--config", type=click.Path(), default=None,
                      help="JSON config file.")(fn)
    fn = click.option("--outdir", type=click.Path(), default=None,
                      help="Artifact directory.")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--folds", type=int, default=None,
                      help="Cross-validation fold count.")(fn)
    fn = click.option("--n-subjects", type=int, default=None)(fn)
    return fn


def _run_stage(fn):
    try:
        return fn()
    except StageError as exc:
        _fail(EXIT_STAGE, str(exc))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


@click.group()
def main():
    """Contactless sleep apnea screening from radar, with oximetry fusion."""


@main.command("gen-cohort")
@_common
def gen_cohort_cmd(config, outdir, seed, folds, n_subjects):
    """Synthesize the subject cohort into OUTDIR/cohort."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)
    records = _run_stage(lambda: generate_cohort(cfg))
    click.echo(f"generated {len(records)} subjects in {cfg.outdir}/cohort")


@main.command("preprocess")
@_common
def preprocess_cmd(config, outdir, seed, folds, n_subjects):
    """Build spectrogram stacks for every subject."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)

    def run():
        records = generate_cohort(cfg)
        return preprocess_cohort(cfg, records)

    stacks = _run_stage(run)
    click.echo(f"preprocessed {len(stacks)} subjects into {cfg.outdir}/stacks")


@main.command("train")
@_common
def train_cmd(config, outdir, seed, folds, n_subjects):
    """Train detector, stager and fusion nets for every fold."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)

    def run():
        records = generate_cohort(cfg)
        stacks = preprocess_cohort(cfg, records)
        fold_sets = split_folds(records, cfg.folds)
        all_idx = set(range(len(records)))
        for f, test_idx in enumerate(fold_sets):
            train_idx = sorted(all_idx - set(test_idx))
            train_fold(cfg, f, list(test_idx), train_idx, records, stacks)
        return len(fold_sets)

    n = _run_stage(run)
    click.echo(f"trained {n} folds into {cfg.outdir}/models")


def _subject_payload(cfg: PipelineConfig, subject: int) -> dict:
    records = generate_cohort(cfg)
    if not 0 <= subject < len(records):
        raise ConfigError(f"subject index {subject} out of range")
    stacks = preprocess_cohort(cfg, records)
    fold_sets = split_folds(records, cfg.folds)
    fold = next(f for f, idx in enumerate(fold_sets) if subject in idx)
    all_idx = set(range(len(records)))
    tf = train_fold(cfg, fold, list(fold_sets[fold]),
                    sorted(all_idx - set(fold_sets[fold])), records, stacks)
    return infer_subject(cfg, tf, subject, records, stacks)


@main.command("detect")
@click.option("--subject", type=int, required=True)
@_common
def detect_cmd(config, outdir, seed, folds, n_subjects, subject):
    """Detect respiratory events for one held-out subject."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)
    payload = _run_stage(lambda: _subject_payload(cfg, subject))
    click.echo(json.dumps(payload["radar_segments"], sort_keys=True, indent=1))


@main.command("stage")
@click.option("--subject", type=int, required=True)
@click.option("--granularity", type=click.Choice(["WS", "WRLD", "WRNN"]),
              default="WRNN")
@_common
def stage_cmd(config, outdir, seed, folds, n_subjects, subject, granularity):
    """Predict the sleep-stage sequence for one held-out subject."""
    from .cohort.types import GRANULARITIES, SleepStage
    cfg = _build_config(config, outdir, seed, folds, n_subjects)
    payload = _run_stage(lambda: _subject_payload(cfg, subject))
    mapping = GRANULARITIES[granularity]
    labels = [mapping[SleepStage[s]] for s in payload["pred_stages"]]
    click.echo(json.dumps({"stages": labels, "tst_hours": payload["est_tst"]},
                          sort_keys=True))


@main.command("fuse")
@click.option("--subject", type=int, required=True)
@_common
def fuse_cmd(config, outdir, seed, folds, n_subjects, subject):
    """Detect events and blend in oximetry evidence."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)
    payload = _run_stage(lambda: _subject_payload(cfg, subject))
    click.echo(json.dumps(payload["fused_segments"], sort_keys=True, indent=1))


@main.command("evaluate")
@_common
def evaluate_cmd(config, outdir, seed, folds, n_subjects):
    """Run the full cross-validated pipeline and write report.json."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)
    report = _run_stage(lambda: run_pipeline(cfg))
    pooled = report["pooled"]
    click.echo(f"report written to {cfg.outdir}/report.json")
    click.echo(f"pooled AP radar={pooled['ap']['overall']} "
               f"fused={pooled['ap_fused']['overall']}")


@main.command("report")
@_common
def report_cmd(config, outdir, seed, folds, n_subjects):
    """Render text and SVG artifacts from an existing report.json."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)
    path = Path(cfg.outdir) / "report.json"
    if not path.exists():
        _fail(EXIT_REPORT, f"no report.json in {cfg.outdir}; run `rosa evaluate` first")
    try:
        report = json.loads(path.read_text())
        written = write_report(report, Path(cfg.outdir) / "report")
    except (ReportError, json.JSONDecodeError) as exc:
        _fail(EXIT_REPORT, str(exc))
    for p in written:
        click.echo(str(p))


@main.command("sweep-omega")
@click.option("--omegas", default="0,0.25,0.5,0.75,1",
              help="Comma-separated fusion weights.")
@_common
def sweep_omega_cmd(config, outdir, seed, folds, n_subjects, omegas):
    """Fused detection AP as a function of the oximetry weight."""
    cfg = _build_config(config, outdir, seed, folds, n_subjects)
    try:
        values = tuple(float(v) for v in omegas.split(","))
    except ValueError as exc:
        _fail(EXIT_CONFIG, f"bad --omegas: {exc}")
    rows = _run_stage(lambda: sweep_omega(cfg, values))
    for row in rows:
        click.echo(f"omega={row['omega']:<5g} AP_fused={row['ap_fused']}")


if __name__ == "__main__":
    main()
