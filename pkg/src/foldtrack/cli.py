"""Command-line front end.

Subcommands: trace (online fold tracking), sweep (S-curves through an
oracle), nlfr (constant-force slice with fold markers), ensemble (dropout
uncertainty runs), offline (fold trace of a recorded dataset).  Every
command reads one declarative config file, writes CSV artifacts plus a
manifest into --out, and is bit-reproducible from that manifest with
threads = 1.

Exit codes: 0 success, 1 config error, 2 oracle error, 3 continuation
failure.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click
import numpy as np

from . import csvio
from .config import (config_from_dict, ensemble_config_from_dict, load_raw, make_oracle,
                     nlfr_config_from_dict, offline_config_from_dict, sweep_config_from_dict)
from .continuation import ContinuationConfig
from .errors import ConfigError, ContinuationError, MissingInput, OracleError
from .postprocess import (dropout_ensemble, fold_curve_from_run_log, nlfr_slice,
                          offline_fold_trace, sweep_s_curve)

EXIT_CONFIG, EXIT_ORACLE, EXIT_CONTINUATION = 1, 2, 3


def _common(f):
    f = click.option("--config", "config_path", required=True,
                     type=click.Path(exists=False), help="run configuration (YAML or manifest JSON)")(f)
    f = click.option("--out", "out_dir", default="out", show_default=True,
                     help="output directory")(f)
    f = click.option("--seed", default=None, type=int, help="override the config seed")(f)
    f = click.option("--threads", default=None, type=int, help="override the config thread count")(f)
    return f


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Fold-curve tracking on GP surrogates with active data collection."""


@main.command()
@_common
def trace(config_path, out_dir, seed, threads):
    """Online continuation run against the configured measurement oracle."""
    from dataclasses import replace

    from .driver import run_trace, write_trace_artifacts

    try:
        cfg = _load(config_path, config_from_dict)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if threads is not None:
            cfg = replace(cfg, threads=threads)
        oracle = make_oracle(cfg.oracle, run_seed=cfg.seed,
                             base_dir=Path(config_path).parent)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    try:
        result = run_trace(cfg, oracle)
    except OracleError as e:
        _fail(EXIT_ORACLE, f"oracle failed during initialization: {e}")
    except ContinuationError as e:
        _fail(EXIT_CONTINUATION, f"no fold curve established: {e}")
    write_trace_artifacts(out_dir, cfg, result)
    click.echo(f"traced {len(result.steps)} fold points ({result.reason}); "
               f"artifacts in {out_dir}")
    if result.status == "oracle_error":
        sys.exit(EXIT_ORACLE)
    if result.status == "continuation_error":
        sys.exit(EXIT_CONTINUATION)


@main.command()
@_common
def sweep(config_path, out_dir, seed, threads):
    """S-curve sweeps: fixed-frequency runs over a target-amplitude grid."""
    from dataclasses import replace

    try:
        cfg = _load(config_path, sweep_config_from_dict)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        oracle = make_oracle(cfg.oracle, run_seed=cfg.seed,
                             base_dir=Path(config_path).parent)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_rows = []
    n_failures = 0
    outputs = []
    try:
        for i, omega in enumerate(cfg.omegas()):
            curve = sweep_s_curve(oracle, omega, cfg.A_grid())
            n_failures += len(curve.failures)
            name = f"scurve_{i:03d}.csv"
            _write_points_csv(out / name, [(p.omega, p.A, p.F) for p in curve.points])
            outputs.append(name)
            all_rows.extend((p.omega, p.A, p.F) for p in curve.points)
    except OracleError as e:
        _fail(EXIT_ORACLE, str(e))
    _write_points_csv(out / "dataset.csv", all_rows)
    outputs.append("dataset.csv")
    csvio.write_manifest(out / "manifest.json", config_dict=cfg.to_dict(), seed=cfg.seed,
                         threads=cfg.threads, status="ok",
                         reason=f"{n_failures} failed points" if n_failures else "complete",
                         outputs=outputs, extra={"command": "sweep"})
    click.echo(f"swept {len(all_rows)} points over {len(outputs) - 1} frequencies; "
               f"artifacts in {out_dir}")


@main.command()
@_common
def nlfr(config_path, out_dir, seed, threads):
    """Constant-force slice of recorded data plus fold markers in the band."""
    try:
        cfg = _load(config_path, nlfr_config_from_dict)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    base = Path(config_path).parent
    try:
        datasets = [csvio.read_dataset_csv(_resolve(base, p)) for p in cfg.datasets]
        curves = [fold_curve_from_run_log(csvio.read_run_log(_resolve(base, p)))
                  for p in cfg.run_logs]
    except (MissingInput, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))
    result = nlfr_slice(datasets, cfg.gamma_level, cfg.band, fold_curves=curves)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_points_csv(out / "slice_points.csv", result.points)
    with open(out / "fold_markers.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "A", "gamma_model"])
        for m in result.markers:
            w.writerow([repr(m.omega), repr(m.A), repr(m.gamma_model)])
    csvio.write_manifest(out / "manifest.json", config_dict=cfg.to_dict(), seed=0, threads=1,
                         status="ok", reason=f"{len(result.markers)} fold markers",
                         outputs=["slice_points.csv", "fold_markers.csv"],
                         extra={"command": "nlfr"})
    click.echo(f"slice at {cfg.gamma_level} (+-{cfg.band:.0%}): {len(result.points)} points, "
               f"{len(result.markers)} fold markers; artifacts in {out_dir}")


@main.command()
@_common
def offline(config_path, out_dir, seed, threads):
    """Fold continuation on the surrogate of a recorded dataset (no new data)."""
    try:
        cfg = _load(config_path, offline_config_from_dict)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    base = Path(config_path).parent
    try:
        dataset = csvio.read_dataset_csv(_resolve(base, cfg.dataset))
    except (MissingInput, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))
    ccfg = ContinuationConfig(h=cfg.h, h_max=cfg.h_max, max_steps=cfg.max_steps)
    try:
        curve = offline_fold_trace(dataset, hyper=cfg.hyper, cfg=ccfg, x0=cfg.x0,
                                   seed=cfg.seed if seed is None else seed)
    except (ContinuationError, ValueError) as e:
        _fail(EXIT_CONTINUATION, str(e))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csvio.write_run_log(out / "fold_curve.csv", curve.run_log_rows())
    csvio.write_manifest(out / "manifest.json", config_dict=cfg.to_dict(),
                         seed=cfg.seed if seed is None else seed, threads=1, status="ok",
                         reason=f"{len(curve.points)} fold points",
                         outputs=["fold_curve.csv"],
                         extra={"command": "offline",
                                "hyperparameters_fitted": curve.hyper.as_dict()})
    click.echo(f"offline trace: {len(curve.points)} fold points; artifacts in {out_dir}")


@main.command()
@_common
def ensemble(config_path, out_dir, seed, threads):
    """Dropout uncertainty ensemble over a recorded dataset."""
    from dataclasses import replace

    try:
        cfg = _load(config_path, ensemble_config_from_dict)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if threads is not None:
            cfg = replace(cfg, threads=threads)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))
    base = Path(config_path).parent
    try:
        dataset = csvio.read_dataset_csv(_resolve(base, cfg.dataset))
    except (MissingInput, ValueError) as e:
        _fail(EXIT_CONFIG, str(e))
    ccfg = ContinuationConfig(max_steps=cfg.max_steps)
    result = dropout_ensemble(dataset, cfg.n_runs, cfg.dropout_fraction, seed=cfg.seed,
                              cfg=ccfg, fit_n_starts=cfg.fit_n_starts, threads=cfg.threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = ["summary.csv"]
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "completed", "n_segments",
                    "sigma_n2", "sigma_f2", "l_omega", "l_A", "error"])
        for r in result.runs:
            hy = r.hyper.as_dict() if r.hyper else {}
            w.writerow([r.run_id, int(r.completed), r.n_segments,
                        *(repr(hy[k]) if hy else "" for k in ("sigma_n2", "sigma_f2", "l_omega", "l_A")),
                        r.error])
            if r.curve is not None:
                name = f"curve_{r.run_id:04d}.csv"
                _write_points_csv(out / name, r.curve.as_array(),
                                  header=["omega", "A", "gamma_model"])
                outputs.append(name)
    csvio.write_manifest(out / "manifest.json", config_dict=cfg.to_dict(), seed=cfg.seed,
                         threads=cfg.threads, status="ok",
                         reason=f"{result.completed_fraction:.0%} runs completed",
                         outputs=outputs, extra={"command": "ensemble"})
    click.echo(f"ensemble: {result.completed_fraction:.0%} of {cfg.n_runs} runs completed; "
               f"artifacts in {out_dir}")


def _load(path, parser):
    return parser(load_raw(path))


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _write_points_csv(path, rows, header=("omega", "A", "F")):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


if __name__ == "__main__":
    main()
