#!/usr/bin/env python3
"""End-to-end virtual-rig session: S-curves, online fold tracking, ensemble.

1. Sweep three S-curves through the closed-loop rig around the first
   resonance and report whether the force turns over (coexisting responses).
2. Track the fold curve online starting from the 12.8 Hz fold.
3. Re-trace offline from the collected data and run a small dropout
   ensemble to show where the curve is data-sensitive.

Takes a minute or two; artifacts land in rig_out/.
"""

import time
from pathlib import Path

import numpy as np

from foldtrack import csvio
from foldtrack.config import load_config, make_oracle
from foldtrack.continuation import ContinuationConfig
from foldtrack.driver import run_trace, write_trace_artifacts
from foldtrack.geometry import DomainBox
from foldtrack.postprocess import dropout_ensemble, offline_fold_trace, sweep_s_curve

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
OUT = Path("rig_out")


def main():
    t0 = time.time()
    OUT.mkdir(exist_ok=True)
    cfg = load_config(CONFIGS / "rig_trace.yaml")
    oracle = make_oracle(cfg.oracle, run_seed=cfg.seed)

    print("== S-curves (0.2 mm target steps)")
    for f_hz in (12.3, 12.8, 13.3):
        curve = sweep_s_curve(oracle, f_hz, np.arange(0.4, 5.0, 0.2))
        F = curve.F
        folded = bool(np.any(np.diff(F) < 0))
        print(f"   {f_hz} Hz: {len(curve.points)} points, F range "
              f"{F.min():.2f}..{F.max():.2f} N, non-monotone: {folded}")

    print("== online fold tracking")
    result = run_trace(cfg, oracle=make_oracle(cfg.oracle, run_seed=cfg.seed))
    write_trace_artifacts(OUT, cfg, result)
    print(f"   {len(result.steps)} fold points ({result.reason}); "
          f"hyperparameters {result.hyper_fitted}")
    for s in result.steps[::3]:
        print(f"   k={s.step:2d} f={s.fold.omega:.3f} Hz A={s.fold.A:.2f} mm "
              f"F_model={s.fold.gamma_model:.3f} N F_meas={s.fold.gamma_measured:.3f} N")

    print("== offline re-trace and dropout ensemble")
    ds = result.model.dataset
    box = DomainBox(12.0, 14.0, 1.0, 6.0)
    ccfg = ContinuationConfig(h=0.1, h_max=0.25, max_steps=60, domain_box=box)
    x0 = (result.fold_points[2].omega, result.fold_points[2].A)
    offline = offline_fold_trace(ds, hyper=result.hyper_fitted, cfg=ccfg, x0=x0)
    csvio.write_run_log(OUT / "fold_curve_offline.csv", offline.run_log_rows())
    ens = dropout_ensemble(ds, n_runs=10, dropout_fraction=0.10, seed=5,
                           fit_n_starts=1, hyper_init=result.hyper_fitted,
                           cfg=ccfg, x0=x0)
    print(f"   offline curve: {len(offline.points)} points; "
          f"ensemble completed {ens.completed_fraction:.0%} of {len(ens.runs)} runs")
    print(f"done in {time.time() - t0:.0f} s; artifacts in {OUT}/")


if __name__ == "__main__":
    main()
