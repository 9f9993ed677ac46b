"""Command line: calibrate | cva | sweep | validate."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ENV_PREFIX, RunConfig, env_flag, env_value, load_config
from .curves import Model, calibrate_shift, max_nonnegative_jump_rate
from .cva import rho_sweep, write_results_csv
from .engine import build_model, dump_paths, iter_bundles
from .errors import CalibrationDomainError, InconsistentShiftError
from .exposure import write_profile_csv
from .validation import run_suite, write_reports_csv

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override sim.seed")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--out", help="output directory")

    ap = argparse.ArgumentParser(prog="tccva", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    cal = sub.add_parser("calibrate", parents=[common], help="tabulate the calibrated shifts")
    cal.add_argument("--require-nonneg", action="store_true", help="exit 1 if any shift is negative")
    cal.add_argument("--psi-tol", type=float, help="tolerance below zero still counted as nonnegative")
    for name, hlp in (("cva", "price at the configured correlations"), ("sweep", "full correlation sweep")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--dump-paths", action="store_true", help="write the first scenarios' paths")
        p.add_argument("--record-runtime", action="store_true", help="fill runtime_seconds (breaks byte identity)")
    val = sub.add_parser("validate", parents=[common], help="run the oracle suite")
    val.add_argument("--full", action="store_true", help="desk-scale path counts")
    return ap


def _resolve(args) -> RunConfig | None:
    path = args.config or env_value("config")
    seed = args.seed if args.seed is not None else env_value("seed")
    threads = args.threads if args.threads is not None else env_value("threads")
    out = args.out or env_value("out")
    if path is None:
        return None
    return load_config(path).with_overrides(seed, threads, out)


def cmd_calibrate(cfg: RunConfig, require_nonneg: bool = False, psi_tol: float | None = None) -> int:
    tol = cfg.psi_tol if psi_tol is None else psi_tol
    cfg.output.mkdir(parents=True, exist_ok=True)
    status = 0
    for model in cfg.models:
        try:
            shift = calibrate_shift(model, cfg.cir, cfg.jumps_for(model), cfg.market, cfg.psi_step, tol)
        except CalibrationDomainError as exc:
            print(f"{model.value}: calibration impossible at t={exc.t}: {exc}")
            status = 2
            continue
        shift.to_csv(cfg.output / f"psi_{model.value}.csv")
        verdict = "nonnegative" if shift.nonnegative else "NEGATIVE"
        print(f"{model.value}: min psi = {shift.min_value:.6e} at t = {shift.argmin_time:.4f} -> {verdict} (tol {tol:g})")
        if require_nonneg and not shift.nonnegative:
            status = max(status, 1)
        if model is Model.JCIR and cfg.jcir_jumps is not None:
            cap = max_nonnegative_jump_rate(Model.JCIR, cfg.cir, cfg.jcir_jumps.mean_size, cfg.market, cfg.psi_step)
            print(f"JCIR: largest jump rate with nonnegative shift at mean size {cfg.jcir_jumps.mean_size:g}: {cap:.4f}")
    return status


def _models(cfg: RunConfig):
    return [build_model(m, cfg.cir, cfg.jumps_for(m), cfg.market, psi_step=cfg.psi_step, psi_tol=cfg.psi_tol)
            for m in cfg.models]


def cmd_cva(cfg: RunConfig, rhos=None, filename="cva.csv", dump=False, record_runtime=False) -> int:
    rhos = cfg.rhos if rhos is None else rhos
    cfg.output.mkdir(parents=True, exist_ok=True)
    try:
        models = _models(cfg)
        rows = rho_sweep(models, rhos, cfg.exposure, cfg.sim, cfg.market, cfg.pricing,
                         cfg.estimators, cfg.threads, include_independent=True)
    except InconsistentShiftError as exc:
        print(f"refusing to price: {exc} ({exc.params})")
        return 1
    write_results_csv(rows, cfg.output / filename, record_runtime)
    for r in rows:
        lo, hi = r.ci95
        name = r.model.value if r.model is not None else "-"
        print(f"{name:6s} rho={'' if r.rho is None else f'{r.rho:+.2f}':6s} {r.estimator.value:22s} "
              f"{r.value:.6e} [{lo:.6e}, {hi:.6e}]")
    if dump:
        sim = replace(cfg.sim, m=min(cfg.dump_scenarios, cfg.sim.m), rho=float(rhos[0]))
        dump_paths(iter_bundles(models[0], sim, exposure=cfg.exposure), cfg.output / "paths.csv")
    return 0


def cmd_sweep(cfg: RunConfig, dump=False, record_runtime=False) -> int:
    status = cmd_cva(cfg, cfg.rhos, "sweep.csv", dump, record_runtime)
    write_profile_csv(cfg.exposure, cfg.sim.times, cfg.output / "exposure_profile.csv")
    return status


def cmd_validate(full: bool = False, seed: int = 0, threads: int = 1, out: Path | None = None) -> int:
    reports = run_suite(full=full, seed=seed, threads=threads)
    for r in reports:
        print(r.line())
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_reports_csv(reports, out / "validation.csv")
    return 0 if all(r.passed for r in reports if r.gating) else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    cfg = _resolve(args)
    if args.command == "validate":
        full = args.full or env_flag("full")
        if cfg is not None:
            return cmd_validate(full, cfg.sim.seed, cfg.threads, cfg.output)
        seed = args.seed if args.seed is not None else int(env_value("seed") or 0)
        threads = args.threads if args.threads is not None else int(env_value("threads") or 1)
        out = args.out or env_value("out")
        return cmd_validate(full, seed, threads, Path(out) if out else None)
    if cfg is None:
        print(f"--config (or {ENV_PREFIX}CONFIG) is required for {args.command}", file=sys.stderr)
        return 2
    if args.command == "calibrate":
        return cmd_calibrate(cfg, args.require_nonneg or env_flag("require_nonneg"), args.psi_tol)
    record = args.record_runtime or env_flag("record_runtime")
    dump = args.dump_paths or env_flag("dump_paths")
    if args.command == "cva":
        return cmd_cva(cfg, dump=dump, record_runtime=record)
    return cmd_sweep(cfg, dump=dump, record_runtime=record)


if __name__ == "__main__":
    sys.exit(main())
