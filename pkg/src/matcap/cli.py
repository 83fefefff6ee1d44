"""Command line interface for matcap."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd

from . import csv_io
from .autodiff import grad_check
from .config import (
    PRESETS,
    REFERENCE_PARAMETER_COUNTS,
    GradCheckConfig,
    TrainConfig,
    load_train_config,
    validate_sweep,
)
from .errors import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, ConfigError, MatcapError, exit_code_for
from .experiments import bounds_rows, capacity_sweep_rows, fmc_rows, mem_fmc_rows
from .linalg import seeded_rng
from .matntm import build_model
from .plotting import plot_fmc, plot_learning_curves, plot_mem_fmc, plot_weight_heatmaps
from .training import (
    TrainResult,
    aggregate_curves,
    evaluate_generalization,
    model_from_checkpoint,
    sample_task,
    train,
    write_final_report,
)

logger = logging.getLogger(__name__)


def _add_sweep_flags(p: argparse.ArgumentParser, kmax: bool = True) -> None:
    p.add_argument("--n", type=int, default=4, help="Matrix side N.")
    p.add_argument("--trials", type=int, default=10, help="Number of random systems.")
    p.add_argument("--radius", type=float, default=0.95, help="Upper bound on eigenvalue moduli.")
    p.add_argument("--seed", type=int, default=0, help="Base seed; trial generators are spawned from it.")
    if kmax:
        p.add_argument("--kmax", type=int, default=100, help="Largest lag evaluated.")
    p.add_argument("--preset", choices=["random", "scalar"], default="random",
                   help="'scalar' uses the fixed system u=v=0.5, w=1.")
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--normal", dest="normal", action="store_true", default=True,
                      help="Draw normal connection matrices (default).")
    kind.add_argument("--general", dest="normal", action="store_false",
                      help="Draw general (non-normal) connection matrices.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matcap", description="Memory capacity of matrix recurrent systems")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Shorthand for --log-level INFO.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fmc", help="Fisher memory curves of random matrix systems and vector baselines.")
    _add_sweep_flags(p)
    p.add_argument("--out", type=Path, default=Path("results/fmc"), help="Output directory.")

    p = sub.add_parser("capacity-sweep", help="Relative capacity against its bound over several sizes.")
    _add_sweep_flags(p, kmax=False)
    p.add_argument("--n-list", default="2,4,8", help="Comma separated matrix sizes.")
    p.add_argument("--out", type=Path, default=Path("results/capacity_sweep.csv"), help="Output CSV.")

    p = sub.add_parser("mem-fmc", help="Memory curves with one queued state fed back.")
    _add_sweep_flags(p)
    p.add_argument("--m-max", type=int, default=3, help="Memory contributions kept in the series.")
    p.add_argument("--out", type=Path, default=Path("results/mem_fmc"), help="Output directory.")

    p = sub.add_parser("bounds", help="Capacity bounds and the dynamic range check per trial.")
    _add_sweep_flags(p, kmax=False)
    p.add_argument("--out", type=Path, default=Path("results/bounds.csv"), help="Output CSV.")

    p = sub.add_parser("train", help="Train a MatNTM or matrix RNN on copy or recall.")
    p.add_argument("--task", choices=["copy", "recall"], help="Task to train on.")
    p.add_argument("--model", choices=["matntm", "matrnn"], help="Model kind.")
    p.add_argument("--preset", choices=sorted(PRESETS), help="Start from a named configuration.")
    p.add_argument("--config", type=Path, help="key = value or JSON config file.")
    p.add_argument("--seed", type=int, help="Training seed.")
    p.add_argument("--max-iterations", type=int, help="Override the iteration budget.")
    p.add_argument("--resume", type=Path, help="Checkpoint to continue from; --max-iterations is the total.")
    p.add_argument("--out", type=Path, default=Path("runs/train"), help="Run directory.")

    p = sub.add_parser("eval", help="Cost against sequence or item length for a checkpoint.")
    p.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint JSON.")
    p.add_argument("--task", choices=["copy", "recall"], default="copy", help="Task of the checkpoint.")
    p.add_argument("--sweep", default="l=1..40", help="Range such as l=1..40 or n=1..6.")
    p.add_argument("--samples", type=int, default=100, help="Fresh samples per sweep value.")
    p.add_argument("--seed", type=int, default=0, help="Evaluation seed.")
    p.add_argument("--out", type=Path, default=Path("results/eval.csv"), help="Output CSV.")

    p = sub.add_parser("gradcheck", help="Compare analytic and numeric gradients of the model loss.")
    p.add_argument("--config", type=Path, help="Training config describing the model.")
    p.add_argument("--preset", choices=sorted(PRESETS), default="tiny", help="Model preset when no config.")
    p.add_argument("--steps", type=int, default=1, help="Content steps in the checked sequence.")
    p.add_argument("--coords", type=int, default=200, help="Sampled coordinates.")
    p.add_argument("--eps", type=float, default=1e-6, help="Central difference step.")
    p.add_argument("--threshold", type=float, help="Pass threshold (default 1e-5, or 1e-4 for multi-step).")
    p.add_argument("--seed", type=int, default=0, help="Seed for weights, data and coordinates.")

    p = sub.add_parser("plot", help="Learning curves and head weight heatmaps.")
    p.add_argument("--learning-curves", nargs="*", type=Path, default=[],
                   help="Run directories (each holding learning_curve.csv), grouped by parent name.")
    p.add_argument("--diagnostics", type=Path, help="diagnostics.csv from a training run.")
    p.add_argument("--out", type=Path, default=Path("results/plot.svg"), help="Output SVG.")
    return parser


def parse_range(text: str) -> List[int]:
    """'l=1..40' → [1, …, 40]; plain '3' or '1,2,5' also accepted."""
    _, _, values = text.rpartition("=")
    try:
        if ".." in values:
            lo, hi = (int(x) for x in values.split("..", 1))
            if lo > hi:
                raise ConfigError(f"empty range: {text}")
            return list(range(lo, hi + 1))
        return [int(x) for x in values.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse range {text!r}") from exc


def _sweep_config(args: argparse.Namespace, **extra: Any):
    values: Dict[str, Any] = {
        "n": args.n, "trials": args.trials, "radius": args.radius, "seed": args.seed,
        "normal": args.normal, "preset": args.preset,
    }
    if hasattr(args, "kmax"):
        values["kmax"] = args.kmax
    values.update(extra)
    return validate_sweep(values)


def cmd_fmc(args: argparse.Namespace) -> int:
    cfg = _sweep_config(args)
    matrix, vector = fmc_rows(cfg)
    csv_io.write_csv(args.out / "fmc.csv", matrix, csv_io.FMC_COLUMNS)
    csv_io.write_csv(args.out / "fmc_vector.csv", vector, csv_io.FMC_COLUMNS)
    frame = csv_io.to_frame(matrix, csv_io.FMC_COLUMNS)
    if not frame.empty:
        plot_fmc(frame, csv_io.to_frame(vector, csv_io.FMC_COLUMNS), args.out / "fmc.svg")
        totals = frame.groupby("trial")["cumulative"].last()
        print(f"[REPORT] fmc trials={cfg.trials} N={cfg.n} J_tot mean={totals.mean():.6g} "
              f"min={totals.min():.6g} max={totals.max():.6g}")
    return EXIT_OK


def cmd_capacity_sweep(args: argparse.Namespace) -> int:
    cfg = _sweep_config(args)
    n_list = parse_range(args.n_list)
    rows = capacity_sweep_rows(cfg, n_list)
    csv_io.write_csv(args.out, rows, csv_io.CAPACITY_COLUMNS)
    frame = csv_io.to_frame(rows, csv_io.CAPACITY_COLUMNS)
    for n, group in frame.groupby("N"):
        print(f"[REPORT] N={n} trials={len(group)} J_tot_rel mean={group['J_tot_rel'].mean():.6g} "
              f"max={group['J_tot_rel'].max():.6g} bound={group['bound'].iloc[0]:g} "
              f"satisfied={int(group['satisfied'].sum())}/{len(group)}")
    if len(frame) and not frame["satisfied"].all():
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_mem_fmc(args: argparse.Namespace) -> int:
    cfg = _sweep_config(args, m_max=args.m_max)
    rows = mem_fmc_rows(cfg)
    csv_io.write_csv(args.out / "mem_fmc.csv", rows, csv_io.MEM_FMC_COLUMNS)
    frame = csv_io.to_frame(rows, csv_io.MEM_FMC_COLUMNS)
    if not frame.empty:
        plot_mem_fmc(frame, args.out / "mem_fmc.svg")
        ratios = frame.groupby("trial")["ratio"].first()
        print(f"[REPORT] mem-fmc trials={cfg.trials} m_max={cfg.m_max} ratio mean={ratios.mean():.6g} "
              f"above_1={int((ratios > 1).sum())} above_4={int((ratios > 4).sum())}")
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    cfg = _sweep_config(args)
    rows = bounds_rows(cfg)
    csv_io.write_csv(args.out, rows, csv_io.BOUNDS_COLUMNS)
    failed = 0
    for row in rows:
        ok = row["general_bound"] and row["normal_bound"] in (True, "na") and row["dyn_range_lhs"] <= row["dyn_range_rhs"]
        failed += not ok
        print(f"[REPORT] trial={row['trial']} J_tot_rel={row['J_tot_rel']:.6g} normal={row['normal']} "
              f"normal_bound={row['normal_bound']} general_bound={row['general_bound']} "
              f"dyn_range={row['dyn_range_lhs']:.4g}<={row['dyn_range_rhs']:.4g}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _train_config(args: argparse.Namespace) -> TrainConfig:
    overrides: Dict[str, Any] = {"task": args.task, "seed": args.seed, "max_iterations": args.max_iterations}
    if args.model:
        overrides["model"] = {"kind": args.model}
    preset_name = args.preset
    if preset_name is None and args.config is None:
        preset_name = f"{args.task or 'copy'}-{args.model or 'matntm'}"
    return load_train_config(args.config, preset_name, overrides)


def _preset_key(config: TrainConfig) -> str:
    return f"{config.task}-{config.model.kind}"


def _merged_curve(out: Path, result: TrainResult) -> pd.DataFrame:
    """Earlier learning-curve rows of a resumed run followed by the new ones."""
    path = out / "learning_curve.csv"
    if result.start_iteration == 0 or not path.exists():
        return result.curve
    earlier = csv_io.load_learning_curve(path)
    earlier = earlier[earlier["iteration"] < result.start_iteration]
    if earlier.empty:
        return result.curve
    if result.curve.empty:
        return earlier
    return pd.concat([earlier, result.curve], ignore_index=True)


def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    result = train(config, out, resume_from=args.resume)
    csv_io.write_csv(out / "learning_curve.csv", _merged_curve(out, result), csv_io.CURVE_COLUMNS)

    example = sample_task(config, seeded_rng(config.seed + 1))
    _, diagnostics = result.model.forward_sequence(example.inputs, example.target_len)
    csv_io.write_csv(out / "diagnostics.csv", diagnostics.weight_frame(), csv_io.DIAGNOSTICS_COLUMNS)

    reference = REFERENCE_PARAMETER_COUNTS.get(args.preset or _preset_key(config))
    write_final_report(out / "final_report.json", result, config, reference)
    ref_text = f" reference={reference}" if reference else ""
    print(f"[REPORT] {config.model.kind} {config.model.notation} params={result.model.parameter_count}{ref_text}")
    print(f"[REPORT] iterations={result.iterations} final_bce={result.final_bce:.5f} "
          f"best_bit_error={result.best_bit_error:.4f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model, _, _, _ = model_from_checkpoint(args.checkpoint)
    config = TrainConfig(task=args.task, model=model.config)
    table = evaluate_generalization(model, config, parse_range(args.sweep), args.samples, args.seed)
    csv_io.write_csv(args.out, table, csv_io.SWEEP_COLUMNS)
    for row in table.itertuples(index=False):
        print(f"[REPORT] {row.sweep_value} bce={row.mean_bce:.5f} bit_error={row.bit_error:.4f}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    train_cfg = load_train_config(args.config, None if args.config else args.preset)
    threshold = args.threshold if args.threshold is not None else (1e-5 if args.steps == 1 else 1e-4)
    try:
        cfg = GradCheckConfig(train=train_cfg, steps=args.steps, coords=args.coords, eps=args.eps,
                              threshold=threshold, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(f"invalid gradcheck options: {exc}") from exc
    rng = seeded_rng(cfg.seed)
    model = build_model(cfg.train.model, rng)
    sample = sample_task(cfg.train, rng, length=cfg.steps)

    def builder(tape, refs):
        return model.sequence_loss(tape, refs, sample)

    err = grad_check(builder, model.params, eps=cfg.eps, n_coords=cfg.coords, rng=rng)
    passed = err <= cfg.threshold
    print(f"[REPORT] gradcheck {cfg.train.model.kind} steps={cfg.steps} coords={cfg.coords} "
          f"max_rel_err={err:.3e} threshold={cfg.threshold:.1e} {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_plot(args: argparse.Namespace) -> int:
    if not args.learning_curves and args.diagnostics is None:
        raise ConfigError("nothing to plot: pass --learning-curves and/or --diagnostics")
    if args.learning_curves:
        groups: Dict[str, List[pd.DataFrame]] = {}
        for run_dir in args.learning_curves:
            label = run_dir.parent.name or run_dir.name
            groups.setdefault(label, []).append(csv_io.load_learning_curve(run_dir / "learning_curve.csv"))
        curves = {label: aggregate_curves(frames) for label, frames in groups.items()}
        target = args.out if args.diagnostics is None else args.out.with_name(args.out.stem + "_curves.svg")
        plot_learning_curves(curves, target)
        print(f"[REPORT] learning curves: {', '.join(f'{k}={len(v)}' for k, v in groups.items())} -> {target}")
    if args.diagnostics is not None:
        target = args.out if not args.learning_curves else args.out.with_name(args.out.stem + "_weights.svg")
        plot_weight_heatmaps(csv_io.load_diagnostics(args.diagnostics), target)
        print(f"[REPORT] weight heatmaps -> {target}")
    return EXIT_OK


COMMANDS = {
    "fmc": cmd_fmc,
    "capacity-sweep": cmd_capacity_sweep,
    "mem-fmc": cmd_mem_fmc,
    "bounds": cmd_bounds,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "plot": cmd_plot,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point used by ``python -m matcap.cli`` and the ``matcap`` script."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = "INFO" if args.verbose and args.log_level == "WARNING" else args.log_level
    logging.basicConfig(level=getattr(logging, level), format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MatcapError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except np.linalg.LinAlgError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
