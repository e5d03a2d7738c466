"""Command-line front door.

Subcommands:
  analyze    manifest -> divergence report JSON (+ optional trajectory CSVs)
  evaluate   report + target accuracy curve -> gap-closure summary JSON
  moments    one snapshot -> per-layer moment table on stdout
  synth      generate fixture runs (planted scenarios, toy training runs)

Exit codes: 0 success, 2 invalid input, 1 internal failure. All file
outputs are written atomically, so re-running a command on unchanged
inputs reproduces outputs byte for byte.

ABE_THREADS caps trajectory-building parallelism (0 = auto);
ABE_NUMBA=0 selects the pure-numpy kernels.
"""

import argparse
import sys
from pathlib import Path

from .curves import MAXIMIZE, MINIMIZE, evaluate, load_curve_csv, stop_at_extremum
from .divergence import report_from_json, stopping_time
from .errors import EngineError
from .moments import MOMENT_NAMES, moments_of_array
from .snapshots import SOURCE_VALID, TARGET, atomic_write_text, load_run, read_snapshot
from .synth import ScenarioSpec, ToyTrainSpec, emit_scenario, toy_train
from .trajectory import build_trajectory, save_trajectory_csv

_KINDS = {"max": MAXIMIZE, "min": MINIMIZE}


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="detect trajectory divergence and the stopping time")
    p.add_argument("--manifest", required=True, help="run manifest JSON")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--valid-curve", help="validation curve CSV; its extremum sets t_valid_star")
    group.add_argument("--t-valid", type=int, help="explicit t_valid_star checkpoint")
    p.add_argument("--curve-kind", choices=("max", "min"), default="max",
                   help="extremum kind for --valid-curve (default: max)")
    p.add_argument("--interval-unit", choices=("rank", "raw"), default="rank",
                   help="window length measured in checkpoint ranks or raw indices")
    p.add_argument("--out", help="write the report JSON here (default: stdout)")
    p.add_argument("--emit-trajectories", action="store_true",
                   help="also write per-population trajectory CSVs next to --out")
    p.set_defaults(func=_cmd_analyze)


def _cmd_analyze(args) -> int:
    if args.emit_trajectories and not args.out:
        raise EngineError("--emit-trajectories requires --out")
    run = load_run(args.manifest)
    if args.t_valid is not None:
        t_valid_star = args.t_valid
    else:
        curve = load_curve_csv(args.valid_curve, kind=_KINDS[args.curve_kind])
        t_valid_star = stop_at_extremum(curve)
    target_traj = build_trajectory(run, TARGET)
    source_traj = build_trajectory(run, SOURCE_VALID)
    report = stopping_time(
        target_traj, source_traj, t_valid_star, interval_unit=args.interval_unit
    )
    if args.out:
        atomic_write_text(args.out, report.to_json())
        if args.emit_trajectories:
            stem = Path(args.out)
            for traj in (source_traj, target_traj):
                save_trajectory_csv(
                    traj,
                    stem.with_name(f"{stem.stem}_trajectory_{traj.population_tag}.csv"),
                )
    else:
        sys.stdout.write(report.to_json())
    return 0


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="score a report against a target accuracy curve")
    p.add_argument("--report", required=True, help="divergence report JSON")
    p.add_argument("--target-curve", required=True, help="target curve CSV")
    p.add_argument("--curve-kind", choices=("max", "min"), default="max")
    p.add_argument("--out", help="write the summary JSON here (default: stdout)")
    p.set_defaults(func=_cmd_evaluate)


def _cmd_evaluate(args) -> int:
    try:
        text = Path(args.report).read_text("utf-8")
    except FileNotFoundError:
        raise EngineError(f"report file not found: {args.report}") from None
    report = report_from_json(text)
    curve = load_curve_csv(args.target_curve, kind=_KINDS[args.curve_kind])
    summary = evaluate(report, curve)
    if args.out:
        atomic_write_text(args.out, summary.to_json())
    else:
        sys.stdout.write(summary.to_json())
    return 0


def _add_moments(sub):
    p = sub.add_parser("moments", help="print per-layer aggregated moments of one snapshot")
    p.add_argument("--snapshot", required=True, help="ASNAP file")
    p.set_defaults(func=_cmd_moments)


def _cmd_moments(args) -> int:
    snapshot = read_snapshot(args.snapshot)
    sys.stdout.write("layer," + ",".join(MOMENT_NAMES) + "\n")
    for layer in snapshot.layers:
        m = moments_of_array(layer.values).as_tuple()
        cells = ",".join(f"{v:.17g}" for v in m)
        sys.stdout.write(f"{layer.layer_id},{cells}\n")
    return 0


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate fixture runs")
    synth_sub = p.add_subparsers(dest="synth_command", required=True)

    s = synth_sub.add_parser("scenario", help="planted-divergence trajectory run")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--layers", type=int, required=True)
    s.add_argument("--checkpoints", type=int, required=True)
    s.add_argument("--planted-layer", type=int, default=None)
    s.add_argument("--planted-moment", type=int, default=None, choices=(1, 2, 3, 4))
    s.add_argument("--breakpoint", type=int, default=None)
    s.add_argument("--noise-sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_synth_scenario)

    t = synth_sub.add_parser("toytrain", help="train the toy model and record a run")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--input-dim", type=int, default=8)
    t.add_argument("--hidden-dims", default="16,16",
                   help="comma-separated hidden layer widths")
    t.add_argument("--n-classes", type=int, default=4)
    t.add_argument("--shift", type=float, default=4.0,
                   help="target blob translation in blob-deviation units")
    t.add_argument("--epochs", type=int, default=48)
    t.add_argument("--learning-rate", type=float, default=0.2)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--n-target", type=int, default=5,
                   help="unlabelled target examples recorded for the engine")
    t.set_defaults(func=_cmd_synth_toytrain)


def _cmd_synth_scenario(args) -> int:
    spec = ScenarioSpec(
        layers=args.layers,
        checkpoints=args.checkpoints,
        planted_layer=args.planted_layer,
        planted_moment=args.planted_moment,
        breakpoint=args.breakpoint,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    truth = emit_scenario(spec, args.out)
    sys.stdout.write(
        f"wrote scenario run to {args.out} "
        f"(planted: layer={truth['planted_layer']} moment={truth['planted_moment']} "
        f"breakpoint={truth['breakpoint']})\n"
    )
    return 0


def _cmd_synth_toytrain(args) -> int:
    try:
        hidden = tuple(int(h) for h in args.hidden_dims.split(",") if h.strip())
    except ValueError:
        raise EngineError(f"--hidden-dims must be comma-separated integers, got {args.hidden_dims!r}") from None
    spec = ToyTrainSpec(
        seed=args.seed,
        input_dim=args.input_dim,
        hidden_dims=hidden,
        n_classes=args.n_classes,
        shift=args.shift,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        n_target_unlabelled=args.n_target,
    )
    run, _, _ = toy_train(spec, args.out)
    sys.stdout.write(
        f"wrote toy run {run.manifest.run_id!r} to {args.out} "
        f"({len(run.checkpoints)} checkpoints, {run.n_layers} layers)\n"
    )
    return 0


_FORMATS = """\
file formats:
  snapshot (.asnap)  little-endian binary: magic "ABES", version u32=1,
                     checkpoint u64, population u8 (0=source_valid 1=target
                     2=other), layer count u32; per layer: id u32,
                     n_examples u32, n_features u32, float32 row-major payload
  manifest (.json)   run_id, checkpoints[], layers[{id,features}],
                     populations[{tag,files[{checkpoint,path}]}], meta{}
  curves (.csv)      header "checkpoint,value", one row per checkpoint
  report (.json)     critical_layer, critical_moment (m1..m4), t_hat,
                     t_valid_star, diverged, best_score, scores[]
  summary (.json)    acc_at_abe, acc_at_baseline, acc_optimal, gap_closure,
                     t_hat, t_valid_star, t_star, baseline_optimal

environment:
  ABE_THREADS        caps trajectory-build parallelism (0 = auto)
  ABE_NUMBA=0        selects the pure-numpy kernels
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abe",
        description="Early stopping from activation-trajectory divergence.",
        epilog=_FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_analyze(sub)
    _add_evaluate(sub)
    _add_moments(sub)
    _add_synth(sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except BrokenPipeError:
        return 1
    except Exception as e:  # internal failure: report, never a bare traceback
        sys.stderr.write(f"internal error: {type(e).__name__}: {e}\n")
        return 1


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
