"""Command-line entry point: ``kinepipe {synth,run,compare,bench}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .bench import comparison_key_values, format_report, report_key_values, run_benchmark
from .errors import ConfigError, KinepipeError
from .kinematics import default_model, load_model
from .metrics import consistency_key_values, consistency_report, format_consistency, smoothness
from .pipeline import run_pipeline


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _model(args):
    if getattr(args, "model", None):
        path = Path(args.model)
        if not path.is_file():
            raise ConfigError(f"model file not found: {path}")
        return load_model(path.read_text("utf-8"))
    return default_model()


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    kv = io.read_key_values(args.config) if args.config else {}
    for key in ("seed", "frames", "amplitude", "frequency", "noise_sigma", "per_frame_inference_ms", "name"):
        value = getattr(args, key)
        if value is not None:
            kv[key] = str(value)
    kv.setdefault("seed", "0")
    if "frames" not in kv:
        raise ConfigError("number of frames not given (--frames or frames= in config)")
    desc = io.parse_sequence_descriptor(kv, args.config or "arguments")
    model = _model(args)
    seq = io.sequence_from_descriptor(desc, model)
    out = _out_dir(args.out)
    io.write_key_values(out / f"{seq.name}.seq", desc)
    io.write_trajectory_csv(out / f"{seq.name}_truth.csv", seq.ground_truth)
    if seq.n_frames >= 4:
        sm = smoothness(seq.ground_truth)
        print(f"{seq.name}: {seq.n_frames} frames, mean |qdot| {sm.mean_abs_qdot_rad_per_frame:.4f} rad/f")
    else:
        print(f"{seq.name}: {seq.n_frames} frames")
    return 0


def cmd_run(args) -> int:
    kv = io.read_key_values(args.config) if args.config else {}
    if args.mode:
        kv["mode"] = args.mode
    seq_kv = io.read_key_values(args.sequence)
    desc = io.parse_sequence_descriptor(seq_kv, args.sequence)
    # latency hint from the sequence descriptor unless the pipeline config sets one
    if "per_frame_inference_ms" not in kv and int(desc["per_frame_inference_ms"]) > 0:
        kv["per_frame_inference_ms"] = str(desc["per_frame_inference_ms"])
    config = io.parse_pipeline_config(kv, args.config or "arguments")
    model = _model(args)
    seq = io.sequence_from_descriptor(desc, model)
    out = _out_dir(args.out)
    if config.mode == "baseline" and config.intermediate_dir is None:
        config = config.with_(intermediate_dir=out / "intermediates")
    record = run_pipeline(seq, config, model)
    stem = f"{seq.name}_{config.mode}"
    fit = record.fit_result
    io.write_trajectory_csv(out / f"{stem}_trajectory.csv", fit.trajectory)
    io.write_positions_csv(out / f"{stem}_positions.csv", fit.joint_positions, fit.site_positions)
    io.write_key_values(out / f"{stem}_record.txt", {
        "mode": record.mode,
        "frames": record.n_frames,
        "workers": record.workers,
        "batches": record.n_batches,
        "init_latency_s": f"{record.init_latency_s:.6f}",
        "detect_s": f"{record.detect_s:.6f}",
        "estimate_s": f"{record.estimate_s:.6f}",
        "fit_s": f"{record.fit_s:.6f}",
        "serialize_s": f"{record.serialize_s:.6f}",
        "total_video_s": f"{record.total_video_s:.6f}",
        "fps": f"{record.fps:.6f}",
        "intermediates_written": record.intermediates_written,
        "max_boundary_jump_deg": f"{record.max_boundary_jump_deg:.6f}",
        "mean_residual_mm": f"{fit.per_frame_residual_mm.mean():.6f}",
    })
    print(f"{stem}: {record.n_frames} frames in {record.total_video_s:.3f} s "
          f"({record.fps:.3f} fps), init {record.init_latency_s:.3f} s, "
          f"{record.intermediates_written} intermediate archives")
    return 0


def cmd_compare(args) -> int:
    model = _model(args)
    kinds = model.dof_kinds
    A = io.read_trajectory_csv(args.traj_a, kinds)
    B = io.read_trajectory_csv(args.traj_b, kinds)
    if A.values.shape != B.values.shape:
        raise ConfigError(f"trajectory shapes differ: {args.traj_a} is {A.values.shape}, "
                          f"{args.traj_b} is {B.values.shape}")
    pos_a = io.read_positions_csv(args.pos_a)
    pos_b = io.read_positions_csv(args.pos_b)
    for label, pa, pb in (("joint", pos_a[0], pos_b[0]), ("site", pos_a[1], pos_b[1])):
        if pa.shape != pb.shape:
            raise ConfigError(f"{label} position shapes differ: {args.pos_a} is {pa.shape}, "
                              f"{args.pos_b} is {pb.shape}")
    name = args.name or Path(args.traj_a).stem
    report = consistency_report([(name, A, B, pos_a, pos_b)])
    text = format_consistency(report)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text + io.format_key_values(consistency_key_values(report)), encoding="utf-8")
    if args.plot_data:
        io.write_plot_data_csv(args.plot_data, model.dof_names, A, B, name)
    return 0


def cmd_bench(args) -> int:
    config_a = io.load_pipeline_config(args.config_a)
    config_b = io.load_pipeline_config(args.config_b)
    model = _model(args)
    sequences = [io.load_sequence(p, model) for p in args.sequences]
    rep_a, rep_b, comp = run_benchmark(sequences, config_a, config_b, args.trials,
                                       warmup=not args.no_warmup, model=model,
                                       labels=(Path(args.config_a).stem, Path(args.config_b).stem))
    text = format_report(rep_a) + "\n" + format_report(rep_b, comp)
    sys.stdout.write(text)
    if args.report_out:
        kv = {**report_key_values(rep_a, "a"), **report_key_values(rep_b, "b"), **comparison_key_values(comp)}
        out = Path(args.report_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        io.write_key_values(out.with_suffix(out.suffix + ".kv"), kv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinepipe", description=__doc__)
    parser.add_argument("--model", help="model description file (default: bundled 40-DOF humanoid)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sequence descriptor and ground truth")
    p.add_argument("--config", help="key=value sequence config")
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=_positive_int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--frequency", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--per-frame-inference-ms", dest="per_frame_inference_ms", type=int)
    p.add_argument("--name")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run the pipeline on one sequence")
    p.add_argument("--sequence", required=True, help="sequence descriptor (.seq)")
    p.add_argument("--config", help="key=value pipeline config")
    p.add_argument("--mode", choices=("baseline", "optimized"))
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="kinematic consistency between two runs")
    p.add_argument("--traj-a", required=True)
    p.add_argument("--traj-b", required=True)
    p.add_argument("--pos-a", required=True)
    p.add_argument("--pos-b", required=True)
    p.add_argument("--name", help="sequence label in the report")
    p.add_argument("--out", help="write table plus key=value block here")
    p.add_argument("--plot-data", help="write trajectory overlay CSV here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="multi-trial benchmark of two pipeline configs")
    p.add_argument("--config-a", required=True, help="reference pipeline config")
    p.add_argument("--config-b", required=True, help="candidate pipeline config")
    p.add_argument("--sequences", required=True, nargs="+", help="sequence descriptors")
    p.add_argument("--trials", type=_positive_int, default=2)
    p.add_argument("--report-out", help="write the text table here and key=value next to it")
    p.add_argument("--no-warmup", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KinepipeError, OSError, ValueError) as exc:
        print(f"kinepipe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
