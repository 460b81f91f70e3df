"""Text file formats: trajectories, positions, key=value configs and reports."""
from __future__ import annotations

import configparser
import csv
import os
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, DimensionError
from .fitting import SolverConfig
from .kinematics import CoordinateTrajectory, KinematicModel
from .pipeline import PipelineConfig
from .stages import (
    NOISE_PRESETS,
    GaitParameters,
    NoiseModel,
    StageInitProfile,
    SyntheticSequence,
    generate_synthetic_sequence,
)

_SECTION = "kinepipe"


# -- key=value ---------------------------------------------------------------

def read_key_values(path: str | os.PathLike) -> dict[str, str]:
    """Parse a ``key = value`` file (``#`` comments, no sections)."""
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(parser[_SECTION])


def write_key_values(path: str | os.PathLike, values: Mapping[str, object]) -> None:
    Path(path).write_text(format_key_values(values), encoding="utf-8")


def format_key_values(values: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def _get(kv: Mapping[str, str], key: str, cast, default=None, source=""):
    if key not in kv:
        if default is None:
            raise ConfigError(f"{source}: missing required key {key!r}")
        return default
    try:
        return cast(kv[key])
    except ValueError:
        raise ConfigError(f"{source}: bad value for {key!r}: {kv[key]!r}") from None


# -- synthetic sequence descriptor --------------------------------------------

SEQUENCE_KEYS = ("name", "seed", "frames", "amplitude", "frequency", "noise_sigma",
                 "rigid_offset_sigma", "per_frame_inference_ms")


def sequence_descriptor(seed: int, frames: int, amplitude: float = 1.0, frequency: float = 0.015,
                        noise_sigma: float = 0.02, rigid_offset_sigma: float = 0.0,
                        per_frame_inference_ms: int = 0, name: str | None = None) -> dict[str, object]:
    return {
        "name": name or f"seq_{seed}",
        "seed": seed,
        "frames": frames,
        "amplitude": amplitude,
        "frequency": frequency,
        "noise_sigma": noise_sigma,
        "rigid_offset_sigma": rigid_offset_sigma,
        "per_frame_inference_ms": per_frame_inference_ms,
    }


def parse_sequence_descriptor(kv: Mapping[str, str], source: str = "sequence") -> dict[str, object]:
    unknown = set(kv) - set(SEQUENCE_KEYS) - {"noise_preset"}
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    noise = NOISE_PRESETS["default"]
    if "noise_preset" in kv:
        if kv["noise_preset"] not in NOISE_PRESETS:
            raise ConfigError(f"{source}: unknown noise_preset {kv['noise_preset']!r}")
        noise = NOISE_PRESETS[kv["noise_preset"]]
    seed = _get(kv, "seed", int, source=source)
    desc = sequence_descriptor(
        seed=seed,
        frames=_get(kv, "frames", int, source=source),
        amplitude=_get(kv, "amplitude", float, 1.0, source),
        frequency=_get(kv, "frequency", float, 0.015, source),
        noise_sigma=_get(kv, "noise_sigma", float, noise.sigma, source),
        rigid_offset_sigma=_get(kv, "rigid_offset_sigma", float, noise.rigid_offset_sigma, source),
        per_frame_inference_ms=_get(kv, "per_frame_inference_ms", int, 0, source),
        name=kv.get("name") or None,
    )
    if desc["frames"] < 1:
        raise ConfigError(f"{source}: frames must be >= 1, got {desc['frames']}")
    return desc


def sequence_from_descriptor(desc: Mapping[str, object], model: KinematicModel | None = None) -> SyntheticSequence:
    return generate_synthetic_sequence(
        int(desc["seed"]), int(desc["frames"]),
        GaitParameters(float(desc["amplitude"]), float(desc["frequency"])),
        model,
        name=str(desc["name"]),
        noise=NoiseModel(float(desc["noise_sigma"]), float(desc["rigid_offset_sigma"])),
        per_frame_inference_ms=int(desc["per_frame_inference_ms"]),
    )


def load_sequence(path: str | os.PathLike, model: KinematicModel | None = None) -> SyntheticSequence:
    return sequence_from_descriptor(parse_sequence_descriptor(read_key_values(path), str(path)), model)


# -- pipeline config -----------------------------------------------------------

PIPELINE_KEYS = {
    "mode", "sample_length", "workers", "intermediate_dir", "max_iters", "step_tol", "damping",
    "temporal_weight", "stage_init", "simulated_fetch_ms", "per_frame_inference_ms",
    "noise_preset", "noise_sigma", "rigid_offset_sigma", "source_tag",
}


def parse_pipeline_config(kv: Mapping[str, str], source: str = "config") -> PipelineConfig:
    """Build a PipelineConfig; unspecified keys take the mode's defaults."""
    unknown = set(kv) - PIPELINE_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    mode = kv.get("mode", "optimized")
    if mode not in ("baseline", "optimized"):
        raise ConfigError(f"{source}: mode must be baseline or optimized, got {mode!r}")
    base = PipelineConfig.baseline() if mode == "baseline" else PipelineConfig.optimized()
    s = base.solver
    try:
        solver = SolverConfig(
            max_iters=_get(kv, "max_iters", int, s.max_iters, source),
            step_tol=_get(kv, "step_tol", float, s.step_tol, source),
            damping=_get(kv, "damping", float, s.damping, source),
            temporal_weight=_get(kv, "temporal_weight", float, s.temporal_weight, source),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    p = base.stage_profile
    profile = StageInitProfile(
        mode=kv.get("stage_init", p.mode),
        simulated_fetch_ms=_get(kv, "simulated_fetch_ms", int, p.simulated_fetch_ms, source),
        per_frame_inference_ms=_get(kv, "per_frame_inference_ms", int, p.per_frame_inference_ms, source),
    )
    noise = None
    if "noise_preset" in kv:
        if kv["noise_preset"] not in NOISE_PRESETS:
            raise ConfigError(f"{source}: unknown noise_preset {kv['noise_preset']!r}")
        noise = NOISE_PRESETS[kv["noise_preset"]]
    if "noise_sigma" in kv or "rigid_offset_sigma" in kv:
        ref = noise or NOISE_PRESETS["default"]
        noise = NoiseModel(_get(kv, "noise_sigma", float, ref.sigma, source),
                           _get(kv, "rigid_offset_sigma", float, ref.rigid_offset_sigma, source))
    return base.with_(
        sample_length=_get(kv, "sample_length", int, base.sample_length, source),
        workers=_get(kv, "workers", int, base.workers, source),
        intermediate_dir=Path(kv["intermediate_dir"]) if kv.get("intermediate_dir") else None,
        solver=solver,
        stage_profile=profile,
        noise=noise,
        source_tag=kv.get("source_tag", base.source_tag),
    )


def load_pipeline_config(path: str | os.PathLike) -> PipelineConfig:
    return parse_pipeline_config(read_key_values(path), str(path))


# -- trajectories and positions ------------------------------------------------

def write_trajectory_csv(path: str | os.PathLike, traj: CoordinateTrajectory) -> None:
    values = traj.values
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame"] + [f"dof_{k}" for k in range(values.shape[1])])
        for t, row in enumerate(values):
            w.writerow([t] + [repr(float(v)) for v in row])


def read_trajectory_csv(path: str | os.PathLike, dof_kinds) -> CoordinateTrajectory:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ConfigError(f"trajectory file not found: {path}") from None
    if not rows:
        raise DimensionError(f"{path}: empty trajectory file")
    header = rows[0]
    nq = len(header) - 1
    if header != ["frame"] + [f"dof_{k}" for k in range(nq)]:
        raise DimensionError(f"{path}: header must be frame,dof_0..dof_{{nq-1}}")
    try:
        values = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise DimensionError(f"{path}: {exc}") from None
    values = values.reshape(len(rows) - 1, nq)
    if len(dof_kinds) != nq:
        raise DimensionError(f"{path}: trajectory has {nq} DOFs, model has {len(dof_kinds)}")
    return CoordinateTrajectory(values, tuple(dof_kinds))


def write_positions_csv(path: str | os.PathLike, joints: np.ndarray, sites: np.ndarray) -> None:
    """Long-format positions: ``frame,kind,index,x,y,z`` in meters."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "kind", "index", "x", "y", "z"])
        for t in range(joints.shape[0]):
            for kind, arr in (("joint", joints[t]), ("site", sites[t])):
                for i, p in enumerate(arr):
                    w.writerow([t, kind, i] + [repr(float(v)) for v in p])


def read_positions_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except FileNotFoundError:
        raise ConfigError(f"positions file not found: {path}") from None
    if header != ["frame", "kind", "index", "x", "y", "z"]:
        raise DimensionError(f"{path}: header must be frame,kind,index,x,y,z")
    out = {}
    for kind in ("joint", "site"):
        sel = [r for r in rows if r[1] == kind]
        if not sel:
            out[kind] = np.zeros((0, 0, 3))
            continue
        frames = np.array([int(r[0]) for r in sel])
        idx = np.array([int(r[2]) for r in sel])
        arr = np.full((frames.max() + 1, idx.max() + 1, 3), np.nan)
        arr[frames, idx] = np.array([[float(x) for x in r[3:6]] for r in sel])
        if np.isnan(arr).any():
            raise DimensionError(f"{path}: incomplete {kind} positions")
        out[kind] = arr
    return out["joint"], out["site"]


def write_plot_data_csv(path: str | os.PathLike, dof_names, A: CoordinateTrajectory,
                        B: CoordinateTrajectory, sequence: str = "seq") -> None:
    """Overlay data for trajectory plots: one row per (frame, revolute DOF), degrees."""
    rev = A.revolute_mask
    names = [n for n, r in zip(dof_names, rev) if r]
    a = np.degrees(A.values[:, rev])
    b = np.degrees(B.values[:, rev])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence", "frame", "dof", "a_deg", "b_deg"])
        for t in range(a.shape[0]):
            for k, name in enumerate(names):
                w.writerow([sequence, t, name, f"{a[t, k]:.6f}", f"{b[t, k]:.6f}"])
