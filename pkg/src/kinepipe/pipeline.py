"""End-to-end orchestration in baseline or optimized mode.

Baseline: monolithic stage init, every frame detected, detections written
to a KIA1 archive and re-read, keypoints estimated, written and re-read,
then one serial fit of the whole sequence. Single-threaded.

Optimized: modular stage init, the sequence split into ``sample_length``
batches, each batch detected, estimated and fitted in memory by a worker
pool, results reassembled in frame order. Batches are fitted independently
(no warm start across a boundary).
"""
from __future__ import annotations

import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Literal, Mapping

import numpy as np

from .archive import read_intermediate, write_intermediate
from .errors import ConfigError, KinepipeError, PipelineError
from .fitting import FitResult, SolverConfig, fit_sequence
from .kinematics import KinematicModel, wrap_angle
from .stages import (
    BoundingBox,
    NoiseModel,
    PoseEstimator,
    StageHandles,
    StageInitProfile,
    SyntheticSequence,
    init_stages,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "KINEPIPE_WORKERS"
DEFAULT_FETCH_MS = 2000


@dataclass(frozen=True)
class PipelineConfig:
    mode: Literal["baseline", "optimized"] = "optimized"
    sample_length: int = 10
    workers: int = 4
    intermediate_dir: Path | None = None
    solver: SolverConfig = field(default_factory=SolverConfig.optimized)
    stage_profile: StageInitProfile = field(default_factory=StageInitProfile)
    noise: NoiseModel | None = None
    source_tag: str = "reference"

    def __post_init__(self):
        if self.mode not in ("baseline", "optimized"):
            raise ConfigError(f"unknown pipeline mode {self.mode!r} (expected baseline or optimized)")
        if int(self.sample_length) != self.sample_length or self.sample_length < 1:
            raise ConfigError(f"sample_length must be a positive integer, got {self.sample_length!r}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        if self.intermediate_dir is not None:
            object.__setattr__(self, "intermediate_dir", Path(self.intermediate_dir))

    @classmethod
    def baseline(cls, **overrides) -> "PipelineConfig":
        defaults = dict(
            mode="baseline",
            workers=1,
            solver=SolverConfig.baseline(),
            stage_profile=StageInitProfile("monolithic", simulated_fetch_ms=DEFAULT_FETCH_MS),
        )
        return cls(**{**defaults, **overrides})

    @classmethod
    def optimized(cls, **overrides) -> "PipelineConfig":
        defaults = dict(mode="optimized", solver=SolverConfig.optimized(),
                        stage_profile=StageInitProfile("modular"))
        return cls(**{**defaults, **overrides})

    @property
    def effective_workers(self) -> int:
        """Worker count actually used; baseline is always 1, env overrides optimized."""
        if self.mode == "baseline":
            return 1
        raw = os.environ.get(WORKERS_ENV)
        if raw is None or raw.strip() == "":
            return self.workers
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {n}")
        return n

    def with_(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)


class ArchiveIO:
    """Intermediate archive I/O; counts operations so tests can audit them."""

    def __init__(self):
        self.writes: list[Path] = []
        self.reads: list[Path] = []

    def write(self, path: Path, arrays: Mapping[str, np.ndarray]) -> None:
        write_intermediate(path, arrays)
        self.writes.append(Path(path))

    def read(self, path: Path) -> dict[str, np.ndarray]:
        out = read_intermediate(path)
        self.reads.append(Path(path))
        return out


@dataclass(frozen=True, eq=False)
class PipelineRunRecord:
    mode: str
    n_frames: int
    init_latency_s: float
    detect_s: float
    estimate_s: float
    fit_s: float
    serialize_s: float
    total_video_s: float
    fit_result: FitResult
    intermediates_written: int
    workers: int = 1
    n_batches: int = 1
    max_boundary_jump_deg: float = 0.0

    @property
    def fps(self) -> float:
        return self.n_frames / self.total_video_s

    @property
    def per_stage_wall_s(self) -> dict[str, float]:
        return {"detect": self.detect_s, "estimate": self.estimate_s, "fit": self.fit_s}


def split_batches(n_frames: int, sample_length: int) -> list[range]:
    """Consecutive half-open frame ranges of ``sample_length`` (last may be short)."""
    if n_frames < 1 or sample_length < 1:
        raise ValueError(f"need n_frames >= 1 and sample_length >= 1, got {n_frames}, {sample_length}")
    return [range(s, min(s + sample_length, n_frames)) for s in range(0, n_frames, sample_length)]


@dataclass(frozen=True, eq=False)
class AssembledFit:
    fit: FitResult
    max_boundary_jump_deg: float
    boundary_jumps_deg: np.ndarray  # (n_boundaries, nq); revolute DOFs in degrees, others in meters


def assemble_batches(batch_results: Mapping[range, FitResult] | Iterable[tuple[range, FitResult]],
                     ranges: list[range]) -> AssembledFit:
    """Concatenate per-batch fits in frame order.

    The boundary diagnostic is the coordinate jump between the last frame of
    batch k and the first frame of batch k+1; its maximum over revolute DOFs
    is reported in degrees.
    """
    by_range = dict(batch_results.items() if isinstance(batch_results, Mapping) else batch_results)
    missing = [r for r in ranges if r not in by_range]
    if missing:
        raise PipelineError(f"missing results for frame ranges {[(r.start, r.stop) for r in missing]}")
    parts = [by_range[r] for r in ranges]
    for r, part in zip(ranges, parts):
        if part.n_frames != len(r):
            raise PipelineError(f"batch {r.start}:{r.stop} has {part.n_frames} frames, expected {len(r)}")
    first = parts[0].trajectory
    values = np.concatenate([p.trajectory.values for p in parts])
    fit = FitResult(
        type(first)(values, first.dof_kinds),
        np.concatenate([p.joint_positions for p in parts]),
        np.concatenate([p.site_positions for p in parts]),
        np.concatenate([p.per_frame_residual_mm for p in parts]),
        np.concatenate([p.iterations_used for p in parts]),
    )
    rev = first.revolute_mask
    jumps = []
    for a, b in zip(parts[:-1], parts[1:]):
        d = b.trajectory.values[0] - a.trajectory.values[-1]
        d = np.where(rev, np.degrees(np.abs(wrap_angle(d))), np.abs(d))
        jumps.append(d)
    jumps_arr = np.array(jumps).reshape(-1, values.shape[1])
    worst = float(jumps_arr[:, rev].max()) if jumps_arr.size and rev.any() else 0.0
    return AssembledFit(fit, worst, jumps_arr)


def _bbox_arrays(boxes: list[BoundingBox]) -> dict[str, np.ndarray]:
    return {
        "bbox_frame": np.array([b.frame_index for b in boxes], dtype=np.uint32),
        "bbox_xywh": np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=np.float64).reshape(-1, 4),
        "bbox_score": np.array([b.score for b in boxes], dtype=np.float64),
    }


def _boxes_from_arrays(arrays: Mapping[str, np.ndarray]) -> list[BoundingBox]:
    return [BoundingBox(int(f), *map(float, xywh), float(s))
            for f, xywh, s in zip(arrays["bbox_frame"], arrays["bbox_xywh"], arrays["bbox_score"])]


class Pipeline:
    """Stages initialized once, then run over any number of sequences."""

    def __init__(self, config: PipelineConfig, model: KinematicModel | None = None,
                 io: ArchiveIO | None = None):
        self.config = config
        self.model = model
        self.io = io or ArchiveIO()
        self.handles: StageHandles | None = None
        self.init_latency_s = 0.0

    def initialize(self) -> float:
        start = time.perf_counter()
        expected = "monolithic" if self.config.mode == "baseline" else "modular"
        if self.config.stage_profile.mode != expected:
            log.debug("%s mode running with %s stage init", self.config.mode,
                      self.config.stage_profile.mode)
        self.handles = init_stages(self.config.stage_profile, self.config.noise or NoiseModel(),
                                   self.config.source_tag)
        self.init_latency_s = time.perf_counter() - start
        return self.init_latency_s

    def _estimator(self, sequence: SyntheticSequence) -> PoseEstimator:
        assert self.handles is not None
        est = self.handles.estimator
        noise = self.config.noise or sequence.noise
        return PoseEstimator(noise, est.source_tag, est.per_frame_inference_ms, _ready=True)

    def run(self, sequence: SyntheticSequence) -> PipelineRunRecord:
        if self.handles is None:
            self.initialize()
        if sequence.n_frames < 1:
            raise PipelineError("sequence has no frames")
        model = self.model or sequence.model
        if self.config.mode == "baseline":
            return self._run_baseline(sequence, model)
        return self._run_optimized(sequence, model)

    def _detect(self, frames) -> list[BoundingBox]:
        boxes = []
        for frame in frames:
            found = self.handles.detector.detect(frame)
            if not found:
                raise PipelineError(f"no subject detected in frame {frame.index}")
            boxes.append(found[0])
        return boxes

    def _run_baseline(self, sequence: SyntheticSequence, model: KinematicModel) -> PipelineRunRecord:
        cfg = self.config
        estimator = self._estimator(sequence)
        n_written = len(self.io.writes)
        with tempfile.TemporaryDirectory(prefix="kinepipe-") as tmp:
            out_dir = cfg.intermediate_dir or Path(tmp)
            out_dir.mkdir(parents=True, exist_ok=True)
            det_path = out_dir / f"{sequence.name}_detections.kia"
            kp_path = out_dir / f"{sequence.name}_keypoints.kia"
            t0 = time.perf_counter()
            boxes = self._detect(sequence.frames)
            t1 = time.perf_counter()
            try:
                self.io.write(det_path, _bbox_arrays(boxes))
                boxes = _boxes_from_arrays(self.io.read(det_path))
            except OSError as exc:
                raise PipelineError(f"intermediate I/O failed: {exc}") from exc
            t2 = time.perf_counter()
            kps, confs = [], []
            for frame, box in zip(sequence.frames, boxes):
                kp, conf = estimator.estimate_pose(frame, box)
                kps.append(kp)
                confs.append(conf)
            t3 = time.perf_counter()
            try:
                self.io.write(kp_path, {"keypoints3d": np.stack(kps), "confidences": np.stack(confs)})
                keypoints = self.io.read(kp_path)["keypoints3d"]
            except OSError as exc:
                raise PipelineError(f"intermediate I/O failed: {exc}") from exc
            t4 = time.perf_counter()
            fit = fit_sequence(model, keypoints, cfg.solver)
            t5 = time.perf_counter()
        return PipelineRunRecord(
            mode="baseline",
            n_frames=sequence.n_frames,
            init_latency_s=self.init_latency_s,
            detect_s=t1 - t0,
            estimate_s=t3 - t2,
            fit_s=t5 - t4,
            serialize_s=(t2 - t1) + (t4 - t3),
            total_video_s=t5 - t0,
            fit_result=fit,
            intermediates_written=len(self.io.writes) - n_written,
        )

    def _run_optimized(self, sequence: SyntheticSequence, model: KinematicModel) -> PipelineRunRecord:
        cfg = self.config
        estimator = self._estimator(sequence)
        detector = self.handles.detector
        ranges = split_batches(sequence.n_frames, cfg.sample_length)
        workers = cfg.effective_workers
        n_written = len(self.io.writes)

        def work(batch: range):
            frames = sequence.frames[batch.start:batch.stop]
            t0 = time.perf_counter()
            boxes = self._detect(frames)
            t1 = time.perf_counter()
            kp = np.stack([estimator.estimate_pose(f, b)[0] for f, b in zip(frames, boxes)])
            t2 = time.perf_counter()
            fit = fit_sequence(model, kp, cfg.solver)
            t3 = time.perf_counter()
            return fit, (t1 - t0, t2 - t1, t3 - t2)

        start = time.perf_counter()
        results: dict[range, FitResult] = {}
        busy = np.zeros(3)
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="kinepipe") as pool:
            futures = [(i, r, pool.submit(work, r)) for i, r in enumerate(ranges)]
            for i, r, fut in futures:
                try:
                    fit, times = fut.result()
                except KinepipeError as exc:
                    raise PipelineError(str(exc), batch_index=i) from exc
                except Exception as exc:
                    raise PipelineError(f"worker failed: {exc!r}", batch_index=i) from exc
                results[r] = fit
                busy += times
        assembled = assemble_batches(results, ranges)
        total = time.perf_counter() - start
        # per-stage busy time averaged over the lanes that actually ran
        lanes = min(workers, len(ranges))
        detect_s, estimate_s, fit_s = busy / lanes
        return PipelineRunRecord(
            mode="optimized",
            n_frames=sequence.n_frames,
            init_latency_s=self.init_latency_s,
            detect_s=float(detect_s),
            estimate_s=float(estimate_s),
            fit_s=float(fit_s),
            serialize_s=0.0,
            total_video_s=total,
            fit_result=assembled.fit,
            intermediates_written=len(self.io.writes) - n_written,
            workers=workers,
            n_batches=len(ranges),
            max_boundary_jump_deg=assembled.max_boundary_jump_deg,
        )


def run_pipeline(sequence: SyntheticSequence, config: PipelineConfig,
                 model: KinematicModel | None = None, io: ArchiveIO | None = None) -> PipelineRunRecord:
    """Initialize stages for ``config`` and process one sequence."""
    pipe = Pipeline(config, model, io)
    pipe.initialize()
    return pipe.run(sequence)
