"""Multi-trial benchmark of two pipeline configurations.

Each configuration gets one untimed warm-up run, then ``trials`` timed
trials. A trial initializes the stages once (timed as init latency) and
processes every sequence. Reported values are arithmetic means over trials.
Only one pipeline runs at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KinepipeError, PipelineError
from .kinematics import KinematicModel
from .pipeline import ArchiveIO, Pipeline, PipelineConfig
from .stages import SyntheticSequence


@dataclass(frozen=True)
class TrialResult:
    trial: int
    init_latency_s: float
    sequence_s: tuple[float, ...]


@dataclass(frozen=True)
class BenchmarkReport:
    label: str
    sequence_names: tuple[str, ...]
    sequence_frames: tuple[int, ...]
    trials: tuple[TrialResult, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.trials:
            raise ValueError("a benchmark report needs at least one trial")

    @property
    def mean_init_s(self) -> float:
        return float(np.mean([t.init_latency_s for t in self.trials]))

    @property
    def per_sequence_mean_s(self) -> np.ndarray:
        return np.mean([t.sequence_s for t in self.trials], axis=0)

    @property
    def mean_video_s(self) -> float:
        return float(np.mean(self.per_sequence_mean_s))

    @property
    def total_s(self) -> float:
        return float(np.sum(self.per_sequence_mean_s))

    @property
    def total_frames(self) -> int:
        return int(sum(self.sequence_frames))

    @property
    def fps(self) -> float:
        return self.total_frames / self.total_s

    def trial_fps(self, trial: TrialResult) -> float:
        return self.total_frames / float(np.sum(trial.sequence_s))


@dataclass(frozen=True)
class Comparison:
    reference: str
    candidate: str
    init_factor: float
    throughput_factor: float
    total_change_percent: float
    fps_change_percent: float


def compare(reference: BenchmarkReport, candidate: BenchmarkReport) -> Comparison:
    """Speedups of ``candidate`` over ``reference`` (factors > 1 mean faster)."""
    if (reference.sequence_names, reference.sequence_frames) != (candidate.sequence_names,
                                                                candidate.sequence_frames):
        raise ValueError("reports cover different sequence sets; refusing to compare")
    init = reference.mean_init_s / candidate.mean_init_s if candidate.mean_init_s > 0 else float("inf")
    return Comparison(
        reference.label,
        candidate.label,
        init,
        reference.mean_video_s / candidate.mean_video_s,
        100.0 * (candidate.total_s - reference.total_s) / reference.total_s,
        100.0 * (candidate.fps - reference.fps) / reference.fps,
    )


def _run_trials(label: str, sequences, config: PipelineConfig, trials: int, warmup: bool,
                model: KinematicModel | None) -> BenchmarkReport:
    if warmup:
        pipe = Pipeline(config, model, ArchiveIO())
        pipe.initialize()
        pipe.run(sequences[0])
    results = []
    for trial in range(1, trials + 1):
        pipe = Pipeline(config, model, ArchiveIO())
        init_s = pipe.initialize()
        times = []
        for seq in sequences:
            try:
                times.append(pipe.run(seq).total_video_s)
            except KinepipeError as exc:
                raise PipelineError(f"{label} trial {trial}, sequence {seq.name}: {exc}") from exc
        results.append(TrialResult(trial, init_s, tuple(times)))
    return BenchmarkReport(label, tuple(s.name for s in sequences),
                           tuple(s.n_frames for s in sequences), tuple(results))


def run_benchmark(sequences: list[SyntheticSequence], config_a: PipelineConfig, config_b: PipelineConfig,
                  trials: int = 2, *, warmup: bool = True, model: KinematicModel | None = None,
                  labels: tuple[str, str] = ("A", "B")):
    """Time both configs over the same sequences; returns ``(report_a, report_b, comparison)``.

    The comparison treats ``config_a`` as the reference.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not sequences:
        raise ValueError("no sequences to benchmark")
    rep_a = _run_trials(labels[0], sequences, config_a, trials, warmup, model)
    rep_b = _run_trials(labels[1], sequences, config_b, trials, warmup, model)
    return rep_a, rep_b, compare(rep_a, rep_b)


def format_report(report: BenchmarkReport, comparison: Comparison | None = None) -> str:
    """Fixed-width table: one row per sequence, one column per trial, then a summary row."""
    name_w = max(16, *(len(n) + 2 for n in report.sequence_names))
    cols = [f"T{t.trial}" for t in report.trials]
    lines = [f"{report.label + ' sequence':<{name_w}}{'Fr.':>5}" + "".join(f"{c:>16}" for c in cols)]
    for i, (name, frames) in enumerate(zip(report.sequence_names, report.sequence_frames)):
        lines.append(f"{name:<{name_w}}{frames:>5}"
                     + "".join(f"{t.sequence_s[i]:>16.3f}" for t in report.trials))
    lines.append(f"{'FPS | init (s)':<{name_w}}{'':>5}"
                 + "".join(f"{report.trial_fps(t):>8.3f} |{t.init_latency_s:>6.2f}" for t in report.trials))
    if comparison is not None:
        lines.append(
            f"Improvement vs {comparison.reference}: init {comparison.init_factor:.2f}x / "
            f"video {comparison.throughput_factor:.2f}x / total {comparison.total_change_percent:+.1f}% / "
            f"fps {comparison.fps_change_percent:+.1f}%")
    return "\n".join(lines) + "\n"


def report_key_values(report: BenchmarkReport, prefix: str = "") -> dict[str, str]:
    p = f"{prefix}." if prefix else ""
    kv = {
        f"{p}label": report.label,
        f"{p}trials": str(len(report.trials)),
        f"{p}mean_init_s": f"{report.mean_init_s:.6f}",
        f"{p}mean_video_s": f"{report.mean_video_s:.6f}",
        f"{p}total_s": f"{report.total_s:.6f}",
        f"{p}fps": f"{report.fps:.6f}",
    }
    for t in report.trials:
        kv[f"{p}trial{t.trial}.init_latency_s"] = f"{t.init_latency_s:.6f}"
        for name, s in zip(report.sequence_names, t.sequence_s):
            kv[f"{p}trial{t.trial}.{name}.total_s"] = f"{s:.6f}"
    return kv


def comparison_key_values(c: Comparison) -> dict[str, str]:
    return {
        "comparison.reference": c.reference,
        "comparison.candidate": c.candidate,
        "comparison.init_factor": f"{c.init_factor:.6f}",
        "comparison.throughput_factor": f"{c.throughput_factor:.6f}",
        "comparison.total_change_percent": f"{c.total_change_percent:.6f}",
        "comparison.fps_change_percent": f"{c.fps_change_percent:.6f}",
    }
