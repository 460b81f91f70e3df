"""Detector / pose-estimator stages and the synthetic data they run on.

The neural models of a real markerless pipeline are replaced by
ground-truth-plus-noise oracles with injected latency. Frames are opaque
records carrying the subject's true site positions; there is no image
decoding. Every stage output is a pure function of
``(seed, frame index, source tag, noise model)``.
"""
from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigError, StageError
from .kinematics import CoordinateTrajectory, KinematicModel, default_model, forward_kinematics

IMAGE_WIDTH = 1920
IMAGE_HEIGHT = 1080
BBOX_MARGIN = 0.10


@dataclass(frozen=True)
class Camera:
    """Pinhole camera on the -y side of the subject, looking along +y (z up)."""

    position: tuple[float, float, float] = (0.0, -6.0, 1.0)
    focal_px: float = 1400.0
    width: int = IMAGE_WIDTH
    height: int = IMAGE_HEIGHT

    def project(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64) - np.asarray(self.position)
        depth = p[:, 1]
        u = self.width / 2 + self.focal_px * p[:, 0] / depth
        v = self.height / 2 - self.focal_px * p[:, 2] / depth
        return np.stack([u, v], axis=1)


@dataclass(frozen=True)
class BoundingBox:
    frame_index: int
    x: float
    y: float
    w: float
    h: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"bounding box must have positive size, got w={self.w}, h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True, eq=False)
class Frame:
    """Opaque frame handle. ``sites`` is None for a frame without a subject."""

    index: int
    seed: int
    sites: np.ndarray | None
    camera: Camera = field(default_factory=Camera)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian keypoint noise plus an optional per-sequence rigid shift."""

    sigma: float = 0.02
    rigid_offset_sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.rigid_offset_sigma < 0:
            raise ConfigError("noise standard deviations must be >= 0")


NOISELESS = NoiseModel(0.0, 0.0)
DEFAULT_NOISE = NoiseModel(0.02, 0.0)
# Emulates two architectures whose 3D detections diverge strongly.
DIVERGENT_NOISE = NoiseModel(0.15, 0.005)
NOISE_PRESETS = {"none": NOISELESS, "default": DEFAULT_NOISE, "divergent": DIVERGENT_NOISE}


@dataclass(frozen=True)
class StageInitProfile:
    mode: Literal["monolithic", "modular"] = "modular"
    simulated_fetch_ms: int = 0
    per_frame_inference_ms: int = 0

    def __post_init__(self):
        if self.mode not in ("monolithic", "modular"):
            raise ConfigError(f"unknown stage init mode {self.mode!r}")
        if self.simulated_fetch_ms < 0 or self.per_frame_inference_ms < 0:
            raise ConfigError("simulated latencies must be >= 0")


def _tag_key(source_tag: str) -> int:
    return zlib.crc32(source_tag.encode("utf-8"))


def _sleep_ms(ms: int) -> None:
    if ms > 0:
        time.sleep(ms / 1000.0)


class Detector:
    """Bounding-box detector over the projected subject extent."""

    def __init__(self, per_frame_inference_ms: int = 0, *, _ready: bool = False):
        self.per_frame_inference_ms = per_frame_inference_ms
        self._ready = _ready

    def detect(self, frame: Frame) -> list[BoundingBox]:
        if not self._ready:
            raise StageError("detector used before init_stages()")
        _sleep_ms(self.per_frame_inference_ms)
        if frame.sites is None:
            return []
        cam = frame.camera
        uv = cam.project(frame.sites)
        lo = uv.min(axis=0)
        hi = uv.max(axis=0)
        pad = (hi - lo) * (BBOX_MARGIN / 2)
        lo = np.maximum(lo - pad, 0.0)
        hi = np.minimum(hi + pad, [cam.width, cam.height])
        return [BoundingBox(frame.index, float(lo[0]), float(lo[1]),
                            float(hi[0] - lo[0]), float(hi[1] - lo[1]), 1.0)]


class PoseEstimator:
    """Crop-based 3D keypoint estimator: ground-truth sites plus seeded noise."""

    def __init__(self, noise: NoiseModel, source_tag: str, per_frame_inference_ms: int = 0,
                 *, _ready: bool = False):
        self.noise = noise
        self.source_tag = source_tag
        self.per_frame_inference_ms = per_frame_inference_ms
        self._ready = _ready

    def rigid_offset(self, seed: int) -> np.ndarray:
        if self.noise.rigid_offset_sigma == 0:
            return np.zeros(3)
        rng = np.random.default_rng([seed, _tag_key(self.source_tag), 0x5E9])
        return rng.normal(0.0, self.noise.rigid_offset_sigma, 3)

    def estimate_pose(self, frame: Frame, bbox: BoundingBox) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(keypoints (S, 3) meters, confidences (S,))`` for one frame."""
        if not self._ready:
            raise StageError("pose estimator used before init_stages()")
        if frame.sites is None:
            raise StageError(f"frame {frame.index} has no subject to estimate")
        if not bbox.inside(frame.camera.width, frame.camera.height):
            raise StageError(f"bbox {bbox} lies outside the {frame.camera.width}x{frame.camera.height} frame")
        _sleep_ms(self.per_frame_inference_ms)
        sites = frame.sites
        kp = sites.copy()
        if self.noise.sigma > 0:
            rng = np.random.default_rng([frame.seed, frame.index, _tag_key(self.source_tag)])
            kp += rng.normal(0.0, self.noise.sigma, sites.shape)
        if self.noise.rigid_offset_sigma > 0:
            kp += self.rigid_offset(frame.seed)
        return kp, np.ones(sites.shape[0])


@dataclass(frozen=True, eq=False)
class StageHandles:
    detector: Detector
    estimator: PoseEstimator
    profile: StageInitProfile
    fetch_events: int
    init_seconds: float


def init_stages(profile: StageInitProfile, noise: NoiseModel = DEFAULT_NOISE,
                source_tag: str = "reference") -> StageHandles:
    """Initialize detector and estimator.

    Monolithic mode emulates fetching and compiling one large graph from a
    remote hub by sleeping ``simulated_fetch_ms`` once. Modular mode builds
    both stages from local state and records no fetch events.
    """
    start = time.perf_counter()
    fetches = 0
    if profile.mode == "monolithic":
        fetches = 1
        _sleep_ms(profile.simulated_fetch_ms)
    det = Detector(profile.per_frame_inference_ms, _ready=True)
    est = PoseEstimator(noise, source_tag, profile.per_frame_inference_ms, _ready=True)
    return StageHandles(det, est, profile, fetches, time.perf_counter() - start)


@dataclass(frozen=True)
class GaitParameters:
    """Amplitude is a global scale on joint excursions; frequency is in cycles per frame."""

    amplitude: float = 1.0
    frequency: float = 0.015

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ConfigError(f"amplitude must be >= 0, got {self.amplitude}")
        if not (np.isfinite(self.frequency) and self.frequency >= 0):
            raise ConfigError(f"frequency must be >= 0, got {self.frequency}")


# (bias, first-harmonic amplitude, phase in cycles) keyed by "segment:dof".
# Left/right limbs run half a cycle apart.
_GAIT_PROFILE = {
    "pelvis:translational-x": (0.0, 0.03, 0.0),
    "pelvis:translational-y": (0.0, 0.02, 0.25),
    "pelvis:translational-z": (0.0, 0.015, 0.0),
    "pelvis:revolute-z": (0.0, 0.08, 0.0),
    "pelvis:revolute-y": (0.05, 0.04, 0.0),
    "pelvis:revolute-x": (0.0, 0.05, 0.25),
    "l_thigh:revolute-y": (-0.1, 0.40, 0.0),
    "r_thigh:revolute-y": (-0.1, 0.40, 0.5),
    "l_thigh:revolute-x": (0.0, 0.06, 0.25),
    "r_thigh:revolute-x": (0.0, 0.06, 0.75),
    "l_shank:revolute-y": (0.35, 0.30, 0.15),
    "r_shank:revolute-y": (0.35, 0.30, 0.65),
    "l_foot:revolute-y": (0.0, 0.15, 0.3),
    "r_foot:revolute-y": (0.0, 0.15, 0.8),
    "l_upperarm:revolute-y": (0.0, 0.30, 0.5),
    "r_upperarm:revolute-y": (0.0, 0.30, 0.0),
    "l_upperarm:revolute-x": (0.15, 0.04, 0.5),
    "r_upperarm:revolute-x": (-0.15, 0.04, 0.0),
    "l_forearm:revolute-y": (-0.6, 0.20, 0.6),
    "r_forearm:revolute-y": (-0.6, 0.20, 0.1),
}
_DEFAULT_SWING = (0.0, 0.05, None)


def gait_trajectory(model: KinematicModel, seed: int, n_frames: int, gait: GaitParameters) -> np.ndarray:
    """Band-limited gait-like coordinates, ``(n_frames, nq)``.

    Each DOF follows bias + two harmonics of the gait frequency; the seed
    jitters amplitudes by +-20% and draws phases for unlisted DOFs and for the
    second harmonic.
    """
    rng = np.random.default_rng([seed, 0x6A17])
    t = np.arange(n_frames, dtype=np.float64)
    Q = np.empty((n_frames, model.nq))
    for k, name in enumerate(model.dof_names):
        bias, amp, phase = _GAIT_PROFILE.get(name, _DEFAULT_SWING)
        jitter = rng.uniform(0.8, 1.2)
        phase = rng.uniform(0, 1) if phase is None else phase
        phase2 = rng.uniform(0, 1)
        w = 2 * np.pi * gait.frequency
        Q[:, k] = gait.amplitude * (
            bias
            + jitter * amp * np.sin(w * t + 2 * np.pi * phase)
            + 0.3 * jitter * amp * np.sin(2 * w * t + 2 * np.pi * phase2)
        )
    return Q


@dataclass(frozen=True, eq=False)
class SyntheticSequence:
    name: str
    seed: int
    model: KinematicModel
    ground_truth: CoordinateTrajectory
    frames: tuple[Frame, ...]
    noise: NoiseModel = DEFAULT_NOISE
    per_frame_inference_ms: int = 0

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def generate_synthetic_sequence(seed: int, n_frames: int, gait: GaitParameters | None = None,
                                model: KinematicModel | None = None, *, name: str | None = None,
                                noise: NoiseModel = DEFAULT_NOISE,
                                per_frame_inference_ms: int = 0) -> SyntheticSequence:
    if n_frames < 1:
        raise ConfigError(f"a sequence needs at least one frame, got {n_frames}")
    gait = gait or GaitParameters()
    model = model or default_model()
    Q = gait_trajectory(model, seed, n_frames, gait)
    camera = Camera()
    frames = tuple(
        Frame(t, seed, forward_kinematics(model, Q[t]).site_positions, camera) for t in range(n_frames)
    )
    return SyntheticSequence(name or f"seq_{seed}", seed, model, model.trajectory(Q), frames,
                             noise, per_frame_inference_ms)


def run_stages(handles: StageHandles, frames) -> tuple[list[BoundingBox], np.ndarray, np.ndarray]:
    """Detect and estimate every frame in memory; convenience for analysis code."""
    boxes, kps, confs = [], [], []
    for frame in frames:
        found = handles.detector.detect(frame)
        if not found:
            raise StageError(f"no subject detected in frame {frame.index}")
        kp, c = handles.estimator.estimate_pose(frame, found[0])
        boxes.append(found[0])
        kps.append(kp)
        confs.append(c)
    return boxes, np.stack(kps), np.stack(confs)


@dataclass(frozen=True, eq=False)
class DetectionSequence:
    keypoints3d: np.ndarray  # (T, S, 3) meters
    confidences: np.ndarray  # (T, S)
    bboxes: tuple[BoundingBox, ...]
    source_tag: str

    def __post_init__(self):
        kp = np.asarray(self.keypoints3d, dtype=np.float64)
        conf = np.asarray(self.confidences, dtype=np.float64)
        if kp.ndim != 3 or kp.shape[2] != 3:
            raise ValueError(f"keypoints must be (T, S, 3), got {kp.shape}")
        if conf.shape != kp.shape[:2]:
            raise ValueError(f"confidences shape {conf.shape} does not match keypoints {kp.shape[:2]}")
        if np.any((conf < 0) | (conf > 1)):
            raise ValueError("confidences must lie in [0, 1]")
        object.__setattr__(self, "keypoints3d", kp)
        object.__setattr__(self, "confidences", conf)
        object.__setattr__(self, "bboxes", tuple(self.bboxes))

    @property
    def n_frames(self) -> int:
        return self.keypoints3d.shape[0]


def detect_sequence(sequence: SyntheticSequence, profile: StageInitProfile | None = None,
                    noise: NoiseModel | None = None, source_tag: str = "reference") -> DetectionSequence:
    handles = init_stages(profile or StageInitProfile(), noise or sequence.noise, source_tag)
    boxes, kp, conf = run_stages(handles, sequence.frames)
    return DetectionSequence(kp, conf, boxes, source_tag)
