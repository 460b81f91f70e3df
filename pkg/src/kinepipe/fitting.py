"""Sequence fitting: generalized coordinates from 3D keypoint detections.

Each frame minimizes

    sum_s w_s * |FK_s(q) - d_s|^2  +  mu * |q - q_prev|^2

with a damped Gauss-Newton (Levenberg) loop. The temporal term is dropped on
the first frame of a sequence. Frames are warm-started from the previous
fitted pose, so a sequence fit is inherently serial.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, InputError, KinepipeError, SolverError
from .kinematics import (
    BodyConfiguration,
    CoordinateTrajectory,
    KinematicModel,
    forward_kinematics,
    site_positions,
    sites_and_jacobian,
)

LAMBDA_UP = 10.0
LAMBDA_DOWN = 3.0
LAMBDA_MAX = 1e12
# damping used after a rejected step when the configured damping is exactly 0
LAMBDA_RESTART = 1e-3
SINGULAR_COND = 1e12


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100
    step_tol: float = 1e-6
    damping: float = 1e-3
    temporal_weight: float = 0.03
    keypoint_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        for name in ("step_tol", "damping", "temporal_weight"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if self.keypoint_weights is not None:
            w = tuple(float(x) for x in self.keypoint_weights)
            if not all(np.isfinite(x) and x >= 0 for x in w):
                raise ValueError("keypoint weights must be finite and >= 0")
            object.__setattr__(self, "keypoint_weights", w)

    @classmethod
    def baseline(cls, **overrides) -> "SolverConfig":
        return cls(**{"max_iters": 100, **overrides})

    @classmethod
    def optimized(cls, **overrides) -> "SolverConfig":
        return cls(**{"max_iters": 10, **overrides})

    def weights(self, n_sites: int) -> np.ndarray:
        if self.keypoint_weights is None:
            return np.ones(n_sites)
        if len(self.keypoint_weights) != n_sites:
            raise DimensionError(
                f"{len(self.keypoint_weights)} keypoint weights for {n_sites} sites")
        return np.asarray(self.keypoint_weights)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class FitResult:
    trajectory: CoordinateTrajectory
    joint_positions: np.ndarray  # (T, n_segments, 3)
    site_positions: np.ndarray  # (T, n_sites, 3)
    per_frame_residual_mm: np.ndarray
    iterations_used: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.trajectory.values.shape[0]

    @property
    def fitted_configurations(self) -> list[BodyConfiguration]:
        return [BodyConfiguration(j, s) for j, s in zip(self.joint_positions, self.site_positions)]


def _check_detections(model: KinematicModel, det) -> np.ndarray:
    det = np.asarray(det, dtype=np.float64)
    if det.shape != (model.n_sites, 3):
        raise DimensionError(f"detections have shape {det.shape}, model expects ({model.n_sites}, 3)")
    if not np.all(np.isfinite(det)):
        raise InputError("detections contain NaN or infinite values")
    return det


def _objective(x, det, w, q, q_prev, mu) -> float:
    r = x - det
    f = float(np.dot(w, np.einsum("ij,ij->i", r, r)))
    if q_prev is not None and mu > 0:
        dq = q - q_prev
        f += mu * float(np.dot(dq, dq))
    return f


def frame_objective(model: KinematicModel, q, detections_t, q_prev, config: SolverConfig) -> float:
    """Weighted squared site residual plus the temporal penalty (omitted if ``q_prev`` is None)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (model.nq,):
        raise DimensionError(f"pose has shape {q.shape}, model expects ({model.nq},)")
    if q_prev is not None:
        q_prev = np.asarray(q_prev, dtype=np.float64)
        if q_prev.shape != q.shape:
            raise DimensionError(f"previous pose has shape {q_prev.shape}, expected {q.shape}")
    det = _check_detections(model, detections_t)
    w = config.weights(model.n_sites)
    return _objective(site_positions(model, q), det, w, q, q_prev, config.temporal_weight)


def gradient(model: KinematicModel, q, detections_t, q_prev, config: SolverConfig) -> np.ndarray:
    """Analytic gradient of :func:`frame_objective` built from the position Jacobian."""
    q = np.asarray(q, dtype=np.float64)
    det = _check_detections(model, detections_t)
    w3 = np.repeat(config.weights(model.n_sites), 3)
    x, J = sites_and_jacobian(model, q)
    g = 2.0 * J.T @ (w3 * (x - det).ravel())
    if q_prev is not None and config.temporal_weight > 0:
        g += 2.0 * config.temporal_weight * (q - np.asarray(q_prev, dtype=np.float64))
    return g


def _mean_distance_mm(x, det) -> float:
    return float(np.mean(np.linalg.norm(x - det, axis=1)) * 1000.0)


def fit_frame(model: KinematicModel, detections_t, q_init, q_prev, config: SolverConfig,
              trace: list | None = None):
    """Fit one frame. Returns ``(q, residual_mm, iterations_used)``.

    ``residual_mm`` is the mean Euclidean distance between fitted sites and
    detections. If ``trace`` is a list, the objective after every accepted
    step is appended to it (starting with the initial objective).
    """
    det = _check_detections(model, detections_t)
    q = np.array(q_init, dtype=np.float64)
    if q.shape != (model.nq,):
        raise DimensionError(f"initial pose has shape {q.shape}, model expects ({model.nq},)")
    if not np.all(np.isfinite(q)):
        raise InputError("initial pose is not finite")
    if q_prev is not None:
        q_prev = np.asarray(q_prev, dtype=np.float64)
    mu = config.temporal_weight if q_prev is not None else 0.0
    w = config.weights(model.n_sites)
    w3 = np.repeat(w, 3)
    eye = np.eye(model.nq)

    x, J = sites_and_jacobian(model, q)
    f = _objective(x, det, w, q, q_prev, mu)
    if trace is not None:
        trace.append(f)
    lam = config.damping
    it = 0
    while it < config.max_iters:
        it += 1
        JW = J * w3[:, None]
        H = J.T @ JW
        g = JW.T @ (x - det).ravel()
        if mu > 0:
            H += mu * eye
            g += mu * (q - q_prev)
        A = H + lam * eye
        if lam == 0.0 and np.linalg.cond(A) > SINGULAR_COND:
            raise SolverError("singular normal equations with zero damping")
        try:
            delta = -np.linalg.solve(A, g)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"normal equations could not be solved: {exc}") from None
        if np.linalg.norm(delta) < config.step_tol:
            break
        q_new = q + delta
        x_new, J_new = sites_and_jacobian(model, q_new)
        f_new = _objective(x_new, det, w, q_new, q_prev, mu)
        if f_new < f:
            q, x, J, f = q_new, x_new, J_new, f_new
            lam /= LAMBDA_DOWN
            if trace is not None:
                trace.append(f)
        else:
            lam = lam * LAMBDA_UP if lam > 0 else LAMBDA_RESTART
            if lam > LAMBDA_MAX:
                break
    return q, _mean_distance_mm(x, det), it


def initial_pose(model: KinematicModel, detections_t) -> np.ndarray:
    """Neutral pose with the root translated so site centroids coincide."""
    q = model.neutral_pose()
    root = model.root_translation_dofs
    if not root:
        return q
    x0, J = sites_and_jacobian(model, q)
    target = np.mean(detections_t, axis=0) - np.mean(x0, axis=0)
    # centroid Jacobian w.r.t. the root translations
    Jc = J.reshape(model.n_sites, 3, model.nq)[:, :, root].mean(axis=0)
    q[root] = np.linalg.lstsq(Jc, target, rcond=None)[0]
    return q


def fit_sequence(model: KinematicModel, detections, config: SolverConfig) -> FitResult:
    """Fit every frame of ``detections`` (``(T, S, 3)`` array or DetectionSequence)."""
    det = np.asarray(getattr(detections, "keypoints3d", detections), dtype=np.float64)
    if det.ndim != 3 or det.shape[1:] != (model.n_sites, 3):
        raise DimensionError(f"detections have shape {det.shape}, expected (T, {model.n_sites}, 3)")
    T = det.shape[0]
    if T < 1:
        raise DimensionError("cannot fit an empty sequence")
    Q = np.empty((T, model.nq))
    residual = np.empty(T)
    iters = np.empty(T, dtype=np.int64)
    q_prev = None
    for t in range(T):
        try:
            if not np.all(np.isfinite(det[t])):
                raise InputError("detections contain NaN or infinite values")
            q_init = initial_pose(model, det[t]) if q_prev is None else q_prev
            q, residual[t], iters[t] = fit_frame(model, det[t], q_init, q_prev, config)
        except KinepipeError as exc:
            raise type(exc)(f"frame {t}: {exc}") from exc
        Q[t] = q
        q_prev = q
    joints = np.empty((T, model.n_segments, 3))
    sites = np.empty((T, model.n_sites, 3))
    for t in range(T):
        cfg = forward_kinematics(model, Q[t])
        joints[t] = cfg.joint_positions
        sites[t] = cfg.site_positions
    return FitResult(model.trajectory(Q), joints, sites, residual, iters)
