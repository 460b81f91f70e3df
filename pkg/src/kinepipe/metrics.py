"""Kinematic consistency metrics between two pipeline variants.

Angles are compared wrap-aware on revolute DOFs only and reported in
degrees; positions are compared in the shared world frame (no root or
Procrustes alignment) and reported in millimeters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, KinepipeError
from .kinematics import CoordinateTrajectory, wrap_angle


class UndefinedCorrelationError(KinepipeError, ValueError):
    """Every DOF has zero variance in at least one trajectory."""


def _pair(A: CoordinateTrajectory, B: CoordinateTrajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if A.values.shape != B.values.shape:
        raise DimensionError(f"trajectory shapes differ: {A.values.shape} vs {B.values.shape}")
    if A.dof_kinds != B.dof_kinds:
        raise DimensionError("trajectories disagree on DOF kinds")
    return A.values, B.values, A.revolute_mask


def angle_differences_deg(A: CoordinateTrajectory, B: CoordinateTrajectory) -> np.ndarray:
    """Wrapped ``B - A`` over revolute DOFs, degrees, shape (T, n_revolute)."""
    a, b, rev = _pair(A, B)
    return np.degrees(wrap_angle(b[:, rev] - a[:, rev]))


def mad_degrees(A: CoordinateTrajectory, B: CoordinateTrajectory) -> float:
    """Mean absolute wrapped joint-angle difference over all revolute entries."""
    d = angle_differences_deg(A, B)
    if d.size == 0:
        raise DimensionError("no revolute DOFs to compare")
    return float(np.mean(np.abs(d)))


def pearson_per_dof(A: CoordinateTrajectory, B: CoordinateTrajectory) -> np.ndarray:
    """Per-DOF temporal correlation; NaN where either series is constant."""
    a, b, _ = _pair(A, B)
    da = a - a.mean(axis=0)
    db = b - b.mean(axis=0)
    sa = np.sqrt(np.sum(da * da, axis=0))
    sb = np.sqrt(np.sum(db * db, axis=0))
    ok = (sa > 0) & (sb > 0)
    r = np.full(a.shape[1], np.nan)
    r[ok] = np.sum(da[:, ok] * db[:, ok], axis=0) / (sa[ok] * sb[ok])
    return np.clip(r, -1.0, 1.0)


def pearson_r(A: CoordinateTrajectory, B: CoordinateTrajectory) -> float:
    """Per-DOF Pearson r averaged uniformly over DOFs with nonzero variance."""
    r = pearson_per_dof(A, B)
    if np.all(np.isnan(r)):
        raise UndefinedCorrelationError("correlation undefined: every DOF has zero variance")
    return float(np.nanmean(r))


def mpjpe_mm(Pa, Pb) -> float:
    """Mean Euclidean distance over frames and points, (T, K, 3) meters -> mm."""
    Pa = np.asarray(Pa, dtype=np.float64)
    Pb = np.asarray(Pb, dtype=np.float64)
    if Pa.shape != Pb.shape:
        raise DimensionError(f"position shapes differ: {Pa.shape} vs {Pb.shape}")
    if Pa.ndim < 2 or Pa.shape[-1] != 3:
        raise DimensionError(f"positions must end in a 3-vector axis, got {Pa.shape}")
    return float(np.mean(np.linalg.norm(Pa - Pb, axis=-1)) * 1000.0)


@dataclass(frozen=True)
class BlandAltman:
    mean_diff: float
    sd_diff: float
    loa_low: float
    loa_high: float
    n: int


def bland_altman(A: CoordinateTrajectory, B: CoordinateTrajectory) -> BlandAltman:
    """Agreement of ``B`` relative to ``A`` pooled over revolute DOF-time pairs, degrees.

    SD is the sample standard deviation (ddof=1); limits are mean +- 1.96 SD.
    """
    d = angle_differences_deg(A, B).ravel()
    return bland_altman_from_differences(d)


def bland_altman_from_differences(d) -> BlandAltman:
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.size == 0:
        raise DimensionError("no differences to analyse")
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1)) if d.size > 1 else 0.0
    return BlandAltman(mean, sd, mean - 1.96 * sd, mean + 1.96 * sd, int(d.size))


@dataclass(frozen=True)
class SmoothnessReport:
    mean_abs_qdot_rad_per_frame: float
    mean_abs_qdddot_rad_per_frame3: float
    qdot_change_percent: float | None = None
    qdddot_change_percent: float | None = None


def smoothness(Q: CoordinateTrajectory, reference: CoordinateTrajectory | None = None) -> SmoothnessReport:
    """Mean |first difference| and mean |third difference| over revolute DOFs.

    With a ``reference``, percent changes are relative to the reference's values.
    """
    v = Q.values
    if v.shape[0] < 4:
        raise DimensionError(f"smoothness needs at least 4 frames, got {v.shape[0]}")
    rev = Q.revolute_mask
    if not rev.any():
        raise DimensionError("no revolute DOFs")
    q = v[:, rev]
    qdot = float(np.mean(np.abs(np.diff(q, n=1, axis=0))))
    jerk = float(np.mean(np.abs(np.diff(q, n=3, axis=0))))
    if reference is None:
        return SmoothnessReport(qdot, jerk)
    ref = smoothness(reference)
    return SmoothnessReport(qdot, jerk, _pct(qdot, ref.mean_abs_qdot_rad_per_frame),
                            _pct(jerk, ref.mean_abs_qdddot_rad_per_frame3))


def _pct(value: float, ref: float) -> float:
    return float("nan") if ref == 0 else 100.0 * (value - ref) / ref


@dataclass(frozen=True)
class StageConvergence:
    detection_mpjpe_mm: float
    fitted_sites_mpjpe_mm: float
    fitted_joints_mpjpe_mm: float
    mad_deg: float

    @property
    def absorption_factor(self) -> float:
        if self.fitted_sites_mpjpe_mm == 0:
            return float("inf") if self.detection_mpjpe_mm > 0 else 1.0
        return self.detection_mpjpe_mm / self.fitted_sites_mpjpe_mm


def stage_convergence(detA, detB, fitA, fitB) -> StageConvergence:
    """Divergence between two variants before and after fitting."""
    kpA = np.asarray(getattr(detA, "keypoints3d", detA))
    kpB = np.asarray(getattr(detB, "keypoints3d", detB))
    return StageConvergence(
        mpjpe_mm(kpA, kpB),
        mpjpe_mm(fitA.site_positions, fitB.site_positions),
        mpjpe_mm(fitA.joint_positions, fitB.joint_positions),
        mad_degrees(fitA.trajectory, fitB.trajectory),
    )


@dataclass(frozen=True)
class SequenceConsistency:
    name: str
    mad_deg: float
    pearson_r: float
    mpjpe_joints_mm: float
    mpjpe_sites_mm: float
    excluded_dofs: int


@dataclass(frozen=True)
class ConsistencyReport:
    mad_deg: float
    pearson_r: float
    mpjpe_joints_mm: float
    mpjpe_sites_mm: float
    bland_altman: BlandAltman
    per_sequence: tuple[SequenceConsistency, ...] = field(default_factory=tuple)
    per_sequence_bland_altman: tuple[BlandAltman, ...] = field(default_factory=tuple)
    excluded_dofs: int = 0


def consistency_report(pairs) -> ConsistencyReport:
    """Aggregate consistency over ``(name, trajA, trajB, positionsA, positionsB)`` tuples.

    ``positions*`` are ``(joints (T, J, 3), sites (T, S, 3))`` pairs in meters.
    Summary MAD/r/MPJPE are means of the per-sequence values; Bland-Altman
    pools every revolute DOF-time pair across sequences and is also reported
    per sequence.
    """
    rows, bas, diffs = [], [], []
    for name, A, B, (jA, sA), (jB, sB) in pairs:
        r = pearson_per_dof(A, B)
        if np.all(np.isnan(r)):
            raise UndefinedCorrelationError(f"{name}: correlation undefined, every DOF is constant")
        rows.append(SequenceConsistency(
            name, mad_degrees(A, B), float(np.nanmean(r)), mpjpe_mm(jA, jB), mpjpe_mm(sA, sB),
            int(np.isnan(r).sum())))
        d = angle_differences_deg(A, B)
        diffs.append(d.ravel())
        bas.append(bland_altman_from_differences(d))
    if not rows:
        raise DimensionError("no sequences to compare")
    return ConsistencyReport(
        mad_deg=float(np.mean([r.mad_deg for r in rows])),
        pearson_r=float(np.mean([r.pearson_r for r in rows])),
        mpjpe_joints_mm=float(np.mean([r.mpjpe_joints_mm for r in rows])),
        mpjpe_sites_mm=float(np.mean([r.mpjpe_sites_mm for r in rows])),
        bland_altman=bland_altman_from_differences(np.concatenate(diffs)),
        per_sequence=tuple(rows),
        per_sequence_bland_altman=tuple(bas),
        excluded_dofs=sum(r.excluded_dofs for r in rows),
    )


def format_consistency(report: ConsistencyReport) -> str:
    """Aligned text table: one row per sequence and a mean row."""
    w = max(16, *(len(r.name) + 2 for r in report.per_sequence))
    header = f"{'Seq.':<{w}}{'MAD (deg)':>10}{'r':>8}{'Joints (mm)':>13}{'Sites (mm)':>12}"
    lines = [header, "-" * len(header)]
    for r in report.per_sequence:
        lines.append(f"{r.name:<{w}}{r.mad_deg:>10.3f}{r.pearson_r:>8.4f}"
                     f"{r.mpjpe_joints_mm:>13.2f}{r.mpjpe_sites_mm:>12.2f}")
    lines.append("-" * len(header))
    lines.append(f"{'Mean':<{w}}{report.mad_deg:>10.3f}{report.pearson_r:>8.4f}"
                 f"{report.mpjpe_joints_mm:>13.2f}{report.mpjpe_sites_mm:>12.2f}")
    ba = report.bland_altman
    lines.append(f"Bland-Altman: mean diff {ba.mean_diff:.4f} deg, "
                 f"95% LoA [{ba.loa_low:.3f}, {ba.loa_high:.3f}] deg (n={ba.n})")
    if report.excluded_dofs:
        lines.append(f"zero-variance DOFs excluded from r: {report.excluded_dofs}")
    return "\n".join(lines) + "\n"


def consistency_key_values(report: ConsistencyReport) -> dict[str, str]:
    ba = report.bland_altman
    kv = {
        "mad_deg": f"{report.mad_deg:.6f}",
        "pearson_r": f"{report.pearson_r:.6f}",
        "mpjpe_joints_mm": f"{report.mpjpe_joints_mm:.6f}",
        "mpjpe_sites_mm": f"{report.mpjpe_sites_mm:.6f}",
        "bland_altman.mean_diff_deg": f"{ba.mean_diff:.6f}",
        "bland_altman.sd_diff_deg": f"{ba.sd_diff:.6f}",
        "bland_altman.loa_low_deg": f"{ba.loa_low:.6f}",
        "bland_altman.loa_high_deg": f"{ba.loa_high:.6f}",
        "excluded_dofs": str(report.excluded_dofs),
    }
    for r, b in zip(report.per_sequence, report.per_sequence_bland_altman):
        kv[f"seq.{r.name}.mad_deg"] = f"{r.mad_deg:.6f}"
        kv[f"seq.{r.name}.pearson_r"] = f"{r.pearson_r:.6f}"
        kv[f"seq.{r.name}.mpjpe_joints_mm"] = f"{r.mpjpe_joints_mm:.6f}"
        kv[f"seq.{r.name}.mpjpe_sites_mm"] = f"{r.mpjpe_sites_mm:.6f}"
        kv[f"seq.{r.name}.bland_altman.mean_diff_deg"] = f"{b.mean_diff:.6f}"
    return kv
