"""Articulated body model, forward kinematics and position Jacobians.

A model is a topologically sorted list of segments. Each segment sits at a
fixed offset in its parent's frame and carries zero or more elementary DOFs
(revolute or translational about a local axis), applied in declaration order.
Generalized coordinates ``q`` are indexed by the order of the ``dof`` lines.

Units are meters and radians throughout; conversion to mm/degrees happens in
:mod:`kinepipe.metrics`.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, ModelParseError

DOF_TYPES = (
    "revolute-x",
    "revolute-y",
    "revolute-z",
    "translational-x",
    "translational-y",
    "translational-z",
)
DEFAULT_MODEL_RESOURCE = "humanoid40.model"


@dataclass(frozen=True)
class Segment:
    name: str
    parent: int
    offset: tuple[float, float, float]


@dataclass(frozen=True)
class Dof:
    segment: int
    kind: str

    @property
    def type_code(self) -> int:
        return DOF_TYPES.index(self.kind)

    @property
    def revolute(self) -> bool:
        return self.kind.startswith("revolute")


@dataclass(frozen=True)
class Site:
    name: str
    segment: int
    offset: tuple[float, float, float]


@dataclass(frozen=True)
class BodyConfiguration:
    """World positions of segment origins (``joint_positions``) and sites."""

    joint_positions: np.ndarray
    site_positions: np.ndarray


@dataclass(frozen=True, eq=False)
class CoordinateTrajectory:
    """``T x nq`` generalized coordinates with per-DOF kind tags.

    Differences are per frame (rad/frame), never per second.
    """

    values: np.ndarray
    dof_kinds: tuple[str, ...]
    frame_rate_tag: str = "per-frame"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"trajectory must be 2-D (T, nq), got shape {values.shape}")
        if len(self.dof_kinds) != values.shape[1]:
            raise DimensionError(
                f"{len(self.dof_kinds)} DOF kinds for a trajectory with {values.shape[1]} columns")
        if not np.all(np.isfinite(values)):
            raise DimensionError("trajectory contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dof_kinds", tuple(self.dof_kinds))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def revolute_mask(self) -> np.ndarray:
        return np.array([k == "revolute" for k in self.dof_kinds], dtype=bool)


@dataclass(frozen=True, eq=False)
class KinematicModel:
    """Immutable articulated chain; safe to share between threads."""

    segments: tuple[Segment, ...]
    dofs: tuple[Dof, ...]
    sites: tuple[Site, ...]
    _arrays: dict = field(init=False, repr=False)

    def __post_init__(self):
        _validate(self)
        nseg = len(self.segments)
        seg_parent = np.array([s.parent for s in self.segments], dtype=np.int64)
        order = sorted(range(len(self.dofs)), key=lambda k: (self.dofs[k].segment, k))
        counts = np.bincount([d.segment for d in self.dofs], minlength=nseg)
        ancestor = np.zeros((nseg, nseg), dtype=np.uint8)
        for i, seg in enumerate(self.segments):
            ancestor[i, i] = 1
            if seg.parent >= 0:
                ancestor[:, i] |= ancestor[:, seg.parent]
        arrays = {
            "seg_parent": seg_parent,
            "seg_offset": np.array([s.offset for s in self.segments], dtype=np.float64).reshape(nseg, 3),
            "seg_dof_ptr": np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
            "dof_order": np.array(order, dtype=np.int64),
            "dof_type": np.array([d.type_code for d in self.dofs], dtype=np.int64),
            "dof_seg": np.array([d.segment for d in self.dofs], dtype=np.int64),
            "ancestor": ancestor,
            "site_seg": np.array([s.segment for s in self.sites], dtype=np.int64),
            "site_offset": np.array([s.offset for s in self.sites], dtype=np.float64).reshape(-1, 3),
            "revolute": np.array([d.revolute for d in self.dofs], dtype=bool),
        }
        for a in arrays.values():
            a.setflags(write=False)
        object.__setattr__(self, "_arrays", arrays)

    @property
    def nq(self) -> int:
        return len(self.dofs)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def revolute_mask(self) -> np.ndarray:
        return self._arrays["revolute"]

    @property
    def dof_kinds(self) -> tuple[str, ...]:
        return tuple("revolute" if d.revolute else "translational" for d in self.dofs)

    @property
    def dof_names(self) -> list[str]:
        return [f"{self.segments[d.segment].name}:{d.kind}" for d in self.dofs]

    @property
    def root_translation_dofs(self) -> list[int]:
        return [k for k, d in enumerate(self.dofs)
                if self.segments[d.segment].parent < 0 and not d.revolute]

    def trajectory(self, values) -> CoordinateTrajectory:
        return CoordinateTrajectory(values, self.dof_kinds)

    def neutral_pose(self) -> np.ndarray:
        return np.zeros(self.nq)

    def site_indices(self, selection: Iterable[int | str] | None = None) -> np.ndarray:
        if selection is None:
            return np.arange(self.n_sites)
        names = {s.name: i for i, s in enumerate(self.sites)}
        idx = []
        for item in selection:
            if isinstance(item, str):
                if item not in names:
                    raise KeyError(f"unknown site {item!r}")
                idx.append(names[item])
            else:
                if not 0 <= int(item) < self.n_sites:
                    raise IndexError(f"site index {item} out of range")
                idx.append(int(item))
        return np.asarray(idx, dtype=np.int64)


def _validate(model: KinematicModel) -> None:
    if not model.segments:
        raise ModelParseError("model has no segments")
    for i, seg in enumerate(model.segments):
        if seg.parent >= i:
            raise ModelParseError(
                f"segment {seg.name!r} (index {i}) has parent index {seg.parent}; "
                "parents must precede children")
    seen = set()
    for d in model.dofs:
        if d.kind not in DOF_TYPES:
            raise ModelParseError(f"unknown DOF type {d.kind!r}")
        if not 0 <= d.segment < len(model.segments):
            raise ModelParseError(f"DOF references missing segment {d.segment}")
        if (d.segment, d.kind) in seen:
            raise ModelParseError(
                f"duplicate DOF {d.kind} on segment {model.segments[d.segment].name!r}")
        seen.add((d.segment, d.kind))
    for s in model.sites:
        if not 0 <= s.segment < len(model.segments):
            raise ModelParseError(f"site {s.name!r} references missing segment {s.segment}")


def _parse_vec(text: str, lineno: int) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ModelParseError(f"expected x,y,z but got {text!r}", lineno)
    try:
        vec = tuple(float(p) for p in parts)
    except ValueError:
        raise ModelParseError(f"non-numeric vector {text!r}", lineno) from None
    if not all(np.isfinite(vec)):
        raise ModelParseError(f"non-finite vector {text!r}", lineno)
    return vec  # type: ignore[return-value]


def _kwargs(tokens: list[str], allowed: set[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in allowed:
            raise ModelParseError(f"unexpected token {tok!r}", lineno)
        out[key] = value
    missing = allowed - out.keys()
    if missing:
        raise ModelParseError(f"missing {', '.join(sorted(missing))}", lineno)
    return out


def load_model(text: str) -> KinematicModel:
    """Parse a model description.

    Format, one statement per line (``#`` starts a comment)::

        segment <name> parent=<name|none> offset=<x,y,z>
        dof <segment> <revolute-x|...|translational-z>
        site <name> <segment> offset=<x,y,z>
    """
    segments: list[Segment] = []
    dofs: list[Dof] = []
    sites: list[Site] = []
    seg_index: dict[str, int] = {}
    site_names: set[str] = set()
    pending_parents: list[tuple[str, str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword = tokens[0]
        if keyword == "segment":
            if len(tokens) != 4:
                raise ModelParseError("segment needs: name parent=... offset=...", lineno)
            name = tokens[1]
            if name in seg_index:
                raise ModelParseError(f"duplicate segment {name!r}", lineno)
            kw = _kwargs(tokens[2:], {"parent", "offset"}, lineno)
            parent_name = kw["parent"]
            if parent_name == name:
                raise ModelParseError(f"segment {name!r} is its own parent (cycle)", lineno)
            if parent_name == "none":
                parent = -1
            elif parent_name in seg_index:
                parent = seg_index[parent_name]
            else:
                pending_parents.append((name, parent_name, lineno))
                parent = -2
            seg_index[name] = len(segments)
            segments.append(Segment(name, parent, _parse_vec(kw["offset"], lineno)))
        elif keyword == "dof":
            if len(tokens) != 3:
                raise ModelParseError("dof needs: segment type", lineno)
            seg_name, kind = tokens[1], tokens[2]
            if seg_name not in seg_index:
                raise ModelParseError(f"dof on unknown segment {seg_name!r}", lineno)
            if kind not in DOF_TYPES:
                raise ModelParseError(f"unknown DOF type {kind!r}", lineno)
            dof = Dof(seg_index[seg_name], kind)
            if dof in dofs:
                raise ModelParseError(f"duplicate DOF {kind} on segment {seg_name!r}", lineno)
            dofs.append(dof)
        elif keyword == "site":
            if len(tokens) != 4:
                raise ModelParseError("site needs: name segment offset=...", lineno)
            name, seg_name = tokens[1], tokens[2]
            if seg_name not in seg_index:
                raise ModelParseError(f"site on unknown segment {seg_name!r}", lineno)
            if name in site_names:
                raise ModelParseError(f"duplicate site {name!r}", lineno)
            kw = _kwargs(tokens[3:], {"offset"}, lineno)
            site_names.add(name)
            sites.append(Site(name, seg_index[seg_name], _parse_vec(kw["offset"], lineno)))
        else:
            raise ModelParseError(f"unknown statement {keyword!r}", lineno)

    for name, parent_name, lineno in pending_parents:
        if parent_name in seg_index:
            raise ModelParseError(
                f"segment {name!r} references parent {parent_name!r} declared after it "
                "(segments must be topologically ordered)", lineno)
        raise ModelParseError(f"segment {name!r} has unknown parent {parent_name!r}", lineno)
    if not segments:
        raise ModelParseError("model has no segments")
    if not dofs:
        raise ModelParseError("model has no degrees of freedom")
    return KinematicModel(tuple(segments), tuple(dofs), tuple(sites))


@functools.lru_cache(maxsize=None)
def default_model() -> KinematicModel:
    """The bundled 40-DOF humanoid (6-DOF free root + 34 revolute DOFs)."""
    text = resources.files("kinepipe").joinpath("data", DEFAULT_MODEL_RESOURCE).read_text("utf-8")
    return load_model(text)


def _check_pose(model: KinematicModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (model.nq,):
        raise DimensionError(f"pose has shape {q.shape}, model expects ({model.nq},)")
    return q


def _frames(model: KinematicModel, q: np.ndarray):
    a = model._arrays
    return kernels.segment_frames(a["seg_parent"], a["seg_offset"], a["seg_dof_ptr"],
                                  a["dof_order"], a["dof_type"], q)


def forward_kinematics(model: KinematicModel, q) -> BodyConfiguration:
    """Joint (segment origin) and site positions for pose ``q``."""
    q = _check_pose(model, q)
    R, p, _, _ = _frames(model, q)
    a = model._arrays
    sites = kernels.site_positions(R, p, a["site_seg"], a["site_offset"])
    return BodyConfiguration(p, sites)


def position_jacobian(model: KinematicModel, q, targets: Sequence[int | str] | None = None) -> np.ndarray:
    """Analytic d(site positions)/dq, shape ``(3 * n_selected, nq)``.

    Rows are site-major (x, y, z per selected site). ``targets`` defaults to
    every site.
    """
    q = _check_pose(model, q)
    sel = model.site_indices(targets)
    if sel.size == 0:
        raise DimensionError("empty site selection")
    _, J = sites_and_jacobian(model, q, sel)
    return J


def sites_and_jacobian(model: KinematicModel, q: np.ndarray, sel: np.ndarray | None = None):
    """Selected site positions and their Jacobian from a single FK pass."""
    a = model._arrays
    R, p, axis, pivot = _frames(model, q)
    site_seg = a["site_seg"] if sel is None else np.ascontiguousarray(a["site_seg"][sel])
    site_off = a["site_offset"] if sel is None else np.ascontiguousarray(a["site_offset"][sel])
    x = kernels.site_positions(R, p, site_seg, site_off)
    J = kernels.site_jacobian(axis, pivot, a["dof_type"], a["dof_seg"], a["ancestor"], site_seg, x)
    return x, J


def site_positions(model: KinematicModel, q: np.ndarray) -> np.ndarray:
    a = model._arrays
    R, p, _, _ = _frames(model, q)
    return kernels.site_positions(R, p, a["site_seg"], a["site_offset"])


def wrap_angle(x):
    """Map angles to (-pi, pi]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.mod(x + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)
