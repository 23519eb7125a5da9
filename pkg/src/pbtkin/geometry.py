"""Convex obstacles, capsule link model and clearance queries.

Clearance of a capsule against a convex obstacle is the minimum of the
obstacle's signed distance field along the capsule axis, minus the capsule
radius.  Signed distance functions of convex sets are convex, so the
restriction to a segment is a convex 1-D function and golden-section search
finds its minimum; the sphere case is solved in closed form.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import spatial

from .chain import ChainSpec, ChainState
from .kinematics import BendConvention, ChainFrames, chain_frames

# Reported clearance of an obstacle-free scene; large but finite so argmax
# selection and tie-breaking stay well-defined.
CLEARANCE_SENTINEL = 1e9

_GOLDEN_ITERS = 60
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.radius <= 0.0:
            raise ValueError("sphere radius must be strictly positive")

    def sdf_points(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.center, axis=-1) - self.radius

    def to_json(self) -> dict:
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class AxisBox:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float).reshape(3)
        hi = np.asarray(self.max_corner, dtype=float).reshape(3)
        if not np.all(lo < hi):
            raise ValueError("box min corner must be strictly below max corner componentwise")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def sdf_points(self, points: np.ndarray) -> np.ndarray:
        center = 0.5 * (self.min_corner + self.max_corner)
        half = 0.5 * (self.max_corner - self.min_corner)
        q = np.abs(points - center) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def to_json(self) -> dict:
        return {"type": "box", "min": list(self.min_corner), "max": list(self.max_corner)}


@dataclass(frozen=True)
class ConvexHull:
    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        if verts.shape[0] < 4:
            raise ValueError("hull needs at least 4 vertices")
        try:
            hull = spatial.ConvexHull(verts)
        except spatial.QhullError as exc:
            raise ValueError(f"degenerate hull vertices: {exc}") from exc
        object.__setattr__(self, "vertices", verts)
        # qhull equations: normals @ x + offsets <= 0 inside
        object.__setattr__(self, "_face_normals", hull.equations[:, :3].copy())
        object.__setattr__(self, "_face_offsets", hull.equations[:, 3].copy())
        object.__setattr__(self, "_triangles", hull.points[hull.simplices].copy())

    def sdf_points(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        h = points @ self._face_normals.T + self._face_offsets
        sdf = np.max(h, axis=1)  # exact (negative) distance for interior points
        outside = sdf > 0.0
        if np.any(outside):
            d = _point_triangle_distance(points[outside], self._triangles)
            sdf[outside] = d.min(axis=1)
        return sdf

    def to_json(self) -> dict:
        return {"type": "hull", "vertices": [list(v) for v in self.vertices]}


ConvexObstacle = Sphere | AxisBox | ConvexHull


@dataclass(frozen=True)
class Capsule:
    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be strictly positive")


def _point_triangle_distance(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Distances (M, T) from each point to each triangle (closest-point method)."""
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    ab = b - a
    ac = c - a
    bc = c - b
    ap = points[:, None, :] - a[None, :, :]
    bp = points[:, None, :] - b[None, :, :]
    cp = points[:, None, :] - c[None, :, :]

    d1 = np.einsum("tj,mtj->mt", ab, ap)
    d2 = np.einsum("tj,mtj->mt", ac, ap)
    d3 = np.einsum("tj,mtj->mt", ab, bp)
    d4 = np.einsum("tj,mtj->mt", ac, bp)
    d5 = np.einsum("tj,mtj->mt", ab, cp)
    d6 = np.einsum("tj,mtj->mt", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0.0, d1 / (d1 - d3), 0.0)
        w_ac = np.where(d2 - d6 != 0.0, d2 / (d2 - d6), 0.0)
        den_bc = (d4 - d3) + (d5 - d6)
        w_bc = np.where(den_bc != 0.0, (d4 - d3) / den_bc, 0.0)
        den = va + vb + vc
        v_in = np.where(den != 0.0, vb / den, 0.0)
        w_in = np.where(den != 0.0, vc / den, 0.0)

    # Interior candidate, overridden region by region (later = higher priority).
    q = a + v_in[..., None] * ab + w_in[..., None] * ac
    on_bc = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)
    q = np.where(on_bc[..., None], b + w_bc[..., None] * bc, q)
    on_ac = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
    q = np.where(on_ac[..., None], a + w_ac[..., None] * ac, q)
    on_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    q = np.where(on_ab[..., None], a + v_ab[..., None] * ab, q)
    at_a = (d1 <= 0.0) & (d2 <= 0.0)
    q = np.where(at_a[..., None], np.broadcast_to(a, q.shape), q)
    at_b = (d3 >= 0.0) & (d4 <= d3)
    q = np.where(at_b[..., None], np.broadcast_to(b, q.shape), q)
    at_c = (d6 >= 0.0) & (d5 <= d6)
    q = np.where(at_c[..., None], np.broadcast_to(c, q.shape), q)

    return np.linalg.norm(points[:, None, :] - q, axis=-1)


def segment_sdf_min(obstacle, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Minimum signed distance to ``obstacle`` along each segment, batched.

    ``seg_a``/``seg_b`` are (M, 3) endpoint arrays.  The capsule radius is
    not subtracted here.
    """
    seg_a = np.atleast_2d(seg_a)
    seg_b = np.atleast_2d(seg_b)
    d = seg_b - seg_a

    if isinstance(obstacle, Sphere):
        dd = np.einsum("mj,mj->m", d, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dd > 0.0, np.einsum("mj,mj->m", obstacle.center - seg_a, d) / dd, 0.0)
        t = np.clip(t, 0.0, 1.0)
        closest = seg_a + t[:, None] * d
        return np.linalg.norm(closest - obstacle.center, axis=-1) - obstacle.radius

    # Golden-section on the convex restriction of the SDF to the segment.
    lo = np.zeros(seg_a.shape[0])
    hi = np.ones(seg_a.shape[0])
    best = np.minimum(obstacle.sdf_points(seg_a), obstacle.sdf_points(seg_b))
    x1 = lo + (1.0 - _INV_PHI) * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1 = obstacle.sdf_points(seg_a + x1[:, None] * d)
    f2 = obstacle.sdf_points(seg_a + x2[:, None] * d)
    for _ in range(_GOLDEN_ITERS):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x1_new = lo + (1.0 - _INV_PHI) * (hi - lo)
        x2_new = lo + _INV_PHI * (hi - lo)
        x_probe = np.where(left, x1_new, x2_new)
        f_probe = obstacle.sdf_points(seg_a + x_probe[:, None] * d)
        x2 = np.where(left, x1, x2_new)
        f2 = np.where(left, f1, f_probe)
        x1 = np.where(left, x1_new, x1)
        f1 = np.where(left, f_probe, f1)
        best = np.minimum(best, np.minimum(f1, f2))
    return best


def clearance_point(obstacle, point: np.ndarray) -> float:
    """Signed distance from a point to the obstacle surface (negative inside)."""
    return float(obstacle.sdf_points(np.asarray(point, dtype=float)[None, :])[0])


def clearance_capsule(obstacle, capsule: Capsule) -> float:
    """Signed segment-obstacle distance minus the capsule radius."""
    return float(segment_sdf_min(obstacle, capsule.a[None], capsule.b[None])[0]) - capsule.radius


def chain_capsules(
    spec: ChainSpec, state: ChainState, conv: BendConvention | None = None
) -> list[Capsule]:
    """Capsule model of the chain: one capsule per rigid segment."""
    frames = chain_frames(spec, state, conv)
    segs = frames.segments[0]
    return [
        Capsule(segs[s, 0], segs[s, 1], frames.segment_radius[s]) for s in range(segs.shape[0])
    ]


def clearance_batch(frames: ChainFrames, obstacles) -> np.ndarray:
    """Per-configuration minimum clearance (M,) over all capsule/obstacle pairs."""
    m, s = frames.segments.shape[:2]
    if not obstacles:
        return np.full(m, CLEARANCE_SENTINEL)
    seg_a = frames.segments[:, :, 0, :].reshape(m * s, 3)
    seg_b = frames.segments[:, :, 1, :].reshape(m * s, 3)
    best = np.full(m * s, np.inf)
    for obstacle in obstacles:
        best = np.minimum(best, segment_sdf_min(obstacle, seg_a, seg_b))
    clear = best - np.tile(frames.segment_radius, m)
    return clear.reshape(m, s).min(axis=1)


def chain_clearance(
    spec: ChainSpec, state: ChainState, obstacles, conv: BendConvention | None = None
) -> float:
    """Minimum signed clearance of the whole chain; sentinel when no obstacles."""
    if not obstacles:
        return CLEARANCE_SENTINEL
    return float(clearance_batch(chain_frames(spec, state, conv), obstacles)[0])


def in_collision(
    spec: ChainSpec, state: ChainState, obstacles, conv: BendConvention | None = None
) -> bool:
    """True iff any capsule penetrates any obstacle (clearance strictly < 0)."""
    return chain_clearance(spec, state, obstacles, conv) < 0.0


# ---------------------------------------------------------------------------
# Obstacle files
# ---------------------------------------------------------------------------


def obstacle_from_dict(obj: dict, index: int = 0):
    kind = obj.get("type")
    if kind == "sphere":
        unknown = set(obj) - {"type", "center", "radius"}
        if unknown:
            raise ValueError(f"obstacle {index + 1}: unknown keys {sorted(unknown)}")
        return Sphere(obj["center"], obj["radius"])
    if kind == "box":
        unknown = set(obj) - {"type", "min", "max"}
        if unknown:
            raise ValueError(f"obstacle {index + 1}: unknown keys {sorted(unknown)}")
        return AxisBox(obj["min"], obj["max"])
    if kind == "hull":
        unknown = set(obj) - {"type", "vertices"}
        if unknown:
            raise ValueError(f"obstacle {index + 1}: unknown keys {sorted(unknown)}")
        return ConvexHull(obj["vertices"])
    raise ValueError(f"obstacle {index + 1}: unknown type {kind!r}")


def obstacles_from_json(items: list) -> list:
    return [obstacle_from_dict(obj, i) for i, obj in enumerate(items)]


def obstacles_digest(obstacles) -> str:
    """Stable short hash identifying an obstacle set in sample metadata."""
    payload = json.dumps([o.to_json() for o in obstacles], sort_keys=True)
    return hashlib.md5(payload.encode()).hexdigest()[:12]
