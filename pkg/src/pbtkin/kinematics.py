"""Forward kinematics for PBT chains.

Two deliberate FK paths exist side by side:

* mode-specific closed forms (``fk_pp``, ``fk_pb_paper``, ``fk_bp_paper``)
  for the two-unit chain, and
* a generic product-of-transforms composer (``fk_generic``) that handles any
  unit count and mode string and also yields intermediate frames, link
  segments and the translational Jacobian.

The two published two-unit closed forms imply different bending-unit
structure: the BP form includes a fixed proximal segment of length ``l``
before the bend pivot, the PB form does not.  ``BendConvention`` makes that
choice explicit so each closed form can be matched exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .chain import BENDING, PRISMATIC, ChainSpec, ChainState, validate_state
from .transforms import RigidTransform


class BendConvention(enum.Enum):
    """Whether a bending unit keeps a fixed proximal segment before its pivot."""

    INCLUDE_PROXIMAL = "include"
    EXCLUDE_PROXIMAL = "exclude"

    @classmethod
    def parse(cls, name: str) -> "BendConvention":
        for conv in cls:
            if name in (conv.value, conv.name, conv.name.lower()):
                return conv
        raise ValueError(f"unknown bend convention {name!r}; use 'include' or 'exclude'")


def default_convention(mode: str) -> BendConvention:
    """Per-mode default so each closed form is reproduced exactly."""
    return BendConvention.EXCLUDE_PROXIMAL if mode == "PB" else BendConvention.INCLUDE_PROXIMAL


def extension_length(l: float, theta: float) -> float:
    """Axial stroke of a prismatic unit: 2*l*cos(theta/2), in (0, 2l]."""
    if not 0.0 <= theta < math.pi:
        raise ValueError(f"theta {theta:.6g} outside [0, pi)")
    return 2.0 * l * math.cos(0.5 * theta)


def _require_mode(spec: ChainSpec, state: ChainState, mode: str, op: str):
    if len(spec) != len(mode):
        raise ValueError(f"{op} expects a {len(mode)}-unit chain, got {len(spec)} units")
    if state.mode != mode:
        raise ValueError(f"{op} expects mode {mode}, got {state.mode}")


def fk_pp(spec: ChainSpec, state: ChainState) -> np.ndarray:
    """End-effector position for an all-prismatic chain: a point on the base axis."""
    if state.mode != PRISMATIC * len(spec):
        raise ValueError(f"fk_pp expects all units in P mode, got {state.mode}")
    z = sum(u.t + extension_length(u.l, th) for u, th in zip(spec.units, state.theta))
    return spec.base_pose.apply(np.array([0.0, 0.0, z]))


def fk_pb_paper(spec: ChainSpec, state: ChainState) -> np.ndarray:
    """Two-unit PB closed form (lower unit prismatic, upper unit bending)."""
    _require_mode(spec, state, "PB", "fk_pb_paper")
    (u1, u2) = spec.units
    phi_sum = state.phi[0] + state.phi[1]
    th1, th2 = state.theta
    r = u2.l * math.sin(th2)
    p = np.array(
        [
            r * math.cos(phi_sum),
            r * math.sin(phi_sum),
            u1.t + u2.t + 2.0 * u1.l * math.cos(0.5 * th1) + u2.l * math.cos(th2),
        ]
    )
    return spec.base_pose.apply(p)


def fk_bp_paper(spec: ChainSpec, state: ChainState) -> np.ndarray:
    """Two-unit BP closed form (lower unit bending, upper unit prismatic).

    The upper yaw phi2 spins the prismatic unit about its own axis and does
    not move the end-effector.
    """
    _require_mode(spec, state, "BP", "fk_bp_paper")
    (u1, u2) = spec.units
    phi1 = state.phi[0]
    th1, th2 = state.theta
    s = u1.l + u2.t + 2.0 * u2.l * math.cos(0.5 * th2)
    p = np.array(
        [
            s * math.sin(th1) * math.cos(phi1),
            s * math.sin(th1) * math.sin(phi1),
            u1.t + u1.l + s * math.cos(th1),
        ]
    )
    return spec.base_pose.apply(p)


# ---------------------------------------------------------------------------
# Batched generic chain evaluation
# ---------------------------------------------------------------------------


@dataclass
class ChainFrames:
    """World-frame kinematic quantities for a batch of configurations.

    ``q`` columns are ordered (phi1, theta1, phi2, theta2, ...).  Segment
    arrays describe the capsule centerlines: per unit a base segment of
    length t, then one arm segment in P mode, and one (exclude) or two
    (include) arm segments in B mode.
    """

    mode: str
    conv: BendConvention
    ee_pos: np.ndarray  # (M, 3)
    ee_rot: np.ndarray  # (M, 3, 3)
    phi_origin: np.ndarray  # (M, N, 3)
    phi_axis: np.ndarray  # (M, N, 3)
    theta_origin: np.ndarray  # (M, N, 3)  B: bend pivot; P: extension start
    theta_axis: np.ndarray  # (M, N, 3)   B: bend axis; P: extension direction
    theta_pris_coeff: np.ndarray  # (M, N)  P: d(extension)/dtheta; B: 0
    segments: np.ndarray  # (M, S, 2, 3) centerline endpoints
    segment_radius: np.ndarray  # (S,)
    segment_unit: np.ndarray  # (S,) owning unit index


def _rz_batch(phi: np.ndarray) -> np.ndarray:
    m = phi.shape[0]
    c, s = np.cos(phi), np.sin(phi)
    R = np.zeros((m, 3, 3))
    R[:, 0, 0] = c
    R[:, 0, 1] = -s
    R[:, 1, 0] = s
    R[:, 1, 1] = c
    R[:, 2, 2] = 1.0
    return R


def _ry_batch(theta: np.ndarray) -> np.ndarray:
    m = theta.shape[0]
    c, s = np.cos(theta), np.sin(theta)
    R = np.zeros((m, 3, 3))
    R[:, 0, 0] = c
    R[:, 0, 2] = s
    R[:, 1, 1] = 1.0
    R[:, 2, 0] = -s
    R[:, 2, 2] = c
    return R


def chain_frames_batch(
    spec: ChainSpec, mode: str, q: np.ndarray, conv: BendConvention | None = None
) -> ChainFrames:
    """Evaluate the chain for a (M, 2N) batch of joint vectors."""
    if conv is None:
        conv = default_convention(mode)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = len(spec)
    if len(mode) != n:
        raise ValueError(f"mode {mode!r} does not match a {n}-unit chain")
    if q.shape[1] != 2 * n:
        raise ValueError(f"expected {2 * n} joint columns, got {q.shape[1]}")
    m = q.shape[0]
    include = conv is BendConvention.INCLUDE_PROXIMAL

    R = np.broadcast_to(spec.base_pose.rotation, (m, 3, 3)).copy()
    p = np.broadcast_to(spec.base_pose.translation, (m, 3)).copy()

    phi_origin = np.empty((m, n, 3))
    phi_axis = np.empty((m, n, 3))
    theta_origin = np.empty((m, n, 3))
    theta_axis = np.empty((m, n, 3))
    theta_pris_coeff = np.zeros((m, n))
    segments = []
    seg_radius = []
    seg_unit = []

    for i, (unit, umode) in enumerate(zip(spec.units, mode)):
        phi = q[:, 2 * i]
        theta = q[:, 2 * i + 1]

        phi_origin[:, i] = p
        phi_axis[:, i] = R[:, :, 2]
        R = R @ _rz_batch(phi)

        z_dir = R[:, :, 2]
        base_end = p + unit.t * z_dir
        segments.append(np.stack([p, base_end], axis=1))
        seg_radius.append(unit.link_radius)
        seg_unit.append(i)
        p = base_end

        if umode == PRISMATIC:
            ext = 2.0 * unit.l * np.cos(0.5 * theta)
            tip = p + ext[:, None] * z_dir
            segments.append(np.stack([p, tip], axis=1))
            seg_radius.append(unit.link_radius)
            seg_unit.append(i)
            theta_origin[:, i] = p
            theta_axis[:, i] = z_dir
            theta_pris_coeff[:, i] = -unit.l * np.sin(0.5 * theta)
            p = tip
        else:
            if include:
                pivot = p + unit.l * z_dir
                segments.append(np.stack([p, pivot], axis=1))
                seg_radius.append(unit.link_radius)
                seg_unit.append(i)
            else:
                pivot = p
            theta_origin[:, i] = pivot
            theta_axis[:, i] = R[:, :, 1]
            R = R @ _ry_batch(theta)
            tip = pivot + unit.l * R[:, :, 2]
            segments.append(np.stack([pivot, tip], axis=1))
            seg_radius.append(unit.link_radius)
            seg_unit.append(i)
            p = tip

    return ChainFrames(
        mode=mode,
        conv=conv,
        ee_pos=p,
        ee_rot=R,
        phi_origin=phi_origin,
        phi_axis=phi_axis,
        theta_origin=theta_origin,
        theta_axis=theta_axis,
        theta_pris_coeff=theta_pris_coeff,
        segments=np.stack(segments, axis=1),
        segment_radius=np.array(seg_radius),
        segment_unit=np.array(seg_unit),
    )


def jacobian_batch(frames: ChainFrames) -> np.ndarray:
    """Translational Jacobians (M, 3, 2N) from precomputed frames."""
    m, n = frames.phi_origin.shape[:2]
    J = np.empty((m, 3, 2 * n))
    ee = frames.ee_pos
    bending = np.array([c == BENDING for c in frames.mode])
    for i in range(n):
        J[:, :, 2 * i] = np.cross(frames.phi_axis[:, i], ee - frames.phi_origin[:, i])
        if bending[i]:
            J[:, :, 2 * i + 1] = np.cross(frames.theta_axis[:, i], ee - frames.theta_origin[:, i])
        else:
            J[:, :, 2 * i + 1] = frames.theta_axis[:, i] * frames.theta_pris_coeff[:, i, None]
    return J


def state_to_q(state: ChainState) -> np.ndarray:
    """Flatten a ChainState to the (2N,) joint vector (phi1, theta1, ...)."""
    q = np.empty(2 * len(state))
    q[0::2] = state.phi
    q[1::2] = state.theta
    return q


def q_to_state(mode: str, q: np.ndarray) -> ChainState:
    q = np.asarray(q, dtype=float)
    return ChainState(mode=mode, phi=tuple(q[0::2]), theta=tuple(q[1::2]))


def chain_frames(
    spec: ChainSpec, state: ChainState, conv: BendConvention | None = None
) -> ChainFrames:
    """Single-configuration frames; raises on an invalid state."""
    violations = validate_state(spec, state)
    if violations:
        raise ValueError("invalid state: " + "; ".join(str(v) for v in violations))
    return chain_frames_batch(spec, state.mode, state_to_q(state)[None, :], conv)


def fk_generic(
    spec: ChainSpec, state: ChainState, conv: BendConvention | None = None
) -> RigidTransform:
    """Generic FK: composed rotation and world-frame end-effector position."""
    frames = chain_frames(spec, state, conv)
    return RigidTransform(frames.ee_rot[0], frames.ee_pos[0])


def jacobian(
    spec: ChainSpec, state: ChainState, conv: BendConvention | None = None
) -> np.ndarray:
    """Translational Jacobian (3, 2N) over (phi_i, theta_i), meters/radian."""
    return jacobian_batch(chain_frames(spec, state, conv))[0]
