"""Chain data model for prismatic-bending transformable (PBT) joint units.

A unit is a scissor mechanism with arm link length ``l`` sitting on a base
revolute motor of thickness ``t``.  In prismatic (P) mode the central angle
``theta`` controls the axial extension ``2*l*cos(theta/2)``; in bending (B)
mode the fully extended unit behaves like an elbow with bend angle ``theta``.
``phi`` is the base yaw below each unit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .transforms import RigidTransform

PRISMATIC = "P"
BENDING = "B"
MODES = (PRISMATIC, BENDING)

# Numeric guard for the "fully extended" transition state.
MODE_SWITCH_TOL = 1e-6

DEFAULT_THETA_P_MAX = math.pi - 1e-3
DEFAULT_THETA_B_RANGE = (-math.pi / 2.0, math.pi / 2.0)


@dataclass(frozen=True)
class UnitSizeSpec:
    """Catalog record for one manufactured unit size."""

    name: str
    linear_reduction: float
    revolute_reduction: float
    link1_length: float  # m
    link3_length: float  # m
    self_weight: float  # kg
    linear_payload: float  # kg

    def __post_init__(self):
        for attr in ("link1_length", "link3_length", "self_weight", "linear_payload"):
            if getattr(self, attr) <= 0.0:
                raise ValueError(f"{attr} must be strictly positive")
        if self.linear_reduction < 1.0 or self.revolute_reduction < 1.0:
            raise ValueError("reduction ratios must be >= 1")


_CATALOG = {
    "large": UnitSizeSpec("large", 3.0, 2.0, 0.16, 0.20, 5.0, 9.0),
    "medium": UnitSizeSpec("medium", 3.0, 2.0, 0.10, 0.12, 2.2, 4.0),
    "small": UnitSizeSpec("small", 2.0, 1.0, 0.05, 0.07, 0.5, 0.8),
}


def catalog_lookup(size_name: str) -> UnitSizeSpec:
    """Return the catalog record for ``large``, ``medium`` or ``small``."""
    try:
        return _CATALOG[size_name]
    except KeyError:
        raise KeyError(f"unknown unit size {size_name!r}; expected one of {sorted(_CATALOG)}") from None


@dataclass(frozen=True)
class UnitParams:
    """Kinematic parameters of one unit.

    ``l`` is the arm segment length (extension stroke is (0, 2l]),
    ``t`` the base motor thickness, ``link_radius`` the capsule radius
    used by the collision model.
    """

    l: float
    t: float = 0.0
    theta_p_max: float = DEFAULT_THETA_P_MAX
    theta_b_range: tuple[float, float] = DEFAULT_THETA_B_RANGE
    link_radius: float = 0.0  # 0 requests the l/8 default

    def __post_init__(self):
        if self.link_radius == 0.0:
            object.__setattr__(self, "link_radius", self.l / 8.0)
        lo, hi = self.theta_b_range
        object.__setattr__(self, "theta_b_range", (float(lo), float(hi)))
        if self.l <= 0.0:
            raise ValueError("arm length l must be strictly positive")
        if self.t < 0.0:
            raise ValueError("base thickness t must be non-negative")
        if not 0.0 < self.theta_p_max < math.pi:
            raise ValueError("theta_p_max must lie in (0, pi)")
        if not lo <= 0.0 <= hi:
            raise ValueError("theta_b_range must be a closed interval containing 0")
        if self.link_radius <= 0.0:
            raise ValueError("link_radius must be strictly positive")


def unit_params_from_spec(spec: UnitSizeSpec, **overrides) -> UnitParams:
    """Build UnitParams from a catalog record; keyword overrides win.

    Kinematic length defaults to link 1 (the straight scissor links); the
    L-shaped link 3 only matters for collision geometry, which the capsule
    radius approximates.
    """
    params = dict(
        l=spec.link1_length,
        t=0.0,
        theta_p_max=DEFAULT_THETA_P_MAX,
        theta_b_range=DEFAULT_THETA_B_RANGE,
        link_radius=spec.link1_length / 8.0,
    )
    unknown = set(overrides) - set(params)
    if unknown:
        raise TypeError(f"unknown UnitParams overrides: {sorted(unknown)}")
    params.update({k: v for k, v in overrides.items() if v is not None})
    return UnitParams(**params)


@dataclass(frozen=True)
class ChainSpec:
    """Serial chain of units, ordered base to tip."""

    units: tuple[UnitParams, ...]
    base_pose: RigidTransform = RigidTransform.identity()

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if len(self.units) == 0:
            raise ValueError("chain needs at least one unit")

    def __len__(self) -> int:
        return len(self.units)

    def max_reach(self) -> float:
        """Total length of the fully stretched chain."""
        return sum(u.t + 2.0 * u.l for u in self.units)


@dataclass(frozen=True)
class ChainState:
    """Per-unit mode assignment plus joint values (phi, theta)."""

    mode: str  # one symbol per unit from {P, B}, e.g. "PB"
    phi: tuple[float, ...]
    theta: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if any(m not in MODES for m in self.mode):
            raise ValueError(f"mode string {self.mode!r} must use only P and B")
        if not len(self.mode) == len(self.phi) == len(self.theta):
            raise ValueError("mode, phi and theta must have one entry per unit")

    def __len__(self) -> int:
        return len(self.mode)

    def with_values(self, phi=None, theta=None) -> "ChainState":
        return replace(
            self,
            phi=self.phi if phi is None else tuple(phi),
            theta=self.theta if theta is None else tuple(theta),
        )


def validate_mode_string(mode: str, n_units: int) -> str:
    if len(mode) != n_units or any(m not in MODES for m in mode):
        raise ValueError(f"mode string {mode!r} invalid for a {n_units}-unit chain")
    return mode


@dataclass(frozen=True)
class StateViolation:
    unit: int
    message: str

    def __str__(self) -> str:
        return f"unit {self.unit + 1}: {self.message}"


def validate_state(spec: ChainSpec, state: ChainState) -> list[StateViolation]:
    """Collect every joint-limit / mode violation; empty list means ok."""
    violations = []
    if len(state) != len(spec):
        return [StateViolation(-1, f"state has {len(state)} units, chain has {len(spec)}")]
    for i, (unit, mode) in enumerate(zip(spec.units, state.mode)):
        th = state.theta[i]
        if mode == PRISMATIC:
            if th < 0.0:
                violations.append(StateViolation(i, f"P-mode theta {th:.6g} is negative"))
            elif th > unit.theta_p_max:
                violations.append(
                    StateViolation(i, f"P-mode theta {th:.6g} exceeds limit {unit.theta_p_max:.6g}")
                )
        else:
            lo, hi = unit.theta_b_range
            if not lo <= th <= hi:
                violations.append(
                    StateViolation(i, f"B-mode theta {th:.6g} outside [{lo:.6g}, {hi:.6g}]")
                )
        if not -math.pi <= state.phi[i] < math.pi:
            violations.append(StateViolation(i, f"phi {state.phi[i]:.6g} outside [-pi, pi)"))
    return violations


def can_switch_mode(
    spec: ChainSpec,
    state: ChainState,
    unit_index: int,
    new_mode: str,
    tol: float = MODE_SWITCH_TOL,
) -> bool:
    """P<->B switching is legal only at full extension (theta = 0)."""
    if not 0 <= unit_index < len(spec):
        raise IndexError(f"unit_index {unit_index} out of range")
    if new_mode not in MODES:
        raise ValueError(f"new_mode must be P or B, got {new_mode!r}")
    if state.mode[unit_index] == new_mode:
        return True
    return abs(state.theta[unit_index]) <= tol


def motor_to_joint(
    motor_angle: float,
    linear_reduction: float,
    theta_p_max: float = math.pi,
    policy: str = "clamp",
) -> float:
    """Map a linear-drive motor angle to the central joint angle theta.

    The gears open the arm pair by the half-angle alpha = motor/reduction,
    and theta = pi - 2*alpha: with reduction 1 a quarter-turn sweeps the
    full stroke from folded (theta = pi) to fully extended (theta = 0).
    """
    if linear_reduction < 1.0:
        raise ValueError("linear_reduction must be >= 1")
    if policy not in ("clamp", "error"):
        raise ValueError("policy must be 'clamp' or 'error'")
    alpha = motor_angle / linear_reduction
    theta = math.pi - 2.0 * alpha
    if policy == "error" and not 0.0 <= theta <= theta_p_max:
        raise ValueError(f"motor angle {motor_angle:.6g} maps to theta {theta:.6g} outside [0, {theta_p_max:.6g}]")
    return min(max(theta, 0.0), theta_p_max)


# ---------------------------------------------------------------------------
# Chain specification files
# ---------------------------------------------------------------------------

_UNIT_KEYS = {"size", "l", "t", "theta_p_max", "theta_b_min", "theta_b_max", "link_radius"}


def _unit_from_dict(obj: dict, index: int) -> UnitParams:
    unknown = set(obj) - _UNIT_KEYS
    if unknown:
        raise ValueError(f"unit {index + 1}: unknown keys {sorted(unknown)}")
    b_min = obj.get("theta_b_min")
    b_max = obj.get("theta_b_max")
    if (b_min is None) != (b_max is None):
        raise ValueError(f"unit {index + 1}: theta_b_min and theta_b_max must be given together")
    b_range = None if b_min is None else (float(b_min), float(b_max))
    overrides = dict(
        l=obj.get("l"),
        t=obj.get("t"),
        theta_p_max=obj.get("theta_p_max"),
        theta_b_range=b_range,
        link_radius=obj.get("link_radius"),
    )
    size = obj.get("size")
    if size is not None:
        return unit_params_from_spec(catalog_lookup(size), **overrides)
    if overrides["l"] is None:
        raise ValueError(f"unit {index + 1}: 'l' is required when no catalog size is given")
    defaults = dict(t=0.0, theta_p_max=DEFAULT_THETA_P_MAX, theta_b_range=DEFAULT_THETA_B_RANGE, link_radius=0.0)
    merged = {k: (v if v is not None else defaults.get(k)) for k, v in overrides.items()}
    return UnitParams(**merged)


def chain_from_dict(obj: dict) -> ChainSpec:
    """Parse the chain JSON object {"units": [...], "base_pose": {...}}."""
    unknown = set(obj) - {"units", "base_pose"}
    if unknown:
        raise ValueError(f"chain: unknown keys {sorted(unknown)}")
    units_raw = obj.get("units")
    if not units_raw:
        raise ValueError("chain: 'units' must be a non-empty list")
    units = tuple(_unit_from_dict(u, i) for i, u in enumerate(units_raw))
    pose_raw = obj.get("base_pose")
    if pose_raw is None:
        base_pose = RigidTransform.identity()
    else:
        unknown = set(pose_raw) - {"xyz", "rpy"}
        if unknown:
            raise ValueError(f"base_pose: unknown keys {sorted(unknown)}")
        base_pose = RigidTransform.from_xyz_rpy(
            pose_raw.get("xyz", (0.0, 0.0, 0.0)), pose_raw.get("rpy", (0.0, 0.0, 0.0))
        )
    return ChainSpec(units=units, base_pose=base_pose)


def load_chain(path) -> ChainSpec:
    with open(Path(path)) as fh:
        return chain_from_dict(json.load(fh))
