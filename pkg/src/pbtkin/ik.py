"""Inverse kinematics: closed forms for PP/PB/BP, damped least squares for BB.

Closed-form solvers enumerate the discrete elbow branches, verify every
branch by substitution into the forward model, and report the remaining
yaw redundancy as free parameters.  Bending angles are canonicalized to be
non-negative; the mirrored solutions are reachable through the base yaw.
``select_collision_free`` instantiates branches over a uniform grid of the
free parameters and picks the maximum-clearance candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainSpec, ChainState, BENDING, PRISMATIC
from .geometry import clearance_batch
from .kinematics import (
    BendConvention,
    chain_frames_batch,
    default_convention,
    jacobian_batch,
)
from .transforms import wrap_angle

DEFAULT_MODE_PREFERENCE = ("PB", "BP", "BB", "PP")
DEFAULT_GRID = 64
_BRANCH_FK_TOL = 1e-9
_DEDUPE_TOL = 1e-3


class Unreachable(Exception):
    """Target admits no solution in the requested mode."""


class NotConverged(Exception):
    """Numerical IK failed from every seed; carries the best residual."""

    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True)
class FreeParam:
    """One redundant angle of a solution branch.

    The raw value lands in ``phi[unit]``; when ``coupled_unit`` is set the
    coupled yaw is slaved to keep ``phi[unit] + phi[coupled_unit] = total``.
    """

    name: str
    unit: int
    coupled_unit: int | None = None
    total: float = 0.0


@dataclass(frozen=True)
class IkBranch:
    label: str
    theta: tuple[float, ...]
    phi_fixed: dict = field(default_factory=dict)
    free: tuple[FreeParam, ...] = ()


@dataclass
class IkSolutionFamily:
    """Discrete branches plus free redundant parameters of one IK query."""

    mode: str
    target: np.ndarray  # world frame
    conv: BendConvention
    branches: list[IkBranch]

    def instantiate(self, branch: IkBranch, values=()) -> ChainState:
        """Concrete state from a branch and one value per free parameter."""
        if len(values) != len(branch.free):
            raise ValueError(f"branch has {len(branch.free)} free parameters, got {len(values)}")
        phi = [0.0] * len(self.mode)
        for unit, val in branch.phi_fixed.items():
            phi[unit] = float(wrap_angle(val))
        for fp, val in zip(branch.free, values):
            phi[fp.unit] = float(wrap_angle(val))
            if fp.coupled_unit is not None:
                phi[fp.coupled_unit] = float(wrap_angle(fp.total - val))
        return ChainState(mode=self.mode, phi=tuple(phi), theta=branch.theta)


def _local_target(spec: ChainSpec, target) -> np.ndarray:
    return spec.base_pose.inverse().apply(np.asarray(target, dtype=float).reshape(3))


def _state_q(state: ChainState) -> np.ndarray:
    q = np.empty(2 * len(state))
    q[0::2] = state.phi
    q[1::2] = state.theta
    return q


def _branch_fk_errors(spec: ChainSpec, family: IkSolutionFamily, states) -> np.ndarray:
    """Position error of candidate states; skips state validation so that
    out-of-limit elbow candidates can still be scored."""
    q = np.stack([_state_q(s) for s in states])
    frames = chain_frames_batch(spec, family.mode, q, family.conv)
    return np.linalg.norm(frames.ee_pos - family.target, axis=-1)


def _verified_branches(spec: ChainSpec, family: IkSolutionFamily, candidates) -> list[IkBranch]:
    """Keep candidate branches whose forward position actually hits the target."""
    if not candidates:
        return []
    states = [family.instantiate(b, [0.0] * len(b.free)) for b in candidates]
    errors = _branch_fk_errors(spec, family, states)
    kept = []
    for branch, err in zip(candidates, errors):
        if err > _BRANCH_FK_TOL:
            continue
        if any(
            max(abs(np.asarray(branch.theta) - np.asarray(other.theta))) < 1e-12
            for other in kept
        ):
            continue
        kept.append(branch)
    return kept


def _require_two_units(spec: ChainSpec, op: str):
    if len(spec) != 2:
        raise ValueError(f"{op} is defined for 2-unit chains, got {len(spec)} units")


def ik_pp(spec: ChainSpec, target, tolerance: float = 1e-9) -> IkSolutionFamily:
    """All-prismatic IK: target must sit on the base axis within tolerance.

    The needed extension is split so each unit extends the same fraction of
    its own stroke, which makes every theta equal to 2*acos(fraction).
    """
    mode = PRISMATIC * len(spec)
    p = _local_target(spec, target)
    r = math.hypot(p[0], p[1])
    if r > tolerance:
        raise Unreachable(f"target is {r:.3g} m off the base axis")
    t_sum = sum(u.t for u in spec.units)
    stroke = sum(2.0 * u.l for u in spec.units)
    frac = (p[2] - t_sum) / stroke
    frac_min = max(math.cos(0.5 * u.theta_p_max) for u in spec.units)
    if frac > 1.0 + tolerance / stroke or frac < frac_min - tolerance / stroke:
        raise Unreachable(
            f"z {p[2]:.6g} outside reachable [{t_sum + frac_min * stroke:.6g}, {t_sum + stroke:.6g}]"
        )
    theta = 2.0 * math.acos(min(max(frac, frac_min), 1.0))
    branch = IkBranch(
        label="axial",
        theta=(theta,) * len(spec),
        free=tuple(FreeParam(f"phi{i + 1}", unit=i) for i in range(len(spec))),
    )
    family = IkSolutionFamily(
        mode=mode,
        target=np.asarray(target, dtype=float).reshape(3),
        conv=default_convention(mode),
        branches=[branch],
    )
    return family


def ik_pb(spec: ChainSpec, target, conv: BendConvention | None = None) -> IkSolutionFamily:
    """Two-unit PB closed form: lower unit prismatic, upper unit bending.

    Only the yaw sum phi1 + phi2 is determined; its split is the free
    parameter.  Up to two elbow branches survive the P-mode constraint
    theta1 in [0, theta_p_max].
    """
    _require_two_units(spec, "ik_pb")
    if conv is None:
        conv = default_convention("PB")
    u1, u2 = spec.units
    p = _local_target(spec, target)
    x, y, z = p
    r = math.hypot(x, y)
    if r > u2.l * (1.0 + 1e-9):
        raise Unreachable(f"radial distance {r:.6g} exceeds the upper arm length {u2.l:.6g}")
    psi = math.atan2(y, x)  # atan2(0, 0) = 0 picks the canonical on-axis yaw
    proximal = u2.l if conv is BendConvention.INCLUDE_PROXIMAL else 0.0
    elbow = math.asin(min(r / u2.l, 1.0))
    candidates = []
    for label, theta2 in (("elbow-A", elbow), ("elbow-B", math.pi - elbow)):
        arg = (z - u1.t - u2.t - proximal - u2.l * math.cos(theta2)) / (2.0 * u1.l)
        if not -1.0 - 1e-12 <= arg <= 1.0 + 1e-12:
            continue
        theta1 = 2.0 * math.acos(min(max(arg, -1.0), 1.0))
        if theta1 > u1.theta_p_max + 1e-9:
            continue
        candidates.append(
            IkBranch(
                label=label,
                theta=(theta1, theta2),
                free=(FreeParam("phi1", unit=0, coupled_unit=1, total=psi),),
            )
        )
    family = IkSolutionFamily(
        mode="PB", target=np.asarray(target, dtype=float).reshape(3), conv=conv, branches=[]
    )
    family.branches = _verified_branches(spec, family, candidates)
    if not family.branches:
        raise Unreachable("no elbow branch satisfies the prismatic stroke limits")
    return family


def ik_bp(spec: ChainSpec, target, conv: BendConvention | None = None) -> IkSolutionFamily:
    """Two-unit BP closed form: lower unit bending, upper unit prismatic.

    The upper yaw phi2 never moves the end-effector and is reported as the
    free parameter.  Both elbow candidates for theta1 are enumerated; the
    forward-verification step keeps the one consistent with the target
    height (they coincide at theta1 = pi/2).
    """
    _require_two_units(spec, "ik_bp")
    if conv is None:
        conv = default_convention("BP")
    u1, u2 = spec.units
    p = _local_target(spec, target)
    x, y, z = p
    rho = math.hypot(x, y)
    pivot_z = u1.t + (u1.l if conv is BendConvention.INCLUDE_PROXIMAL else 0.0)
    d = math.sqrt(rho * rho + (z - pivot_z) ** 2)
    arg = (d - u1.l - u2.t) / (2.0 * u2.l)
    if arg > 1.0 + 1e-12:
        raise Unreachable(f"target distance {d:.6g} exceeds maximum assembly length")
    if arg < -1.0:
        raise Unreachable(f"target distance {d:.6g} below minimum assembly length")
    theta2 = 2.0 * math.acos(min(arg, 1.0))
    if theta2 > u2.theta_p_max + 1e-9:
        raise Unreachable(
            f"required extension lies under the prismatic stroke floor (theta2 {theta2:.6g})"
        )
    phi1 = math.atan2(y, x)
    elbow = math.asin(min(rho / d, 1.0)) if d > 0.0 else 0.0
    candidates = [
        IkBranch(
            label=label,
            theta=(theta1, theta2),
            phi_fixed={0: phi1},
            free=(FreeParam("phi2", unit=1),),
        )
        for label, theta1 in (("elbow-A", elbow), ("elbow-B", math.pi - elbow))
    ]
    family = IkSolutionFamily(
        mode="BP", target=np.asarray(target, dtype=float).reshape(3), conv=conv, branches=[]
    )
    family.branches = _verified_branches(spec, family, candidates)
    if not family.branches:
        raise Unreachable("no bend branch reproduces the target height")
    return family


def _default_seeds(spec: ChainSpec, mode: str) -> np.ndarray:
    """Multi-start lattice: coarse yaw fan, central angles at half range."""
    n = len(mode)
    theta_seed = []
    for unit, umode in zip(spec.units, mode):
        if umode == BENDING:
            theta_seed.append(0.5 * unit.theta_b_range[1])
        else:
            theta_seed.append(0.5 * unit.theta_p_max)
    phi1_vals = (-0.75 * math.pi, -0.25 * math.pi, 0.25 * math.pi, 0.75 * math.pi)
    phi2_vals = (-0.5 * math.pi, 0.5 * math.pi) if n >= 2 else (0.0,)
    seeds = []
    for p1 in phi1_vals:
        for p2 in phi2_vals:
            phi = [p1, p2] + [0.0] * (n - 2) if n >= 2 else [p1]
            q = np.empty(2 * n)
            q[0::2] = phi[:n]
            q[1::2] = theta_seed
            seeds.append(q)
    return np.stack(seeds)


def ik_dls(
    spec: ChainSpec,
    mode: str,
    target,
    seeds: np.ndarray | None = None,
    max_iters: int = 200,
    damping: float = 0.05,
    tolerance: float = 1e-6,
    conv: BendConvention | None = None,
    dedupe_tol: float = _DEDUPE_TOL,
) -> IkSolutionFamily:
    """Damped least-squares position IK from multiple seeds.

    Works for any mode string and unit count; bending angles are clamped to
    their range each step and yaws are wrapped.  All distinct converged
    solutions are returned as branches.
    """
    if conv is None:
        conv = default_convention(mode)
    target_w = np.asarray(target, dtype=float).reshape(3)
    q = _default_seeds(spec, mode) if seeds is None else np.atleast_2d(np.asarray(seeds, dtype=float)).copy()
    k, n2 = q.shape
    if n2 != 2 * len(spec):
        raise ValueError(f"seeds must have {2 * len(spec)} columns")
    lam2 = damping * damping
    active = np.ones(k, dtype=bool)
    err = np.full(k, np.inf)
    eye3 = np.eye(3)
    for _ in range(max_iters):
        frames = chain_frames_batch(spec, mode, q, conv)
        e = target_w - frames.ee_pos
        err = np.linalg.norm(e, axis=-1)
        active &= err >= tolerance
        if not active.any():
            break
        J = jacobian_batch(frames)[active]
        jjt = np.einsum("kin,kjn->kij", J, J) + lam2 * eye3
        y = np.linalg.solve(jjt, e[active])
        dq = np.einsum("kin,ki->kn", J, y)
        q_new = q[active] + dq
        for i, (unit, umode) in enumerate(zip(spec.units, mode)):
            lo, hi = (0.0, unit.theta_p_max) if umode == PRISMATIC else unit.theta_b_range
            q_new[:, 2 * i + 1] = np.clip(q_new[:, 2 * i + 1], lo, hi)
            q_new[:, 2 * i] = wrap_angle(q_new[:, 2 * i])
        q[active] = q_new
    frames = chain_frames_batch(spec, mode, q, conv)
    err = np.linalg.norm(target_w - frames.ee_pos, axis=-1)
    order = np.argsort(err, kind="stable")
    solutions = []
    for idx in order:
        if err[idx] >= tolerance:
            break
        cand = q[idx]
        if any(np.max(np.abs(wrap_angle(cand - kept))) < dedupe_tol for kept in solutions):
            continue
        solutions.append(cand.copy())
    if not solutions:
        raise NotConverged(
            f"no seed converged below {tolerance:.3g} m (best residual {err.min():.3g} m)",
            best_residual=float(err.min()),
        )
    branches = [
        IkBranch(
            label=f"dls-{i}",
            theta=tuple(sol[1::2]),
            phi_fixed={u: float(sol[2 * u]) for u in range(len(spec))},
        )
        for i, sol in enumerate(solutions)
    ]
    return IkSolutionFamily(mode=mode, target=target_w, conv=conv, branches=branches)


def ik_bb(spec: ChainSpec, target, **kwargs) -> IkSolutionFamily:
    """Both units bending: redundant 4-DOF numerical IK (see ``ik_dls``)."""
    _require_two_units(spec, "ik_bb")
    return ik_dls(spec, "BB", target, **kwargs)


@dataclass
class SelectionResult:
    """Best candidate of a grid-instantiated family.

    ``selected`` is None when even the best candidate touches an obstacle;
    the violating best candidate stays available for diagnostics.
    """

    selected: ChainState | None
    best_state: ChainState
    best_clearance: float
    branch_index: int
    grid_index: int
    n_candidates: int


def select_collision_free(
    spec: ChainSpec,
    family: IkSolutionFamily,
    obstacles,
    n_grid: int = DEFAULT_GRID,
) -> SelectionResult:
    """Argmax-clearance candidate over every branch and free-parameter grid.

    Deterministic tie-break: lowest branch index, then lowest grid index
    (grids are lexicographic over the free parameters, 64 points per
    parameter over [-pi, pi) by default).
    """
    if n_grid <= 0:
        raise ValueError("grid resolution must be positive")
    grid = np.linspace(-math.pi, math.pi, n_grid, endpoint=False)
    best = None  # (clearance, branch_idx, grid_idx, state)
    for b_idx, branch in enumerate(family.branches):
        if branch.free:
            axes = np.meshgrid(*[grid] * len(branch.free), indexing="ij")
            combos = np.stack([ax.ravel() for ax in axes], axis=-1)
        else:
            combos = np.zeros((1, 0))
        states = [family.instantiate(branch, vals) for vals in combos]
        q = np.stack([_state_q(s) for s in states])
        frames = chain_frames_batch(spec, family.mode, q, family.conv)
        clear = clearance_batch(frames, obstacles)
        g_idx = int(np.argmax(clear))
        if best is None or clear[g_idx] > best[0]:
            best = (float(clear[g_idx]), b_idx, g_idx, states[g_idx], len(states))
    clearance, b_idx, g_idx, state, _ = best
    total = sum(
        (n_grid ** len(b.free)) if b.free else 1 for b in family.branches
    )
    return SelectionResult(
        selected=state if clearance > 0.0 else None,
        best_state=state,
        best_clearance=clearance,
        branch_index=b_idx,
        grid_index=g_idx,
        n_candidates=total,
    )


@dataclass
class IkQuery:
    """Target plus obstacle context for the mode-dispatching solver."""

    target: np.ndarray
    obstacles: tuple = ()
    tolerance: float = 1e-6
    mode_preference: tuple[str, ...] = DEFAULT_MODE_PREFERENCE
    n_grid: int = DEFAULT_GRID

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float).reshape(3)
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")


@dataclass
class SolveResult:
    mode: str | None
    state: ChainState | None
    clearance: float
    fk_error: float
    failures: dict

    @property
    def ok(self) -> bool:
        return self.state is not None


def _mode_family(spec: ChainSpec, mode: str, query: IkQuery) -> IkSolutionFamily:
    if mode == "PP" or set(mode) == {"P"}:
        return ik_pp(spec, query.target, tolerance=query.tolerance)
    if mode == "PB":
        return ik_pb(spec, query.target)
    if mode == "BP":
        return ik_bp(spec, query.target)
    return ik_dls(spec, mode, query.target, tolerance=query.tolerance)


def solve(spec: ChainSpec, query: IkQuery) -> SolveResult:
    """Try modes in preference order, return the first collision-free hit.

    Prismatic-first default ordering: prismatic units keep the lateral
    footprint small, so PB is attempted before the bending-heavy modes.
    """
    _require_two_units(spec, "solve")
    failures: dict = {}
    for mode in query.mode_preference:
        try:
            family = _mode_family(spec, mode, query)
        except Unreachable as exc:
            failures[mode] = f"unreachable: {exc}"
            continue
        except NotConverged as exc:
            failures[mode] = f"not converged: {exc}"
            continue
        selection = select_collision_free(spec, family, query.obstacles, n_grid=query.n_grid)
        if selection.selected is None:
            failures[mode] = f"collision-blocked: best clearance {selection.best_clearance:.6g} m"
            continue
        err = _branch_fk_errors(spec, family, [selection.selected])[0]
        return SolveResult(
            mode=mode,
            state=selection.selected,
            clearance=selection.best_clearance,
            fk_error=float(err),
            failures=failures,
        )
    return SolveResult(mode=None, state=None, clearance=-np.inf, fk_error=np.inf, failures=failures)
