"""Manipulability, Monte Carlo workspace sampling and connectivity reports."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import BENDING, ChainSpec, ChainState
from .geometry import clearance_batch, obstacles_digest
from .kinematics import (
    BendConvention,
    chain_frames_batch,
    default_convention,
    jacobian,
    jacobian_batch,
)
from .rng import uniform_block

MODE_ORDER = ("PP", "PB", "BP", "BB")
DEFAULT_VOXEL = 0.02
_CHUNK = 4096


def sigma_from_jacobian(J: np.ndarray, method: str = "det") -> float:
    """Translational manipulability sqrt(det(J J^T)) of one Jacobian.

    ``method='eigen'`` multiplies the eigenvalues of J J^T instead; the two
    agree to rounding and the redundancy is kept as a cross-check.
    """
    jjt = J @ J.T
    if method == "det":
        return math.sqrt(max(float(np.linalg.det(jjt)), 0.0))
    if method == "eigen":
        eig = np.clip(np.linalg.eigvalsh(jjt), 0.0, None)
        return math.sqrt(float(np.prod(eig)))
    raise ValueError("method must be 'det' or 'eigen'")


def manipulability(
    spec: ChainSpec,
    state: ChainState,
    conv: BendConvention | None = None,
    method: str = "det",
) -> float:
    """Manipulability at one configuration; 0 at any rank-deficient pose."""
    return sigma_from_jacobian(jacobian(spec, state, conv), method)


def _sigma_batch(J: np.ndarray) -> np.ndarray:
    jjt = np.einsum("mik,mjk->mij", J, J)
    return np.sqrt(np.maximum(np.linalg.det(jjt), 0.0))


def joint_bounds(spec: ChainSpec, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (phi1, theta1, ...) sampling bounds for a mode string."""
    lows, highs = [], []
    for unit, umode in zip(spec.units, mode):
        lows.append(-math.pi)
        highs.append(math.pi)
        if umode == BENDING:
            lo, hi = unit.theta_b_range
        else:
            lo, hi = 0.0, unit.theta_p_max
        lows.append(lo)
        highs.append(hi)
    return np.array(lows), np.array(highs)


@dataclass
class WorkspaceSampleSet:
    """Collision-filtered end-effector cloud with per-sample configuration."""

    mode: str
    conv: BendConvention
    positions: np.ndarray  # (K, 3)
    states: np.ndarray  # (K, 2N), columns phi1,theta1,phi2,theta2,...
    sigma: np.ndarray  # (K,)
    requested: int
    seed: int
    obstacle_digest: str

    @property
    def kept(self) -> int:
        return self.positions.shape[0]


def thread_cap() -> int:
    """Worker cap from PBT_KIN_THREADS (0 or unset = auto)."""
    raw = os.environ.get("PBT_KIN_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"PBT_KIN_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError("PBT_KIN_THREADS must be >= 0")
    return value if value > 0 else (os.cpu_count() or 1)


def _eval_chunk(spec, mode, q, conv, obstacles):
    frames = chain_frames_batch(spec, mode, q, conv)
    clear = clearance_batch(frames, obstacles)
    sigma = _sigma_batch(jacobian_batch(frames))
    return frames.ee_pos, clear, sigma


def sample_workspace(
    spec: ChainSpec,
    mode: str,
    n: int,
    seed: int,
    obstacles=(),
    conv: BendConvention | None = None,
) -> WorkspaceSampleSet:
    """Draw n states uniformly over joint limits, keep the collision-free ones.

    The draw itself ignores the obstacle set, so a cluttered run is a
    pointwise filter of the free-space run with the same seed.
    """
    if n <= 0:
        raise ValueError("sample count must be positive")
    if conv is None:
        conv = default_convention(mode)
    lows, highs = joint_bounds(spec, mode)
    q = uniform_block(seed, n, lows, highs)
    chunks = [q[i : i + _CHUNK] for i in range(0, n, _CHUNK)]
    cap = thread_cap()
    if cap > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            results = list(pool.map(lambda c: _eval_chunk(spec, mode, c, conv, obstacles), chunks))
    else:
        results = [_eval_chunk(spec, mode, c, conv, obstacles) for c in chunks]
    pos = np.concatenate([r[0] for r in results])
    clear = np.concatenate([r[1] for r in results])
    sigma = np.concatenate([r[2] for r in results])
    keep = clear >= 0.0
    return WorkspaceSampleSet(
        mode=mode,
        conv=conv,
        positions=pos[keep],
        states=q[keep],
        sigma=sigma[keep],
        requested=n,
        seed=seed,
        obstacle_digest=obstacles_digest(list(obstacles)),
    )


def manip_map(
    spec: ChainSpec,
    mode: str,
    n: int,
    seed: int,
    conv: BendConvention | None = None,
) -> WorkspaceSampleSet:
    """Obstacle-free manipulability map: every sample kept, sigma attached."""
    return sample_workspace(spec, mode, n, seed, obstacles=(), conv=conv)


# ---------------------------------------------------------------------------
# Voxel connectivity
# ---------------------------------------------------------------------------


@dataclass
class ConnectivityReport:
    """Connected components of the occupied voxel grid (26-neighborhood)."""

    voxel_size: float
    voxels: np.ndarray  # (V, 3) integer indices, lexicographically sorted
    labels: np.ndarray  # (V,) component label per voxel
    component_volumes: np.ndarray  # voxel count * voxel_size^3 per label

    @property
    def n_components(self) -> int:
        return len(self.component_volumes)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


_NEIGHBOR_OFFSETS = [
    (i, j, k)
    for i in (-1, 0, 1)
    for j in (-1, 0, 1)
    for k in (-1, 0, 1)
    if (i, j, k) > (0, 0, 0)  # half the 26-neighborhood; the rest is symmetric
]


def connectivity(samples: WorkspaceSampleSet, voxel_size: float = DEFAULT_VOXEL) -> ConnectivityReport:
    """Label the occupied voxels of a sample cloud by connected component.

    Labels are deterministic: component 0 owns the lexicographically first
    voxel, and so on.
    """
    if voxel_size <= 0.0:
        raise ValueError("voxel_size must be positive")
    if samples.kept == 0:
        raise ValueError("cannot compute connectivity of an empty sample set")
    idx = np.floor(samples.positions / voxel_size).astype(np.int64)
    voxels = np.unique(idx, axis=0)  # sorts lexicographically
    lookup = {tuple(v): i for i, v in enumerate(voxels)}
    uf = _UnionFind(len(voxels))
    for i, v in enumerate(voxels):
        for off in _NEIGHBOR_OFFSETS:
            j = lookup.get((v[0] + off[0], v[1] + off[1], v[2] + off[2]))
            if j is not None:
                uf.union(i, j)
    labels = np.empty(len(voxels), dtype=np.int64)
    root_to_label: dict = {}
    for i in range(len(voxels)):
        root = uf.find(i)
        labels[i] = root_to_label.setdefault(root, len(root_to_label))
    counts = np.bincount(labels)
    return ConnectivityReport(
        voxel_size=voxel_size,
        voxels=voxels,
        labels=labels,
        component_volumes=counts * voxel_size**3,
    )


def workspace_volume(samples: WorkspaceSampleSet, voxel_size: float = DEFAULT_VOXEL) -> float:
    """Occupied-voxel volume estimate of a sample cloud."""
    if samples.kept == 0:
        return 0.0
    idx = np.floor(samples.positions / voxel_size).astype(np.int64)
    return len(np.unique(idx, axis=0)) * voxel_size**3


def compare_modes(
    spec: ChainSpec,
    obstacles=(),
    n: int = 10000,
    seed: int = 0,
    voxel_size: float = DEFAULT_VOXEL,
    region_of_interest=None,
    conv: BendConvention | None = None,
) -> dict:
    """Same-seed sampling study across all four modes of a two-unit chain.

    ``region_of_interest`` is an AxisBox; the report counts collision-free
    end-effector samples inside it per mode.
    """
    report = {
        "n": n,
        "seed": seed,
        "voxel_size": voxel_size,
        "obstacle_digest": obstacles_digest(list(obstacles)),
        "roi": region_of_interest.to_json() if region_of_interest is not None else None,
        "modes": {},
    }
    for mode in MODE_ORDER:
        ss = sample_workspace(spec, mode, n, seed, obstacles, conv)
        entry = {
            "requested": ss.requested,
            "kept": ss.kept,
            "volume": workspace_volume(ss, voxel_size),
            "components": connectivity(ss, voxel_size).n_components if ss.kept else 0,
            "sigma_max": float(ss.sigma.max()) if ss.kept else 0.0,
            "sigma_mean": float(ss.sigma.mean()) if ss.kept else 0.0,
        }
        if region_of_interest is not None:
            inside = np.all(
                (ss.positions >= region_of_interest.min_corner)
                & (ss.positions <= region_of_interest.max_corner),
                axis=1,
            )
            entry["roi_count"] = int(inside.sum())
        report["modes"][mode] = entry
    return report
