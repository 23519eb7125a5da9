"""Scenario files: chain + obstacles + analysis defaults in one JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .chain import ChainSpec, chain_from_dict
from .geometry import AxisBox, obstacles_from_json
from .ik import DEFAULT_MODE_PREFERENCE
from .kinematics import BendConvention

PRESET_DIR = Path(__file__).parent / "presets"
_SCENARIO_KEYS = {"description", "chain", "obstacles", "defaults", "region_of_interest"}
_DEFAULTS_KEYS = {"n", "seed", "voxel_size", "conv", "mode_preference"}


@dataclass
class AnalysisDefaults:
    n: int = 10000
    seed: int = 0
    voxel_size: float = 0.02
    conv: BendConvention | None = None  # None = per-mode default
    mode_preference: tuple[str, ...] = DEFAULT_MODE_PREFERENCE


@dataclass
class Scenario:
    chain: ChainSpec
    obstacles: list = field(default_factory=list)
    defaults: AnalysisDefaults = field(default_factory=AnalysisDefaults)
    region_of_interest: AxisBox | None = None
    description: str = ""


def _parse_defaults(obj: dict) -> AnalysisDefaults:
    unknown = set(obj) - _DEFAULTS_KEYS
    if unknown:
        raise ValueError(f"defaults: unknown keys {sorted(unknown)}")
    out = AnalysisDefaults()
    if "n" in obj:
        out.n = int(obj["n"])
    if "seed" in obj:
        out.seed = int(obj["seed"])
    if "voxel_size" in obj:
        out.voxel_size = float(obj["voxel_size"])
    if obj.get("conv") is not None:
        out.conv = BendConvention.parse(obj["conv"])
    if "mode_preference" in obj:
        out.mode_preference = tuple(obj["mode_preference"])
    return out


def scenario_from_dict(obj: dict, base_dir: Path | None = None) -> Scenario:
    unknown = set(obj) - _SCENARIO_KEYS
    if unknown:
        raise ValueError(f"scenario: unknown keys {sorted(unknown)}")
    chain_raw = obj.get("chain")
    if chain_raw is None:
        raise ValueError("scenario: 'chain' is required")
    if isinstance(chain_raw, str):
        chain_path = Path(chain_raw)
        if not chain_path.is_absolute():
            chain_path = (base_dir or Path.cwd()) / chain_path
        with open(chain_path) as fh:
            chain = chain_from_dict(json.load(fh))
    else:
        chain = chain_from_dict(chain_raw)
    roi_raw = obj.get("region_of_interest")
    roi = None
    if roi_raw is not None:
        unknown = set(roi_raw) - {"min", "max"}
        if unknown:
            raise ValueError(f"region_of_interest: unknown keys {sorted(unknown)}")
        roi = AxisBox(roi_raw["min"], roi_raw["max"])
    return Scenario(
        chain=chain,
        obstacles=obstacles_from_json(obj.get("obstacles", [])),
        defaults=_parse_defaults(obj.get("defaults", {})),
        region_of_interest=roi,
        description=obj.get("description", ""),
    )


def resolve_scenario_path(name: str) -> Path:
    """A --scenario value is a filesystem path or a shipped preset name."""
    path = Path(name)
    if path.exists():
        return path
    preset = PRESET_DIR / (name if name.endswith(".json") else f"{name}.json")
    if preset.exists():
        return preset
    raise FileNotFoundError(f"no scenario file or preset named {name!r}")


def load_scenario(name: str) -> Scenario:
    path = resolve_scenario_path(name)
    with open(path) as fh:
        return scenario_from_dict(json.load(fh), base_dir=path.parent)
