"""Experiment configuration: YAML loading, validation, defaults and content hash."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .basemap import Params
from .perturbation import VARIANTS, PerturbedMapConfig
from .smooth import PerturbationSchedule

SCENARIOS = (
    "verify-f0", "transition-scan", "perturbation-check", "lyapunov-scan", "segments",
    "exponent-bound", "entropy-scan", "horseshoe", "remark13-exponent", "lipschitz",
)

# per-scenario defaults; any key may be overridden in the config file
DEFAULTS: dict[str, dict] = {
    "verify-f0": {
        "corner_grid": 50, "corner_tol": 1e-7,
        "equivariance_points": 1000, "equivariance_tol": 1e-7,
        "identity_points": 1000, "anchor_tol": 1e-6,
    },
    "transition-scan": {
        "L_values": [10, 20, 40, 80], "tau_points": 8, "r2_min": 0.99,
        "contraction_L": [20, 40], "x1_values": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5], "x2_points": 40,
        "u_rel_tol": 0.05,
    },
    "perturbation-check": {"majder_samples": 100_000, "extra_schedules": [{"n0": 8, "T": {8: 64}}]},
    "lyapunov-scan": {
        "orbits": 100, "steps": 10_000, "lam_tol": 0.02,
        "cocycle_seeds": 100, "cocycle_steps": 20, "cocycle_tol": 1e-8, "histogram_bins": 20,
    },
    "segments": {"orbits": 10, "steps": 10_000, "synthetic": 200, "max_segments": 12},
    "exponent-bound": {
        "itineraries": 50, "length": 9, "chi": 1.0, "A": math.e,
        "f0_orbits": 10, "f0_steps": 10_000,
    },
    "entropy-scan": {
        "f0_samples": 400, "f0_eps": [0.05], "f0_n": [10, 20, 40], "f0_slope_tol": 0.02,
        "horseshoe": True, "horseshoe_n": [40, 80], "horseshoe_rel_tol": 0.15,
    },
    "horseshoe": {"pair_budget": 20, "coarse": 64, "control": True},
    "remark13-exponent": {"n": 4, "T_values": [200, 400, 800], "returns": 6, "rel_tol": 0.10},
    "lipschitz": {
        "disks": 4, "rho0": 0.25, "pairs": 100_000, "bilip_max": 10.0,
        "entropy_tol": 0.03, "word_length": 12, "blocks": 6,
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


@dataclass
class ExperimentConfig:
    params: Params
    schedule: PerturbationSchedule
    variant: str
    seed: int
    scenarios: dict[str, dict] = field(default_factory=dict)
    out: str = "results"
    tree: dict = field(default_factory=dict)  # canonical form, the hashed content

    def map_config(self, variant: str | None = None) -> PerturbedMapConfig:
        return PerturbedMapConfig(self.params, self.schedule, variant or self.variant)

    def options(self, scenario: str) -> dict:
        opts = copy.deepcopy(DEFAULTS[scenario])
        opts.update(self.scenarios.get(scenario, {}))
        return opts

    @property
    def hash(self) -> str:
        return config_digest(self.tree)


def config_digest(tree: dict) -> str:
    blob = json.dumps(tree, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _schedule(node: dict) -> PerturbationSchedule:
    n0 = int(node.get("n0", 2))
    r = float(node.get("r", 1.0))
    if "T" in node:
        T = {int(k): int(v) for k, v in dict(node["T"]).items()}
        return PerturbationSchedule(n0=n0, r=r, T=T)
    n_max = int(node.get("n_max", n0))
    T0 = node.get("T0")
    return PerturbationSchedule.linear(n0, r, n_max, None if T0 is None else int(T0))


def build_config(tree: dict) -> ExperimentConfig:
    """Validate a parsed config tree; raises ConfigError with a readable message."""
    if not isinstance(tree, dict):
        raise ConfigError("the config must be a mapping")
    unknown = set(tree) - {"params", "schedule", "variant", "seed", "scenarios", "out"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        p = dict(tree.get("params") or {})
        params = Params(K=float(p.get("K", 50.0)), L=float(p.get("L", 20.0)))
        schedule = _schedule(dict(tree.get("schedule") or {}))
        variant = str(tree.get("variant", "g"))
        if variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {sorted(VARIANTS)}")
        PerturbedMapConfig(params, schedule, variant)
        seed = int(tree.get("seed", 0))
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    scen = dict(tree.get("scenarios") or {})
    for name, opts in scen.items():
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario section {name!r}")
        if not isinstance(opts, dict):
            raise ConfigError(f"scenario section {name!r} must be a mapping")
        extra = set(opts) - set(DEFAULTS[name])
        if extra:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    canon = {
        "params": {"K": params.K, "L": params.L},
        "schedule": {"n0": schedule.n0, "r": schedule.r,
                     "T": {str(n): int(t) for n, t in sorted(schedule.T.items())}},
        "variant": variant, "seed": seed,
        # effective options, so spelling out a default does not change the hash
        "scenarios": {k: _canon(DEFAULTS[k] | scen.get(k, {})) for k in sorted(SCENARIOS)},
    }
    return ExperimentConfig(params, schedule, variant, seed, scen, str(tree.get("out", "results")), canon)


def _canon(x):
    if isinstance(x, dict):
        return {str(k): _canon(v) for k, v in sorted(x.items(), key=lambda kv: str(kv[0]))}
    if isinstance(x, (list, tuple)):
        return [_canon(v) for v in x]
    if isinstance(x, float):
        return float(x)
    return x


def load_tree(path: str | Path) -> dict:
    """Parse a YAML config file into a plain tree (validation happens in build_config)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}") from exc
    return {} if tree is None else tree


def load_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    tree = load_tree(path)
    if not isinstance(tree, dict):
        raise ConfigError("the config must be a mapping")
    return build_config(tree if seed is None else tree | {"seed": seed})


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for job ``index``; worker count never enters."""
    return np.random.Generator(np.random.Philox(key=(int(seed) % 2**64) + (int(index) << 64)))
