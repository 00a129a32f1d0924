"""Experiment configuration files (JSON, schema 1).

Every object is validated against a fixed key set; unknown keys are errors so
that a config that runs is a config that means what it says.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from ..asymptotics import REGIMES, GeneralSetSummary
from ..geometry import ShapeSpec
from ..montecarlo import SimConfig
from ..specfun import DomainError

SCHEMA = 1

FORMULAS = ("q_ball", "q_ball_tail", "q_ball_exact_d3", "q_ball_bound", "q_ball_smalltime",
            "hit_within_t_ball", "hit_within_t_disc", "q_general", "tail_prob", "cdf_prob",
            "sausage_expect", "sausage_disc_refined")
ESTIMATES = ("hit_probability", "hit_density", "capacity", "escape_prob", "green_e", "robin", "hinf",
             "sausage", "lambda_profile", "site_law", "cameron_martin")
QUANTITIES = ("density", "hit_within", "sausage")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


def _keys(obj: Any, where: str, required: set, optional: set = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(obj) - required - set(optional)
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing field(s) in {where}: {', '.join(sorted(missing))}")
    return obj


def _floats(values: Any, where: str) -> tuple[float, ...]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where} must be a non-empty list of numbers")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{where} contains a non-numeric entry {v!r}")
        out.append(float(v))
    return tuple(out)


@dataclass(frozen=True)
class Thresholds:
    small_v_max: float = 0.1
    order_v_min: float = 0.1
    order_v_max: float = 10.0
    large_v_min: float = 10.0
    max_abs_z: float = 3.0
    ratio_lo: float = 0.9
    ratio_hi: float = 1.1

    @classmethod
    def from_json(cls, obj: dict) -> "Thresholds":
        _keys(obj, "thresholds", set(), set(cls.__dataclass_fields__))
        return cls(**{k: float(v) for k, v in obj.items()})


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    shape: ShapeSpec
    regime: str
    xs: tuple[float, ...]
    ts: tuple[float, ...]
    sim: SimConfig
    formulas: tuple[str, ...] = ()
    estimates: tuple[str, ...] = ()
    compare: tuple[str, ...] = ()
    summary: Optional[GeneralSetSummary] = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    time_window: float = 0.05
    voxel: Optional[float] = None
    angular_bins: int = 12
    v_values: tuple[float, ...] = ()
    out: str = "out"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def d(self) -> int:
        return self.shape.d

    def grid(self) -> list[tuple[float, float]]:
        return [(x, t) for x in self.xs for t in self.ts]

    @property
    def ball_radius(self) -> Optional[float]:
        """Radius when the shape is a single ball centred at the origin."""
        from ..geometry import Ball
        prims = self.shape.primitives
        if len(prims) == 1 and isinstance(prims[0], Ball) and not any(prims[0].center):
            return prims[0].radius
        return None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, sim=self.sim.with_(seed=int(seed)))

    def with_workers(self, workers: int) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, sim=self.sim.with_(workers=int(workers)))

    def scaled(self, r: float) -> "ExperimentConfig":
        """Config for the dilated set r A with (x, t) -> (r x, r^2 t)."""
        from dataclasses import replace
        from ..geometry import scale
        return replace(self, shape=scale(self.shape, r), xs=tuple(r * x for x in self.xs),
                       ts=tuple(r * r * t for t in self.ts),
                       summary=None if self.summary is None else self.summary.scaled(r, self.d),
                       voxel=None if self.voxel is None else r * self.voxel)

    def check_regime(self):
        th = self.thresholds
        vs = [x / t for x, t in self.grid()]
        if self.regime == "small_v" and max(vs) > th.small_v_max:
            raise ConfigError(f"regime small_v needs x/t <= {th.small_v_max}, grid reaches {max(vs)}")
        if self.regime == "large_v" and min(vs) < th.large_v_min:
            raise ConfigError(f"regime large_v needs x/t >= {th.large_v_min}, grid reaches {min(vs)}")
        if self.regime == "order_v" and not (th.order_v_min <= min(vs) and max(vs) <= th.order_v_max):
            raise ConfigError(f"regime order_v needs x/t in [{th.order_v_min}, {th.order_v_max}]")


_TOP = {"schema", "name", "shape", "regime", "grid", "cfg"}
_TOP_OPT = {"formulas", "estimates", "compare", "summary", "thresholds", "time_window", "voxel",
            "angular_bins", "v_values", "outputs"}
_CFG = {"step", "horizon", "n_paths"}
_CFG_OPT = {"seed", "workers", "chunk_size", "k_ratio"}


def parse_config(obj: Any) -> ExperimentConfig:
    obj = _keys(obj, "config", _TOP, _TOP_OPT)
    if obj["schema"] != SCHEMA:
        raise ConfigError(f"unsupported schema {obj['schema']!r}; expected {SCHEMA}")
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError("name must be a non-empty string")
    try:
        shape = ShapeSpec.from_json(obj["shape"])
    except (DomainError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid shape: {exc}") from None
    regime = obj["regime"]
    if regime not in REGIMES:
        raise ConfigError(f"regime must be one of {REGIMES}")
    grid = _keys(obj["grid"], "grid", {"x", "t"})
    xs, ts = _floats(grid["x"], "grid.x"), _floats(grid["t"], "grid.t")
    if any(t <= 0 for t in ts) or any(x < 0 for x in xs):
        raise ConfigError("grid needs t > 0 and x >= 0")
    cfg = _keys(obj["cfg"], "cfg", _CFG, _CFG_OPT)
    try:
        sim = SimConfig(step=float(cfg["step"]), horizon=float(cfg["horizon"]), n_paths=int(cfg["n_paths"]),
                        seed=int(cfg.get("seed", 0)), workers=int(cfg.get("workers", 1)),
                        chunk_size=int(cfg.get("chunk_size", 10000)), k_ratio=float(cfg.get("k_ratio", 4.0)))
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid cfg: {exc}") from None

    def names(key, allowed):
        vals = obj.get(key, [])
        if not isinstance(vals, list) or any(v not in allowed for v in vals):
            raise ConfigError(f"{key} must be a list drawn from {allowed}")
        return tuple(vals)

    summary = None
    if "summary" in obj:
        s = _keys(obj["summary"], "summary", {"r_out"}, {"cap", "p_escape", "e_of_x", "lcap"})
        try:
            summary = GeneralSetSummary(**{k: float(v) for k, v in s.items()})
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid summary: {exc}") from None
    outputs = _keys(obj.get("outputs", {}), "outputs", set(), {"dir"})
    window = float(obj.get("time_window", 0.05))
    if not 0 < window < 1:
        raise ConfigError("time_window must lie in (0, 1)")
    voxel = obj.get("voxel")
    if voxel is not None and not float(voxel) > 0:
        raise ConfigError("voxel must be > 0")
    bins = obj.get("angular_bins", 12)
    if not isinstance(bins, int) or bins < 2:
        raise ConfigError("angular_bins must be an integer >= 2")
    v_values = _floats(obj["v_values"], "v_values") if "v_values" in obj else ()
    try:
        thresholds = Thresholds.from_json(obj.get("thresholds", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid thresholds: {exc}") from None
    conf = ExperimentConfig(
        name=name, shape=shape, regime=regime, xs=xs, ts=ts, sim=sim,
        formulas=names("formulas", FORMULAS), estimates=names("estimates", ESTIMATES),
        compare=names("compare", QUANTITIES), summary=summary, thresholds=thresholds,
        time_window=window, voxel=None if voxel is None else float(voxel), angular_bins=bins,
        v_values=v_values, out=str(outputs.get("dir", "out")), raw=obj,
    )
    conf.check_regime()
    return conf


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(obj)
