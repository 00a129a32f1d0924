"""The four harness operations, independent of argument parsing.

Each command takes an :class:`ExperimentConfig` and an output directory and
returns the in-memory result it also writes to disk.  Nothing that depends on
wall-clock time or worker count goes into the main outputs; those go to a
``timing.json`` sidecar so that reruns with the same seed are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import asymptotics as asy
from .. import geometry, potential
from ..geometry import Direction
from ..montecarlo import (Estimate, cameron_martin_pair, derived_seed, first_hit, intervals_overlap,
                          lambda_profile_mc, paired_z, point_hit_probability, sausage_volume_mc,
                          site_histogram)
from ..specfun import DomainError, integrate
from .config import ConfigError, ExperimentConfig

CSV_HEADER = ("d", "a", "x", "t", "v", "value")
SCALE_FACTORS = (0.5, 2.0, 7.0)
SCALING_TOL = 1e-12


def fmt(value: float) -> str:
    return "%.17g" % value


def _axis_point(d: int, x: float) -> np.ndarray:
    p = np.zeros(d)
    p[0] = x
    return p


# ---------------------------------------------------------------------------
# formulas


def _ball(conf: ExperimentConfig, name: str) -> float:
    a = conf.ball_radius
    if a is None:
        raise ConfigError(f"formula {name} needs a single ball centred at the origin")
    return a


def _summary(conf: ExperimentConfig, x: float) -> asy.GeneralSetSummary:
    if conf.summary is not None:
        return conf.summary
    a = conf.ball_radius
    if a is None:
        raise ConfigError("general-set formulas need a 'summary' block for non-ball shapes")
    return asy.ball_summary(conf.d, a, x)


def formula_value(name: str, conf: ExperimentConfig, x: float, t: float) -> float:
    """Value of formula ``name`` at grid point (x, t) for the configured shape."""
    d = conf.d
    if name in ("q_general", "tail_prob", "cdf_prob", "sausage_expect"):
        fp = asy.FormulaPoint(d, x, t, conf.ball_radius)
        if name == "q_general":
            return asy.q_general(_summary(conf, x), fp)
        if name == "tail_prob":
            return asy.tail_prob(_summary(conf, x), fp, "tail")
        if name == "cdf_prob":
            return asy.tail_prob(_summary(conf, x), fp, "cdf")
        summary = None
        if conf.regime == "small_v" and (d >= 3 or conf.summary is not None or conf.ball_radius is None):
            summary = _summary(conf, x)
        e = Direction(tuple(_axis_point(d, 1.0)))
        cell = geometry.r_out(conf.shape) / 64.0
        return asy.sausage_expect(conf.regime, fp, summary=summary, shape=conf.shape, e=e, cell=cell)
    a = _ball(conf, name)
    fp = asy.FormulaPoint(d, x, t, a)
    if name == "q_ball":
        return asy.q_ball(fp)
    if name == "q_ball_tail":
        return asy.q_ball(fp, tail_corrected=True)
    if name == "q_ball_exact_d3":
        if d != 3:
            raise ConfigError("q_ball_exact_d3 is for d = 3")
        return asy.q_ball_exact_d3(a, x, t)
    if name == "q_ball_bound":
        return asy.q_ball_bound(fp)
    if name == "q_ball_smalltime":
        return asy.q_ball_smalltime(fp)
    if name == "hit_within_t_ball":
        return asy.hit_within_t_ball(fp)
    if name == "hit_within_t_disc":
        return asy.hit_within_t_disc(fp)
    if name == "sausage_disc_refined":
        if d != 2:
            raise ConfigError("sausage_disc_refined is for d = 2")
        return asy.sausage_disc_refined(a, x, t)
    raise ConfigError(f"unknown formula {name}")


def _radius_column(conf: ExperimentConfig) -> float:
    a = conf.ball_radius
    return a if a is not None else geometry.r_out(conf.shape)


def eval_rows(conf: ExperimentConfig, name: str) -> list[tuple]:
    rows = []
    for x, t in conf.grid():
        try:
            val = formula_value(name, conf, x, t)
        except DomainError as exc:
            raise ConfigError(f"{name} at x={x}, t={t}: {exc}") from None
        rows.append((conf.d, _radius_column(conf), x, t, x / t, val))
    return rows


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def read_eval_csv(path) -> list[tuple]:
    """Inverse of the eval CSV writer (used by the round-trip property)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [(int(r[0]), *map(float, r[1:])) for r in reader]


def cmd_eval(conf: ExperimentConfig, out: Path) -> dict[str, list[tuple]]:
    names = conf.formulas or ("q_ball",)
    out.mkdir(parents=True, exist_ok=True)
    result = {}
    for name in names:
        rows = eval_rows(conf, name)
        (out / f"eval_{name}.csv").write_text(rows_to_csv(CSV_HEADER, rows))
        result[name] = rows
    return result


# ---------------------------------------------------------------------------
# scaling check


def _scaling_power(name: str, d: int) -> int:
    """Exponent k with f(rA; r x, r^2 t) = r^k f(A; x, t)."""
    if name.startswith("q_"):
        return -2
    if name.startswith("sausage"):
        return d
    return 0


def cmd_scaling_check(conf: ExperimentConfig, out: Path) -> dict:
    names = conf.formulas or ("q_ball",)
    rows = []
    worst = 0.0
    for name in names:
        base = eval_rows(conf, name)
        power = _scaling_power(name, conf.d)
        for r in SCALE_FACTORS:
            scaled = eval_rows(conf.scaled(r), name)
            for b, s in zip(base, scaled):
                expected = b[-1] * r ** power
                err = abs(s[-1] - expected) / abs(expected) if expected != 0 else abs(s[-1])
                worst = max(worst, err)
                rows.append((name, r, b[2], b[3], b[-1], s[-1], err))
    out.mkdir(parents=True, exist_ok=True)
    (out / "scaling.csv").write_text(rows_to_csv(("formula", "R", "x", "t", "value", "scaled_value", "rel_err"),
                                                 rows))
    summary = {"max_rel_err": worst, "tolerance": SCALING_TOL, "pass": worst <= SCALING_TOL,
               "factors": list(SCALE_FACTORS)}
    (out / "scaling_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary


# ---------------------------------------------------------------------------
# estimates


def window_density(batch, t: float, dw: float) -> Estimate:
    """P[sigma in [t(1-dw), t(1+dw)]] / (2 dw t) from a batch of first hits."""
    lo, hi = t * (1.0 - dw), t * (1.0 + dw)
    inside = batch.hit & (batch.sigma >= lo) & (batch.sigma <= hi)
    p = float(inside.mean())
    n = batch.n
    width = hi - lo
    return Estimate(p / width, math.sqrt(p * (1.0 - p) / n) / width, n, batch.seed)


def _hit_cfg(conf: ExperimentConfig, seed: int, t_max: float):
    horizon = max(conf.sim.horizon, t_max * (1.0 + conf.time_window) * 1.001)
    return conf.sim.with_(seed=seed, horizon=horizon)


def _est(e: Estimate) -> dict:
    return e.to_json()


def run_estimates(conf: ExperimentConfig) -> dict:
    d, shape, sim = conf.d, conf.shape, conf.sim
    results: dict = {}
    for k, op in enumerate(conf.estimates):
        seed = derived_seed(sim.seed, 100 + k)
        cfg = sim.with_(seed=seed)
        if op == "hit_probability":
            entries = []
            for j, x in enumerate(conf.xs):
                run = cfg.with_(seed=derived_seed(seed, j + 1))
                if d >= 3:
                    est = point_hit_probability(shape, _axis_point(d, x), run)
                else:
                    est = first_hit(shape, _axis_point(d, x), run).frequency()
                entries.append({"x": x, **_est(est)})
            results[op] = entries
        elif op == "hit_density":
            entries = []
            for j, x in enumerate(conf.xs):
                batch = first_hit(shape, _axis_point(d, x), _hit_cfg(conf, derived_seed(seed, j + 1), max(conf.ts)))
                for t in conf.ts:
                    entries.append({"x": x, "t": t, **_est(window_density(batch, t, conf.time_window))})
            results[op] = {"delta_w": conf.time_window, "points": entries}
        elif op == "capacity":
            results[op] = _est(potential.capacity_mc(shape, cfg))
        elif op == "escape_prob":
            results[op] = [{"x": x, **_est(potential.escape_prob(shape, _axis_point(d, x),
                                                                  cfg.with_(seed=derived_seed(seed, j + 1))))}
                           for j, x in enumerate(conf.xs)]
        elif op == "green_e":
            entries = []
            for j, x in enumerate(conf.xs):
                sol = potential.green_e_mc(shape, _axis_point(d, x), cfg.with_(seed=derived_seed(seed, j + 1)))
                entries.append({"x": x, "e": _est(sol.e), "lcap": _est(sol.lcap), "radii": list(sol.radii)})
            results[op] = entries
        elif op == "robin":
            rob = potential.robin_const(shape, cfg)
            results[op] = {"robin": _est(rob.robin), "lcap": _est(rob.lcap), "beta": _est(rob.mean_e),
                           "radius": rob.radius}
        elif op == "hinf":
            results[op] = potential.harmonic_measure_inf(shape, cfg, bins=conf.angular_bins).to_json()
        elif op == "sausage":
            if conf.voxel is None:
                raise ConfigError("sausage estimates need 'voxel'")
            results[op] = [{"x": x, "t": t, **_est(sausage_volume_mc(shape, t, _axis_point(d, x),
                                                                     cfg.with_(seed=derived_seed(seed, j + 1)),
                                                                     conf.voxel))}
                           for j, (x, t) in enumerate(conf.grid())]
        elif op == "lambda_profile":
            results[op] = [{"v": v, **_est(lambda_profile_mc(shape, v, None, cfg.with_(seed=derived_seed(seed, j + 1))))}
                           for j, v in enumerate(conf.v_values or (0.0,))]
        elif op == "site_law":
            entries = []
            for j, (x, t) in enumerate(conf.grid()):
                hist = site_histogram(shape, _axis_point(d, x), _hit_cfg(conf, derived_seed(seed, j + 1), t),
                                      conf.angular_bins, conf.time_window, t_target=t)
                entries.append({"x": x, "t": t, **hist.to_json()})
            results[op] = entries
        elif op == "cameron_martin":
            entries = []
            x = conf.xs[0]
            for j, v in enumerate(conf.v_values or (0.5, 2.0)):
                pair = cameron_martin_pair(shape, _axis_point(d, x), _axis_point(d, v),
                                           cfg.with_(seed=derived_seed(seed, j + 1)))
                entries.append({"v": v, "x": x, "functionals": {
                    name: {"drifted": _est(a), "reweighted": _est(b), "z": paired_z(a, b),
                           "overlap": intervals_overlap(a, b)} for name, (a, b) in pair.items()}})
            results[op] = entries
        else:
            raise ConfigError(f"unknown estimate {op}")
    return results


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _provenance(conf: ExperimentConfig) -> dict:
    return {"name": conf.name, "seed": conf.sim.seed, "step": conf.sim.step, "n_paths": conf.sim.n_paths,
            "horizon": conf.sim.horizon, "chunk_size": conf.sim.chunk_size, "d": conf.d,
            "shape": conf.shape.to_json()}


def _write_timing(out: Path, command: str, conf: ExperimentConfig, started: float):
    timing = {"command": command, "wall_seconds": time.perf_counter() - started, "workers": conf.sim.workers}
    (out / "timing.json").write_text(json.dumps(timing, sort_keys=True, indent=2) + "\n")


def cmd_estimate(conf: ExperimentConfig, out: Path) -> dict:
    started = time.perf_counter()
    doc = {"provenance": _provenance(conf), "estimates": run_estimates(conf)}
    out.mkdir(parents=True, exist_ok=True)
    (out / "estimates.json").write_text(_dump(doc))
    _write_timing(out, "estimate", conf, started)
    return doc


# ---------------------------------------------------------------------------
# comparisons


@dataclass(frozen=True)
class ComparisonRow:
    quantity: str
    d: int
    a: float
    x: float
    t: float
    v: float
    formula_value: float
    mc_mean: float
    mc_stderr: float

    @property
    def ratio(self) -> float:
        return self.mc_mean / self.formula_value if self.formula_value != 0 else math.inf

    @property
    def z_score(self) -> float:
        if self.mc_stderr == 0:
            return 0.0 if self.mc_mean == self.formula_value else math.inf
        return (self.mc_mean - self.formula_value) / self.mc_stderr

    def as_tuple(self) -> tuple:
        return (self.quantity, self.d, self.a, self.x, self.t, self.v, self.formula_value, self.mc_mean,
                self.mc_stderr, self.ratio, self.z_score)


COMPARE_HEADER = ("quantity", "d", "a", "x", "t", "v", "formula_value", "mc_mean", "mc_stderr", "ratio",
                  "z_score")

def _exact_reference(quantity: str, conf: ExperimentConfig) -> bool:
    """True when the formula is exact, so the comparison is judged by |z|;
    asymptotic formulas are judged by the ratio band instead."""
    return quantity == "density" and conf.d == 3 and conf.ball_radius is not None


def _density_formula(conf: ExperimentConfig) -> Callable[[float, float], float]:
    if conf.ball_radius is not None:
        a = conf.ball_radius
        return lambda x, t: asy.q_ball(asy.FormulaPoint(conf.d, x, t, a), tail_corrected=True)
    return lambda x, t: asy.q_general(_summary(conf, x), asy.FormulaPoint(conf.d, x, t))


def _hit_within_formula(conf: ExperimentConfig) -> Callable[[float, float], float]:
    a = conf.ball_radius
    if a is not None and conf.d >= 3:
        return lambda x, t: asy.hit_within_t_ball(asy.FormulaPoint(conf.d, x, t, a))
    if a is not None:
        return lambda x, t: asy.hit_within_t_disc(asy.FormulaPoint(2, x, t, a))
    return lambda x, t: asy.tail_prob(_summary(conf, x), asy.FormulaPoint(conf.d, x, t), "cdf")


def compare_rows(conf: ExperimentConfig, quantities) -> list[ComparisonRow]:
    d, shape, sim = conf.d, conf.shape, conf.sim
    rad = _radius_column(conf)
    rows = []
    for k, quantity in enumerate(quantities):
        seed = derived_seed(sim.seed, 200 + k)
        if quantity in ("density", "hit_within"):
            formula = _density_formula(conf) if quantity == "density" else _hit_within_formula(conf)
            for j, x in enumerate(conf.xs):
                batch = first_hit(shape, _axis_point(d, x), _hit_cfg(conf, derived_seed(seed, j + 1), max(conf.ts)))
                for t in conf.ts:
                    try:
                        if quantity == "density":
                            mc = window_density(batch, t, conf.time_window)
                            lo, hi = t * (1.0 - conf.time_window), t * (1.0 + conf.time_window)
                            ref = integrate(np.vectorize(lambda s: formula(x, float(s))), lo, hi,
                                            rel_tol=1e-10) / (hi - lo)
                        else:
                            hits = batch.hit & (batch.sigma <= t)
                            p = float(hits.mean())
                            mc = Estimate(p, math.sqrt(p * (1 - p) / batch.n), batch.n, batch.seed)
                            ref = formula(x, t)
                    except DomainError as exc:
                        raise ConfigError(f"{quantity} at x={x}, t={t}: {exc}") from None
                    rows.append(ComparisonRow(quantity, d, rad, x, t, x / t, ref, mc.mean, mc.stderr))
        elif quantity == "sausage":
            if conf.voxel is None:
                raise ConfigError("sausage comparison needs 'voxel'")
            for j, (x, t) in enumerate(conf.grid()):
                try:
                    ref = formula_value("sausage_expect", conf, x, t)
                except DomainError as exc:
                    raise ConfigError(f"sausage at x={x}, t={t}: {exc}") from None
                mc = sausage_volume_mc(shape, t, _axis_point(d, x), sim.with_(seed=derived_seed(seed, j + 1)),
                                       conf.voxel)
                rows.append(ComparisonRow(quantity, d, rad, x, t, x / t, ref, mc.mean, mc.stderr))
        else:
            raise ConfigError(f"unknown comparison quantity {quantity}")
    return rows


def summarize(rows: list[ComparisonRow], conf: ExperimentConfig) -> dict:
    th = conf.thresholds
    per = {}
    for quantity in dict.fromkeys(r.quantity for r in rows):
        sel = [r for r in rows if r.quantity == quantity]
        max_z = max(abs(r.z_score) for r in sel)
        worst = max((r.ratio for r in sel), key=lambda q: abs(math.log(q)) if 0 < q < math.inf else math.inf)
        by_z = _exact_reference(quantity, conf)
        passed = max_z <= th.max_abs_z if by_z else all(th.ratio_lo <= r.ratio <= th.ratio_hi for r in sel)
        per[quantity] = {"max_abs_z": max_z, "worst_ratio": worst, "criterion": "z" if by_z else "ratio",
                         "pass": bool(passed), "rows": len(sel)}
    return {"name": conf.name, "delta_w": conf.time_window, "regime": conf.regime,
            "thresholds": {"max_abs_z": th.max_abs_z, "ratio_band": [th.ratio_lo, th.ratio_hi]},
            "quantities": per, "pass": all(q["pass"] for q in per.values())}


def cmd_compare(conf: ExperimentConfig, out: Path, quantities=None) -> dict:
    started = time.perf_counter()
    quantities = quantities or conf.compare or ("density",)
    rows = compare_rows(conf, quantities)
    summary = summarize(rows, conf)
    out.mkdir(parents=True, exist_ok=True)
    stem = "sausage" if tuple(quantities) == ("sausage",) else "compare"
    (out / f"{stem}.csv").write_text(rows_to_csv(COMPARE_HEADER, [r.as_tuple() for r in rows]))
    (out / f"{stem}_summary.json").write_text(_dump({"provenance": _provenance(conf), "summary": summary}))
    _write_timing(out, stem, conf, started)
    return summary


def cmd_sausage(conf: ExperimentConfig, out: Path) -> dict:
    return cmd_compare(conf, out, quantities=("sausage",))


def output_dir(conf: ExperimentConfig, override: Optional[str]) -> Path:
    return Path(override if override is not None else conf.out)
