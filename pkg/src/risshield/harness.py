"""Experiment runner: Monte Carlo campaigns, sweeps, heatmaps and the
energy-detector oracle.

Paired-seed discipline: realization i of every mode/sweep point runs on
scenario seed (base_seed + i), so compared methods always see identical
channel draws.  Infeasible realizations are excluded from the means and
reported in the feasibility rate.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from .scenario import (ChannelSet, ElementPartition, ScenarioConfig, los_channel,
                       los_scalar, direction_vector, partition_channels)
from .metrics import (BeamformingState, fa_probability, md_probability,
                      fa_averaged, md_averaged, sensing_sinr_detector)
from .algorithms import AlgorithmSettings, RunOutcome, RunTrace, run_main
from . import subproblems

MODES = ("adaptive", "fixed", "sense-max")


@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig
    settings: AlgorithmSettings = field(default_factory=AlgorithmSettings)
    mode: str = "adaptive"
    realizations: int = 1
    sweep_param: str | None = None       # p_max | gamma_c | gamma_s | n
    sweep_values: tuple = ()
    heatmap_res: tuple[int, int] = (21, 21)
    heatmap_t_s: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if self.sweep_values and list(self.sweep_values) != sorted(self.sweep_values):
            raise ValueError("sweep values must be strictly ordered")


@dataclass
class SweepPoint:
    param: str | None
    value: float | None
    mode: str
    det_sinr_db: list[float]             # per feasible realization, in seed order
    n_total: int

    @property
    def n_feasible(self) -> int:
        return len(self.det_sinr_db)

    @property
    def mean_db(self) -> float:
        return float(np.mean(self.det_sinr_db)) if self.det_sinr_db else float("nan")

    @property
    def ci_db(self) -> float:
        n = self.n_feasible
        if n < 2:
            return float("nan")
        return 1.96 * float(np.std(self.det_sinr_db, ddof=1)) / np.sqrt(n)

    @property
    def feasibility_rate(self) -> float:
        return self.n_feasible / self.n_total


@dataclass
class AggregateResult:
    points: list[SweepPoint]
    sample_trace: RunTrace | None
    outcomes: list[RunOutcome] = field(default_factory=list)


def apply_sweep_value(cfg: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    if param == "p_max":
        return replace(cfg, p_max=float(value))
    if param == "gamma_c":
        return replace(cfg, gamma_c=(), gamma_c_default=float(value))
    if param == "gamma_s":
        return replace(cfg, gamma_s=(), gamma_s_default=float(value))
    if param == "n":
        n = int(value)
        n_x = _near_square_divisor(n)
        return replace(cfg, n=n, n_x=n_x, n_y=n // n_x)
    raise ValueError(f"unsupported sweep parameter {param!r}")


def _near_square_divisor(n: int) -> int:
    for cand in range(int(np.sqrt(n)), 0, -1):
        if n % cand == 0:
            return cand
    return 1


def run_experiment(spec: ExperimentSpec, keep_outcomes: bool = False) -> AggregateResult:
    """Monte Carlo over channel realizations for one mode at one configuration."""
    values: list[float] = []
    outcomes: list[RunOutcome] = []
    sample_trace = None
    for i in range(spec.realizations):
        cfg_i = replace(spec.scenario, seed=spec.scenario.seed + i)
        outcome = run_main(cfg_i, spec.settings, mode=spec.mode)
        if sample_trace is None:
            sample_trace = outcome.trace
        if keep_outcomes:
            outcomes.append(outcome)
        if outcome.feasible:
            values.append(outcome.trace.rows[-1].max_det_sinr_db)
    point = SweepPoint(param=None, value=None, mode=spec.mode,
                       det_sinr_db=values, n_total=spec.realizations)
    return AggregateResult(points=[point], sample_trace=sample_trace, outcomes=outcomes)


def sweep(spec: ExperimentSpec) -> AggregateResult:
    """Re-run the experiment at each sweep value with paired seeds."""
    if not spec.sweep_param:
        return run_experiment(spec)
    points = []
    sample_trace = None
    for value in spec.sweep_values:
        cfg_v = apply_sweep_value(spec.scenario, spec.sweep_param, value)
        sub = replace(spec, scenario=cfg_v, sweep_param=None, sweep_values=())
        agg = run_experiment(sub)
        pt = agg.points[0]
        pt.param, pt.value = spec.sweep_param, float(value)
        points.append(pt)
        if sample_trace is None:
            sample_trace = agg.sample_trace
    return AggregateResult(points=points, sample_trace=sample_trace)


def heatmap(state: BeamformingState, channels: ChannelSet, partition: ElementPartition,
            cfg: ScenarioConfig, grid: tuple[int, int] = (21, 21),
            t_s: int | None = None) -> dict:
    """FA/MD probability maps at the adversarial detector over the sensing region.

    Each grid point hypothesizes a target there: its detector-side SINR uses
    the point's own steering channel and detector echo, then the single-shot
    probabilities are averaged over t_s samples.
    """
    t_s = cfg.t_s if t_s is None else t_s
    geo = cfg.geometry
    n_az, n_el = grid
    az_axis = np.linspace(*np.deg2rad(geo.sensing_azimuth_deg), n_az)
    el_axis = np.linspace(*np.deg2rad(geo.sensing_elevation_deg), n_el)
    det_pos = (np.asarray(geo.ris_pos)
               + geo.detector_range * direction_vector(np.deg2rad(geo.detector_azimuth_deg),
                                                       np.deg2rad(geo.detector_elevation_deg)))
    rcs = float(np.mean(cfg.rcs_values))
    cfg_point = replace(cfg, l=1, l_x=1, l_y=1, rcs=(rcs,),
                        gamma_s=(cfg.gamma_s_values[0],))
    pch = partition_channels(channels, partition)

    fa_map = np.empty((n_el, n_az))
    md_map = np.empty((n_el, n_az))
    for i_el, el in enumerate(el_axis):
        for i_az, az in enumerate(az_axis):
            c_full = los_channel(geo.sensing_range, az, el, cfg)
            loc = np.asarray(geo.ris_pos) + geo.sensing_range * direction_vector(az, el)
            d = los_scalar(float(np.linalg.norm(loc - det_pos)), cfg)
            pch_point = replace(pch,
                                c_r=c_full[partition.reflecting][None, :],
                                c_a=c_full[partition.absorptive][None, :],
                                d=np.array([d]))
            gamma_d = sensing_sinr_detector(0, state, pch_point, cfg_point)
            fa_map[i_el, i_az] = fa_averaged(fa_probability(gamma_d), t_s)
            md_map[i_el, i_az] = md_averaged(md_probability(gamma_d), t_s)
    return {"fa": fa_map, "md": md_map,
            "azimuth_deg": np.rad2deg(az_axis), "elevation_deg": np.rad2deg(el_axis)}


@dataclass
class OracleResult:
    p_hat: float
    q_hat: float
    p_ci: float
    q_ci: float
    trials: int


def detection_oracle(omega0: float, omega1: float, thresh: float, t_s: int,
                     trials: int, rng: np.random.Generator) -> OracleResult:
    """Monte Carlo energy-threshold test: exponential energies averaged over
    t_s samples and compared against the threshold."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    h0 = rng.exponential(omega0, size=(trials, t_s)).mean(axis=1)
    h1 = rng.exponential(omega1, size=(trials, t_s)).mean(axis=1)
    p_hat = float(np.mean(h0 >= thresh))
    q_hat = float(np.mean(h1 < thresh))
    return OracleResult(
        p_hat=p_hat, q_hat=q_hat,
        p_ci=1.96 * float(np.sqrt(max(p_hat * (1 - p_hat), 1e-12) / trials)),
        q_ci=1.96 * float(np.sqrt(max(q_hat * (1 - q_hat), 1e-12) / trials)),
        trials=trials,
    )


# ---------------------------------------------------------------------------
# output files (6 significant digits in CSVs, full config in meta.json)


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def write_aggregate_csv(agg: AggregateResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sweep_param,sweep_value,mode,mean_det_sinr_db,ci95_db,"
                 "n_feasible,n_total,feasibility_rate\n")
        for pt in agg.points:
            fh.write(f"{pt.param or ''},{_fmt(pt.value) if pt.value is not None else ''},"
                     f"{pt.mode},{_fmt(pt.mean_db)},{_fmt(pt.ci_db)},"
                     f"{pt.n_feasible},{pt.n_total},{_fmt(pt.feasibility_rate)}\n")


def write_heatmap_csv(maps: dict, key: str, path: str) -> None:
    grid = maps[key]
    az = maps["azimuth_deg"]
    el = maps["elevation_deg"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("elevation_deg\\azimuth_deg," + ",".join(_fmt(a) for a in az) + "\n")
        for i, e in enumerate(el):
            fh.write(_fmt(e) + "," + ",".join(_fmt(v) for v in grid[i]) + "\n")


def write_meta(path: str, cfg: ScenarioConfig, settings: AlgorithmSettings,
               extra: dict | None = None) -> None:
    import risshield
    payload = {
        "scenario": _plain(cfg.to_dict()),
        "settings": _plain(asdict(settings)),
        "versions": {
            "risshield": risshield.__version__,
            "numpy": np.__version__,
            "backend": settings.backend or subproblems.default_backend(),
        },
        "wall_time_s": None,
        "created_unix": time.time(),
    }
    if extra:
        payload.update(_plain(extra))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
