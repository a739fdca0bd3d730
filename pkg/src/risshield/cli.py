"""Command-line front end: run / sweep / heatmap / oracle."""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np
import yaml

from .scenario import ScenarioConfig, build_scenario, config_from_dict
from .metrics import detection_threshold
from .algorithms import AlgorithmSettings, run_main
from . import harness


def load_spec_file(path: str | None) -> tuple[ScenarioConfig, AlgorithmSettings]:
    if path is None:
        return ScenarioConfig(), AlgorithmSettings()
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    cfg = config_from_dict(raw.get("scenario", {}))
    settings = AlgorithmSettings(**raw.get("settings", {}))
    return cfg, settings


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="YAML scenario/settings file")
    p.add_argument("--seed", type=int, help="override scenario seed")
    p.add_argument("-o", "--outdir", default="out", help="output directory")


def cmd_run(args) -> int:
    cfg, settings = load_spec_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    spec = harness.ExperimentSpec(scenario=cfg, settings=settings, mode=args.mode,
                                  realizations=args.realizations)
    t0 = time.perf_counter()
    agg = harness.run_experiment(spec)
    wall = time.perf_counter() - t0
    outdir = harness.ensure_outdir(args.outdir)
    agg.sample_trace.to_csv(os.path.join(outdir, "trace.csv"))
    harness.write_aggregate_csv(agg, os.path.join(outdir, "aggregate.csv"))
    harness.write_meta(os.path.join(outdir, "meta.json"), cfg, settings,
                       extra={"command": "run", "mode": args.mode,
                              "realizations": args.realizations, "wall_time_s": wall})
    pt = agg.points[0]
    print(f"mode={args.mode} realizations={pt.n_total} feasible={pt.n_feasible} "
          f"mean max detector SINR = {pt.mean_db:.2f} dB (ci {pt.ci_db:.2f})")
    print(f"outputs in {outdir}/")
    return 0


def cmd_sweep(args) -> int:
    cfg, settings = load_spec_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    values = tuple(float(v) for v in args.values.split(","))
    spec = harness.ExperimentSpec(scenario=cfg, settings=settings, mode=args.mode,
                                  realizations=args.realizations,
                                  sweep_param=args.param, sweep_values=values)
    t0 = time.perf_counter()
    agg = harness.sweep(spec)
    wall = time.perf_counter() - t0
    outdir = harness.ensure_outdir(args.outdir)
    if agg.sample_trace is not None:
        agg.sample_trace.to_csv(os.path.join(outdir, "trace.csv"))
    harness.write_aggregate_csv(agg, os.path.join(outdir, "aggregate.csv"))
    harness.write_meta(os.path.join(outdir, "meta.json"), cfg, settings,
                       extra={"command": "sweep", "mode": args.mode, "param": args.param,
                              "values": list(values), "realizations": args.realizations,
                              "wall_time_s": wall})
    for pt in agg.points:
        print(f"{args.param}={pt.value:g}: mean {pt.mean_db:.2f} dB "
              f"({pt.n_feasible}/{pt.n_total} feasible)")
    print(f"outputs in {outdir}/")
    return 0


def cmd_heatmap(args) -> int:
    cfg, settings = load_spec_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    n_az, n_el = (int(v) for v in args.res.split("x"))
    t0 = time.perf_counter()
    outcome = run_main(cfg, settings, mode=args.mode)
    channels, _, _ = build_scenario(cfg)
    maps = harness.heatmap(outcome.state, channels, outcome.partition, cfg,
                           grid=(n_az, n_el), t_s=args.t_s)
    wall = time.perf_counter() - t0
    outdir = harness.ensure_outdir(args.outdir)
    outcome.trace.to_csv(os.path.join(outdir, "trace.csv"))
    harness.write_heatmap_csv(maps, "fa", os.path.join(outdir, "heatmap_fa.csv"))
    harness.write_heatmap_csv(maps, "md", os.path.join(outdir, "heatmap_md.csv"))
    harness.write_meta(os.path.join(outdir, "meta.json"), cfg, settings,
                       extra={"command": "heatmap", "mode": args.mode,
                              "resolution": [n_az, n_el],
                              "t_s": args.t_s or cfg.t_s, "feasible": outcome.feasible,
                              "wall_time_s": wall})
    print(f"feasible={outcome.feasible} min FA={maps['fa'].min():.3f} "
          f"max FA={maps['fa'].max():.3f}; outputs in {outdir}/")
    return 0


def cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed or 0)
    thresh = args.thresh if args.thresh is not None else detection_threshold(
        args.omega0, args.omega1)
    res = harness.detection_oracle(args.omega0, args.omega1, thresh, args.t_s,
                                   args.trials, rng)
    print(f"threshold = {thresh:.6g}")
    print(f"FA: {res.p_hat:.5f} +/- {res.p_ci:.5f}")
    print(f"MD: {res.q_hat:.5f} +/- {res.q_ci:.5f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="risshield",
        description="RIS-assisted ISAC beamforming with sensing-region protection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="optimize one scenario over channel realizations")
    _common_flags(p)
    p.add_argument("--mode", choices=harness.MODES, default="adaptive")
    p.add_argument("--realizations", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="re-run the experiment over a parameter grid")
    _common_flags(p)
    p.add_argument("--mode", choices=harness.MODES, default="adaptive")
    p.add_argument("--realizations", type=int, default=1)
    p.add_argument("--param", required=True, choices=["p_max", "gamma_c", "gamma_s", "n"])
    p.add_argument("--values", required=True, help="comma-separated values (linear units)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heatmap", help="FA/MD maps over the sensing region at convergence")
    _common_flags(p)
    p.add_argument("--mode", choices=harness.MODES, default="adaptive")
    p.add_argument("--res", default="21x21", help="azimuth x elevation resolution")
    p.add_argument("--t-s", type=int, default=None, dest="t_s")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("oracle", help="Monte Carlo energy-detector check")
    p.add_argument("--omega0", type=float, required=True)
    p.add_argument("--omega1", type=float, required=True)
    p.add_argument("--thresh", type=float, default=None,
                   help="energy threshold (default: likelihood-ratio threshold)")
    p.add_argument("--t-s", type=int, default=1, dest="t_s")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
