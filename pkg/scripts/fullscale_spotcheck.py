#!/usr/bin/env python3
"""Full-scale single-realization spot check (nightly-grade, several minutes).

Runs the adaptive pipeline at the full-scale defaults (M=4, N=64, K=4, L=9)
and reports the detector-SINR trajectory and the reflecting-element growth.
Expected shape: initial max detector SINR near 10 dB, final below -4 dB,
n_r growing from 40 into the 50..60 band.
"""

import argparse
import time

from risshield.scenario import ScenarioConfig
from risshield.algorithms import AlgorithmSettings, run_main
from risshield.harness import ensure_outdir


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("-o", "--outdir", default="out/fullscale")
    parser.add_argument("--inner", type=int, default=40)
    parser.add_argument("--outer", type=int, default=3)
    args = parser.parse_args()

    cfg = ScenarioConfig(seed=args.seed)
    settings = AlgorithmSettings(obj_stall_rel=2e-4, max_iter_inner=args.inner,
                                 max_iter_outer=args.outer, eps_outer=0.02)
    t0 = time.perf_counter()
    out = run_main(cfg, settings)
    wall = time.perf_counter() - t0

    outdir = ensure_outdir(args.outdir)
    out.trace.to_csv(f"{outdir}/trace.csv")
    start = out.trace.rows[0]
    final = out.trace.rows[-1]
    print(f"feasible={out.feasible} status={out.status} wall={wall:.0f}s")
    print(f"max detector SINR: {start.max_det_sinr_db:.1f} dB -> {final.max_det_sinr_db:.1f} dB")
    print(f"reflecting elements: {out.trace.rows[0].n_r} -> {out.partition.n_r}")
    print(f"trace written to {outdir}/trace.csv")
    ok = out.feasible and final.max_det_sinr_db <= -4.0 and 40 <= out.partition.n_r <= 60
    print("SPOT CHECK", "PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
