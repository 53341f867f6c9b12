"""Run an eps-sweep for a config and print the report with observed rates.

    python3 scripts/run_sweep.py configs/contrast.json [--eps 1/4 1/8 ...]
"""
import argparse
import logging

import numpy as np

from perihom.config import load_config
from perihom.harness import run_sweep
from perihom.solvers import parse_eps


def main():
    p = argparse.ArgumentParser()
    p.add_argument("config")
    p.add_argument("--eps", nargs="*", default=None)
    p.add_argument("-v", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.v else logging.WARNING)

    cfg = load_config(args.config)
    ns = [parse_eps(e) for e in args.eps] if args.eps else None
    report = run_sweep(cfg, ns)
    print("A_hom =", np.array(report.A_hom).round(8).tolist(), " I_gamma =", report.I_gamma)
    print(f"{'eps':>8} {'l2_rel':>11} {'rate':>6} {'h1_plain':>11} {'h1_corr':>11} {'h1_norm':>9} {'iters':>6} {'s':>6}")
    prev = None
    for r in report.rows:
        rate = "" if prev is None else f"{np.log2(prev / r.l2_rel):6.2f}" if r.l2_rel > 0 else ""
        print(f"{'1/' + str(r.n):>8} {r.l2_rel:11.4e} {rate:>6} {r.h1_err:11.4e} {r.h1_corr_err:11.4e} "
              f"{r.h1_norm:9.5f} {r.iters:6d} {r.seconds:6.2f}")
        prev = r.l2_rel
    if not report.valid:
        print("sweep aborted:", report.error)


if __name__ == "__main__":
    main()
