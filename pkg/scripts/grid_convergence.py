"""Homogenized tensor against the cell grid size, for several contrasts.

    python3 scripts/grid_convergence.py [--ms 8 16 32 64 128]
"""
import argparse

import numpy as np

from perihom.cell import homogenize
from perihom.coefficients import CoefficientSet
from perihom.geometry import CellGeometry


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--ms", nargs="*", type=int, default=[8, 16, 32, 64, 128])
    p.add_argument("--contrasts", nargs="*", type=float, default=[4.0, 10.0, 100.0])
    args = p.parse_args()

    box = CellGeometry(2, (0.25, 0.25), (0.75, 0.75), m=min(args.ms))
    for ratio in args.contrasts:
        lower, upper = 1.0 / (0.75 + 0.25 / ratio), 0.75 + 0.25 * ratio
        print(f"contrast {ratio:g}: bounds [{lower:.6f}, {upper:.6f}]")
        prev, step = None, None
        for m in args.ms:
            hom = homogenize(box, CoefficientSet(np.eye(2), ratio * np.eye(2)), m)
            a = hom.A_hom[0, 0]
            line = f"  m={m:4d}  a11={a:.10f}  iters={max(s.iterations for s in hom.solves)}"
            if prev is not None:
                new_step = abs(a - prev)
                line += f"  step={new_step:.3e}"
                if step:
                    line += f"  ratio={step / new_step:.2f}"
                step = new_step
            print(line)
            prev = a


if __name__ == "__main__":
    main()
