"""Descent-inequality defects of the discretized flow as dt shrinks, on
random MCP instances with a Gaussian operator.

    python scripts/descent_dt_sweep.py --seeds 0 1 2
"""

import argparse

import numpy as np

from compositeflow.analysis import descent_audit
from compositeflow.dynamics import FlowConfig, simulate
from compositeflow.operators import random_gaussian
from compositeflow.problems import CompositeProblem, SmoothSum, least_squares_data
from compositeflow.regularizers import Regularizer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--dts", type=float, nargs="+", default=[2e-3, 1e-3, 5e-4, 2.5e-4])
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--block", type=float, default=0.01, help="time length of each audited interval")
    args = ap.parse_args()

    print("seed  dt        max_violation  max_defect")
    for seed in args.seeds:
        a, b, _ = least_squares_data(8, 30, seed=seed)
        A = random_gaussian(6, 8, 1.0, seed=seed)
        problem = CompositeProblem(SmoothSum(a, b), Regularizer("mcp", 0.5, 6, shape=2.0), A, 0.5)
        lam = A.gram_norm() + 1.0
        for dt in args.dts:
            path = simulate("flow", problem, FlowConfig(lam=lam, dt=dt, T=args.T), 2.0 * np.ones(8))
            audit = descent_audit(path, window=max(1, round(args.block / dt)))
            print(f"{seed:4d}  {dt:.2e}  {audit.max_violation:13.3e}  {audit.max_defect:.3e}")


if __name__ == "__main__":
    main()
