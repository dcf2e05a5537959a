"""Subgradient residual at the lifted point against the certified bound,
for a decreasing sequence of smoothing parameters.

    python scripts/criticality_mu_sweep.py --mus 4e-2 2e-2 1e-2 5e-3
"""

import argparse

from compositeflow.analysis import criticality_report
from compositeflow.operators import random_gaussian
from compositeflow.problems import CompositeProblem, NoiseSpec, SmoothSum, least_squares_data
from compositeflow.regularizers import Regularizer
from compositeflow.solvers import SolverParams, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mus", type=float, nargs="+", default=[4e-2, 2e-2, 1e-2, 5e-3])
    ap.add_argument("--K", type=int, default=20_000)
    ap.add_argument("--rho", type=float, default=10.0)
    args = ap.parse_args()

    a, b, _ = least_squares_data(20, 60, seed=1)
    f = SmoothSum(a, b)
    A = random_gaussian(10, 20, 1.0, seed=1)
    print("mu        residual    bound       smoothed")
    for mu in args.mus:
        problem = CompositeProblem(f, Regularizer("l1", 0.1, 10), A, mu)
        params = SolverParams(rho=args.rho, eta=1.0 / f.lipschitz, K=args.K)
        traj = run("lp_sadmm", problem, params, NoiseSpec("exact"), stride=1000)
        rep = criticality_report(problem, traj.final.x)
        print(f"{mu:.2e}  {rep.resid_at_x_bar:.3e}   {rep.bound:.3e}   {rep.resid_smoothed:.1e}")


if __name__ == "__main__":
    main()
