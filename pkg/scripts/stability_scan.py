"""Spectral radius of the experiment-1 step map over a grid of (N_el, k).

Values above 1 mean the lagged contact term amplifies perturbations at
that step size.
"""

import argparse

from vevp.experiments import example_config, step_amplification
from vevp.timestepper import SchemeParams, Simulation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nels", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--ks", type=float, nargs="+", default=[0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125, 0.0015625])
    ap.add_argument("--cp", type=float, default=1e5)
    args = ap.parse_args()
    print("N_el,k,spectral_radius")
    for nel in args.nels:
        cfg = example_config(1).override(nel=nel, c_p=args.cp)
        for k in args.ks:
            sim = Simulation(cfg.problem(), SchemeParams.from_step(1.0, k))
            print(f"{nel},{k!r},{step_amplification(sim):.6f}")


if __name__ == "__main__":
    main()
