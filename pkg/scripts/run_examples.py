"""Run the three experiments with their default data and write outputs under ``out/``."""

import argparse
from pathlib import Path

from vevp.experiments import example_config, run_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--examples", type=int, nargs="+", default=[1, 2, 3])
    args = ap.parse_args()
    for number in args.examples:
        cfg = example_config(number)
        traj, _ = run_config(cfg, args.out / cfg.name, timestamp=False)
        print(f"{cfg.name}: {traj.mesh.n_nodes} nodes, max|u| = {abs(traj.final.u).max():.4e}")


if __name__ == "__main__":
    main()
