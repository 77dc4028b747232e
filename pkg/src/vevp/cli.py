"""Command line interface: ``vevp converge | run | mesh gen``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (SimulationConfig, example_config, run_config, run_example1_convergence,
                          write_convergence_outputs)
from .mesh import write_mesh


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", "--out", dest="out_dir", default="out", help="output directory")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp line from the manifest")
    p.add_argument("-v", "--verbose", action="store_true")


def _overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--Nel", type=int, help="subdivisions along the reference side")
    p.add_argument("--k", type=float, help="time step (must divide T)")
    p.add_argument("--N", type=int, help="number of time steps")
    p.add_argument("--cp", type=float, help="normal compliance coefficient")


def _config(args) -> SimulationConfig:
    if args.config:
        cfg = SimulationConfig.load(args.config)
    else:
        cfg = example_config(args.example)
    cfg = cfg.override(nel=args.Nel, k=args.k, c_p=args.cp, N=args.N)
    if getattr(args, "snapshot_stride", None):
        cfg = cfg.with_(snapshot_stride=args.snapshot_stride)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vevp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("converge", help="error table of experiment 1 against a reference run")
    conv.add_argument("--max-Nel", type=int, default=32)
    conv.add_argument("--ref-Nel", type=int, default=64)
    conv.add_argument("--k-ref", type=float, default=None, help="reference step (default 0.1/min(ref_Nel, 128))")
    conv.add_argument("--cp", type=float, default=1e5)
    conv.add_argument("--diagonal-only", action="store_true", help="run only the (N_el, k) diagonal")
    conv.add_argument("--batch-nodes", type=int, default=None,
                      help="cap on coarse-run nodes held at once; the reference is rerun per batch")
    _common(conv)

    run = sub.add_parser("run", help="run one experiment or configuration file")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", type=int, choices=(1, 2, 3))
    src.add_argument("--config", type=Path)
    run.add_argument("--snapshot-stride", type=int)
    _overrides(run)
    _common(run)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="write the mesh of an experiment or configuration")
    msrc = gen.add_mutually_exclusive_group(required=True)
    msrc.add_argument("--example", type=int, choices=(1, 2, 3))
    msrc.add_argument("--config", type=Path)
    _overrides(gen)
    _common(gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = Path(args.out_dir)
    timestamp = not args.no_timestamp

    if args.command == "converge":
        report = run_example1_convergence(args.max_Nel, args.ref_Nel, k_ref=args.k_ref, c_p=args.cp,
                                          full_table=not args.diagonal_only, batch_nodes=args.batch_nodes)
        slope = write_convergence_outputs(report, out, timestamp=timestamp,
                                          settings={"max_Nel": args.max_Nel, "c_p": args.cp,
                                                    "full_table": not args.diagonal_only})
        print(report.to_csv(slope=slope), end="")
        return 0

    cfg = _config(args)
    if args.command == "run":
        traj, _ = run_config(cfg, out, timestamp=timestamp)
        f = traj.final
        print(f"{cfg.name}: {traj.scheme.N} steps, {traj.mesh.n_nodes} nodes, "
              f"max|u| = {abs(f.u).max():.6e}, max|phi| = {abs(f.phi).max():.6e} -> {out}")
        return 0

    out.mkdir(parents=True, exist_ok=True)
    mesh = cfg.mesh()
    path = out / f"{cfg.name}.mesh"
    write_mesh(mesh, path)
    print(f"{path}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, h = {mesh.h:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
