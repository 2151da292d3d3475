"""Shooting fits between the two mudcrack mosaics, both families, both directions.

Writes one JSON per fit plus the best trajectory and the coarse miss scan
as CSV into ``--out`` (default ``runs/mudcrack``).
"""
import argparse
import json
import time
from pathlib import Path

from mosaic_evo.fit import direction_probe
from mosaic_evo.ode.integrator import write_trajectory_csv

A = (0.377, 0.233)
B = (0.333, 0.176)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/mudcrack")
    ap.add_argument("--samples", type=int, default=200)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for fam in ("linear", "nonlinear"):
        t0 = time.perf_counter()
        rep = direction_probe(fam, A, B, samples=args.samples)
        dt = time.perf_counter() - t0
        for tag, r in (("forward", rep.forward), ("backward", rep.backward)):
            stem = out / f"{fam}_{tag}"
            write_trajectory_csv(r.trajectory, stem.with_suffix(".traj.csv"))
            with open(stem.with_suffix(".scan.csv"), "w", newline="\n") as fh:
                fh.write(f"{r.param_name},miss\n")
                for p, m in zip(r.scan_params, r.scan_miss):
                    fh.write(f"{p:.17g},{m:.17g}\n")
            stem.with_suffix(".json").write_text(json.dumps(r.to_dict(stem.with_suffix(".traj.csv")), indent=2))
            print(f"{fam:9s} {tag:8s} {r.param_name}={r.param:.5f} miss={r.miss:.2e} "
                  f"success={r.success} exited_Q={r.trajectory.exited_q}")
        print(f"  ({dt:.1f} s for both directions)")


if __name__ == "__main__":
    main()
