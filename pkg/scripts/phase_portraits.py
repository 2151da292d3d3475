"""Phase-portrait data for the linear and nonlinear models.

For each parameter value, integrates from a ring of starts on the boundary
of Q and writes ``t,x,y`` CSVs together with the domain polyline, ready for
any plotting tool.  A summary table of fixed points and their position
relative to Q is printed.
"""
import argparse
from pathlib import Path

import numpy as np

from mosaic_evo.ode import integrate, linear_fixed_point, nonlinear_fixed_point, write_trajectory_csv
from mosaic_evo.stats import q_boundary_polyline, q_membership
from mosaic_evo.table import builtin_linear, builtin_nonlinear


def starts(k):
    ring = np.array(q_boundary_polyline(k)[:-1])
    centre = ring.mean(axis=0)
    return centre + 0.98 * (ring - centre)  # pulled just inside the boundary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/portraits")
    ap.add_argument("--per-edge", type=int, default=4)
    ap.add_argument("--t-end", type=float, default=30.0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "domain.csv", "w", newline="\n") as fh:
        fh.write("x,y\n")
        for x, y in q_boundary_polyline(8):
            fh.write(f"{x:.17g},{y:.17g}\n")

    cases = [("linear", q, builtin_linear(q), linear_fixed_point(q)) for q in (0.5, 0.64, 0.685)]
    cases += [("nonlinear", mu, builtin_nonlinear(1.0, mu), nonlinear_fixed_point(mu)) for mu in (0.06, 0.125, 1.0)]
    ts = np.linspace(0.0, args.t_end, 601)
    for fam, p, table, fp in cases:
        exits = 0
        for k, x0 in enumerate(starts(args.per_edge)):
            tr = integrate(table, tuple(x0), args.t_end, sample_times=ts)
            exits += tr.exited_q
            write_trajectory_csv(tr, out / f"{fam}_{p:g}_{k:02d}.csv", comment=f"{table.label} from {x0[0]:.6f},{x0[1]:.6f}")
        status = q_membership(fp).status
        print(f"{fam:9s} {p:<6g} fixed point ({fp.x:.5f}, {fp.y:.5f}) {status:8s} trajectories leaving Q: {exits}")


if __name__ == "__main__":
    main()
