"""Period-2 oscillation of GD on the 1-D quartic, swept over the learning rate.

Writes ``fig1_sweep.csv`` (eta, detected period, simulated and predicted orbit
points) and ``fig1_trajectory.csv`` (one trajectory at ``--eta``).
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from eoslab import scalar1d
from eoslab.dynamics import detect_period


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--eta", type=float, default=1.05, help="learning rate for the trajectory file")
    ap.add_argument("--eta-min", type=float, default=1.005)
    ap.add_argument("--eta-max", type=float, default=1.30)
    ap.add_argument("--points", type=int, default=60)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--x0", type=float, default=0.5)
    ap.add_argument("--out", default="out/fig1")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    f = scalar1d.Quartic(a.mu)

    with open(out / "fig1_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta", "period", "x_points", "pred_low", "pred_high", "stability"])
        for eta in np.linspace(a.eta_min, a.eta_max, a.points) / a.mu:
            rep = detect_period(scalar1d.gd_1d(f, a.x0, eta, a.steps), tol=1e-7)
            pts = " ".join(repr(float(p)) for p in rep.sorted_points()[:, 0]) if rep.period else ""
            try:
                pred = scalar1d.solve_period2(a.mu, eta)
                row = [pred.x_low, pred.x_high, pred.stability.value]
            except scalar1d.NoOrbitError:
                row = ["", "", "none"]
            w.writerow([repr(float(eta)), rep.period or "", pts, *row])
            print(f"eta={eta:.4f} period={rep.period} stability={row[2]}")

    traj = scalar1d.gd_1d(f, a.x0, a.eta, 2000)
    sharp = [scalar1d.sharpness_1d(f, x) for x in traj.points[:, 0]]
    np.savetxt(
        out / "fig1_trajectory.csv",
        np.column_stack([np.arange(traj.steps + 1), traj.points[:, 0], traj.scalars["loss"], sharp]),
        delimiter=",", header="step,x,loss,sharpness", comments="", fmt="%.17g",
    )
    print(f"wrote {out}/fig1_sweep.csv and {out}/fig1_trajectory.csv (threshold 2/eta = {2 / a.eta:.4f})")


if __name__ == "__main__":
    main()
