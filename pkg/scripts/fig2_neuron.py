"""Single ReLU neuron against a teacher, empirical loss on the circle vs population dynamics.

Writes ``neuron_empirical.csv`` and ``neuron_population.csv`` with
``v, w_x, w_y, |v - w_x|`` per step and prints when each quantity settles.
"""

import argparse
import math
from pathlib import Path

import numpy as np

from eoslab import neuron
from eoslab.runner import settle_index


def _save(path, v, wx, wy):
    np.savetxt(
        path, np.column_stack([np.arange(len(v)), v, wx, wy, np.abs(v - wx)]),
        delimiter=",", header="step,v,w_x,w_y,gap", comments="", fmt="%.17g",
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--K", type=float, default=1.1, help="eta = K d with d = 2")
    ap.add_argument("--eps", type=float, default=0.1, help="initial v and |w|")
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/fig2")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)

    emp = neuron.empirical_neuron_gd(a.n, 2, a.seed, 2 * a.K, a.eps, [0.0, a.eps], a.steps)
    v, wx, wy = emp.scalars["v"], emp.scalars["w_x"], emp.scalars["w_y"]
    _save(out / "neuron_empirical.csv", v, wx, wy)
    floor = 1 / math.sqrt(a.n)
    print(f"empirical n={a.n}: w_y below {10 * floor:.3f} from step {settle_index(wy, 10 * floor)}, "
          f"|v - w_x| below 0.05 from step {settle_index(np.abs(v - wx), 0.05)}")
    tail = len(v) // 10
    gap = np.abs(v - wx)
    print(f"plateau (within 2x of the last-10% max): w_y from step {settle_index(wy, 2 * wy[-tail:].max())}, "
          f"|v - w_x| from step {settle_index(gap, 2 * gap[-tail:].max())}")

    pop = neuron.simulate_neuron(neuron.NeuronConfig(d=2, K=a.K, eps=a.eps, theorem_mode=False), a.steps)
    p = pop.traj.points
    _save(out / "neuron_population.csv", p[:, 0], p[:, 1], p[:, 2])
    print(f"population: stage boundary at step {pop.stage_boundary} (bound T1 = {pop.T1_bound}), "
          f"final w_y = {p[-1, 2]:.2e}, final |v - w_x| = {abs(p[-1, 0] - p[-1, 1]):.2e}")


if __name__ == "__main__":
    main()
