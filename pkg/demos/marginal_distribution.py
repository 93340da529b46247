"""How close is the grid's marginal law of Y to a simulated one?

For Stein-Stein, compare the grid CDF at the quantizer's region boundaries
with an empirical CDF from one million Euler paths, step by step.

    python demos/marginal_distribution.py
"""
import numpy as np

from svquant.jrmq import build_reference_grid
from svquant.mcoracle import MCConfig, simulate_paths
from svquant.model import REFERENCE_PRESETS, preset

spec = preset(REFERENCE_PRESETS["stein_stein"])
grid = build_reference_grid("stein_stein")
mc = MCConfig(1_000_000, 120, seed=2718)
per = mc.steps // grid.K
ens = simulate_paths(spec, mc, [per * k for k in range(1, grid.K + 1)])

print(f"{'step':>4} {'max |cdf error|':>16} {'mean Y grid':>12} {'mean Y mc':>10}")
for k in range(1, grid.K + 1):
    q = grid.stages[k].y_quantizer
    edges = 0.5 * (q.codewords[1:] + q.codewords[:-1])
    sample = np.sort(ens.y[:, k - 1])
    emp = np.searchsorted(sample, edges, side="right") / sample.size
    err = np.max(np.abs(np.cumsum(q.probabilities)[:-1] - emp))
    print(f"{k:4d} {err:16.4f} {q.codewords @ q.probabilities:12.4f} {sample.mean():10.4f}")
