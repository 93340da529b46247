"""One SABR grid prices Bermudan, barrier and corridor products.

The grid is built once (24 steps, 30x60, absorbing at zero) and reused for
every instrument. Monte Carlo columns use 200k paths and 120 steps.

    python demos/exotics_one_grid.py
"""
import time

from svquant.jrmq import build_reference_grid
from svquant.mcoracle import MCConfig, mc_barrier, mc_bermudan_lsmc, mc_corridor
from svquant.model import REFERENCE_PRESETS, preset
from svquant.pricing import (
    BarrierSpec,
    CorridorSpec,
    ExerciseSchedule,
    VanillaSpec,
    barrier_price,
    bermudan_price,
    corridor_swap_interpolated,
    corridor_swap_left_endpoint,
    european_price,
)

spec = preset(REFERENCE_PRESETS["sabr_equity"])
t0 = time.perf_counter()
grid = build_reference_grid("sabr_equity")
print(f"grid built in {time.perf_counter() - t0:.1f}s")

r, fwd = spec.rate, "forward"
mc = MCConfig(200_000, 120, seed=2718)
monthly = ExerciseSchedule.every(2, grid.K)

print("\nBermudan puts (monthly exercise)")
for k in (90.0, 100.0, 110.0):
    v = VanillaSpec("put", k, r, fwd)
    ls = mc_bermudan_lsmc(spec, mc, v, monthly, grid_K=grid.K)
    print(f"  K={k:5.0f}  european {european_price(grid, v):8.4f}  bermudan {bermudan_price(grid, v, monthly):8.4f}"
          f"  lsmc {ls.value:8.4f} +- {ls.stderr:.4f}")

print("\nUp-and-out put, strike 100, monthly monitoring")
v = VanillaSpec("put", 100.0, r, fwd)
for level in (110.0, 130.0, 150.0):
    bar = BarrierSpec(level, monthly)
    est = mc_barrier(spec, mc, v, bar, grid_K=grid.K)
    print(f"  B={level:5.0f}  grid {barrier_price(grid, v, bar):8.4f}  mc {est.value:8.4f} +- {est.stderr:.4f}")

print("\nVolatility corridor swaps around S0 = 100")
for s in (0.05, 0.15, 0.30):
    cor = CorridorSpec.from_spread(100.0, s, r)
    ref = mc_corridor(spec, mc, cor, fwd)
    print(f"  spread {s:.2f}  left {corridor_swap_left_endpoint(grid, cor, fwd):.5f}"
          f"  interpolated {corridor_swap_interpolated(grid, cor, fwd):.5f}  mc {ref.value:.5f}")
