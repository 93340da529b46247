import numpy as np
import pytest
from scipy import integrate

from svquant.errors import ConfigurationError, InversionError
from svquant.jrmq import JointProbMethod, build_grid
from svquant.model import REFERENCE_PRESETS, PresetParams, preset
from svquant.pricing import (
    BarrierSpec,
    Convention,
    CorridorSpec,
    ExerciseSchedule,
    OptionKind,
    VanillaSpec,
    bachelier_price,
    barrier_price,
    bermudan_price,
    black_price,
    corridor_G,
    corridor_swap_interpolated,
    corridor_swap_left_endpoint,
    corridor_t_star,
    european_price,
    grid_cdf,
    implied_vol,
)
from svquant.rmq1d import BoundaryMode


@pytest.fixture(scope="module")
def heston_grid():
    spec = preset(REFERENCE_PRESETS["heston"])
    return build_grid(spec, 6, 10, 20, x_mode=BoundaryMode.REFLECTING)


@pytest.fixture(scope="module")
def equity_grid():
    spec = preset(REFERENCE_PRESETS["sabr_equity"])
    return build_grid(spec, 6, 10, 20, y_mode=BoundaryMode.ABSORBING)


def test_constant_vol_one_step_matches_bachelier():
    # sigma = 0 freezes X, so one Euler step makes Y exactly normal
    params = PresetParams("stein_stein", dict(kappa=1.0, theta=0.2, sigma=0.0, r=0.0, rho=0.0, x0=0.2, y0=100.0))
    grid = build_grid(preset(params), 1, 1, 400)
    for strike in (80.0, 100.0, 115.0):
        ref = bachelier_price(100.0, strike, 1.0, 1.0, 20.0, OptionKind.PUT)
        got = european_price(grid, VanillaSpec("put", strike))
        assert got == pytest.approx(ref, abs=2e-3)


def test_put_call_parity(heston_grid):
    r = 0.05
    T = 1.0
    q = heston_grid.stages[-1].y_quantizer
    mean = q.codewords @ q.probabilities
    for strike in (90.0, 100.0, 110.0):
        c = european_price(heston_grid, VanillaSpec("call", strike, r))
        p = european_price(heston_grid, VanillaSpec("put", strike, r))
        assert c - p == pytest.approx(np.exp(-r * T) * (mean - strike), abs=1e-10)


def test_bermudan_bounds(heston_grid):
    v = VanillaSpec("put", 105.0, 0.05)
    eu = european_price(heston_grid, v)
    only_last = bermudan_price(heston_grid, v, ExerciseSchedule((heston_grid.K,)))
    assert only_last == pytest.approx(eu, abs=1e-12)
    every = bermudan_price(heston_grid, v, ExerciseSchedule.every(1, heston_grid.K))
    some = bermudan_price(heston_grid, v, ExerciseSchedule.every(2, heston_grid.K))
    assert eu <= some + 1e-12 <= every + 2e-12
    assert every >= 5.0  # at least intrinsic at t0


def test_barrier_limits_and_monotonicity(equity_grid):
    v = VanillaSpec("put", 100.0, 0.05, "forward")
    sched = ExerciseSchedule.every(2, equity_grid.K)
    eu = european_price(equity_grid, v)
    assert barrier_price(equity_grid, v, BarrierSpec(1e6, sched)) == pytest.approx(eu, abs=1e-12)
    # the start spot is 100 and is always monitored
    assert barrier_price(equity_grid, v, BarrierSpec(100.0, sched)) == 0.0
    prices = [barrier_price(equity_grid, v, BarrierSpec(b, sched)) for b in (105, 110, 120, 140)]
    assert all(a <= b for a, b in zip(prices, prices[1:]))
    assert prices[-1] <= eu


def test_absorbed_mass_pays_strike(equity_grid):
    v = VanillaSpec("put", 100.0, 0.05)
    last = equity_grid.stages[-1].y_quantizer
    assert last.absorbed_mass > 0
    direct = np.exp(-0.05) * (v.payoff(last.codewords) @ last.probabilities + 100.0 * last.absorbed_mass)
    assert european_price(equity_grid, v) == pytest.approx(direct, abs=1e-12)


def test_wide_corridor_averages_x(heston_grid):
    wide = CorridorSpec(0.0, 1e9)
    xbar = [st.x_quantizer.codewords @ st.x_quantizer.probabilities for st in heston_grid.stages]
    left = corridor_swap_left_endpoint(heston_grid, wide, Convention.SPOT)
    trap = corridor_swap_interpolated(heston_grid, wide, Convention.SPOT)
    assert left == pytest.approx(np.mean(xbar[:-1]), abs=1e-12)
    assert trap == pytest.approx(np.mean(0.5 * (np.array(xbar[:-1]) + np.array(xbar[1:]))), abs=1e-12)


def test_interpolated_corridor_rejects_exact_grid():
    spec = preset(REFERENCE_PRESETS["stein_stein"])
    grid = build_grid(spec, 2, 3, 4, JointProbMethod.EXACT)
    with pytest.raises(ConfigurationError):
        corridor_swap_interpolated(grid, CorridorSpec(90.0, 110.0))


@pytest.mark.parametrize(
    "s0,s1,left,right",
    [
        (100.0, 100.0, 0.0, 1.0),  # inside throughout
        (80.0, 100.0, 0.5, 1.0),  # enters through L = 90
        (100.0, 120.0, 0.0, 0.5),  # leaves through H = 110
        (80.0, 120.0, 0.25, 0.75),  # crosses the whole corridor
        (120.0, 80.0, 0.25, 0.75),
        (70.0, 70.0, 0.0, 0.0),  # outside throughout
    ],
)
def test_t_star_cases(s0, s1, left, right):
    assert corridor_t_star(s0, s1, 90.0, 110.0, 0.0, 1.0, "left") == pytest.approx(left)
    assert corridor_t_star(s0, s1, 90.0, 110.0, 0.0, 1.0, "right") == pytest.approx(right)


@pytest.mark.parametrize("s0,s1", [(100.0, 105.0), (85.0, 104.0), (95.0, 125.0), (130.0, 80.0), (70.0, 75.0)])
def test_corridor_G_against_quadrature(s0, s1):
    cor = CorridorSpec(90.0, 110.0)
    t0, t1, x0, x1 = 0.3, 0.55, 0.04, 0.09

    def integrand(t):
        w = (t - t0) / (t1 - t0)
        s = s0 + w * (s1 - s0)
        return (x0 + w * (x1 - x0)) * (90.0 <= s <= 110.0)

    ref, _ = integrate.quad(integrand, t0, t1, points=[t0 + (t1 - t0) * f for f in (0.01, 0.5)], limit=200)
    assert corridor_G(t0, t1, x0, s0, x1, s1, cor) == pytest.approx(ref, abs=1e-8)


def test_grid_cdf(equity_grid):
    pts = np.linspace(-1, 400, 50)
    c = grid_cdf(equity_grid, equity_grid.K, pts)
    assert np.all(np.diff(c) >= 0)
    assert c[0] == 0.0 and c[-1] == pytest.approx(1.0, abs=1e-12)
    assert grid_cdf(equity_grid, equity_grid.K, 0.0)[0] == pytest.approx(
        equity_grid.stages[-1].y_quantizer.absorbed_mass)


@pytest.mark.parametrize("kind", ["call", "put"])
@pytest.mark.parametrize("strike", [80.0, 100.0, 125.0])
def test_implied_vol_round_trip(kind, strike):
    p = black_price(100.0, strike, 1.5, 0.97, 0.23, kind)
    assert implied_vol(p, 100.0, strike, 1.5, 0.97, "black", kind) == pytest.approx(0.23, abs=1e-10)
    q = bachelier_price(0.04, strike / 2500, 1.0, 1.0, 0.008, kind)
    assert implied_vol(q, 0.04, strike / 2500, 1.0, 1.0, "bachelier", kind) == pytest.approx(0.008, abs=1e-12)


def test_black_reference_value():
    # textbook Black-Scholes value, S=K=100, r=5%, vol=20%, T=1
    assert black_price(100 * np.exp(0.05), 100.0, 1.0, np.exp(-0.05), 0.2) == pytest.approx(10.450583572, abs=1e-8)


def test_implied_vol_bounds():
    with pytest.raises(InversionError):
        implied_vol(0.0, 100.0, 90.0, 1.0, 1.0, "black", "put")
    with pytest.raises(InversionError):
        implied_vol(10.0, 100.0, 90.0, 1.0, 1.0, "black", "call")


@pytest.mark.parametrize(
    "make",
    [
        lambda: VanillaSpec("put", -1.0),
        lambda: ExerciseSchedule(()),
        lambda: ExerciseSchedule((2, 1)),
        lambda: ExerciseSchedule.every(5, 12),
        lambda: BarrierSpec(0.0, ExerciseSchedule((1,))),
        lambda: CorridorSpec(110.0, 90.0),
    ],
)
def test_spec_validation(make):
    with pytest.raises(ConfigurationError):
        make()


def test_schedule_beyond_grid(heston_grid):
    with pytest.raises(ConfigurationError):
        bermudan_price(heston_grid, VanillaSpec("put", 100.0), ExerciseSchedule((heston_grid.K + 1,)))


def test_bermudan_schedule_ends_at_maturity(heston_grid):
    with pytest.raises(ConfigurationError):
        bermudan_price(heston_grid, VanillaSpec("put", 100.0), ExerciseSchedule((1, 2)))
