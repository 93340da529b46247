"""Pricing off a quantization grid.

Under the ``forward`` convention Y is the T-forward of the asset, so the spot
used for exercise, barrier and corridor tests is ``S_k = Y_k exp(-r (T - t_k))``.
Under ``spot`` Y is the asset itself.

Absorbed mass (Y stopped at zero) is carried as an extra state per X codeword
with asset value 0.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize, special

from .errors import ConfigurationError, InversionError
from .jrmq import JointProbMethod


class OptionKind(str, Enum):
    CALL = "call"
    PUT = "put"


class Convention(str, Enum):
    SPOT = "spot"
    FORWARD = "forward"


@dataclass(frozen=True)
class VanillaSpec:
    kind: OptionKind
    strike: float
    discount_rate: float = 0.0
    underlying_convention: Convention = Convention.SPOT

    def __post_init__(self):
        object.__setattr__(self, "kind", OptionKind(self.kind))
        object.__setattr__(self, "underlying_convention", Convention(self.underlying_convention))
        if self.strike < 0:
            raise ConfigurationError("strike must be non-negative")

    def payoff(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind is OptionKind.CALL:
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)


@dataclass(frozen=True)
class ExerciseSchedule:
    step_indices: tuple

    def __post_init__(self):
        idx = tuple(int(k) for k in self.step_indices)
        if not idx:
            raise ConfigurationError("schedule must not be empty")
        if any(k < 1 for k in idx) or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ConfigurationError("schedule indices must be ascending and >= 1")
        object.__setattr__(self, "step_indices", idx)

    @classmethod
    def every(cls, stride, K):
        """Every ``stride``-th step up to and including K."""
        if stride < 1 or K % stride:
            raise ConfigurationError(f"stride {stride} does not divide K={K}")
        return cls(tuple(range(stride, K + 1, stride)))

    def __contains__(self, k):
        return k in self.step_indices


@dataclass(frozen=True)
class BarrierSpec:
    level: float
    monitoring: ExerciseSchedule

    def __post_init__(self):
        if not self.level > 0:
            raise ConfigurationError("barrier level must be positive")


@dataclass(frozen=True)
class CorridorSpec:
    low: float
    high: float
    rate: float = 0.0

    def __post_init__(self):
        if not 0 <= self.low < self.high:
            raise ConfigurationError("corridor needs 0 <= low < high")

    @classmethod
    def from_spread(cls, s0, spread, rate=0.0):
        return cls(s0 * (1.0 - spread), s0 * (1.0 + spread), rate)


def _spot(grid, k, y, rate, convention):
    if Convention(convention) is Convention.FORWARD:
        T = grid.dt * grid.K
        return np.asarray(y) * np.exp(-rate * (T - k * grid.dt))
    return np.asarray(y)


def _check_schedule(grid, schedule):
    if schedule.step_indices[-1] > grid.K:
        raise ConfigurationError(f"schedule index {schedule.step_indices[-1]} beyond K={grid.K}")


def european_price(grid, spec):
    """Discounted expectation of the payoff under the terminal Y marginal."""
    last = grid.stages[-1].y_quantizer
    T = grid.dt * grid.K
    s = _spot(grid, grid.K, last.codewords, spec.discount_rate, spec.underlying_convention)
    value = spec.payoff(s) @ last.probabilities + float(spec.payoff(0.0)) * last.absorbed_mass
    return float(np.exp(-spec.discount_rate * T) * value)


def _backward(grid, terminal, terminal_absorbed, rule, rule_absorbed, rate):
    """Backward induction over the joint grid.

    ``rule(k, cont)`` and ``rule_absorbed(k, cont)`` map continuation values to
    node values at step k; the terminal arrays are the step-K node values.
    """
    disc = np.exp(-rate * grid.dt)
    value = np.broadcast_to(terminal, grid.stages[-1].joint.shape).copy()
    value_abs = np.full(grid.stages[-1].joint.shape[0], terminal_absorbed)
    for k in range(grid.K - 1, -1, -1):
        tensor, lost = grid.transition(k)
        ptx = grid.stages[k + 1].x_transition
        cont = disc * (np.einsum("iujv,jv->iu", tensor, value) + np.einsum("iuj,j->iu", lost, value_abs))
        cont_abs = disc * (ptx @ value_abs)
        value = rule(k, cont)
        value_abs = rule_absorbed(k, cont_abs)
    return float(value[0, 0])


def bermudan_price(grid, spec, schedule):
    """Early exercise at the schedule steps, continuation by exact grid transitions."""
    _check_schedule(grid, schedule)
    if schedule.step_indices[-1] != grid.K:
        raise ConfigurationError("a Bermudan schedule must end at maturity")
    rate = spec.discount_rate

    def exercise(k):
        y = grid.stages[k].y_quantizer.codewords
        return spec.payoff(_spot(grid, k, y, rate, spec.underlying_convention))[None, :]

    def rule(k, cont):
        return np.maximum(cont, exercise(k)) if k in schedule else cont

    def rule_absorbed(k, cont):
        return np.maximum(cont, float(spec.payoff(0.0))) if k in schedule else cont

    terminal = spec.payoff(_spot(grid, grid.K, grid.stages[-1].y_quantizer.codewords, rate,
                                 spec.underlying_convention))[None, :]
    return _backward(grid, terminal, float(spec.payoff(0.0)), rule, rule_absorbed, rate)


def barrier_price(grid, spec, barrier):
    """Discretely monitored up-and-out option; the start is always checked."""
    _check_schedule(grid, barrier.monitoring)
    rate = spec.discount_rate

    def alive(k):
        y = grid.stages[k].y_quantizer.codewords
        return (_spot(grid, k, y, rate, spec.underlying_convention) < barrier.level)[None, :]

    def rule(k, cont):
        if k in barrier.monitoring or k == 0:
            return np.where(alive(k), cont, 0.0)
        return cont

    terminal = spec.payoff(_spot(grid, grid.K, grid.stages[-1].y_quantizer.codewords, rate,
                                 spec.underlying_convention))[None, :]
    if grid.K in barrier.monitoring:
        terminal = np.where(alive(grid.K), terminal, 0.0)
    # absorbed paths sit at zero, below any barrier
    return _backward(grid, terminal, float(spec.payoff(0.0)), rule, lambda k, c: c, rate)


def corridor_swap_left_endpoint(grid, corridor, convention=Convention.FORWARD):
    T = grid.dt * grid.K
    total = 0.0
    for k in range(grid.K):
        st = grid.stages[k]
        s = _spot(grid, k, st.y_quantizer.codewords, corridor.rate, convention)
        inside = (s > corridor.low) & (s < corridor.high)
        total += grid.dt * float(st.x_quantizer.codewords @ st.joint @ inside)
    return total / T


def corridor_t_star(s_k, s_k1, L, H, t_k, dt, endpoint):
    """Entry (``left``) or exit (``right``) time of the linearly interpolated
    price path within the corridor [L, H] on [t_k, t_k + dt]."""
    s_k, s_k1 = np.broadcast_arrays(np.asarray(s_k, float), np.asarray(s_k1, float))
    s = s_k if endpoint == "left" else s_k1
    own = t_k if endpoint == "left" else t_k + dt
    slope = s_k1 - s_k
    flat = slope == 0
    safe = np.where(flat, 1.0, slope)
    above = t_k + dt * (H - s_k) / safe
    below = t_k + dt * (L - s_k) / safe
    out = np.where(s > H, above, np.where(s < L, below, own))
    # a flat path outside the corridor never enters it
    out = np.where(flat & ((s > H) | (s < L)), t_k, out)
    return float(out) if out.ndim == 0 else out


def corridor_G(t_k, t_k1, x_k, s_k, x_k1, s_k1, corridor):
    """Integral over one step of the interpolated volatility while the
    interpolated price lies inside the corridor."""
    dt = t_k1 - t_k
    lo = corridor_t_star(s_k, s_k1, corridor.low, corridor.high, t_k, dt, "left")
    hi = corridor_t_star(s_k, s_k1, corridor.low, corridor.high, t_k, dt, "right")
    return (x_k1 - x_k) / (2 * dt) * ((hi - t_k) ** 2 - (lo - t_k) ** 2) + x_k * (hi - lo)


def corridor_swap_interpolated(grid, corridor, convention=Convention.FORWARD):
    if grid.method is JointProbMethod.EXACT:
        raise ConfigurationError(
            "the interpolated corridor estimator needs the conditional decomposition of a "
            "conditional_approximation grid"
        )
    T = grid.dt * grid.K
    dt = grid.dt
    total = 0.0
    for k in range(grid.K):
        st, nx = grid.stages[k], grid.stages[k + 1]
        tensor, lost = grid.transition(k)
        s0 = _spot(grid, k, st.y_quantizer.codewords, corridor.rate, convention)
        s1 = _spot(grid, k + 1, nx.y_quantizer.codewords, corridor.rate, convention)
        s1 = np.concatenate([s1, [0.0]])  # absorbed state
        probs = np.concatenate([tensor, lost[..., None]], axis=-1) * st.joint[:, :, None, None]
        a, b = s0[:, None], s1[None, :]
        lo = corridor_t_star(a, b, corridor.low, corridor.high, 0.0, dt, "left")
        hi = corridor_t_star(a, b, corridor.low, corridor.high, 0.0, dt, "right")
        Q = hi**2 - lo**2
        W = hi - lo
        xi, xj = st.x_quantizer.codewords, nx.x_quantizer.codewords
        total += np.einsum("iujv,uv,j->", probs, Q, xj) / (2 * dt)
        total += np.einsum("iujv,uv,i->", probs, W - Q / (2 * dt), xi)
    return float(total) / T


def grid_cdf(grid, k, points):
    """P(Y_k <= point) on the grid, absorbed mass counted at zero."""
    q = grid.stages[k].y_quantizer
    cw, pr = q.augmented()
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    return (pr[None, :] * (cw[None, :] <= pts[:, None])).sum(axis=1)


def black_price(forward, strike, T, df, sigma, kind=OptionKind.CALL):
    sd = sigma * np.sqrt(T)
    if sd <= 0:
        intrinsic = forward - strike if OptionKind(kind) is OptionKind.CALL else strike - forward
        return df * max(intrinsic, 0.0)
    d1 = (np.log(forward / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    if OptionKind(kind) is OptionKind.CALL:
        return df * (forward * special.ndtr(d1) - strike * special.ndtr(d2))
    return df * (strike * special.ndtr(-d2) - forward * special.ndtr(-d1))


def bachelier_price(forward, strike, T, df, sigma, kind=OptionKind.CALL):
    sd = sigma * np.sqrt(T)
    w = 1.0 if OptionKind(kind) is OptionKind.CALL else -1.0
    if sd <= 0:
        return df * max(w * (forward - strike), 0.0)
    d = (forward - strike) / sd
    return df * (w * (forward - strike) * special.ndtr(w * d) + sd * np.exp(-0.5 * d * d) / np.sqrt(2 * np.pi))


def implied_vol(price, forward, strike, T, df, model="black", kind=OptionKind.CALL):
    """Black or Bachelier volatility reproducing ``price``."""
    kind = OptionKind(kind)
    pricer = {"black": black_price, "bachelier": bachelier_price}[model]
    w = 1.0 if kind is OptionKind.CALL else -1.0
    lower = df * max(w * (forward - strike), 0.0)
    if model == "black":
        if forward <= 0 or strike <= 0:
            raise InversionError("Black inversion needs positive forward and strike")
        upper = df * (forward if kind is OptionKind.CALL else strike)
        if not lower < price < upper:
            raise InversionError(f"price {price} outside Black bounds ({lower}, {upper})")
    elif not price > lower:
        raise InversionError(f"price {price} not above intrinsic value {lower}")

    def f(sigma):
        return pricer(forward, strike, T, df, sigma, kind) - price

    hi = 1.0 if model == "black" else max(abs(forward), abs(strike), 1e-4) * 0.5
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise InversionError("could not bracket the implied volatility")
    return optimize.brentq(f, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
