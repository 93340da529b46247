"""Correlated two-factor Euler Monte Carlo used as an independent reference.

Random numbers come from a Philox generator seeded by ``(seed, block)`` for
fixed-size blocks of paths, and each path's normals are contiguous
(path-major). A path's draws therefore depend only on the seed and its index,
never on how the work is scheduled.
"""
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError
from .pricing import Convention, VanillaSpec

BLOCK_PATHS = 8192


@dataclass(frozen=True)
class MCConfig:
    paths: int
    steps: int
    seed: int = 0
    truncation: str = "full"
    antithetic: bool = False

    def __post_init__(self):
        if self.paths < 1 or self.steps < 1:
            raise ConfigurationError("paths and steps must be >= 1")
        if self.truncation not in ("none", "full"):
            raise ConfigurationError("truncation must be 'none' or 'full'")
        if self.antithetic and self.paths % 2:
            raise ConfigurationError("antithetic sampling needs an even number of paths")


class MCEstimate(NamedTuple):
    value: float
    stderr: float
    paths_used: int


class PathEnsemble(NamedTuple):
    times: np.ndarray
    x: np.ndarray  # (paths, recorded steps), truncated where the model is positive
    y: np.ndarray


def _estimate(samples):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    stderr = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(float(samples.mean()), stderr, n)


def _normals(config, block, n):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, block])))
    if config.antithetic:
        half = rng.standard_normal((n // 2, config.steps, 2))
        return np.concatenate([half, -half], axis=0)
    return rng.standard_normal((n, config.steps, 2))


def _blocks(spec, config):
    """Yield full (x, y) paths of shape (n_block, steps + 1) block by block.

    Recorded values are the truncated states ``max(., 0)`` for factors the
    model declares positive, i.e. the values the coefficients were evaluated on.
    """
    dt = spec.horizon_T / config.steps
    sq = np.sqrt(dt)
    rho = spec.rho
    rho_perp = np.sqrt(max(1.0 - rho * rho, 0.0))
    full = config.truncation == "full"
    cut_x = full and spec.x_positive
    cut_y = full and spec.y_positive
    n_blocks = -(-config.paths // BLOCK_PATHS)
    for block in range(n_blocks):
        n = min(BLOCK_PATHS, config.paths - block * BLOCK_PATHS)
        z = _normals(config, block, n)
        xs = np.empty((n, config.steps + 1))
        ys = np.empty((n, config.steps + 1))
        x = np.full(n, float(spec.x0))
        y = np.full(n, float(spec.y0))
        for k in range(config.steps):
            xe = np.maximum(x, 0.0) if cut_x else x
            ye = np.maximum(y, 0.0) if cut_y else y
            xs[:, k], ys[:, k] = xe, ye
            zx = z[:, k, 0]
            zy = rho * zx + rho_perp * z[:, k, 1]
            x_new = x + spec.drift_x(xe) * dt + spec.diff_x(xe) * sq * zx
            y = y + spec.drift_y(ye) * dt + spec.diff_y(xe, ye) * sq * zy
            x = x_new
        xs[:, -1] = np.maximum(x, 0.0) if cut_x else x
        ys[:, -1] = np.maximum(y, 0.0) if cut_y else y
        yield xs, ys


def simulate_paths(spec, config, record_steps=None):
    """Simulate all paths and keep the requested step indices (default: all)."""
    cols = slice(None) if record_steps is None else np.asarray(record_steps, dtype=int)
    xs, ys = [], []
    for x, y in _blocks(spec, config):
        xs.append(x[:, cols])
        ys.append(y[:, cols])
    times = spec.horizon_T / config.steps * np.arange(config.steps + 1)
    return PathEnsemble(times[cols], np.concatenate(xs), np.concatenate(ys))


def _spot(spec, y, t, rate, convention):
    if Convention(convention) is Convention.FORWARD:
        return y * np.exp(-rate * (spec.horizon_T - t))
    return y


def _terminal_pv(spec, vanilla, y_T):
    return np.exp(-vanilla.discount_rate * spec.horizon_T) * vanilla.payoff(y_T)


def mc_european(spec, config, instrument):
    """European estimate(s); a list of instruments shares one path set."""
    many = not isinstance(instrument, VanillaSpec)
    items = list(instrument) if many else [instrument]
    y_T = simulate_paths(spec, config, [config.steps]).y[:, 0]
    out = [_estimate(_terminal_pv(spec, v, y_T)) for v in items]
    return out if many else out[0]


def _mc_index(step, grid_K, steps):
    if (step * steps) % grid_K:
        raise ConfigurationError(f"grid step {step} of {grid_K} is not on the {steps}-step MC time grid")
    return step * steps // grid_K


def mc_barrier(spec, config, vanilla, barrier, grid_K=None):
    """Up-and-out option monitored at ``barrier.monitoring`` (grid step indices
    out of ``grid_K``, default ``config.steps``) and at the start."""
    grid_K = config.steps if grid_K is None else grid_K
    idx = [0] + [_mc_index(k, grid_K, config.steps) for k in barrier.monitoring.step_indices]
    idx = sorted(set(idx) | {config.steps})
    ens = simulate_paths(spec, config, idx)
    rate = vanilla.discount_rate
    alive = np.ones(ens.y.shape[0], dtype=bool)
    monitored = {0} | {_mc_index(k, grid_K, config.steps) for k in barrier.monitoring.step_indices}
    for col, n in enumerate(idx):
        if n in monitored:
            s = _spot(spec, ens.y[:, col], ens.times[col], rate, vanilla.underlying_convention)
            alive &= s < barrier.level
    return _estimate(np.where(alive, _terminal_pv(spec, vanilla, ens.y[:, -1]), 0.0))


def mc_corridor(spec, config, corridor, convention=Convention.FORWARD):
    """Left-endpoint quadrature of the corridor payoff at the MC time step."""
    dt = spec.horizon_T / config.steps
    times = dt * np.arange(config.steps)
    payoffs = []
    for x, y in _blocks(spec, config):
        s = _spot(spec, y[:, :-1], times[None, :], corridor.rate, convention)
        inside = (s > corridor.low) & (s < corridor.high)
        payoffs.append((x[:, :-1] * inside).sum(axis=1) * dt / spec.horizon_T)
    return _estimate(np.concatenate(payoffs))


def _basis(s, x, degree):
    cols = [np.ones_like(s)]
    for d in range(1, degree + 1):
        for p in range(d, -1, -1):
            cols.append(s**p * x ** (d - p))
    return np.stack(cols, axis=1)


def _fit(s, x, target, degree):
    """Least-squares continuation fit; drops degree while the system is singular."""
    for deg in range(degree, -1, -1):
        B = _basis(s, x, deg)
        A = np.einsum("pi,pj->ij", B, B)
        rhs = np.einsum("pi,p->i", B, target)
        if np.linalg.matrix_rank(A) == A.shape[0] and np.linalg.cond(A) < 1e13:
            if deg < degree:
                warnings.warn(f"LSMC regression rank deficient; using degree {deg}", RuntimeWarning)
            return B @ np.linalg.solve(A, rhs)
    return np.full_like(target, target.mean())


def mc_bermudan_lsmc(spec, config, vanilla, schedule, basis_degree=2, grid_K=None):
    """Least-squares Monte Carlo price regressing on (S, X) over in-the-money paths."""
    if basis_degree < 1:
        raise ConfigurationError("basis_degree must be >= 1")
    grid_K = config.steps if grid_K is None else grid_K
    dates = [_mc_index(k, grid_K, config.steps) for k in schedule.step_indices]
    idx = sorted(set(dates) | {config.steps})
    ens = simulate_paths(spec, config, idx)
    rate = vanilla.discount_rate
    pv = _terminal_pv(spec, vanilla, ens.y[:, -1])
    for col in range(len(idx) - 1, -1, -1):
        n = idx[col]
        if n == config.steps or n not in dates:
            continue
        t = ens.times[col]
        s = _spot(spec, ens.y[:, col], t, rate, vanilla.underlying_convention)
        exercise = vanilla.payoff(s)
        itm = exercise > 0
        if not np.any(itm):
            continue
        growth = np.exp(rate * t)
        # scale regressors to order one
        s_scale = max(vanilla.strike, 1e-12)
        x_scale = max(float(np.mean(np.abs(ens.x[itm, col]))), 1e-12)
        fitted = _fit(s[itm] / s_scale, ens.x[itm, col] / x_scale, pv[itm] * growth, basis_degree)
        stop = exercise[itm] >= fitted
        rows = np.flatnonzero(itm)[stop]
        pv[rows] = exercise[rows] / growth
    return _estimate(pv)


def mc_marginal_samples(spec, config, steps):
    """Y samples at the given step indices, one column per step."""
    return simulate_paths(spec, config, steps).y


def mc_distortion(codewords, prev_x, prev_y, weights, spec, dt, n_samples, seed=0):
    """Monte Carlo distortion of a Y quantizer under the correlated two-innovation
    Euler update from a discrete (X, Y) law.

    Returns the sample mean of the squared distance to the nearest codeword and
    its standard error.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0])))
    x = np.asarray(prev_x, dtype=float)
    y = np.asarray(prev_y, dtype=float)
    w = np.asarray(weights, dtype=float).ravel()
    nodes = rng.choice(w.size, size=n_samples, p=w / w.sum())
    xi, yu = np.unravel_index(nodes, (x.size, y.size))
    xs, ys = x[xi], y[yu]
    z = rng.standard_normal((n_samples, 2))
    zy = spec.rho * z[:, 0] + np.sqrt(1.0 - spec.rho**2) * z[:, 1]
    y_next = ys + spec.drift_y(ys) * dt + spec.diff_y(xs, ys) * np.sqrt(dt) * zy
    cw = np.asarray(codewords, dtype=float)
    mids = 0.5 * (cw[1:] + cw[:-1])
    nearest = cw[np.searchsorted(mids, y_next, side="left")]
    return _estimate((y_next - nearest) ** 2)
