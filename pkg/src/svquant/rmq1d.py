"""Recursive marginal quantization of a one-dimensional Euler scheme.

The distribution quantized at each step is a finite mixture of affine
Gaussian updates ``U_t = m_t Z + c_t`` with weights ``w_t``. The same engine
serves the independent factor (one term per previous codeword) and the
dependent factor of the joint algorithm (one term per pair of previous
codewords), so everything below is written in terms of a :class:`Mixture`.

Since ``m Z + c`` and ``|m| Z + c`` have the same law, quantization only ever
sees ``|m|``. Terms with ``m == 0`` are Dirac masses at ``c`` and are handled
without dividing by ``m``.
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import special

from . import gaussmath as gm
from .errors import ConvergenceError, SingularMatrixError
from .model import affine_x


class BoundaryMode(str, Enum):
    NONE = "none"
    REFLECTING = "reflecting"
    ABSORBING = "absorbing"


@dataclass(frozen=True)
class NewtonSettings:
    max_iterations: int = 50
    # relative to the codeword scale max(|codewords|)
    gradient_tolerance: float = 1e-9
    damping: float = 1.0
    max_halvings: int = 20

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be > 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class Quantizer1D:
    time_index: int
    codewords: np.ndarray
    probabilities: np.ndarray
    absorbed_mass: float = 0.0

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=float)
        pr = np.asarray(self.probabilities, dtype=float)
        if cw.ndim != 1 or cw.shape != pr.shape:
            raise ValueError("codewords and probabilities must be 1-D of equal length")
        if cw.size > 1 and not np.all(np.diff(cw) > 0):
            raise ValueError("codewords must be strictly increasing")
        object.__setattr__(self, "codewords", cw)
        object.__setattr__(self, "probabilities", pr)

    def __len__(self):
        return self.codewords.size

    def total_mass(self):
        return float(self.probabilities.sum() + self.absorbed_mass)

    def augmented(self):
        """Codewords and probabilities with the absorbed mass as a codeword at 0."""
        if self.absorbed_mass <= 0.0:
            return self.codewords, self.probabilities
        return (
            np.concatenate([[0.0], self.codewords]),
            np.concatenate([[self.absorbed_mass], self.probabilities]),
        )


class RegionBoundaries(NamedTuple):
    """Standardized region bounds r^{j-}, r^{j+} seen from one affine update."""

    lower: np.ndarray
    upper: np.ndarray
    degenerate: bool


def midpoints(codewords):
    codewords = np.asarray(codewords, dtype=float)
    return 0.5 * (codewords[1:] + codewords[:-1])


def region_boundaries_1d(quantizer_next, pair):
    cw = quantizer_next.codewords if isinstance(quantizer_next, Quantizer1D) else np.asarray(quantizer_next)
    m, c = float(pair.m), float(pair.c)
    if m == 0.0:
        nan = np.full(cw.size, np.nan)
        return RegionBoundaries(nan, nan.copy(), True)
    edges = np.concatenate([[-np.inf], midpoints(cw), [np.inf]])
    r = (edges - c) / m
    return RegionBoundaries(r[:-1], r[1:], False)


@dataclass(frozen=True, eq=False)
class Mixture:
    """Weighted sum of laws of ``m Z + c`` on which a boundary mode acts."""

    m: np.ndarray
    c: np.ndarray
    w: np.ndarray
    mode: BoundaryMode = BoundaryMode.NONE

    def __post_init__(self):
        m, c, w = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (self.m, self.c, self.w))
        m, c, w = np.broadcast_arrays(m, c, w)
        object.__setattr__(self, "m", m.ravel())
        object.__setattr__(self, "c", c.ravel())
        object.__setattr__(self, "w", w.ravel())
        object.__setattr__(self, "mode", BoundaryMode(self.mode))

    def compress(self):
        """Drop zero-weight terms."""
        keep = self.w > 0
        return Mixture(self.m[keep], self.c[keep], self.w[keep], self.mode)

    def mean_std(self):
        total = self.w.sum()
        mean = (self.w * self.c).sum() / total
        second = (self.w * (self.m**2 + (self.c - mean) ** 2)).sum() / total
        return mean, np.sqrt(max(second, 0.0))


class _Eval(NamedTuple):
    distortion: float
    gradient: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    masses: np.ndarray  # (terms, N) region probability of each term
    absorbed: np.ndarray  # (terms,) mass each term sends below zero (absorbing)
    first: np.ndarray  # (N,) sum_t w_t E[U_t 1{U_t in R_v}]
    weight: np.ndarray  # (N,) mixture mass of each region


def _atoms(mix):
    """Positions of the Dirac terms after the boundary mode, and absorbed flags."""
    c = mix.c
    if mix.mode is BoundaryMode.REFLECTING:
        return np.abs(c), np.zeros(c.shape, dtype=bool)
    if mix.mode is BoundaryMode.ABSORBING:
        return c, c < 0
    return c, np.zeros(c.shape, dtype=bool)


def _evaluate(y, mix, need_hessian=True):
    with np.errstate(invalid="ignore"):
        return _evaluate_impl(y, mix, need_hessian)


def _evaluate_impl(y, mix, need_hessian):
    y = np.asarray(y, dtype=float)
    n = y.size
    a = np.abs(mix.m)
    smooth = a > 0
    n_terms = a.size
    masses = np.zeros((n_terms, n))
    absorbed = np.zeros(n_terms)
    b = midpoints(y)

    distortion = 0.0
    grad = np.zeros(n)
    first = np.zeros(n)
    density = np.zeros(max(n - 1, 0))

    if np.any(smooth):
        aa, cc, ww = a[smooth], mix.c[smooth], mix.w[smooth]
        r = (b[None, :] - cc[:, None]) / aa[:, None]
        lower = np.full(aa.size, -np.inf)
        upper = np.full(aa.size, np.inf)
        if mix.mode is BoundaryMode.NONE:
            bounds = np.column_stack([lower, r, upper])
            g0 = special.ndtr(bounds)
            phi = np.exp(-0.5 * bounds * bounds) / np.sqrt(2 * np.pi)
            g1 = -phi
            g2 = g0 - np.where(np.isfinite(bounds), bounds * phi, 0.0)
            dens = phi[:, 1:-1]
        else:
            ybar = -cc / aa
            rc = np.maximum(r, ybar[:, None])
            bounds = np.column_stack([ybar, rc, upper])
            yb = ybar[:, None]
            inside = (r > yb).astype(float)
            if mix.mode is BoundaryMode.ABSORBING:
                g0 = special.ndtr(bounds)
                phi = np.exp(-0.5 * bounds * bounds) / np.sqrt(2 * np.pi)
                g1 = -phi
                g2 = g0 - np.where(np.isfinite(bounds), bounds * phi, 0.0)
                dens = np.asarray(gm.normal_pdf(r)) * inside
                absorbed[smooth] = special.ndtr(ybar)
            else:
                g0 = gm.reflected_cdf(bounds, yb)
                g1 = gm.reflected_lpe(bounds, yb)
                g2 = gm.reflected_second_moment(bounds, yb)
                dens = np.asarray(gm.reflected_pdf(rc, yb)) * inside
        p0 = np.diff(g0, axis=1)
        p1 = np.diff(g1, axis=1)
        p2 = np.diff(g2, axis=1)
        masses[smooth] = p0
        dev = cc[:, None] - y[None, :]  # c - y_v
        wa = (ww * aa)[:, None]
        distortion += float(
            np.sum(ww[:, None] * (aa[:, None] ** 2 * p2 + 2 * aa[:, None] * dev * p1 + dev * dev * p0))
        )
        grad += 2.0 * np.sum(ww[:, None] * (-dev) * p0 - wa * p1, axis=0)
        first += np.sum(ww[:, None] * cc[:, None] * p0 + wa * p1, axis=0)
        if n > 1:
            density += np.sum((ww / aa)[:, None] * dens, axis=0)

    if not np.all(smooth):
        idx = np.flatnonzero(~smooth)
        pos, gone = _atoms(Mixture(mix.m[idx], mix.c[idx], mix.w[idx], mix.mode))
        absorbed[idx[gone]] = 1.0
        live = idx[~gone]
        pos = pos[~gone]
        region = np.searchsorted(b, pos, side="left")
        masses[live, region] = 1.0
        wl = mix.w[live]
        distortion += float(np.sum(wl * (pos - y[region]) ** 2))
        np.add.at(grad, region, 2.0 * wl * (y[region] - pos))
        np.add.at(first, region, wl * pos)

    weight = mix.w @ masses if n_terms else np.zeros(n)
    if need_hessian:
        off = 0.5 * density * (y[:-1] - y[1:])
        diag = 2.0 * weight
        diag[:-1] += off
        diag[1:] += off
    else:
        off = diag = None
    return _Eval(distortion, grad, diag, off, masses, absorbed, first, weight)


def mixture_distortion(codewords, mix):
    return _evaluate(codewords, mix, need_hessian=False).distortion


def mixture_gradient(codewords, mix):
    return _evaluate(codewords, mix, need_hessian=False).gradient


def mixture_hessian(codewords, mix):
    ev = _evaluate(codewords, mix)
    return ev.diag, ev.off


def region_masses(codewords, mix):
    """Per-term region probabilities (terms x N) and per-term absorbed mass."""
    ev = _evaluate(codewords, mix, need_hessian=False)
    return ev.masses, ev.absorbed


def newton_solve_tridiagonal(diag, off, rhs):
    """Solve a symmetric tridiagonal system by the Thomas algorithm."""
    diag = np.asarray(diag, dtype=float)
    off = np.asarray(off, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.size
    if rhs.size != n or off.size != max(n - 1, 0):
        raise ValueError("inconsistent tridiagonal dimensions")
    cp = np.empty(max(n - 1, 0))
    dp = np.empty(n)
    pivot = diag[0]
    if pivot == 0 or not np.isfinite(pivot):
        raise SingularMatrixError("zero pivot at row 0")
    dp[0] = rhs[0] / pivot
    for i in range(1, n):
        cp[i - 1] = off[i - 1] / pivot
        pivot = diag[i] - off[i - 1] * cp[i - 1]
        if pivot == 0 or not np.isfinite(pivot):
            raise SingularMatrixError(f"zero pivot at row {i}")
        dp[i] = (rhs[i] - off[i - 1] * dp[i - 1]) / pivot
    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return dp


def _tolerance(y, settings):
    scale = float(np.max(np.abs(y))) if y.size else 1.0
    return settings.gradient_tolerance * (scale if scale > 0 else 1.0)


def _lloyd_direction(ev):
    # y - (conditional means); zero for empty regions
    mass = ev.weight
    return np.where(mass > 0, ev.gradient / (2.0 * np.where(mass > 0, mass, 1.0)), 0.0)


def newton_quantize(mix, init, settings=NewtonSettings(), step=None):
    """Minimize the mixture distortion by damped Newton-Raphson from ``init``."""
    y = np.array(init, dtype=float)
    tol = _tolerance(y, settings)
    ev = _evaluate(y, mix)
    gnorm = float(np.max(np.abs(ev.gradient))) if y.size else 0.0
    for _ in range(settings.max_iterations):
        if gnorm <= tol:
            return y, ev
        try:
            direction = newton_solve_tridiagonal(ev.diag, ev.off, ev.gradient)
            if not np.all(np.isfinite(direction)) or direction @ ev.gradient <= 0:
                raise SingularMatrixError("Hessian not positive along the Newton step")
        except SingularMatrixError:
            direction = _lloyd_direction(ev)
        slack = 1e-12 * abs(ev.distortion) + 1e-300
        t = settings.damping
        for _ in range(settings.max_halvings + 1):
            trial = y - t * direction
            if trial.size < 2 or np.all(np.diff(trial) > 0):
                ev_trial = _evaluate(trial, mix)
                if ev_trial.distortion <= ev.distortion + slack:
                    break
            t *= 0.5
        else:
            raise ConvergenceError("damped Newton step failed to decrease the distortion", gnorm, step)
        y, ev = trial, ev_trial
        gnorm = float(np.max(np.abs(ev.gradient)))
        tol = _tolerance(y, settings)
    if gnorm <= tol:
        return y, ev
    raise ConvergenceError(
        f"no convergence within {settings.max_iterations} iterations", gnorm, step
    )


def _standard_normal_codewords(n, settings):
    return _unit_codewords(n, settings.gradient_tolerance)


@lru_cache(maxsize=64)
def _unit_codewords(n, tolerance):
    # a fixed reference problem: only the tolerance is taken from the caller
    z = np.asarray(gm.normal_inv_cdf((2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)))
    unit = Mixture([1.0], [0.0], [1.0])
    y, _ = newton_quantize(unit, z, NewtonSettings(max_iterations=200, gradient_tolerance=tolerance))
    y.setflags(write=False)
    return y


def init_gaussian_quantizer(n, mean, std, settings=NewtonSettings(), time_index=1):
    """Stationary (Lloyd) quantizer of N(mean, std^2) with n codewords."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if std < 0:
        raise ValueError("std must be >= 0")
    if n == 1 or std == 0:
        return Quantizer1D(time_index, np.array([float(mean)]), np.array([1.0]))
    z = _standard_normal_codewords(n, settings)
    codewords = mean + std * z
    masses, _ = region_masses(z, Mixture([1.0], [0.0], [1.0]))
    return Quantizer1D(time_index, codewords, masses[0])


def _mixture_cdf(points, mix):
    a = np.abs(mix.m)
    pts = np.asarray(points, dtype=float)[None, :]
    out = np.zeros(pts.shape[1])
    smooth = a > 0
    if np.any(smooth):
        aa, cc, ww = a[smooth, None], mix.c[smooth, None], mix.w[smooth, None]
        z = (pts - cc) / aa
        if mix.mode is BoundaryMode.NONE:
            out += np.sum(ww * special.ndtr(z), axis=0)
        else:
            ybar = -cc / aa
            zc = np.maximum(z, ybar)
            if mix.mode is BoundaryMode.ABSORBING:
                cdf = special.ndtr(zc) - special.ndtr(ybar)
            else:
                cdf = np.asarray(gm.reflected_cdf(zc, ybar))
            out += np.sum(ww * cdf, axis=0)
    if not np.all(smooth):
        idx = ~smooth
        pos, gone = _atoms(Mixture(mix.m[idx], mix.c[idx], mix.w[idx], mix.mode))
        out += np.sum(mix.w[idx][~gone, None] * (pos[~gone, None] <= pts), axis=0)
    return out


def _quantile_init(mix, n):
    """Codewords at mixture quantiles (2i-1)/(2n); used when a moment-matched
    Gaussian start would place codewords outside a boundary's support."""
    total = float(_mixture_cdf([np.inf], mix)[0])
    levels = total * (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    a = np.abs(mix.m)
    lo = np.full(n, float(np.min(mix.c - 12 * a)))
    hi = np.full(n, float(np.max(mix.c + 12 * a)))
    if mix.mode is not BoundaryMode.NONE:
        lo = np.maximum(lo, 0.0)
        hi = np.maximum(hi, np.abs(mix.c).max() + 12 * a.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = _mixture_cdf(mid, mix) < levels
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    y = 0.5 * (lo + hi)
    # spread any ties so the start is strictly increasing
    for i in range(1, n):
        if y[i] <= y[i - 1]:
            y[i] = np.nextafter(y[i - 1], np.inf) + 1e-12 * max(abs(y[i - 1]), 1.0)
    return y


def _gaussian_init(mix, n, settings):
    mean, std = mix.mean_std()
    if std == 0:
        std = 1e-8 * max(abs(mean), 1.0)
    y = mean + std * _standard_normal_codewords(n, settings)
    if mix.mode is not BoundaryMode.NONE and y[0] <= 0:
        return _quantile_init(mix, n)
    return y


def quantize_mixture(mix, n, settings=NewtonSettings(), init=None, step=None):
    """Optimal n-point quantizer of a mixture.

    Returns ``(codewords, evaluation)``. When every live term is a Dirac mass
    and there are at most ``n`` distinct atoms the atoms themselves are returned
    (zero distortion), so the result may have fewer than ``n`` codewords.
    """
    live = mix.compress()
    if live.w.size == 0:
        raise ValueError("mixture has no mass")
    if np.all(live.m == 0):
        pos, gone = _atoms(live)
        atoms = np.unique(pos[~gone])
        if 0 < atoms.size <= n:
            return atoms, _evaluate(atoms, live)
    def starts():
        if init is not None and len(init) == n and (n < 2 or np.all(np.diff(init) > 0)):
            yield np.asarray(init, dtype=float)
        yield _gaussian_init(live, n, settings) if n > 1 else np.array([live.mean_std()[0]])
        if live.mode is not BoundaryMode.NONE and n > 1:
            yield _quantile_init(live, n)

    error = None
    for start in starts():
        try:
            y, ev = newton_quantize(live, start, settings, step=step)
            return y, _evaluate(y, live)
        except ConvergenceError as exc:
            error = exc
    raise error


def x_mixture(prev, spec, dt, mode):
    pair = affine_x(spec, prev.codewords, dt)
    return Mixture(pair.m, pair.c, prev.probabilities, mode)


def rmq_step(prev, spec, dt, n_next, mode=BoundaryMode.NONE, settings=NewtonSettings()):
    """Quantizer of the Euler update of X one step after ``prev``."""
    mode = BoundaryMode(mode)
    if n_next < 1:
        raise ValueError("n_next must be >= 1")
    mix = x_mixture(prev, spec, dt, mode)
    init = prev.codewords if len(prev) == n_next else None
    y, _ = quantize_mixture(mix, n_next, settings, init=init, step=prev.time_index + 1)
    masses, absorbed = region_masses(y, mix)
    probs = prev.probabilities @ masses
    lost = float(prev.probabilities @ absorbed)
    return Quantizer1D(prev.time_index + 1, y, probs, prev.absorbed_mass + lost)


def transition_matrix_1d(prev, next_, spec, dt, mode=BoundaryMode.NONE):
    """Row i holds P(X_{k+1} = x^j | X_k = x^i); rows lose only absorbed mass."""
    mix = x_mixture(prev, spec, dt, BoundaryMode(mode))
    masses, _ = region_masses(next_.codewords, mix)
    return masses


def rmq_run(spec, K, n, mode=BoundaryMode.NONE, settings=NewtonSettings()):
    """Quantizers of X for steps 0..K."""
    dt = spec.horizon_T / K
    quantizers = [Quantizer1D(0, np.array([float(spec.x0)]), np.array([1.0]))]
    for _ in range(K):
        quantizers.append(rmq_step(quantizers[-1], spec, dt, n, mode, settings))
    return quantizers
