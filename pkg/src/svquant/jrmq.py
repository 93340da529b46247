"""Joint recursive marginal quantization of a two-factor model.

X is quantized first by one-dimensional RMQ. Y is then quantized step by step
against the mixture of margined Euler updates, one term per node ``(i, u)`` of
the previous joint grid weighted by its joint probability. The correlation
never enters the optimization; it only shapes the joint probabilities.

Working in ``sgn(m) Z`` coordinates keeps every scale positive, at the price
of an effective correlation ``rho * sgn(m^i) * sgn(mbar^{iu})`` between the
two standardized innovations.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import gaussmath as gm
from .errors import ConfigurationError, ConvergenceError
from .model import ModelSpec, affine_x, affine_y_margined
from .rmq1d import (
    BoundaryMode,
    Mixture,
    NewtonSettings,
    Quantizer1D,
    midpoints,
    mixture_distortion,
    mixture_gradient,
    mixture_hessian,
    quantize_mixture,
    region_masses,
    rmq_step,
    transition_matrix_1d,
)


class JointProbMethod(str, Enum):
    EXACT = "exact_bivariate"
    APPROX = "conditional_approximation"


@dataclass(frozen=True, eq=False)
class JointStage:
    """Quantizers and joint law of (X, Y) at one time step.

    ``x_transition`` and ``y_transition`` map the previous stage into this
    one (``None`` at the root). ``absorbed`` holds, per X codeword, the mass
    whose Y component sits in the absorbed state at zero.
    """

    x_quantizer: Quantizer1D
    y_quantizer: Quantizer1D
    joint: np.ndarray
    x_transition: Optional[np.ndarray] = None
    y_transition: Optional[np.ndarray] = None
    absorbed: Optional[np.ndarray] = None
    joint_transition: Optional[np.ndarray] = None

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float)
        if joint.shape != (len(self.x_quantizer), len(self.y_quantizer)):
            raise ValueError("joint matrix shape does not match the quantizers")
        object.__setattr__(self, "joint", joint)
        absorbed = np.zeros(joint.shape[0]) if self.absorbed is None else np.asarray(self.absorbed, float)
        object.__setattr__(self, "absorbed", absorbed)

    @property
    def time_index(self):
        return self.x_quantizer.time_index


@dataclass(frozen=True, eq=False)
class QuantizationGrid:
    stages: Sequence[JointStage]
    dt: float
    model: ModelSpec
    settings: NewtonSettings = NewtonSettings()
    method: JointProbMethod = JointProbMethod.APPROX
    x_mode: BoundaryMode = BoundaryMode.NONE
    y_mode: BoundaryMode = BoundaryMode.NONE

    @property
    def K(self):
        return len(self.stages) - 1

    def times(self):
        return self.dt * np.arange(len(self.stages))

    def transition(self, k):
        """Joint transition tensor from stage ``k`` to ``k + 1`` and its absorbed part."""
        prev, nxt = self.stages[k], self.stages[k + 1]
        return joint_transition_tensor(
            prev, nxt.x_quantizer, nxt.y_quantizer, self.model, self.dt,
            self.method, self.y_mode, self.x_mode, nxt.x_transition, with_absorbed=True,
        )


def _codewords(candidate):
    return candidate.codewords if isinstance(candidate, Quantizer1D) else np.asarray(candidate, dtype=float)


def y_mixture(prev_stage, spec, dt, mode=BoundaryMode.NONE):
    """Mixture of margined Y updates over the nodes of ``prev_stage``."""
    x = prev_stage.x_quantizer.codewords
    y = prev_stage.y_quantizer.codewords
    pair = affine_y_margined(spec, x[:, None], y[None, :], dt)
    return Mixture(pair.m, pair.c, prev_stage.joint, BoundaryMode(mode))


def jrmq_distortion(candidate, prev_stage, spec, dt, mode=BoundaryMode.NONE):
    return mixture_distortion(_codewords(candidate), y_mixture(prev_stage, spec, dt, mode))


def jrmq_gradient(candidate, prev_stage, spec, dt, mode=BoundaryMode.NONE):
    return mixture_gradient(_codewords(candidate), y_mixture(prev_stage, spec, dt, mode))


def jrmq_hessian(candidate, prev_stage, spec, dt, mode=BoundaryMode.NONE):
    """Main diagonal and off-diagonal of the tridiagonal Hessian."""
    return mixture_hessian(_codewords(candidate), y_mixture(prev_stage, spec, dt, mode))


def jrmq_step(prev_stage, spec, dt, n_y, mode=BoundaryMode.NONE, settings=NewtonSettings()):
    """Optimal Y quantizer one step after ``prev_stage``.

    Probabilities are the mixture region masses. Inside :func:`build_grid`
    they are replaced by the column sums of the new joint matrix.
    """
    if n_y < 1:
        raise ValueError("n_y must be >= 1")
    mode = BoundaryMode(mode)
    mix = y_mixture(prev_stage, spec, dt, mode)
    prev_y = prev_stage.y_quantizer
    init = prev_y.codewords if len(prev_y) == n_y else None
    k1 = prev_stage.time_index + 1
    y, _ = quantize_mixture(mix, n_y, settings, init=init, step=k1)
    masses, absorbed = region_masses(y, mix)
    w = mix.w
    return Quantizer1D(k1, y, w @ masses, prev_y.absorbed_mass + float(w @ absorbed))


def _edges(codewords):
    return np.concatenate([[-np.inf], midpoints(codewords), [np.inf]])


def _y_bounds(prev_stage, y_next, spec, dt, mode):
    """Standardized Y region edges per node (Nx0, Ny0, Ny+1), clipped at the boundary."""
    x = prev_stage.x_quantizer.codewords
    y = prev_stage.y_quantizer.codewords
    pair = affine_y_margined(spec, x[:, None], y[None, :], dt)
    a = np.abs(pair.m)
    smooth = a > 0
    safe = np.where(smooth, a, 1.0)
    edges = _edges(y_next.codewords)
    with np.errstate(invalid="ignore"):
        r = (edges[None, None, :] - pair.c[..., None]) / safe[..., None]
    ybar = -pair.c / safe
    if mode is not BoundaryMode.NONE:
        r = np.maximum(r, ybar[..., None])
    return pair, a, smooth, r, ybar


def _dirac_y(pair, y_next, mode):
    """Region index of each Dirac Y term, or -1 when it is absorbed."""
    c = pair.c
    if mode is BoundaryMode.REFLECTING:
        c = np.abs(c)
    idx = np.searchsorted(midpoints(y_next.codewords), c, side="left")
    if mode is BoundaryMode.ABSORBING:
        idx = np.where(c < 0, -1, idx)
    return idx


def _effective_rho(spec, m_x, m_y):
    return spec.rho * np.sign(m_x)[:, None] * np.sign(m_y)


def _approx_tensor(prev_stage, x_next, y_next, spec, dt, mode, ptx):
    if abs(spec.rho) >= 1.0:
        raise ConfigurationError("the conditional approximation needs |rho| < 1")
    xp = prev_stage.x_quantizer.codewords
    px = affine_x(spec, xp, dt)
    ax = np.abs(px.m)
    pair, ay, smooth, r, ybar = _y_bounds(prev_stage, y_next, spec, dt, mode)
    rho_eff = _effective_rho(spec, px.m, pair.m)
    rho_eff = np.where(ax[:, None] > 0, rho_eff, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        zstar = np.where(ax[:, None] > 0, (x_next.codewords[None, :] - px.c[:, None]) / ax[:, None], 0.0)
    s = np.sqrt(1.0 - spec.rho**2)
    shift = rho_eff[:, :, None, None] * zstar[:, None, :, None]  # (i,u,j,1)

    def cond_cdf(z):
        return special.ndtr((z - shift) / s)

    rr = r[:, :, None, :]
    with np.errstate(invalid="ignore"):
        g = cond_cdf(rr)
        if mode is BoundaryMode.REFLECTING:
            image = 2.0 * ybar[:, :, None, None] - rr
            image = np.where(np.isnan(image), -np.inf, image)
            g = g - cond_cdf(image)
    cond = np.diff(g, axis=-1)
    absorbed = np.zeros(cond.shape[:3])
    if mode is BoundaryMode.ABSORBING:
        absorbed = cond_cdf(ybar[:, :, None, None])[..., 0]
    np.maximum(cond, 0.0, out=cond)
    _fill_dirac(cond, absorbed, pair, smooth, y_next, mode)
    tensor = ptx[:, None, :, None] * cond
    return tensor, ptx[:, None, :] * absorbed


def _fill_dirac(cond, absorbed, pair, smooth, y_next, mode):
    if np.all(smooth):
        return
    idx = _dirac_y(pair, y_next, mode)
    for i, u in zip(*np.nonzero(~smooth)):
        cond[i, u] = 0.0
        absorbed[i, u] = 0.0
        if idx[i, u] < 0:
            absorbed[i, u] = 1.0
        else:
            cond[i, u, :, idx[i, u]] = 1.0


def _exact_tensor(prev_stage, x_next, y_next, spec, dt, ptx):
    xp = prev_stage.x_quantizer.codewords
    px = affine_x(spec, xp, dt)
    ax = np.abs(px.m)
    pair, ay, smooth, r, _ = _y_bounds(prev_stage, y_next, spec, dt, BoundaryMode.NONE)
    rho_eff = _effective_rho(spec, px.m, pair.m)
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = (_edges(x_next.codewords)[None, :] - px.c[:, None]) / np.where(ax > 0, ax, 1.0)[:, None]
    nx0, ny0 = pair.m.shape
    nx, ny = len(x_next), len(y_next)
    tensor = np.empty((nx0, ny0, nx, ny))
    for i in range(nx0):
        if ax[i] == 0:
            ymass = np.diff(special.ndtr(r[i]), axis=-1)
            tensor[i] = ptx[i][None, :, None] * ymass[:, None, :]
            continue
        corners = np.asarray(gm.bivariate_normal_cdf(
            rx[i][None, :, None], r[i][:, None, :], rho_eff[i][:, None, None]
        ))
        rect = corners[:, 1:, 1:] - corners[:, :-1, 1:] - corners[:, 1:, :-1] + corners[:, :-1, :-1]
        tensor[i] = np.maximum(rect, 0.0)
    absorbed = np.zeros((nx0, ny0, nx))
    if not np.all(smooth):
        idx = _dirac_y(pair, y_next, BoundaryMode.NONE)
        for i, u in zip(*np.nonzero(~smooth)):
            tensor[i, u] = 0.0
            tensor[i, u, :, idx[i, u]] = ptx[i]
    return tensor, absorbed


def _check_method(method, x_mode, y_mode):
    method = JointProbMethod(method)
    if method is JointProbMethod.EXACT and (
        BoundaryMode(x_mode) is not BoundaryMode.NONE or BoundaryMode(y_mode) is not BoundaryMode.NONE
    ):
        raise ConfigurationError(
            "exact bivariate joint probabilities need both boundary modes set to 'none'; "
            "use conditional_approximation with boundaries"
        )
    return method


def joint_transition_tensor(prev_stage, x_next, y_next, spec, dt, method=JointProbMethod.APPROX,
                            mode=BoundaryMode.NONE, x_mode=BoundaryMode.NONE, x_transition=None,
                            with_absorbed=False):
    """T[i, u, j, v] = P(X_{k+1} = x^j, Y_{k+1} = y^v | X_k = x^i, Y_k = y^u).

    With ``with_absorbed`` also returns A[i, u, j], the probability that Y is
    absorbed at zero while X moves to ``x^j``.
    """
    mode = BoundaryMode(mode)
    method = _check_method(method, x_mode, mode)
    ptx = x_transition
    if ptx is None:
        ptx = transition_matrix_1d(prev_stage.x_quantizer, x_next, spec, dt, x_mode)
    if method is JointProbMethod.EXACT:
        tensor, absorbed = _exact_tensor(prev_stage, x_next, y_next, spec, dt, ptx)
    else:
        tensor, absorbed = _approx_tensor(prev_stage, x_next, y_next, spec, dt, mode, ptx)
    return (tensor, absorbed) if with_absorbed else tensor


def joint_prob_exact(prev_stage, x_next, y_next, spec, dt):
    t = joint_transition_tensor(prev_stage, x_next, y_next, spec, dt, JointProbMethod.EXACT)
    return np.einsum("iu,iujv->jv", prev_stage.joint, t)


def joint_prob_approx(prev_stage, x_next, y_next, spec, dt, mode=BoundaryMode.NONE,
                      x_mode=BoundaryMode.NONE):
    t = joint_transition_tensor(prev_stage, x_next, y_next, spec, dt, JointProbMethod.APPROX,
                                mode, x_mode)
    return np.einsum("iu,iujv->jv", prev_stage.joint, t)


def quantizer_probabilities(joint):
    """Y probabilities as column sums of the joint matrix."""
    return np.asarray(joint, dtype=float).sum(axis=0)


def y_transition_matrix(prev_stage, conditional_mass):
    """P^y[u, v] from per-node conditional Y masses ``conditional_mass[i, u, v]``."""
    joint = prev_stage.joint
    flow = np.einsum("iu,iuv->uv", joint, conditional_mass)
    p = joint.sum(axis=0)
    out = np.zeros_like(flow)
    reach = p > 0
    out[reach] = flow[reach] / p[reach, None]
    for u in np.flatnonzero(~reach):
        out[u, min(u, out.shape[1] - 1)] = 1.0
    return out


def _root_stage(spec):
    x0 = Quantizer1D(0, np.array([float(spec.x0)]), np.array([1.0]))
    y0 = Quantizer1D(0, np.array([float(spec.y0)]), np.array([1.0]))
    return JointStage(x0, y0, np.array([[1.0]]))


def build_grid(spec, K, n_x, n_y, method=JointProbMethod.APPROX, x_mode=BoundaryMode.NONE,
               y_mode=BoundaryMode.NONE, settings=NewtonSettings()):
    """Run the full joint recursion and return the grid for steps 0..K."""
    if K < 1 or n_x < 1 or n_y < 1:
        raise ConfigurationError("K, n_x and n_y must all be >= 1")
    x_mode, y_mode = BoundaryMode(x_mode), BoundaryMode(y_mode)
    if x_mode is BoundaryMode.ABSORBING:
        raise ConfigurationError("the independent factor supports only 'none' or 'reflecting'")
    method = _check_method(method, x_mode, y_mode)
    if method is JointProbMethod.APPROX and abs(spec.rho) >= 1.0:
        raise ConfigurationError("the conditional approximation needs |rho| < 1")
    dt = spec.horizon_T / K

    xs = [_root_stage(spec).x_quantizer]
    for _ in range(K):
        xs.append(rmq_step(xs[-1], spec, dt, n_x, x_mode, settings))

    stages = [_root_stage(spec)]
    for k in range(K):
        prev = stages[-1]
        x_next = xs[k + 1]
        ptx = transition_matrix_1d(prev.x_quantizer, x_next, spec, dt, x_mode)
        try:
            y_next = jrmq_step(prev, spec, dt, n_y, y_mode, settings)
        except ConvergenceError as exc:
            if exc.step is None:
                exc.step = k + 1
            raise
        tensor, lost = joint_transition_tensor(
            prev, x_next, y_next, spec, dt, method, y_mode, x_mode, ptx, with_absorbed=True
        )
        joint = np.einsum("iu,iujv->jv", prev.joint, tensor)
        absorbed = prev.absorbed @ ptx + np.einsum("iu,iuj->j", prev.joint, lost)
        y_next = Quantizer1D(k + 1, y_next.codewords, quantizer_probabilities(joint), float(absorbed.sum()))
        y_tr = y_transition_matrix(prev, tensor.sum(axis=2))
        stages.append(JointStage(x_next, y_next, joint, ptx, y_tr, absorbed))
    return QuantizationGrid(stages, dt, spec, settings, method, x_mode, y_mode)


def stage_violations(stage, tol=1e-9):
    """Names of the stage invariants that fail at tolerance ``tol``."""
    bad = []
    j, a = stage.joint, stage.absorbed
    if np.any(j < 0) or np.any(a < 0):
        bad.append("negative joint probability")
    if abs(j.sum() + a.sum() + stage.x_quantizer.absorbed_mass - 1.0) > tol:
        bad.append("total mass")
    if np.max(np.abs(j.sum(axis=1) + a - stage.x_quantizer.probabilities)) > tol:
        bad.append("x marginal")
    if np.max(np.abs(j.sum(axis=0) - stage.y_quantizer.probabilities)) > tol:
        bad.append("y marginal")
    if abs(stage.y_quantizer.absorbed_mass - a.sum()) > tol:
        bad.append("y absorbed mass")
    if stage.x_transition is not None:
        if np.max(np.abs(stage.x_transition.sum(axis=1) - 1.0)) > tol:
            bad.append("x transition rows")
    if stage.y_transition is not None:
        rows = stage.y_transition.sum(axis=1)
        # rows lose exactly the mass absorbed from that node
        if stage.absorbed.sum() == 0 and np.max(np.abs(rows - 1.0)) > tol:
            bad.append("y transition rows")
        if np.any(rows > 1.0 + tol):
            bad.append("y transition rows")
    return bad


@dataclass(frozen=True)
class RunSpec:
    preset: str
    K: int
    n_x: int
    n_y: int
    x_mode: BoundaryMode = BoundaryMode.NONE
    y_mode: BoundaryMode = BoundaryMode.NONE
    method: JointProbMethod = JointProbMethod.APPROX


REFERENCE_RUNS = {
    "stein_stein": RunSpec("stein_stein", 12, 30, 60),
    "heston": RunSpec("heston", 12, 30, 30, x_mode=BoundaryMode.REFLECTING),
    "sabr_rates": RunSpec("sabr_rates", 24, 30, 30, y_mode=BoundaryMode.REFLECTING),
    "bachelier_sabr": RunSpec("bachelier_sabr", 24, 10, 90),
    "sabr_equity": RunSpec("sabr_equity", 24, 30, 60, y_mode=BoundaryMode.ABSORBING),
}


def build_reference_grid(name, settings=NewtonSettings(), method=None):
    from .model import REFERENCE_PRESETS, preset

    run = REFERENCE_RUNS[name]
    spec = preset(REFERENCE_PRESETS[run.preset])
    return build_grid(spec, run.K, run.n_x, run.n_y, method or run.method, run.x_mode, run.y_mode, settings)
