import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from svquant import gaussmath as gm
from svquant.errors import ConvergenceError, SingularMatrixError
from svquant.model import REFERENCE_PRESETS, preset
from svquant.rmq1d import (
    BoundaryMode,
    Mixture,
    NewtonSettings,
    Quantizer1D,
    init_gaussian_quantizer,
    mixture_distortion,
    mixture_gradient,
    mixture_hessian,
    newton_solve_tridiagonal,
    quantize_mixture,
    region_boundaries_1d,
    region_masses,
    rmq_run,
    rmq_step,
    transition_matrix_1d,
)
from svquant.model import AffinePair

MODES = list(BoundaryMode)


def _density(mix):
    """Density on the continuous part of the mixture after the boundary mode."""
    def f(u):
        total = 0.0
        for m, c, w in zip(np.abs(mix.m), mix.c, mix.w):
            if m == 0:
                continue
            z = (u - c) / m
            if mix.mode is BoundaryMode.NONE:
                total += w * gm.normal_pdf(z) / m
            elif u >= 0:
                img = gm.normal_pdf((-u - c) / m) if mix.mode is BoundaryMode.REFLECTING else 0.0
                total += w * (gm.normal_pdf(z) + img) / m
        return total
    return f


def _quad_distortion(y, mix):
    edges = np.concatenate([[-np.inf], 0.5 * (y[1:] + y[:-1]), [np.inf]])
    if mix.mode is not BoundaryMode.NONE:
        edges = np.maximum(edges, 0.0)
    f = _density(mix)
    total = 0.0
    for v in range(y.size):
        lo, hi = edges[v], edges[v + 1]
        if hi > lo:
            val, _ = integrate.quad(lambda u: (u - y[v]) ** 2 * f(u), lo, hi, epsabs=1e-12, limit=200)
            total += val
    return total


def _mix(mode, rng, n_terms=4):
    m = rng.uniform(0.2, 1.0, n_terms) * rng.choice([-1, 1], n_terms)
    c = rng.uniform(0.5, 2.5, n_terms)
    w = rng.dirichlet(np.ones(n_terms))
    return Mixture(m, c, w, mode)


def test_two_point_gaussian_quantizer():
    q = init_gaussian_quantizer(2, 0.0, 1.0)
    s = np.sqrt(2 / np.pi)
    assert np.allclose(q.codewords, [-s, s], atol=1e-12)
    assert np.allclose(q.probabilities, 0.5)
    unit = Mixture([1.0], [0.0], [1.0])
    assert mixture_distortion(q.codewords, unit) == pytest.approx(1 - 2 / np.pi, abs=1e-14)


@pytest.mark.parametrize("n", [3, 10, 30])
def test_gaussian_quantizer_is_stationary(n):
    q = init_gaussian_quantizer(n, 2.0, 0.5)
    mix = Mixture([0.5], [2.0], [1.0])
    assert np.max(np.abs(mixture_gradient(q.codewords, mix))) < 1e-9
    assert q.probabilities.sum() == pytest.approx(1.0, abs=1e-14)
    # stationary quantizers preserve the mean
    assert q.codewords @ q.probabilities == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("mode", MODES)
def test_distortion_matches_quadrature(mode):
    rng = np.random.default_rng(3)
    mix = _mix(mode, rng)
    y = np.sort(rng.uniform(0.2, 3.0, 6))
    assert mixture_distortion(y, mix) == pytest.approx(_quad_distortion(y, mix), abs=1e-9)


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("seed", range(4))
def test_gradient_and_hessian_finite_differences(mode, seed):
    rng = np.random.default_rng(seed)
    mix = _mix(mode, rng, 5)
    y = np.sort(rng.uniform(0.3, 3.0, 7))
    g = mixture_gradient(y, mix)
    diag, off = mixture_hessian(y, mix)
    h = 1e-6
    fd_g = np.array([(mixture_distortion(y + h * e, mix) - mixture_distortion(y - h * e, mix)) / (2 * h)
                     for e in np.eye(y.size)])
    assert np.max(np.abs(fd_g - g)) <= 1e-6 * np.max(np.abs(g))
    fd_h = np.array([(mixture_gradient(y + h * e, mix) - mixture_gradient(y - h * e, mix)) / (2 * h)
                     for e in np.eye(y.size)])
    H = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert np.max(np.abs(fd_h - H)) <= 1e-4 * np.max(np.abs(H))


@pytest.mark.parametrize("mode", MODES)
def test_masses_conserve(mode):
    rng = np.random.default_rng(11)
    mix = _mix(mode, rng)
    mix = Mixture(mix.m, mix.c - 1.5, mix.w, mode)  # put mass across zero
    y = np.array([0.1, 0.5, 1.0, 2.0])
    masses, absorbed = region_masses(y, mix)
    assert np.allclose(masses.sum(axis=1) + absorbed, 1.0, atol=1e-14)
    if mode is BoundaryMode.ABSORBING:
        assert np.all(absorbed > 0)
    else:
        assert np.all(absorbed == 0)


def test_dirac_terms():
    mix = Mixture([0.0, 0.0, 1.0], [-0.5, 1.2, 0.0], [0.3, 0.3, 0.4], BoundaryMode.ABSORBING)
    masses, absorbed = region_masses(np.array([0.5, 1.5]), mix)
    assert absorbed[0] == 1.0 and masses[0].sum() == 0.0
    assert masses[1].tolist() == [0.0, 1.0]
    refl = Mixture([0.0], [-0.4], [1.0], BoundaryMode.REFLECTING)
    assert region_masses(np.array([0.3, 1.0]), refl)[0].tolist() == [[1.0, 0.0]]
    # an atom exactly on a midpoint goes to the lower region
    assert region_masses(np.array([0.0, 1.0]), Mixture([0.0], [0.5], [1.0]))[0].tolist() == [[1.0, 0.0]]


def test_all_dirac_mixture_returns_atoms():
    mix = Mixture([0.0, 0.0, 0.0], [1.0, 3.0, 1.0], [0.2, 0.5, 0.3])
    y, ev = quantize_mixture(mix, 5)
    assert y.tolist() == [1.0, 3.0]
    assert ev.distortion == 0.0


def test_region_boundaries():
    rb = region_boundaries_1d(np.array([0.0, 1.0, 3.0]), AffinePair(2.0, 1.0))
    assert rb.lower.tolist() == [-np.inf, -0.25, 0.5]
    assert rb.upper.tolist() == [-0.25, 0.5, np.inf]
    assert region_boundaries_1d(np.array([0.0, 1.0]), AffinePair(0.0, 1.0)).degenerate


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_thomas_solver_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    off = rng.uniform(-1, 1, n - 1)
    diag = 2.5 + rng.uniform(0, 1, n)  # diagonally dominant
    rhs = rng.normal(size=n)
    H = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert np.allclose(newton_solve_tridiagonal(diag, off, rhs), np.linalg.solve(H, rhs), atol=1e-12)


def test_thomas_solver_singular():
    with pytest.raises(SingularMatrixError):
        newton_solve_tridiagonal(np.array([0.0, 1.0]), np.array([1.0]), np.array([1.0, 1.0]))


@pytest.mark.parametrize("mode", MODES)
def test_optimum_is_lloyd_fixed_point(mode):
    rng = np.random.default_rng(5)
    mix = _mix(mode, rng, 6)
    y, ev = quantize_mixture(mix, 8)
    centroid = ev.first / ev.weight
    assert np.max(np.abs(y - centroid)) < 1e-8 * np.max(np.abs(y))
    if mode is not BoundaryMode.NONE:
        assert y[0] > 0


def test_newton_iteration_budget():
    mix = Mixture([1.0, 0.3], [0.0, 4.0], [0.5, 0.5])
    with pytest.raises(ConvergenceError) as exc:
        quantize_mixture(mix, 20, NewtonSettings(max_iterations=1), step=7)
    assert exc.value.step == 7


def test_quantizer_validation():
    with pytest.raises(ValueError):
        Quantizer1D(0, np.array([1.0, 1.0]), np.array([0.5, 0.5]))
    q = Quantizer1D(3, np.array([1.0, 2.0]), np.array([0.3, 0.6]), 0.1)
    cw, pr = q.augmented()
    assert cw.tolist() == [0.0, 1.0, 2.0] and pr.tolist() == [0.1, 0.3, 0.6]
    assert q.total_mass() == pytest.approx(1.0)


def test_stein_stein_x_mean_is_exact():
    # linear drift: quantization is mean preserving, so the Euler mean is reproduced
    spec = preset(REFERENCE_PRESETS["stein_stein"])
    qs = rmq_run(spec, 12, 30)
    dt = 1 / 12
    for k, q in enumerate(qs):
        euler = 0.2 + (0.2 - 0.2) * (1 - 4 * dt) ** k
        assert q.codewords @ q.probabilities == pytest.approx(euler, abs=1e-10)
        assert q.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_heston_reflecting_step():
    spec = preset(REFERENCE_PRESETS["heston"])
    dt = 1 / 12
    qs = rmq_run(spec, 12, 30, BoundaryMode.REFLECTING)
    assert all(q.codewords[0] > 0 for q in qs[1:])
    P = transition_matrix_1d(qs[5], qs[6], spec, dt, BoundaryMode.REFLECTING)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(qs[5].probabilities @ P, qs[6].probabilities, atol=1e-12)


def test_rmq_step_absorbing_tracks_mass():
    spec = preset(REFERENCE_PRESETS["heston"])
    prev = Quantizer1D(0, np.array([0.001, 0.01]), np.array([0.5, 0.5]))
    nxt = rmq_step(prev, spec, 0.5, 5, BoundaryMode.ABSORBING)
    assert nxt.absorbed_mass > 0
    assert nxt.total_mass() == pytest.approx(1.0, abs=1e-13)
