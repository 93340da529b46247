import numpy as np
import pytest

from svquant.errors import ConfigurationError, DomainError
from svquant.model import (
    REFERENCE_PRESETS,
    PresetParams,
    affine_x,
    affine_y_margined,
    preset,
)


@pytest.mark.parametrize("name", sorted(REFERENCE_PRESETS))
def test_presets_build(name):
    spec = preset(REFERENCE_PRESETS[name])
    assert spec.horizon_T == 1.0
    assert -1 <= spec.rho <= 1


def test_stein_stein_affine_update():
    spec = preset(REFERENCE_PRESETS["stein_stein"])
    dt = 1 / 12
    px = affine_x(spec, np.array([0.1, 0.2]), dt)
    assert np.allclose(px.m, 0.1 * np.sqrt(dt))
    assert np.allclose(px.c, [0.1 + 4 * (0.2 - 0.1) * dt, 0.2])
    py = affine_y_margined(spec, 0.2, 100.0, dt)
    assert py.m == pytest.approx(0.2 * 100 * np.sqrt(dt))
    assert py.c == pytest.approx(100 * (1 + 0.0953 * dt))


def test_margined_update_ignores_rho():
    spec = preset(REFERENCE_PRESETS["heston"])
    a = affine_y_margined(spec, [0.05, 0.1], [90.0, 110.0], 0.1)
    b = affine_y_margined(spec.with_rho(0.8), [0.05, 0.1], [90.0, 110.0], 0.1)
    assert np.array_equal(a.m, b.m) and np.array_equal(a.c, b.c)


def test_with_rho_updates_preset():
    spec = preset(REFERENCE_PRESETS["stein_stein"]).with_rho(0.25)
    assert spec.rho == 0.25
    assert spec.preset.parameters["rho"] == 0.25


def test_sabr_power_and_positivity():
    spec = preset(REFERENCE_PRESETS["sabr_rates"])
    assert spec.x_positive and spec.y_positive
    assert spec.diff_y(np.array(0.2), np.array(0.04)) == pytest.approx(0.2 * 0.04**0.7)
    with pytest.raises(DomainError):
        spec.diff_y(np.array(0.2), np.array(-0.01))
    bach = preset(REFERENCE_PRESETS["bachelier_sabr"])
    assert not bach.y_positive
    assert bach.diff_y(np.array(0.01), np.array(-3.0)) == pytest.approx(0.01)


def test_heston_negative_variance_rejected():
    spec = preset(REFERENCE_PRESETS["heston"])
    with pytest.raises(DomainError):
        affine_x(spec, np.array([-0.01]), 0.1)


@pytest.mark.parametrize(
    "params",
    [
        PresetParams("nope", {}),
        PresetParams("heston", dict(kappa=2, theta=0.09, sigma=0.4, r=0.0, rho=-0.3, x0=0.09)),
        PresetParams("heston", dict(kappa=-2, theta=0.09, sigma=0.4, r=0.0, rho=-0.3, x0=0.09, y0=1)),
        PresetParams("sabr", dict(beta=1.5, nu=0.3, rho=0.0, x0=0.2, y0=1.0)),
        PresetParams("sabr", dict(beta=0.5, nu=0.3, rho=1.5, x0=0.2, y0=1.0)),
        PresetParams("bachelier_sabr", dict(beta=0.5, nu=0.3, rho=0.0, x0=0.2, y0=1.0)),
    ],
)
def test_bad_presets(params):
    with pytest.raises(ConfigurationError):
        preset(params)


def test_params_round_trip():
    p = REFERENCE_PRESETS["sabr_equity"]
    assert PresetParams.from_dict(p.to_dict()).to_dict() == p.to_dict()


def test_nonpositive_dt():
    spec = preset(REFERENCE_PRESETS["stein_stein"])
    with pytest.raises(DomainError):
        affine_x(spec, [0.2], 0.0)
