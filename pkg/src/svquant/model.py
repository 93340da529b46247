"""Two-factor stochastic volatility models.

The independent factor X drives the diffusion of the dependent factor Y::

    dX = a_x(X) dt + b_x(X) dW^x
    dY = a_y(Y) dt + b_y(X, Y) (rho dW^x + sqrt(1 - rho^2) dW^perp)

Over one Euler step each factor is an affine function ``m * Z + c`` of a
standard normal. For Y the affine map uses the margined update, which does not
depend on rho.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, DomainError

PRESET_NAMES = ("stein_stein", "heston", "sabr", "bachelier_sabr")


class AffinePair(NamedTuple):
    m: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class PresetParams:
    name: str
    parameters: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, **{k: float(v) for k, v in self.parameters.items()}}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        name = data.pop("name")
        return cls(name, data)


@dataclass(frozen=True)
class ModelSpec:
    drift_x: Callable
    diff_x: Callable
    drift_y: Callable
    diff_y: Callable
    rho: float
    x0: float
    y0: float
    horizon_T: float
    # factors whose natural domain is [0, inf); used by full truncation
    x_positive: bool = False
    y_positive: bool = False
    rate: float = 0.0
    preset: Optional[PresetParams] = None

    def __post_init__(self):
        if not abs(self.rho) <= 1.0:
            raise ConfigurationError(f"|rho| must be <= 1, got {self.rho}")
        if not self.horizon_T > 0.0:
            raise ConfigurationError(f"horizon_T must be positive, got {self.horizon_T}")

    def with_rho(self, rho):
        """Copy of the model with a different correlation."""
        preset = self.preset
        if preset is not None:
            preset = PresetParams(preset.name, {**preset.parameters, "rho": rho})
        return replace(self, rho=rho, preset=preset)


def affine_x(spec, x, dt):
    """Euler update of X from ``x`` as ``m * Z + c``."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    x = np.asarray(x, dtype=float)
    m = np.asarray(spec.diff_x(x), dtype=float) * np.sqrt(dt)
    c = x + np.asarray(spec.drift_x(x), dtype=float) * dt
    return AffinePair(np.broadcast_to(m, x.shape).copy(), c)


def affine_y_margined(spec, x, y, dt):
    """Margined Euler update of Y from ``(x, y)``; independent of rho."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    m = np.asarray(spec.diff_y(x, y), dtype=float) * np.sqrt(dt)
    c = y + np.asarray(spec.drift_y(y), dtype=float) * dt
    return AffinePair(np.broadcast_to(m, x.shape).copy(), np.broadcast_to(c, x.shape).copy())


def _sqrt_nonneg(x, what):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"negative {what} under a square root")
    return np.sqrt(x)


def _power(y, beta):
    y = np.asarray(y, dtype=float)
    if beta == 0.0:
        return np.ones_like(y)
    if beta == 1.0:
        return y
    if np.any(y < 0):
        raise DomainError(f"fractional power {beta} of a negative value")
    return y**beta


_REQUIRED = {
    "stein_stein": ("kappa", "theta", "sigma", "r", "rho", "x0", "y0"),
    "heston": ("kappa", "theta", "sigma", "r", "rho", "x0", "y0"),
    "sabr": ("beta", "nu", "rho", "x0", "y0"),
    "bachelier_sabr": ("nu", "rho", "x0", "y0"),
}


def preset(params):
    """Build a :class:`ModelSpec` from named preset parameters."""
    name = params.name
    if name not in _REQUIRED:
        raise ConfigurationError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    p = {k: float(v) for k, v in params.parameters.items()}
    missing = [k for k in _REQUIRED[name] if k not in p]
    if missing:
        raise ConfigurationError(f"preset {name!r} is missing parameters {missing}")
    T = p.get("T", 1.0)
    r = p.get("r", 0.0)
    common = dict(rho=p["rho"], x0=p["x0"], y0=p["y0"], horizon_T=T, rate=r, preset=params)

    if name == "stein_stein":
        kappa, theta, sigma = p["kappa"], p["theta"], p["sigma"]
        return ModelSpec(
            drift_x=lambda x: kappa * (theta - x),
            diff_x=lambda x: np.full_like(np.asarray(x, dtype=float), sigma),
            drift_y=lambda y: r * y,
            diff_y=lambda x, y: x * y,
            **common,
        )

    if name == "heston":
        kappa, theta, sigma = p["kappa"], p["theta"], p["sigma"]
        if min(kappa, theta, sigma) <= 0:
            raise ConfigurationError("heston requires kappa, theta, sigma > 0")
        if p["x0"] < 0:
            raise ConfigurationError("heston requires a non-negative initial variance")
        return ModelSpec(
            drift_x=lambda x: kappa * (theta - x),
            diff_x=lambda x: sigma * _sqrt_nonneg(x, "variance"),
            drift_y=lambda y: r * y,
            diff_y=lambda x, y: _sqrt_nonneg(x, "variance") * y,
            x_positive=True,
            **common,
        )

    beta = 0.0 if name == "bachelier_sabr" else p["beta"]
    if name == "bachelier_sabr" and p.get("beta", 0.0) != 0.0:
        raise ConfigurationError("bachelier_sabr fixes beta = 0")
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError(f"sabr requires 0 <= beta <= 1, got beta={beta}")
    nu = p["nu"]
    if nu < 0:
        raise ConfigurationError("sabr requires nu >= 0")
    return ModelSpec(
        drift_x=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diff_x=lambda x: nu * np.asarray(x, dtype=float),
        drift_y=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        diff_y=lambda x, y: x * _power(y, beta),
        x_positive=True,
        y_positive=beta > 0.0,
        **common,
    )


REFERENCE_PRESETS = {
    "stein_stein": PresetParams(
        "stein_stein",
        dict(kappa=4.0, theta=0.2, sigma=0.1, r=0.0953, rho=-0.5, x0=0.2, y0=100.0, T=1.0),
    ),
    "heston": PresetParams(
        "heston",
        dict(kappa=2.0, theta=0.09, sigma=0.4, r=0.05, rho=-0.3, x0=0.09, y0=100.0, T=1.0),
    ),
    "sabr_rates": PresetParams(
        "sabr", dict(beta=0.7, nu=0.3, rho=-0.3, x0=0.2, y0=0.005, T=1.0, r=0.0)
    ),
    "bachelier_sabr": PresetParams(
        "bachelier_sabr", dict(nu=0.3691, rho=-0.0286, x0=0.0068, y0=0.0435, T=1.0, r=0.0)
    ),
    # Y is the T-forward of an equity with spot 100
    "sabr_equity": PresetParams(
        "sabr",
        dict(beta=0.9, nu=0.4, rho=-0.3, x0=0.4, y0=100.0 * float(np.exp(0.05)), T=1.0, r=0.05),
    ),
}
