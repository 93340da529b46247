"""Run configuration: TOML text validated into typed objects."""
import sys
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigurationError
from .jrmq import JointProbMethod
from .mcoracle import MCConfig
from .model import PresetParams, preset
from .rmq1d import BoundaryMode, NewtonSettings

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Sweep(_Strict):
    start: float
    stop: float
    step: float = Field(gt=0)

    def values(self):
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [self.start + i * self.step for i in range(max(n, 0))]


SweepLike = Union[List[float], Sweep]


def _expand(v):
    return list(v.values()) if isinstance(v, Sweep) else list(v)


class ModelSection(_Strict):
    name: Literal["stein_stein", "heston", "sabr", "bachelier_sabr"]
    kappa: Optional[float] = None
    theta: Optional[float] = None
    sigma: Optional[float] = None
    r: Optional[float] = None
    beta: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    nu: Optional[float] = Field(default=None, ge=0.0)
    rho: float = Field(ge=-1.0, le=1.0)
    x0: float
    y0: float
    T: float = Field(default=1.0, gt=0.0)

    def params(self):
        data = self.model_dump(exclude_none=True)
        return PresetParams(data.pop("name"), data)


class GridSection(_Strict):
    K: int = Field(ge=1)
    n_x: int = Field(ge=1)
    n_y: int = Field(ge=1)
    joint_method: JointProbMethod = JointProbMethod.APPROX
    x_boundary: BoundaryMode = BoundaryMode.NONE
    y_boundary: BoundaryMode = BoundaryMode.NONE


class NewtonSection(_Strict):
    max_iterations: int = Field(default=50, ge=1)
    gradient_tolerance: float = Field(default=1e-9, gt=0.0)
    damping: float = Field(default=1.0, gt=0.0, le=1.0)

    def settings(self):
        return NewtonSettings(self.max_iterations, self.gradient_tolerance, self.damping)


class MCSection(_Strict):
    enabled: bool = True
    paths: int = Field(default=200_000, ge=2)
    steps: int = Field(default=120, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    truncation: Literal["none", "full"] = "full"
    antithetic: bool = False
    basis_degree: int = Field(default=2, ge=1)

    def config(self, seed=None):
        return MCConfig(self.paths, self.steps, self.seed if seed is None else seed,
                        self.truncation, self.antithetic)


class Instrument(_Strict):
    name: str
    type: Literal["european", "bermudan", "barrier", "corridor_left", "corridor_interpolated"]
    kind: Literal["call", "put"] = "put"
    convention: Literal["spot", "forward"] = "spot"
    discount_rate: float = 0.0
    strikes: Optional[SweepLike] = None
    strike: Optional[float] = None
    exercise_every: Optional[int] = Field(default=None, ge=1)
    monitor_every: Optional[int] = Field(default=None, ge=1)
    barrier_levels: Optional[SweepLike] = None
    spreads: Optional[SweepLike] = None
    reference_price: Optional[float] = Field(default=None, gt=0.0)
    implied_vol: Optional[Literal["black", "bachelier"]] = None

    @model_validator(mode="after")
    def _fields_for_type(self):
        need = {
            "european": ("strikes",),
            "bermudan": ("strikes", "exercise_every"),
            "barrier": ("strike", "barrier_levels", "monitor_every"),
            "corridor_left": ("spreads", "reference_price"),
            "corridor_interpolated": ("spreads", "reference_price"),
        }[self.type]
        missing = [f for f in need if getattr(self, f) is None]
        if missing:
            raise ValueError(f"instrument type {self.type!r} needs {', '.join(missing)}")
        return self

    def sweep(self):
        for field in ("strikes", "barrier_levels", "spreads"):
            v = getattr(self, field)
            if v is not None:
                return _expand(v)
        return []


class OutputSection(_Strict):
    grid: Optional[str] = None
    results: Optional[str] = None


class RunConfig(_Strict):
    model: ModelSection
    grid: GridSection
    newton: NewtonSection = NewtonSection()
    mc: MCSection = MCSection()
    instruments: List[Instrument] = []
    output: OutputSection = OutputSection()

    @field_validator("instruments")
    @classmethod
    def _unique_names(cls, v):
        names = [i.name for i in v]
        if len(set(names)) != len(names):
            raise ValueError("instrument names must be unique")
        return v

    def model_spec(self):
        return preset(self.model.params())


def load_config(path):
    """Read and validate a TOML run configuration.

    Raises :class:`ConfigurationError` with pydantic's field-path messages.
    """
    from pydantic import ValidationError

    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid TOML: {exc}") from exc
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            lines.append(f"  {loc}: {err['msg']}")
        raise ConfigurationError(f"{path}: invalid configuration\n" + "\n".join(lines)) from exc
    cfg.model_spec()  # preset-level checks
    return cfg
