"""JSON experiment configuration.

A config is one JSON object; matrices are row-major nested arrays.  Unknown
keys are rejected at every level.  The schema with examples is in
``docs/config.md``.
"""

import hashlib
import json
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ValidationError, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, model_validator

from .analysis import geometric_checkpoints
from .errors import ConfigError
from .errors import ValidationError as SpecError
from .models import CoupledOscillatorSpec, NonlinearDriftSpec, PendulumPairSpec, growth_bound_check, load_drift


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LinearModel(_Strict):
    kind: Literal["linear"]
    Lambda: list[list[float]]
    Pi: list[list[float]]
    x0: list[float]
    y0: list[float]
    t0: float = 0.0


class PendulumModel(_Strict):
    kind: Literal["pendulum-pair"]
    alpha: PositiveFloat
    beta: PositiveFloat
    sigma1: PositiveFloat
    sigma2: PositiveFloat
    x0: list[float] = [0.0, 0.0]
    y0: list[float] = [0.0, 0.0]
    t0: float = 0.0


class CustomDriftModel(_Strict):
    kind: Literal["custom-drift"]
    drift: str
    Pi: list[list[float]]
    K1: PositiveFloat
    x0: list[float]
    y0: list[float]
    t0: float = 0.0


class GeometricCheckpoints(_Strict):
    kind: Literal["geometric"] = "geometric"
    ratio: float = Field(1.2, gt=1.0)


class ExplicitCheckpoints(_Strict):
    kind: Literal["explicit"]
    values: list[PositiveInt]


Model = Annotated[Union[LinearModel, PendulumModel, CustomDriftModel], Field(discriminator="kind")]
Checkpoints = Annotated[Union[GeometricCheckpoints, ExplicitCheckpoints], Field(discriminator="kind")]


class ExperimentConfig(_Strict):
    """Everything needed to reproduce a run, together with the root seed."""

    model: Model
    scheme: Literal["exact", "ll", "em"]
    step: PositiveFloat
    n_steps: PositiveInt | None = None
    t_end: PositiveFloat | None = None
    seed: NonNegativeInt = 0
    paths: PositiveInt = 1
    Q: list[list[float]] | None = None
    checkpoints: Checkpoints = GeometricCheckpoints()
    epsilon: float = Field(0.2, gt=0.0, lt=1.0)
    pass_rate: float = Field(0.9, ge=0.0, le=1.0)
    components: list[PositiveInt] | None = None
    deltas: list[PositiveFloat] = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01]
    count_horizons: list[PositiveFloat] | None = None
    step_sizes: list[PositiveFloat] = [0.1, 0.05, 0.025]
    refine: PositiveInt = 64
    compare_schemes: list[Literal["ll", "em"]] = ["ll", "em"]
    order_window: tuple[float, float] = (0.7, 1.3)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _check(self):
        if (self.n_steps is None) == (self.t_end is None):
            raise ValueError("give exactly one of n_steps or t_end")
        if self.t_end is not None:
            n = round(self.t_end / self.step)
            if n < 1 or abs(n * self.step - self.t_end) > 1e-9 * self.t_end:
                raise ValueError(f"t_end={self.t_end} is not a whole number of steps of {self.step}")
        if self.scheme in ("exact", "ll") and self.model.kind != "linear":
            raise ValueError(f"scheme {self.scheme!r} requires a linear model, got {self.model.kind!r}")
        if self.Q is not None and self.scheme != "ll":
            raise ValueError("Q is only meaningful for the ll scheme")
        return self

    @property
    def horizon_steps(self):
        return self.n_steps if self.n_steps is not None else round(self.t_end / self.step)

    @property
    def horizon_time(self):
        return self.horizon_steps * self.step

    def experiment_dict(self):
        """Everything that determines the outputs; the output location is excluded."""
        return self.model_dump(mode="json", exclude={"output_dir"})

    def canonical_json(self):
        return json.dumps(self.experiment_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format_errors(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data, **overrides):
    """Validate a config mapping, applying non-``None`` overrides first."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path, **overrides):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(data, **overrides)


def build_model(cfg):
    """Instantiate the model spec named by ``cfg.model``."""
    m = cfg.model
    try:
        if m.kind == "linear":
            return CoupledOscillatorSpec(Lambda=m.Lambda, Pi=m.Pi, x0=m.x0, y0=m.y0, t0=m.t0)
        if m.kind == "pendulum-pair":
            return PendulumPairSpec(
                alpha=m.alpha, beta=m.beta, sigma1=m.sigma1, sigma2=m.sigma2, x0=m.x0, y0=m.y0, t0=m.t0,
            )
        spec = NonlinearDriftSpec(drift=load_drift(m.drift), Pi=m.Pi, K1=m.K1, x0=m.x0, y0=m.y0, t0=m.t0)
    except SpecError as exc:
        raise ConfigError(f"model: {exc}") from None
    check = growth_bound_check(spec)
    if not check.passed:
        raise ConfigError(
            f"model: drift violates |f| <= K1 (1 + |x| + |y|); worst ratio {check.worst_ratio:.3g} > K1={spec.K1}"
        )
    return spec


def checkpoint_schedule(cfg, n_max):
    if cfg.checkpoints.kind == "geometric":
        return geometric_checkpoints(n_max, cfg.checkpoints.ratio)
    values = sorted(v for v in set(cfg.checkpoints.values) if v <= n_max)
    if not values:
        raise ConfigError("no explicit checkpoint lies within the horizon")
    return values

