"""Free parameters of the four inference models."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from ..core import SchemaError
from ..planner import PlannerParams

MODEL_IDS = ("distance", "linh", "paramh", "bodygen")


def _positive(name, v):
    if not (v > 0 and v < float("inf")):
        raise SchemaError(f"{name} must be finite and > 0, got {v}", where=name)


@dataclass(frozen=True)
class DistanceParams:
    theta: float = 5.0

    def __post_init__(self):
        _positive("theta", self.theta)

    rate_name = "theta"
    window_names = ()


@dataclass(frozen=True)
class LinHParams:
    beta1: float = 20.0
    h1: int = 8
    alpha1: int = 2
    ray: bool = False

    def __post_init__(self):
        _positive("beta1", self.beta1)
        if int(self.h1) != self.h1 or self.h1 < 2:
            raise SchemaError("h1 must be an integer >= 2", where="h1")
        if int(self.alpha1) != self.alpha1 or self.alpha1 < 0:
            raise SchemaError("alpha1 must be an integer >= 0", where="alpha1")
        object.__setattr__(self, "h1", int(self.h1))
        object.__setattr__(self, "alpha1", int(self.alpha1))

    rate_name = "beta1"
    window_names = ("h1", "alpha1")


@dataclass(frozen=True)
class ParamHParams:
    beta2: float = 20.0
    h2: int = 8
    alpha2: int = 2
    ray: bool = False

    def __post_init__(self):
        _positive("beta2", self.beta2)
        if int(self.h2) != self.h2 or self.h2 < 3:
            raise SchemaError("h2 must be an integer >= 3", where="h2")
        if int(self.alpha2) != self.alpha2 or self.alpha2 < 0:
            raise SchemaError("alpha2 must be an integer >= 0", where="alpha2")
        object.__setattr__(self, "h2", int(self.h2))
        object.__setattr__(self, "alpha2", int(self.alpha2))

    rate_name = "beta2"
    window_names = ("h2", "alpha2")


@dataclass(frozen=True)
class BodyGenParams:
    beta3: float = 10.0
    q: int = 15
    n_runs: int = 5
    planner: PlannerParams = field(default_factory=PlannerParams)
    horizon_factor: float = 1.5
    ik_tolerance: float = 0.05

    def __post_init__(self):
        _positive("beta3", self.beta3)
        if int(self.q) != self.q or self.q < 2:
            raise SchemaError("q must be an integer >= 2", where="q")
        if int(self.n_runs) != self.n_runs or self.n_runs < 1:
            raise SchemaError("n_runs must be an integer >= 1", where="n_runs")
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "n_runs", int(self.n_runs))
        if isinstance(self.planner, dict):
            object.__setattr__(self, "planner", planner_from_dict(self.planner))

    rate_name = "beta3"
    window_names = ("q",)


PARAM_TYPES = {
    "distance": DistanceParams,
    "linh": LinHParams,
    "paramh": ParamHParams,
    "bodygen": BodyGenParams,
}


def default_params(model_id: str):
    return PARAM_TYPES[check_model(model_id)]()


def check_model(model_id: str) -> str:
    if model_id not in MODEL_IDS:
        raise SchemaError(f"unknown model {model_id!r}; expected one of {MODEL_IDS}")
    return model_id


def rate(params) -> float:
    return float(getattr(params, params.rate_name))


def with_rate(params, value: float):
    return replace(params, **{params.rate_name: float(value)})


def planner_from_dict(d: dict) -> PlannerParams:
    known = {f.name for f in fields(PlannerParams)}
    unknown = set(d) - known
    if unknown:
        raise SchemaError(f"unknown planner keys {sorted(unknown)}", where="planner")
    d = dict(d)
    if d.get("noise_sigma") is not None:
        d["noise_sigma"] = tuple(d["noise_sigma"])
    return PlannerParams(**d)


def params_to_dict(params) -> dict:
    d = asdict(params)
    if isinstance(params, BodyGenParams):
        d["planner"] = asdict(params.planner)
        if d["planner"]["noise_sigma"] is not None:
            d["planner"]["noise_sigma"] = list(d["planner"]["noise_sigma"])
    return d


def params_from_dict(model_id: str, d: dict):
    cls = PARAM_TYPES[check_model(model_id)]
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)}", where=f"models.{model_id}")
    d = dict(d)
    if model_id == "bodygen" and "planner" in d:
        d["planner"] = planner_from_dict(d["planner"])
    return cls(**d)
