"""Declarative experiment configuration.

One JSON file describes one experiment. Unknown keys are rejected and every
field is validated before any computation starts.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

Matrix = list[list[float]]
Norm = Literal["euclidean", "chebyshev", "cityblock"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------- models


class ContrarianModel(_Strict):
    preset: Literal["contrarian"]
    n: int = Field(10, ge=2)
    p: float = Field(0.3, gt=0, le=1)
    gamma: float = Field(0.1, gt=0, lt=1)
    activation_fraction: float = Field(0.3, gt=0, le=1)
    norm: Norm = "euclidean"


class SwarmModel(_Strict):
    preset: Literal["swarm"]
    n: int = Field(20, ge=2)
    k: int = Field(3, ge=1)
    n_landmarks: int = Field(5, ge=1)
    landmarks: Optional[list[tuple[float, float]]] = None
    gamma: float = Field(0.3, gt=0, lt=1)
    mode: Literal["synchronous", "asynchronous"] = "synchronous"

    @field_validator("landmarks")
    @classmethod
    def _non_empty(cls, v):
        if v is not None and not v:
            raise ValueError("need at least one landmark")
        return v


class RecommenderModel(_Strict):
    preset: Literal["recommender"]
    n: int = Field(200, ge=2)
    mean_degree: float = Field(12.0, gt=0)
    alpha: float = Field(0.4, gt=0, lt=1)
    p0: float = Field(0.55, ge=0, le=1)


class LQGameModel(_Strict):
    preset: Literal["lq_game"]
    interaction: Optional[Matrix] = None
    rewards: Optional[list[float]] = None
    effort_cap: Optional[float] = None
    n: int = Field(10, ge=2, description="size of a random game when no matrix is given")

    @model_validator(mode="after")
    def _both_or_neither(self):
        if (self.interaction is None) != (self.rewards is None):
            raise ValueError("give both interaction and rewards, or neither")
        return self


class BoundedConfidenceModel(_Strict):
    preset: Literal["bounded_confidence"]
    epsilon: float = Field(0.05, gt=0)
    n: int = Field(200, ge=2)
    bounds: tuple[float, float] = (0.0, 1.0)


class LinearModel(_Strict):
    preset: Literal["linear"]
    a: Matrix
    lam: Union[float, list[float]]
    b: Matrix
    bounds: list[tuple[float, float]]
    x0: Optional[Matrix] = None


class RandomSignalModel(_Strict):
    preset: Literal["random_signal"]
    n: int = Field(10, ge=1)
    d: int = Field(1, ge=1)
    lam_range: tuple[float, float] = (0.05, 0.9)
    density: float = Field(0.5, gt=0, le=1)


ModelConfig = Annotated[
    Union[
        ContrarianModel,
        SwarmModel,
        RecommenderModel,
        LQGameModel,
        BoundedConfidenceModel,
        LinearModel,
        RandomSignalModel,
    ],
    Field(discriminator="preset"),
]

STATIONARY_PRESETS = ("linear", "lq_game", "random_signal")


# ---------------------------------------------------------------- run/analysis


class RunConfig(_Strict):
    max_steps: int = Field(10_000, ge=1)
    tol_step: float = Field(1e-9, gt=0)
    window: int = Field(50, ge=1)
    eps_h: Optional[float] = Field(None, gt=0)
    norm: Norm = "euclidean"
    stride: int = Field(1, ge=1)


class TraceTarget(_Strict):
    node: int = Field(ge=0)
    t: int = Field(ge=0)


class AnalysisConfig(_Strict):
    topology: bool = False
    theorem2: bool = False
    absorption: bool = False
    horizon: int = Field(1000, ge=1)
    edge_mass_threshold: float = Field(1e-3, ge=0)
    contact_trace: list[TraceTarget] = []


class WalkConfig(_Strict):
    n_walks: int = Field(100_000, ge=1)
    starts: Optional[list[int]] = None
    step_cap: int = Field(1_000_000, ge=1)
    batch_size: int = Field(20_000, ge=1)


class CurtainSweep(_Strict):
    kind: Literal["curtain"]
    n: int = Field(200, ge=2)
    mean_degree: float = Field(12.0, gt=0)
    alpha_grid: list[float] = Field(min_length=1)
    p0_grid: list[float] = Field(min_length=1)
    trials: int = Field(5, ge=1)
    max_steps: int = Field(5000, ge=1)


class TransitivitySweep(_Strict):
    kind: Literal["transitivity"]
    n: int = Field(100, ge=4)
    lattice_radius: int = Field(2, ge=1)
    p_grid: list[float] = Field(min_length=1)
    iters_per_p: int = Field(20, ge=1)
    weight_scale: float = Field(0.95, gt=0, lt=1)
    torus: bool = False
    metric: Literal["chebyshev", "manhattan"] = "chebyshev"


SweepConfig = Annotated[Union[CurtainSweep, TransitivitySweep], Field(discriminator="kind")]


class ExperimentConfig(_Strict):
    name: str = "experiment"
    seed: int = Field(0, ge=0, lt=2**64)
    out_dir: str = "out"
    model: Optional[ModelConfig] = None
    run: RunConfig = RunConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    walk: WalkConfig = WalkConfig()
    sweep: Optional[SweepConfig] = None
    workers: int = Field(1, ge=1)


class ConfigError(Exception):
    """Invalid or unreadable configuration; carries the offending field path."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _field_path(loc) -> str:
    return ".".join(str(p) for p in loc)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(err["msg"], _field_path(err["loc"])) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level of the config must be an object")
    return parse_config(data)


def preset_names() -> list[str]:
    root = resources.files("hetdyn") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    res = resources.files("hetdyn") / "presets" / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_config(json.loads(res.read_text()))
