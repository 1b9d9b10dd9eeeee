import json
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from gse.constants import (
    ANNEAL_RESTARTS,
    ANNEAL_SWEEPS,
    EXTRAPOLATION_OMEGA,
    F_TOL,
    MAX_ITERS,
    N_PATHS,
    N_STANDARD_ERRORS,
    N_STEPS,
    N_X,
    QUAD_NODES,
    RESTARTS,
)
from gse.control import McParams
from gse.errors import ConfigError
from gse.model import MixingFunction
from gse.optimizer import ENVELOPE, OptimizerConfig
from gse.order_param import DiscreteCDF, StepOrderParam
from gse.pde import SpaceGrid
from gse.types import Seed


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(Section):
    coeffs: List[Tuple[int, float]]
    h: float = 0.0

    def to_model(self) -> MixingFunction:
        return MixingFunction.from_pairs(self.coeffs, self.h)


class GridSection(Section):
    x_max: Optional[float] = None
    n_x: int = N_X
    quad_nodes: int = QUAD_NODES
    margin: Optional[float] = None

    def to_grid(self, m: MixingFunction) -> SpaceGrid:
        if self.x_max is None:
            default = SpaceGrid.default_for(m, n_x=self.n_x, quad_nodes=self.quad_nodes)
            return SpaceGrid(x_max=default.x_max, n_x=self.n_x, quad_nodes=self.quad_nodes, margin=self.margin)
        return SpaceGrid(x_max=self.x_max, n_x=self.n_x, quad_nodes=self.quad_nodes, margin=self.margin)


class OrderParamSection(Section):
    gamma: List[Tuple[float, float]] = [(0.0, 0.0)]
    alpha: Optional[List[Tuple[float, float]]] = None
    beta: Optional[float] = None
    export_solution: bool = False

    def to_gamma(self) -> StepOrderParam:
        return StepOrderParam.from_pairs(self.gamma)

    def to_alpha(self) -> Optional[DiscreteCDF]:
        if self.alpha is None:
            return None
        if self.beta is None:
            raise ConfigError("order_param.alpha needs order_param.beta")
        return DiscreteCDF.from_pairs(self.alpha)


class OptimizerSection(Section):
    k: int = Field(default=0, ge=0)
    k_max: int = Field(default=3, ge=0)
    restarts: int = Field(default=RESTARTS, ge=1)
    max_iters: int = Field(default=MAX_ITERS, ge=1)
    f_tol: float = Field(default=F_TOL, gt=0.0)
    value_cap: Union[Literal["envelope"], float] = ENVELOPE
    search_n_x: Optional[int] = None
    search_quad_nodes: Optional[int] = None
    trace: bool = False

    def to_config(self, seed: Seed) -> OptimizerConfig:
        return OptimizerConfig(
            k=self.k,
            restarts=self.restarts,
            max_iters=self.max_iters,
            f_tol=self.f_tol,
            value_cap=self.value_cap,
            seed=seed,
        )

    def search_grid(self, g: SpaceGrid) -> Optional[SpaceGrid]:
        if self.search_n_x is None and self.search_quad_nodes is None:
            return None
        return SpaceGrid(
            x_max=g.x_max,
            n_x=self.search_n_x or g.n_x,
            quad_nodes=self.search_quad_nodes or g.quad_nodes,
            margin=g.margin,
        )


class SweepSection(Section):
    betas: List[float] = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]
    gamma: Optional[List[Tuple[float, float]]] = None
    optimize: bool = False

    @field_validator("betas")
    @classmethod
    def positive(cls, betas: List[float]) -> List[float]:
        for j, beta in enumerate(betas):
            if not beta > 0.0:
                raise ValueError(f"betas[{j}]={beta} must be positive")
        return betas


class ControlSection(Section):
    n_paths: int = Field(default=N_PATHS, ge=2)
    n_steps: int = Field(default=N_STEPS, ge=2)
    n_se: float = Field(default=N_STANDARD_ERRORS, gt=0.0)
    random_tables: int = Field(default=2, ge=0)
    points: List[Tuple[float, float]] = [(0.0, 0.0), (0.0, 1.0), (0.5, 0.5)]
    duality_policies: List[Union[Literal["feedback"], float]] = [0.0, 0.5, "feedback"]

    def to_params(self, seed: Seed) -> McParams:
        return McParams(
            n_paths=self.n_paths,
            n_steps=self.n_steps,
            seed=seed,
            n_se=self.n_se,
            random_tables=self.random_tables,
        )


class OracleSection(Section):
    sizes: List[int] = [16, 20, 24]
    samples: int = Field(default=200, ge=1)
    beta: Optional[float] = 10.0
    omega: float = Field(default=EXTRAPOLATION_OMEGA, gt=0.0)
    sweeps: int = Field(default=ANNEAL_SWEEPS, ge=1)
    restarts: int = Field(default=ANNEAL_RESTARTS, ge=1)
    covariance_n: int = 8
    covariance_samples: int = Field(default=100_000, ge=2)
    cache: bool = True


class CompareSection(Section):
    tolerance: float = 0.02
    k0_margin: float = 0.02
    soft_margin: float = 0.05


class OutputSection(Section):
    directory: str = "out"


class RunConfig(Section):
    model: ModelSection
    grid: GridSection = GridSection()
    order_param: OrderParamSection = OrderParamSection()
    optimizer: OptimizerSection = OptimizerSection()
    sweep: SweepSection = SweepSection()
    control: ControlSection = ControlSection()
    oracle: OracleSection = OracleSection()
    compare: CompareSection = CompareSection()
    output: OutputSection = OutputSection()
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    threads: Optional[int] = Field(default=None, ge=1)


def _describe(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{where}: {item['msg']}")
    return "; ".join(lines)


def parse_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno} column {e.colno}: {e.msg}") from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)
