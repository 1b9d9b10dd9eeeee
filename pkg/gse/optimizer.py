"""
Derivative-free minimization of the Parisi functionals over step order parameters.

A k-step gamma is parameterized by unconstrained reals: k logits give the gaps between
consecutive breakpoints through a softmax (so 0 < t_1 < ... < t_k < 1), and k + 1 reals
z give nonnegative increments z^2 whose cumulative sums are the values. A cap is
applied by projection, which keeps the values nondecreasing because the caps are.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from gse.constants import F_TOL, GLOBAL_VALUE_CAP, LOG2, MAX_ITERS, RESTARTS
from gse.functional import FunctionalValue, parisi_finite_beta, parisi_zero_t
from gse.model import MixingFunction
from gse.order_param import (
    DiscreteCDF,
    StepOrderParam,
    embed_finite_beta,
    l1_distance,
    minimizer_envelope,
    split_longest,
)
from gse.pde import SpaceGrid
from gse.runner import Runner
from gse.types import Seed
from gse.util import substream_seed


# Smallest gap between consecutive breakpoints produced by the parameterization.
MIN_GAP = 1e-9

# Initial simplex edge in parameter space.
SIMPLEX_STEP = 0.5

ENVELOPE = "envelope"

# beta alpha*_beta is compared with gamma* on [0, DISTANCE_UPPER].
DISTANCE_UPPER = 0.95

# Slack allowed when checking that the distances to gamma* shrink with beta.
DISTANCE_TOL = 1e-2


@dataclass(frozen=True)
class OptimizerConfig:
    """
    - k: number of jumps of gamma (k = 0 is a constant).
    - value_cap: "envelope" caps the value on [t_j, t_{j+1}) by min(envelope(t_j), 50),
      a number caps every value by that constant.
    """
    k: int = 0
    restarts: int = RESTARTS
    max_iters: int = MAX_ITERS
    f_tol: float = F_TOL
    value_cap: Union[str, float] = ENVELOPE
    seed: Seed = Seed(0)

    def __post_init__(self):
        assert self.k >= 0, f"k must be >= 0, got {self.k}"
        assert self.f_tol > 0.0, f"f_tol must be positive, got {self.f_tol}"
        assert self.restarts >= 1, f"restarts must be >= 1, got {self.restarts}"
        assert self.value_cap == ENVELOPE or float(self.value_cap) >= 0.0, (
            f"value_cap must be '{ENVELOPE}' or a nonnegative number, got {self.value_cap}"
        )

    @property
    def cap_policy(self) -> str:
        if self.value_cap == ENVELOPE:
            return f"min(envelope(t_j), {GLOBAL_VALUE_CAP})"
        return f"constant {float(self.value_cap)}"


@dataclass(frozen=True)
class RestartTrace:
    restart: int
    value: float
    evaluations: int
    iterations: int
    converged: bool
    order_param: list

    def to_record(self) -> dict:
        return {
            "restart": self.restart,
            "value": self.value,
            "evaluations": self.evaluations,
            "iterations": self.iterations,
            "converged": self.converged,
            "order_param": self.order_param,
        }


@dataclass
class OptimizationResult:
    value: float
    functional: FunctionalValue
    converged: bool
    cap_policy: str
    trace: List[RestartTrace]
    gamma: Optional[StepOrderParam] = None
    alpha: Optional[DiscreteCDF] = None
    beta: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def to_record(self, with_trace: bool = False) -> dict:
        record = {
            "value": self.value,
            "functional": self.functional.to_record(),
            "converged": self.converged,
            "cap_policy": self.cap_policy,
            "gamma": None if self.gamma is None else self.gamma.to_pairs(),
            "alpha": None if self.alpha is None else self.alpha.to_pairs(),
            "beta": self.beta,
            "diagnostics": self.diagnostics,
        }
        if with_trace:
            record["trace"] = [t.to_record() for t in self.trace]
        return record


def _breakpoints(logits: np.ndarray) -> np.ndarray:
    """k logits -> [0, t_1, ..., t_k] with gaps softmax([logits, 0])."""
    gaps = softmax(np.append(np.clip(logits, -50.0, 50.0), 0.0))
    gaps = np.maximum(gaps, MIN_GAP)
    gaps = gaps / np.sum(gaps)
    return np.concatenate([[0.0], np.cumsum(gaps)[:-1]])


def _logits(breakpoints: Sequence[float]) -> np.ndarray:
    gaps = np.diff(np.append(breakpoints, 1.0))
    gaps = np.maximum(gaps, MIN_GAP)
    return np.log(gaps[:-1] / gaps[-1])


def value_caps(m: MixingFunction, breakpoints: np.ndarray, value_cap: Union[str, float]) -> np.ndarray:
    if value_cap == ENVELOPE:
        return np.array([min(minimizer_envelope(m, t), GLOBAL_VALUE_CAP) for t in breakpoints])
    return np.full(len(breakpoints), float(value_cap))


def decode_gamma(params: np.ndarray, k: int, m: MixingFunction, value_cap) -> StepOrderParam:
    breakpoints = _breakpoints(params[:k])
    values = np.cumsum(params[k:] ** 2)
    values = np.minimum(values, value_caps(m, breakpoints, value_cap))
    return StepOrderParam(breakpoints=tuple(breakpoints), values=tuple(values))


def encode_gamma(breakpoints: Sequence[float], values: Sequence[float]) -> np.ndarray:
    increments = np.diff(np.concatenate([[0.0], values]))
    return np.concatenate([_logits(breakpoints), np.sqrt(np.maximum(increments, 0.0))])


def decode_alpha(params: np.ndarray, k: int) -> DiscreteCDF:
    """k breakpoint logits and k + 1 mass logits -> atoms (0, t_1, ..., t_k, 1)."""
    atoms = np.append(_breakpoints(params[:k]), 1.0)
    masses = softmax(np.append(np.clip(params[k:], -50.0, 50.0), 0.0))
    return DiscreteCDF(atoms=tuple(atoms), masses=tuple(masses))


def _initial_simplex(x0: np.ndarray) -> np.ndarray:
    return np.vstack([x0] + [x0 + SIMPLEX_STEP * e for e in np.eye(len(x0))])


def _nelder_mead(objective: Callable[[np.ndarray], float], x0: np.ndarray, max_iters: int, f_tol: float):
    return minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "maxiter": max_iters,
            "fatol": f_tol,
            "xatol": 1e-8,
            "adaptive": True,
            "initial_simplex": _initial_simplex(x0),
        },
    )


def _choose(trace: List[RestartTrace], f_tol: float, steps: Callable[[RestartTrace], int]) -> RestartTrace:
    """Among restarts within f_tol of the best, the one with fewest steps."""
    best = min(t.value for t in trace)
    candidates = [t for t in trace if t.value <= best + f_tol]
    return min(candidates, key=lambda t: (steps(t), t.value, t.restart))


def minimize_zero_t(
    m: MixingFunction,
    cfg: OptimizerConfig,
    g: SpaceGrid,
    initial: Optional[StepOrderParam] = None,
    search_grid: Optional[SpaceGrid] = None,
    runner: Optional[Runner] = None,
) -> OptimizationResult:
    """
    Minimize P over k-step gamma. Restart 0 starts from `initial` (re-expressed on k
    jumps) when given, the others from seeded random points.
    """
    k = cfg.k
    search = search_grid or g
    runner = runner or Runner(1)
    if cfg.value_cap == ENVELOPE:
        logging.info(f"ValueCap\t => heuristic search-region prior {cfg.cap_policy}")

    if initial is not None and initial.num_steps <= k:
        warm = encode_gamma(*split_longest(initial, k))
    else:
        warm = None

    def objective(params: np.ndarray) -> float:
        return parisi_zero_t(m, decode_gamma(params, k, m, cfg.value_cap), search).value

    def run_restart(restart: int) -> RestartTrace:
        if restart == 0 and warm is not None:
            x0 = warm
        else:
            rng = np.random.default_rng(substream_seed(cfg.seed, f"zero_t/k={k}/restart={restart}"))
            x0 = np.concatenate([rng.normal(size=k), np.abs(rng.normal(0.0, 1.0 / math.sqrt(k + 1), size=k + 1))])
        result = _nelder_mead(objective, x0, cfg.max_iters, cfg.f_tol)
        gamma = decode_gamma(result.x, k, m, cfg.value_cap)
        logging.info(f"Restart\t => k={k} restart={restart} value={result.fun:.10f} converged={result.success}")
        return RestartTrace(
            restart=restart,
            value=float(result.fun),
            evaluations=int(result.nfev),
            iterations=int(result.nit),
            converged=bool(result.success),
            order_param=gamma.to_pairs(),
        )

    trace = runner.map(run_restart, range(cfg.restarts))
    chosen = _choose(trace, cfg.f_tol, lambda t: len(t.order_param))
    gamma = StepOrderParam.from_pairs(chosen.order_param)
    functional = parisi_zero_t(m, gamma, g)

    return OptimizationResult(
        value=functional.value,
        functional=functional,
        converged=chosen.converged,
        cap_policy=cfg.cap_policy,
        trace=trace,
        gamma=gamma,
    )


def envelope_diagnostics(m: MixingFunction, alpha: DiscreteCDF, beta: float, tolerance: float = 1e-6) -> dict:
    """beta alpha(s) against the minimizer envelope on a grid of s in [0, 1)."""
    s = np.linspace(0.0, 0.99, 100)
    scaled = beta * alpha(s)
    envelope = np.array([minimizer_envelope(m, t) for t in s])
    excess = float(np.max(scaled - envelope))
    return {
        "envelope_max_excess": excess,
        "envelope_ok": excess <= tolerance,
        "q_max": alpha.q_max,
    }


def minimize_finite_beta(
    m: MixingFunction,
    beta: float,
    cfg: OptimizerConfig,
    g: SpaceGrid,
    search_grid: Optional[SpaceGrid] = None,
    runner: Optional[Runner] = None,
) -> OptimizationResult:
    """
    Minimize P_beta over alpha with atoms at 0, at k free points and at 1.
    Restart 0 starts from uniform atoms and masses.
    """
    k = cfg.k
    search = search_grid or g
    runner = runner or Runner(1)

    def objective(params: np.ndarray) -> float:
        return parisi_finite_beta(m, decode_alpha(params, k), beta, search).value

    def run_restart(restart: int) -> RestartTrace:
        if restart == 0:
            x0 = np.zeros(2 * k + 1)
        else:
            rng = np.random.default_rng(substream_seed(cfg.seed, f"beta={beta!r}/k={k}/restart={restart}"))
            x0 = rng.normal(size=2 * k + 1)
        result = _nelder_mead(objective, x0, cfg.max_iters, cfg.f_tol)
        alpha = decode_alpha(result.x, k)
        logging.info(f"Restart\t => beta={beta} k={k} restart={restart} value={result.fun:.10f}")
        return RestartTrace(
            restart=restart,
            value=float(result.fun),
            evaluations=int(result.nfev),
            iterations=int(result.nit),
            converged=bool(result.success),
            order_param=alpha.to_pairs(),
        )

    trace = runner.map(run_restart, range(cfg.restarts))
    chosen = _choose(trace, cfg.f_tol, lambda t: len(t.order_param))
    alpha = DiscreteCDF.from_pairs(chosen.order_param)
    functional = parisi_finite_beta(m, alpha, beta, g)

    return OptimizationResult(
        value=functional.value,
        functional=functional,
        converged=chosen.converged,
        cap_policy="none",
        trace=trace,
        alpha=alpha,
        beta=beta,
        diagnostics=envelope_diagnostics(m, alpha, beta),
    )


@dataclass
class GseReport:
    estimate: float
    error: float
    plateau: bool
    tail: float
    zero_step_bound: float
    rows: List[dict]
    best: OptimizationResult

    def to_record(self) -> dict:
        return {
            "estimate": self.estimate,
            "error": self.error,
            "plateau": self.plateau,
            "tail": self.tail,
            "zero_step_bound": self.zero_step_bound,
            "cap_policy": self.best.cap_policy,
            "gamma": self.best.gamma.to_pairs(),
            "rows": self.rows,
        }


def richardson_tail(values: Sequence[float]) -> float:
    """
    Remaining decrease of a sequence whose last two differences shrink geometrically.
    """
    if len(values) < 3:
        return 0.0
    d1 = values[-2] - values[-1]
    d2 = values[-3] - values[-2]
    if d1 <= 0.0 or d2 <= 0.0:
        return 0.0
    r = d1 / d2
    if r >= 1.0:
        return 0.0
    return d1 * r / (1.0 - r)


def gse_estimate(
    m: MixingFunction,
    k_max: int,
    cfg: OptimizerConfig,
    g: SpaceGrid,
    search_grid: Optional[SpaceGrid] = None,
    runner: Optional[Runner] = None,
) -> GseReport:
    """
    Optima over k = 0..k_max, each warm-started from the previous one, with a
    geometric tail correction and a grid-refinement error bar.
    """
    assert k_max >= 0, f"k_max must be >= 0, got {k_max}"
    zero_step_bound = parisi_zero_t(m, StepOrderParam.constant(0.0), g).value

    rows, values = [], []
    best = None
    for k in range(k_max + 1):
        best = minimize_zero_t(m, replace(cfg, k=k), g, initial=best.gamma if best else None, search_grid=search_grid, runner=runner)
        values.append(best.value)
        rows.append({
            "k": k,
            "value": best.value,
            "num_steps": best.gamma.num_steps,
            "converged": best.converged,
            "gamma": best.gamma.to_pairs(),
        })

    plateau = len(values) > 1 and abs(values[-2] - values[-1]) < cfg.f_tol
    tail = 0.0 if plateau else richardson_tail(values)
    refined = parisi_zero_t(m, best.gamma, g.refined()).value
    estimate = best.value - tail
    error = abs(best.value - refined) + tail
    logging.info(f"GseEstimate\t => {estimate:.8f} +- {error:.2e} plateau={plateau} tail={tail:.2e}")

    return GseReport(
        estimate=estimate,
        error=error,
        plateau=plateau,
        tail=tail,
        zero_step_bound=zero_step_bound,
        rows=rows,
        best=best,
    )


@dataclass
class BetaSweep:
    """
    Rows of a beta sweep. With an optimizer config, gamma_star is the zero-temperature
    optimum every row's beta alpha*_beta is compared with on [0, DISTANCE_UPPER].
    """
    gamma: StepOrderParam
    rows: List[dict]
    gamma_star: Optional[StepOrderParam] = None
    weak_convergence_monotone: Optional[bool] = None

    def to_record(self) -> dict:
        return {
            "gamma": self.gamma.to_pairs(),
            "rows": self.rows,
            "gamma_star": self.gamma_star.to_pairs() if self.gamma_star is not None else None,
            "weak_convergence_monotone": self.weak_convergence_monotone,
        }


def beta_sweep(
    m: MixingFunction,
    gamma: StepOrderParam,
    betas: Sequence[float],
    g: SpaceGrid,
    cfg: Optional[OptimizerConfig] = None,
    runner: Optional[Runner] = None,
    gamma_star: Optional[StepOrderParam] = None,
    distance_tol: float = DISTANCE_TOL,
) -> BetaSweep:
    """
    P_beta(embed_finite_beta(gamma, beta)) against P(gamma). With a config, each row also
    carries the finite-beta optimum alpha*_beta and the distance of beta alpha*_beta to
    gamma_star, which is minimize_zero_t under the same config unless given.
    """
    zero_t = parisi_zero_t(m, gamma, g).value
    if cfg is not None and gamma_star is None:
        gamma_star = minimize_zero_t(m, cfg, g, runner=runner).gamma

    rows = []
    for beta in betas:
        alpha = embed_finite_beta(gamma, beta)
        finite = parisi_finite_beta(m, alpha, beta, g).value
        row = {
            "beta": beta,
            "finite_beta_value": finite,
            "zero_t_value": zero_t,
            "difference": abs(finite - zero_t),
            "entropy": LOG2 / beta,
        }
        if cfg is not None:
            best = minimize_finite_beta(m, beta, cfg, g, runner=runner)
            row["optimum"] = best.value
            row["optimum_distance"] = l1_distance(best.alpha.as_step().scaled(beta), gamma_star, upper=DISTANCE_UPPER)
            row["q_max"] = best.alpha.q_max
            row["envelope_ok"] = best.diagnostics["envelope_ok"]
        logging.info(f"BetaSweep\t => beta={beta} difference={row['difference']:.3e}")
        rows.append(row)

    monotone = None
    if cfg is not None:
        distances = [row["optimum_distance"] for row in sorted(rows, key=lambda row: row["beta"])]
        monotone = all(b <= a + distance_tol for a, b in zip(distances, distances[1:]))
        logging.info(f"BetaSweep\t => distances to gamma* {[round(d, 4) for d in distances]} monotone={monotone}")
    return BetaSweep(gamma=gamma, rows=rows, gamma_star=gamma_star, weak_convergence_monotone=monotone)
