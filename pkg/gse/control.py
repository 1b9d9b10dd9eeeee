"""
Monte Carlo side of the variational representation

    Psi(s, x) = max_u E[ Psi(1, Y(1)) - 1/2 int_s^1 eta xi'' u^2 dr ],
    dY = eta(r) xi''(r) u(r) dr + xi''(r)^{1/2} dW,   Y(s) = x,   |u| <= 1,

with the maximum attained by the feedback u*(r) = d_x Psi(r, Y(r)). Paths are simulated
with an Euler scheme on a partition that is uniform in the xi' clock, so each step
carries variance exactly xi'(t_{i+1}) - xi'(t_i).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from gse.constants import MAX_DRIFT_STEP, N_PATHS, N_STANDARD_ERRORS, N_STEPS
from gse.errors import StepCountTooSmallError
from gse.model import MixingFunction, xi_prime
from gse.order_param import DiscreteCDF, StepOrderParam
from gse.pde import PdeSolution, evaluate, with_times
from gse.types import PolicyKind, Seed
from gse.util import substream_seed


EtaSpec = Union[StepOrderParam, Tuple[DiscreteCDF, float]]


@dataclass(frozen=True)
class McParams:
    n_paths: int = N_PATHS
    n_steps: int = N_STEPS
    seed: Seed = Seed(0)
    n_se: float = N_STANDARD_ERRORS
    random_tables: int = 2


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    n_steps: int
    seed: Seed

    @classmethod
    def from_samples(cls, samples: np.ndarray, n_steps: int, seed: Seed) -> "McEstimate":
        n = len(samples)
        return cls(
            mean=float(np.mean(samples)),
            std_error=float(np.std(samples, ddof=1) / math.sqrt(n)),
            n_paths=n,
            n_steps=n_steps,
            seed=seed,
        )

    def to_record(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ControlPolicy:
    """
    u(t, x) with |u| <= 1.

    - constant: u = value.
    - feedback: d_x Psi at the latest stored level <= t of `solution`, 0 from `final_time` on
      (the start of the last Euler step when built from a partition, else t = 1).
    - table: piecewise constant in t over `times`, linear in x over `xs` (clamped at the ends).
    """
    kind: PolicyKind
    name: str
    value: float = 0.0
    solution: Optional[PdeSolution] = field(default=None, repr=False, compare=False)
    times: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    xs: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    table: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    final_time: float = 1.0

    @classmethod
    def constant(cls, value: float) -> "ControlPolicy":
        assert abs(value) <= 1.0, f"constant control must lie in [-1, 1], got {value}"
        return cls(kind=PolicyKind.CONSTANT, name=f"constant({value:g})", value=value)

    @classmethod
    def from_table(cls, times: Sequence[float], xs: Sequence[float], table: np.ndarray, name: str = "table") -> "ControlPolicy":
        table = np.asarray(table, dtype=float)
        assert table.shape == (len(times), len(xs)), f"table shape {table.shape} != ({len(times)}, {len(xs)})"
        assert np.all(np.abs(table) <= 1.0), "table controls must lie in [-1, 1]"
        return cls(
            kind=PolicyKind.TABLE,
            name=name,
            times=np.asarray(times, dtype=float),
            xs=np.asarray(xs, dtype=float),
            table=table,
        )

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == PolicyKind.CONSTANT:
            return np.full_like(x, self.value)
        if self.kind == PolicyKind.FEEDBACK:
            if t >= self.final_time - 1e-12:
                return np.zeros_like(x)
            stored = np.asarray(self.solution.times)
            level = stored[np.searchsorted(stored, t + 1e-12, side="right") - 1]
            return np.clip(self.solution.level(level).dpsi(x), -1.0, 1.0)
        row = max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)
        return np.clip(np.interp(x, self.xs, self.table[row]), -1.0, 1.0)


def feedback_policy(sol: PdeSolution, times: Optional[Sequence[float]] = None) -> ControlPolicy:
    """d_x Psi feedback; with an Euler partition `times`, u = 0 on its last step."""
    final_time = float(times[-2]) if times is not None and len(times) >= 2 else 1.0
    return ControlPolicy(kind=PolicyKind.FEEDBACK, name="feedback", solution=sol, final_time=final_time)


def random_table_policy(seed: Seed, name: str = "random_table") -> ControlPolicy:
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, 1.0, 9)[:-1]
    xs = np.linspace(-4.0, 4.0, 9)
    return ControlPolicy.from_table(times, xs, rng.uniform(-1.0, 1.0, size=(len(times), len(xs))), name=name)


def _eta_step(m: MixingFunction, eta: EtaSpec) -> StepOrderParam:
    if isinstance(eta, StepOrderParam):
        return eta
    alpha, beta = eta
    return alpha.as_step().scaled(beta)


def _xi_prime_inverse(m: MixingFunction, target: float, lo: float, hi: float) -> float:
    return brentq(lambda t: xi_prime(m, t) - target, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _segments(eta: StepOrderParam, s: float) -> List[Tuple[float, float]]:
    cuts = [s] + [t for t in eta.knots if s < t < 1.0] + [1.0]
    return list(zip(cuts[:-1], cuts[1:]))


def xi_clock(m: MixingFunction, eta: StepOrderParam, s: float, n_steps: int) -> np.ndarray:
    """
    Partition of [s, 1] into n_steps intervals containing every breakpoint of eta,
    uniform in xi' inside each segment. For even n_steps it is the xi'-midpoint
    refinement of the n_steps / 2 partition whenever that one exists.
    """
    assert 0.0 <= s < 1.0, f"start time must lie in [0, 1), got {s}"
    segments = _segments(eta, s)
    if n_steps < len(segments):
        raise StepCountTooSmallError(f"n_steps={n_steps} is below the {len(segments)} segments of eta on [{s}, 1]")
    if n_steps % 2 == 0 and n_steps // 2 >= len(segments):
        coarse = xi_clock(m, eta, s, n_steps // 2)
        mids = [
            _xi_prime_inverse(m, 0.5 * (xi_prime(m, a) + xi_prime(m, b)), a, b)
            for a, b in zip(coarse[:-1], coarse[1:])
        ]
        fine = np.empty(2 * len(coarse) - 1)
        fine[0::2] = coarse
        fine[1::2] = mids
        return fine

    widths = np.array([xi_prime(m, b) - xi_prime(m, a) for a, b in segments])
    share = widths / np.sum(widths) * (n_steps - len(segments))
    counts = 1 + np.floor(share).astype(int)
    remainder = n_steps - int(np.sum(counts))
    counts[np.argsort(-(share - np.floor(share)), kind="stable")[:remainder]] += 1

    times = [s]
    for (a, b), count in zip(segments, counts):
        lo, hi = xi_prime(m, a), xi_prime(m, b)
        for j in range(1, count):
            times.append(_xi_prime_inverse(m, lo + (hi - lo) * j / count, a, b))
        times.append(b)
    return np.asarray(times)


def _noise(seed: Seed, index: int, n_paths: int) -> np.ndarray:
    generator = np.random.Generator(np.random.Philox(key=int(seed), counter=index << 192))
    return generator.standard_normal(n_paths)


@dataclass
class _Paths:
    terminal: np.ndarray
    running: np.ndarray
    gap: np.ndarray


def _simulate(
    m: MixingFunction,
    eta: StepOrderParam,
    sol: PdeSolution,
    policy: ControlPolicy,
    s: float,
    x: float,
    n_paths: int,
    n_steps: int,
    seed: Seed,
    noise_steps: Optional[int] = None,
    with_gap: bool = False,
) -> _Paths:
    """
    Euler paths from (s, x). Noise is drawn on the noise_steps partition (a power-of-two
    refinement of the n_steps one) and summed over the sub-steps of each step.
    """
    noise_steps = noise_steps or n_steps
    ratio = noise_steps // n_steps
    assert ratio * n_steps == noise_steps and ratio & (ratio - 1) == 0, (
        f"noise_steps={noise_steps} must be a power-of-two multiple of n_steps={n_steps}"
    )
    times = xi_clock(m, eta, s, n_steps)
    clock = xi_prime(m, times)
    increments = np.diff(clock)
    drift = np.array([eta(t) for t in times[:-1]]) * increments
    if np.any(drift > MAX_DRIFT_STEP):
        raise StepCountTooSmallError(
            f"eta xi'' dt reaches {np.max(drift):.3g} > {MAX_DRIFT_STEP}; increase n_steps"
        )

    y = np.full(n_paths, float(x))
    running = np.zeros(n_paths)
    gap = np.zeros(n_paths)
    for i in range(n_steps):
        u = policy(times[i], y)
        if with_gap:
            slope = np.clip(sol.level(times[i]).dpsi(y), -1.0, 1.0)
            gap += 0.5 * drift[i] * (slope - u) ** 2
        z = sum(_noise(seed, i * ratio + j, n_paths) for j in range(ratio)) / math.sqrt(ratio)
        running += 0.5 * drift[i] * u * u
        y = y + drift[i] * u + math.sqrt(increments[i]) * z

    return _Paths(terminal=sol.boundary.value(y), running=running, gap=gap)


def _check_spec(m: MixingFunction, eta: EtaSpec, sol: PdeSolution) -> StepOrderParam:
    step = _eta_step(m, eta)
    assert step == sol.eta, "eta does not match the PDE solution"
    assert m == sol.model, "model does not match the PDE solution"
    return step


def simulate_functional(
    m: MixingFunction,
    eta: EtaSpec,
    sol: PdeSolution,
    policy: ControlPolicy,
    s: float,
    x: float,
    n_paths: int = N_PATHS,
    n_steps: int = N_STEPS,
    seed: Seed = Seed(0),
    noise_steps: Optional[int] = None,
) -> McEstimate:
    """F(u, x) = E[Psi(1, Y(1)) - running cost] on [s, 1]."""
    step = _check_spec(m, eta, sol)
    paths = _simulate(m, step, sol, policy, s, x, n_paths, n_steps, seed, noise_steps)
    return McEstimate.from_samples(paths.terminal - paths.running, n_steps, seed)


@dataclass(frozen=True)
class PolicyCheck:
    policy: str
    estimate: McEstimate
    bound: float
    ok: bool

    def to_record(self) -> dict:
        return {"policy": self.policy, "estimate": self.estimate.to_record(), "bound": self.bound, "ok": self.ok}


@dataclass
class VariationalReport:
    s: float
    x: float
    psi: float
    budget: float
    checks: List[PolicyCheck]
    optimal: McEstimate
    optimal_ok: bool

    @property
    def ok(self) -> bool:
        return self.optimal_ok and all(check.ok for check in self.checks)

    @property
    def violations(self) -> List[str]:
        failed = [check.policy for check in self.checks if not check.ok]
        if not self.optimal_ok:
            failed.append("feedback (optimality)")
        return failed

    def to_record(self) -> dict:
        return {
            "s": self.s,
            "x": self.x,
            "psi": self.psi,
            "budget": self.budget,
            "checks": [check.to_record() for check in self.checks],
            "optimal": self.optimal.to_record(),
            "optimal_ok": self.optimal_ok,
            "ok": self.ok,
            "violations": self.violations,
        }


def verify_variational(
    m: MixingFunction,
    eta: EtaSpec,
    sol: PdeSolution,
    s: float,
    x: float,
    params: McParams = McParams(),
) -> VariationalReport:
    """
    (a) F(u) <= Psi(s, x) + n_se SE + budget for a battery of policies;
    (b) |F(u*) - Psi(s, x)| <= n_se SE + budget, the budget being the step-doubling
    change |F_n(u*) - F_{n/2}(u*)| on shared noise.
    """
    step = _check_spec(m, eta, sol)
    n = params.n_steps
    assert n % 2 == 0, f"n_steps must be even for step doubling, got {n}"
    solution = with_times(sol, xi_clock(m, step, s, n))
    psi = float(evaluate(solution, s, x)[0])

    battery = [ControlPolicy.constant(u) for u in (-1.0, 0.0, 0.5, 1.0)]
    battery += [
        random_table_policy(substream_seed(params.seed, f"table/{j}"), name=f"random_table_{j}")
        for j in range(params.random_tables)
    ]
    optimal_policy = feedback_policy(solution, xi_clock(m, step, s, n))
    coarse_policy = feedback_policy(solution, xi_clock(m, step, s, n // 2))

    def estimate(policy: ControlPolicy, n_steps: int) -> McEstimate:
        paths = _simulate(m, step, solution, policy, s, x, params.n_paths, n_steps, params.seed, noise_steps=n)
        return McEstimate.from_samples(paths.terminal - paths.running, n_steps, params.seed)

    optimal = estimate(optimal_policy, n)
    coarse = estimate(coarse_policy, n // 2)
    budget = abs(optimal.mean - coarse.mean)

    checks = []
    for policy in battery + [optimal_policy]:
        value = optimal if policy is optimal_policy else estimate(policy, n)
        bound = psi + params.n_se * value.std_error + budget
        checks.append(PolicyCheck(policy=policy.name, estimate=value, bound=bound, ok=value.mean <= bound))
        logging.info(f"PolicyCheck\t => {policy.name} F={value.mean:.6f} +- {value.std_error:.1e} psi={psi:.6f}")

    optimal_ok = abs(optimal.mean - psi) <= params.n_se * optimal.std_error + budget
    report = VariationalReport(s=s, x=x, psi=psi, budget=budget, checks=checks, optimal=optimal, optimal_ok=optimal_ok)
    if not report.ok:
        logging.warning(f"VariationalCheckFailed\t => s={s} x={x} violations={report.violations}")
    return report


@dataclass
class DualityReport:
    psi: float
    right: McEstimate
    functional: McEstimate
    gap: McEstimate
    n_se: float

    @property
    def ok(self) -> bool:
        return abs(self.right.mean - self.psi) <= self.n_se * self.right.std_error

    def to_record(self) -> dict:
        return {
            "psi": self.psi,
            "right": self.right.to_record(),
            "functional": self.functional.to_record(),
            "gap": self.gap.to_record(),
            "ok": self.ok,
        }


def duality_gap(
    m: MixingFunction,
    eta: EtaSpec,
    sol: PdeSolution,
    policy: ControlPolicy,
    s: float,
    x: float,
    params: McParams = McParams(),
) -> DualityReport:
    """
    Both sides of Psi(s, x) = E Psi(1, Y) - 1/2 int eta xi'' u^2 + 1/2 int eta xi'' (d_x Psi - u)^2
    along the same paths; `gap` is the last term, i.e. right minus F(u).
    """
    step = _check_spec(m, eta, sol)
    times = xi_clock(m, step, s, params.n_steps)
    solution = with_times(sol, times)
    if policy.kind == PolicyKind.FEEDBACK:
        policy = feedback_policy(solution, times)
    psi = float(evaluate(solution, s, x)[0])

    paths = _simulate(m, step, solution, policy, s, x, params.n_paths, params.n_steps, params.seed, with_gap=True)
    functional = paths.terminal - paths.running
    right = functional + paths.gap
    report = DualityReport(
        psi=psi,
        right=McEstimate.from_samples(right, params.n_steps, params.seed),
        functional=McEstimate.from_samples(functional, params.n_steps, params.seed),
        gap=McEstimate.from_samples(paths.gap, params.n_steps, params.seed),
        n_se=params.n_se,
    )
    logging.info(f"DualityGap\t => {policy.name} psi={psi:.6f} right={report.right.mean:.6f} gap={report.gap.mean:.6f}")
    return report
