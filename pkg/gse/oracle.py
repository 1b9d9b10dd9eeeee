"""
Finite-N ground truth for a mixed p-spin model: exact L_N = max H_N / N and
F_N(beta) = log sum exp(beta H_N) / (beta N) by enumeration, annealing beyond the
enumeration budget, a Monte Carlo check of the covariance identity and a
finite-size extrapolation of the disorder means.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from gse import kernels
from gse.annealing import anneal
from gse.constants import (
    ANNEAL_BETA_END,
    ANNEAL_BETA_START,
    ANNEAL_RESTARTS,
    ANNEAL_SWEEPS,
    DIRECT_CHUNK,
    EXTRAPOLATION_OMEGA,
    LOG2,
    MAX_COVARIANCE_N,
    MAX_FREE_ENERGY_N,
    MAX_GROUND_STATE_N,
    N_STANDARD_ERRORS,
)
from gse.db import NO_BETA, OracleSample, load_samples, store_samples
from gse.errors import BudgetExceededError, EnumerationError
from gse.hamiltonian import DisorderSample, configurations, sample_disorder
from gse.model import MixingFunction, overlap_covariance
from gse.runner import Runner
from gse.schedule import Schedule
from gse.types import EnumerationMethod, Seed
from gse.util import substream_seed


__all__ = [
    "DisorderSample",
    "sample_disorder",
    "ground_state_exhaustive",
    "free_energy_exhaustive",
    "ground_state_anneal",
    "covariance_check",
    "extrapolate_gse",
    "run_oracle",
]


# Rounding slack on 0 <= F_N - L_N <= log 2 / beta.
SANDWICH_TOL = 1e-12


@dataclass(frozen=True)
class GroundState:
    l_n: float
    sigma: np.ndarray
    method: EnumerationMethod
    halved: bool


@dataclass(frozen=True)
class _Scan:
    ground_state: GroundState
    log_rest: float


def _method(d: DisorderSample, method: Optional[EnumerationMethod]) -> EnumerationMethod:
    if method is None:
        return EnumerationMethod.GRAY_CODE if d.reduced() is not None else EnumerationMethod.DIRECT
    if method == EnumerationMethod.GRAY_CODE and d.reduced() is None:
        raise EnumerationError(f"Gray-code enumeration needs p <= 3, got degrees {d.model.degrees}")
    assert method != EnumerationMethod.ANNEAL, "annealing is not an enumeration"
    return method


def _scan(d: DisorderSample, beta: float, method: Optional[EnumerationMethod], use_symmetry: bool) -> _Scan:
    """
    Visit every configuration (half of them, with the last spin fixed to +1, when
    H is even and use_symmetry is set). log_rest = log sum exp(beta (H - max H)) over
    the visited configurations.
    """
    method = _method(d, method)
    n = d.n
    halved = use_symmetry and d.symmetric
    n_free = n - 1 if halved else n

    if method == EnumerationMethod.GRAY_CODE:
        reduced = d.reduced()
        sigma = np.ones(n)
        energy, q_sigma, p_mat = reduced.caches(sigma)
        best, code, log_rest = kernels.gray_code_scan(
            sigma, energy, reduced.f, reduced.q, reduced.kt, q_sigma, p_mat, reduced.cubic, n_free, beta
        )
        best_sigma = kernels.spins_from_code(code, n)
    else:
        best, best_sigma, log_total = -np.inf, None, -np.inf
        for start in range(0, 1 << n_free, DIRECT_CHUNK):
            spins = configurations(start, min(start + DIRECT_CHUNK, 1 << n_free), n)
            energies = d.energies(spins)
            index = int(np.argmax(energies))
            if energies[index] > best:
                best, best_sigma = float(energies[index]), spins[index]
            if beta > 0.0:
                log_total = np.logaddexp(log_total, logsumexp(beta * energies))
        log_rest = log_total - beta * best if beta > 0.0 else 0.0

    ground_state = GroundState(l_n=d.energy(best_sigma) / n, sigma=best_sigma, method=method, halved=halved)
    return _Scan(ground_state=ground_state, log_rest=float(log_rest))


def ground_state_exhaustive(
    d: DisorderSample,
    method: Optional[EnumerationMethod] = None,
    use_symmetry: bool = True,
) -> GroundState:
    """Exact max over all 2^N configurations; L_N is re-evaluated directly at the maximizer."""
    if d.n > MAX_GROUND_STATE_N:
        raise BudgetExceededError(f"exhaustive ground state needs N <= {MAX_GROUND_STATE_N}, got {d.n}")
    return _scan(d, 0.0, method, use_symmetry).ground_state


def _free_energy(scan: _Scan, beta: float, n: int) -> float:
    log_rest = scan.log_rest + (LOG2 if scan.ground_state.halved else 0.0)
    entropy = log_rest / (beta * n)
    assert -SANDWICH_TOL <= entropy <= LOG2 / beta + SANDWICH_TOL, (
        f"F_N - L_N = {entropy:.3e} outside [0, log 2 / beta = {LOG2 / beta:.3e}]"
    )
    return scan.ground_state.l_n + entropy


def free_energy_exhaustive(
    d: DisorderSample,
    beta: float,
    method: Optional[EnumerationMethod] = None,
    use_symmetry: bool = True,
) -> float:
    """F_N(beta) as L_N plus the streamed log-sum-exp remainder."""
    assert beta > 0.0, f"beta must be positive, got {beta}"
    if d.n > MAX_FREE_ENERGY_N:
        raise BudgetExceededError(f"exhaustive free energy needs N <= {MAX_FREE_ENERGY_N}, got {d.n}")
    return _free_energy(_scan(d, beta, method, use_symmetry), beta, d.n)


def ground_state_anneal(
    d: DisorderSample,
    schedule: Schedule,
    seed: Seed,
    restarts: int = ANNEAL_RESTARTS,
):
    """Lower bound on L_N: the best of `restarts` annealing runs."""
    return anneal(d, schedule, np.random.default_rng(seed), restarts)


@dataclass
class SampleResult:
    seed: Seed
    n: int
    l_n: float
    f_n: Optional[float]
    method: str
    # Per-sweep anneal trace, absent for enumerated and cached samples.
    trace: Optional[Dict[str, List[float]]] = field(default=None, repr=False)

    def to_row(self, beta: Optional[float]) -> dict:
        return {"seed": self.seed, "N": self.n, "L_N": self.l_n, "F_N": self.f_n, "beta": beta, "method": self.method}

    def trace_rows(self) -> List[dict]:
        if self.trace is None:
            return []
        sweeps = len(next(iter(self.trace.values())))
        return [
            {"seed": self.seed, "N": self.n, "sweep": t, **{key: values[t] for key, values in self.trace.items()}}
            for t in range(sweeps)
        ]


@dataclass
class OracleResult:
    n: int
    seed: Seed
    beta: Optional[float]
    samples: List[SampleResult] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return float(np.mean([s.l_n for s in self.samples]))

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return 0.0
        return float(np.std([s.l_n for s in self.samples], ddof=1) / math.sqrt(self.count))

    @property
    def free_energy_mean(self) -> Optional[float]:
        values = [s.f_n for s in self.samples if s.f_n is not None]
        return float(np.mean(values)) if values else None

    def to_record(self) -> dict:
        return {
            "N": self.n,
            "seed": self.seed,
            "beta": self.beta,
            "count": self.count,
            "mean": self.mean,
            "std_error": self.std_error,
            "free_energy_mean": self.free_energy_mean,
            "methods": sorted({s.method for s in self.samples}),
        }


def _oracle_job(job: Tuple[MixingFunction, int, Seed, Optional[float], int, int]) -> SampleResult:
    m, n, seed, beta, sweeps, restarts = job
    d = sample_disorder(m, n, seed)
    if n <= MAX_GROUND_STATE_N:
        free = beta is not None and n <= MAX_FREE_ENERGY_N
        scan = _scan(d, beta if free else 0.0, None, True)
        f_n = _free_energy(scan, beta, n) if free else None
        return SampleResult(seed=seed, n=n, l_n=scan.ground_state.l_n, f_n=f_n, method=scan.ground_state.method.value)

    schedule = Schedule(sweeps, ANNEAL_BETA_START, ANNEAL_BETA_END)
    result = ground_state_anneal(d, schedule, substream_seed(seed, "anneal"), restarts)
    return SampleResult(seed=seed, n=n, l_n=result.l_n, f_n=None, method=EnumerationMethod.ANNEAL.value, trace=result.trace)


def run_oracle(
    m: MixingFunction,
    sizes: Sequence[int],
    samples: int,
    beta: Optional[float],
    seed: Seed,
    runner: Optional[Runner] = None,
    cache=None,
    sweeps: int = ANNEAL_SWEEPS,
    restarts: int = ANNEAL_RESTARTS,
) -> List[OracleResult]:
    """
    Disorder averages per N. Sample j of size N uses the seed of sub-stream
    "oracle/N=<N>/sample=<j>", so results do not depend on the parallel layout. With
    a cache session, rows already stored are reused and new ones are added.
    """
    runner = runner or Runner(1)
    beta_key = NO_BETA if beta is None else float(beta)
    results = []
    for n in sizes:
        seeds = [substream_seed(seed, f"oracle/N={n}/sample={j}") for j in range(samples)]
        cached = load_samples(cache, m.key, n, beta_key) if cache is not None else {}

        missing = [s for s in seeds if s not in cached]
        if len(cached) > 0:
            logging.info(f"OracleCache\t => N={n} reusing {samples - len(missing)} of {samples} samples")
        computed = dict(zip(missing, runner.map(_oracle_job, [(m, n, s, beta, sweeps, restarts) for s in missing])))

        if cache is not None and computed:
            store_samples(cache, (
                OracleSample(
                    model=m.key, n=n, seed=str(s), beta=beta_key,
                    ground_state=sample.l_n, free_energy=sample.f_n, method=sample.method,
                )
                for s, sample in computed.items()
            ))

        result = OracleResult(n=n, seed=seed, beta=beta)
        for s in seeds:
            if s in computed:
                result.samples.append(computed[s])
            else:
                row = cached[s]
                result.samples.append(SampleResult(seed=s, n=n, l_n=row.ground_state, f_n=row.free_energy, method=row.method))
        logging.info(f"Oracle\t => N={n} mean L_N={result.mean:.6f} +- {result.std_error:.1e} ({result.count} samples)")
        results.append(result)
    return results


@dataclass(frozen=True)
class CovarianceRow:
    target: float
    overlap: float
    expected: float
    estimate: float
    std_error: float
    ok: bool

    @property
    def deviation(self) -> float:
        return abs(self.estimate - self.expected)


@dataclass
class CovarianceReport:
    n: int
    n_samples: int
    seed: Seed
    rows: List[CovarianceRow]

    @property
    def max_deviation(self) -> float:
        return max(row.deviation for row in self.rows)

    @property
    def ok(self) -> bool:
        return all(row.ok for row in self.rows)

    def to_record(self) -> dict:
        return {
            "N": self.n,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "max_deviation": self.max_deviation,
            "ok": self.ok,
            "rows": [dict(row.__dict__, deviation=row.deviation) for row in self.rows],
        }


def _tensor_power(sigma: np.ndarray, p: int) -> np.ndarray:
    return reduce(np.multiply.outer, [sigma] * p).ravel()


def covariance_check(
    m: MixingFunction,
    n: int,
    n_samples: int,
    seed: Seed,
    overlaps: Iterable[float] = (-1.0, -0.5, 0.0, 0.5, 1.0),
    n_se: float = N_STANDARD_ERRORS,
    chunk: int = 4096,
) -> CovarianceReport:
    """
    E X_N(s1) X_N(s2) / N against xi(R) with s1 all ones and s2 flipping the first
    round((1 - R) N / 2) spins, over fresh disorder draws.
    """
    if n > MAX_COVARIANCE_N:
        raise BudgetExceededError(f"covariance check needs N <= {MAX_COVARIANCE_N}, got {n}")
    overlaps = list(overlaps)
    first = np.ones(n)
    seconds = []
    for r in overlaps:
        second = np.ones(n)
        second[:int(round((1.0 - r) * n / 2.0))] = -1.0
        seconds.append(second)

    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    totals = np.zeros(len(overlaps))
    squares = np.zeros(len(overlaps))
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        x_first = np.zeros(size)
        x_second = np.zeros((size, len(overlaps)))
        for p, c in m.coeffs:
            g = rng.standard_normal((size, n ** p))
            scale = c * n ** (-(p - 1) / 2.0)
            x_first += scale * (g @ _tensor_power(first, p))
            x_second += scale * (g @ np.stack([_tensor_power(s, p) for s in seconds], axis=1))
        products = x_first[:, None] * x_second / n
        totals += products.sum(axis=0)
        squares += (products ** 2).sum(axis=0)
        done += size

    means = totals / n_samples
    std_errors = np.sqrt(np.maximum(squares / n_samples - means ** 2, 0.0) * n_samples / (n_samples - 1) / n_samples)
    rows = []
    for target, second, mean, se in zip(overlaps, seconds, means, std_errors):
        realized = float(first @ second / n)
        expected = overlap_covariance(m, realized)
        rows.append(CovarianceRow(
            target=target,
            overlap=realized,
            expected=expected,
            estimate=float(mean),
            std_error=float(se),
            ok=abs(mean - expected) <= n_se * se,
        ))
    report = CovarianceReport(n=n, n_samples=n_samples, seed=seed, rows=rows)
    logging.info(f"Covariance\t => N={n} max deviation {report.max_deviation:.2e} ok={report.ok}")
    return report


@dataclass(frozen=True)
class Extrapolation:
    estimate: float
    error: float
    slope: float
    omega: float
    chi2_dof: float
    degenerate: bool
    sizes: Tuple[int, ...]

    def to_record(self) -> dict:
        return dict(self.__dict__, sizes=list(self.sizes))


def extrapolate_gse(results: Sequence[OracleResult], omega: float = EXTRAPOLATION_OMEGA) -> Extrapolation:
    """
    Weighted least squares E L_N ~ a + b N^-omega with weights 1/SE^2 (unit weights if
    any SE is 0). The error on a is scaled by sqrt(chi2/dof) when the residuals exceed
    the standard errors.
    """
    sizes = np.array([r.n for r in results], dtype=float)
    assert len(set(sizes)) >= 3, f"need at least 3 distinct N, got {sorted(set(sizes))}"
    logging.info(f"Extrapolation\t => modeling choice: finite-size correction N^-{omega:.4g}")

    means = np.array([r.mean for r in results])
    errors = np.array([r.std_error for r in results])
    unit = bool(np.any(errors <= 0.0))
    weights = np.ones_like(means) if unit else 1.0 / errors ** 2

    design = np.column_stack([np.ones_like(sizes), sizes ** (-omega)])
    normal = design.T @ (weights[:, None] * design)
    covariance = np.linalg.inv(normal)
    a, b = covariance @ (design.T @ (weights * means))

    residuals = means - design @ np.array([a, b])
    dof = len(means) - 2
    chi2_dof = float(np.sum(weights * residuals ** 2) / dof) if dof > 0 else 0.0
    if unit:
        scale = math.sqrt(chi2_dof)
        degenerate = False
    else:
        scale = max(1.0, math.sqrt(chi2_dof))
        degenerate = chi2_dof > 1.0
    if degenerate:
        logging.warning(f"ExtrapolationFit\t => residuals exceed standard errors, chi2/dof={chi2_dof:.3g}")

    return Extrapolation(
        estimate=float(a),
        error=float(math.sqrt(covariance[0, 0]) * scale),
        slope=float(b),
        omega=omega,
        chi2_dof=chi2_dof,
        degenerate=degenerate,
        sizes=tuple(int(n) for n in sizes),
    )
