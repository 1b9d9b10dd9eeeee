import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from gse import kernels
from gse.hamiltonian import DisorderSample
from gse.metrics import (
    Metric,
    MetricsAggregatorMax,
    MetricsAggregatorMin,
    MetricsLogger,
)
from gse.schedule import Schedule


@dataclass
class AnnealRun:
    energy: float
    sigma: np.ndarray


class Annealer:
    """
    Metropolis sweeps maximizing H_N along the schedule's inverse temperatures, then a
    greedy zero-temperature quench. The returned energy is recomputed directly.
    """
    sample: DisorderSample
    schedule: Schedule
    metrics_logger: MetricsLogger

    def __init__(
        self,
        sample: DisorderSample,
        schedule: Schedule,
        metrics_logger: MetricsLogger,
        rng: np.random.Generator,
    ):
        self.sample = sample
        self.schedule = schedule
        self.metrics_logger = metrics_logger
        self.rng = rng

    def run(self) -> AnnealRun:
        n = self.sample.n
        sigma = self.rng.choice([-1.0, 1.0], size=n)
        reduced = self.sample.reduced()
        if reduced is not None:
            energy, q_sigma, p_mat = reduced.caches(sigma)
        else:
            energy = self.sample.energy(sigma)
        best = energy

        while True:
            beta = self.schedule.beta
            order = self.rng.permutation(n)
            uniforms = self.rng.random(n)
            if reduced is not None:
                energy, accepted = kernels.metropolis_sweep(
                    sigma, energy, reduced.f, reduced.q, reduced.kt, q_sigma, p_mat, reduced.cubic, beta, order, uniforms
                )
            else:
                energy, accepted = self._direct_sweep(sigma, energy, beta, order, uniforms)
            best = max(best, energy)

            self.metrics_logger.log(Metric.ENERGY, energy / n)
            self.metrics_logger.log(Metric.BEST_ENERGY, best / n)
            self.metrics_logger.log(Metric.ACCEPTANCE_RATE, accepted / n)
            self.metrics_logger.log(Metric.INVERSE_TEMPERATURE, beta)

            should_continue = self.schedule.step()
            if not should_continue:
                break

        if reduced is not None:
            kernels.quench(sigma, energy, reduced.f, reduced.q, reduced.kt, q_sigma, p_mat, reduced.cubic)
        else:
            self._direct_quench(sigma)

        return AnnealRun(energy=self.sample.energy(sigma), sigma=sigma.copy())

    def _flip_delta(self, sigma: np.ndarray, k: int) -> float:
        flipped = sigma.copy()
        flipped[k] = -flipped[k]
        return self.sample.energy(flipped) - self.sample.energy(sigma)

    def _direct_sweep(self, sigma, energy, beta, order, uniforms):
        accepted = 0
        for k, u in zip(order, uniforms):
            delta = self._flip_delta(sigma, k)
            if delta >= 0.0 or u < np.exp(beta * delta):
                sigma[k] = -sigma[k]
                energy += delta
                accepted += 1
        return energy, accepted

    def _direct_quench(self, sigma):
        improved = True
        while improved:
            improved = False
            for k in range(len(sigma)):
                if self._flip_delta(sigma, k) > 1e-12:
                    sigma[k] = -sigma[k]
                    improved = True


# Across restarts: the best energy reached so far and the common inverse temperature.
TRACE_AGGREGATORS = {
    Metric.BEST_ENERGY: MetricsAggregatorMax(),
    Metric.INVERSE_TEMPERATURE: MetricsAggregatorMax(),
}


def anneal_trace(metrics_logger: MetricsLogger) -> Dict[str, List[float]]:
    """
    Per-sweep trace over the restarts sharing metrics_logger: mean energy, mean acceptance,
    best energy and beta, plus the energy of the worst restart.
    """
    trace = metrics_logger.to_record(TRACE_AGGREGATORS)
    trace["worst_energy"] = metrics_logger.timeseries(Metric.ENERGY, MetricsAggregatorMin())
    return trace


@dataclass
class AnnealResult:
    l_n: float
    sigma: np.ndarray
    best_so_far: List[float]
    runs: List[AnnealRun]
    trace: Dict[str, List[float]]


def anneal(sample: DisorderSample, schedule: Schedule, rng: np.random.Generator, restarts: int) -> AnnealResult:
    """
    Best of independent annealing runs; best_so_far[r] is the maximum over runs 0..r.
    All runs log into one MetricsLogger, so each sweep holds one sample per run.
    """
    metrics_logger = MetricsLogger(schedule)
    runs, best_so_far = [], []
    best_run = None
    for restart in range(restarts):
        schedule.reset()
        run = Annealer(sample, schedule, metrics_logger, rng).run()
        runs.append(run)
        if best_run is None or run.energy > best_run.energy:
            best_run = run
        best_so_far.append(best_run.energy / sample.n)
        logging.debug(f"Anneal\t => restart={restart} L={run.energy / sample.n:.8f}")
    return AnnealResult(
        l_n=best_so_far[-1],
        sigma=best_run.sigma,
        best_so_far=best_so_far,
        runs=runs,
        trace=anneal_trace(metrics_logger),
    )
