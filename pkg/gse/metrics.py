from enum import Enum
from typing import Dict, List, NewType, Optional

import numpy as np

from gse.schedule import Schedule


class Metric(Enum):
    ACCEPTANCE_RATE = "acceptance_rate"
    BEST_ENERGY = "best_energy"
    ENERGY = "energy"
    INVERSE_TEMPERATURE = "inverse_temperature"


# metric -> sweep index -> samples logged during that sweep
Metrics = NewType("Metrics", Dict[Metric, Dict[int, List[float]]])


class MetricsAggregator:
    def aggregate(self, samples: List[float]) -> float:
        raise NotImplementedError


class MetricsAggregatorAvg(MetricsAggregator):
    def aggregate(self, samples: List[float]) -> float:
        return float(np.mean(samples))


class MetricsAggregatorMax(MetricsAggregator):
    def aggregate(self, samples: List[float]) -> float:
        return float(np.max(samples))


class MetricsAggregatorMin(MetricsAggregator):
    def aggregate(self, samples: List[float]) -> float:
        return float(np.min(samples))


def make_timeseries(metrics: Metrics, metric: Metric, aggregator: MetricsAggregator, periods: int) -> List[float]:
    """One aggregated value per sweep; sweeps without samples give 0."""
    by_sweep = metrics.get(metric, {})
    return [aggregator.aggregate(by_sweep[t]) if t in by_sweep else 0.0 for t in range(periods)]


class MetricsLogger:
    """Samples per metric keyed by the sweep index of the schedule."""
    schedule: Schedule
    metrics: Metrics

    def __init__(self, schedule: Schedule):
        self.schedule = schedule
        self.metrics = Metrics({})

    def log(self, metric: Metric, sample: float = 1.0) -> None:
        self.metrics.setdefault(metric, {}).setdefault(self.schedule.time, []).append(float(sample))

    def timeseries(self, metric: Metric, aggregator: MetricsAggregator) -> List[float]:
        return make_timeseries(self.metrics, metric, aggregator, self.schedule.periods)

    def to_record(self, aggregators: Optional[Dict[Metric, MetricsAggregator]] = None) -> dict:
        """Per-sweep aggregates of every logged metric keyed by metric name, averages unless given."""
        aggregators = aggregators or {}
        return {
            metric.value: self.timeseries(metric, aggregators.get(metric, MetricsAggregatorAvg()))
            for metric in self.metrics
        }
