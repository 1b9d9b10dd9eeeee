import math


class Schedule:
    """
    Sweep counter for annealing with a geometric inverse-temperature ramp from
    beta_start at sweep 0 to beta_end at the last sweep.
    """
    _time: int = 0
    _periods: int

    def __init__(self, periods: int, beta_start: float, beta_end: float):
        assert periods >= 1, f"periods must be >= 1, got {periods}"
        assert 0.0 < beta_start <= beta_end, f"need 0 < beta_start <= beta_end, got {beta_start}, {beta_end}"
        self._periods = periods
        self.beta_start = beta_start
        self.beta_end = beta_end

    def step(self) -> bool:
        self._time += 1
        return self._time < self._periods

    def reset(self) -> None:
        self._time = 0

    @property
    def time(self) -> int:
        return self._time

    @property
    def periods(self) -> int:
        return self._periods

    @property
    def beta(self) -> float:
        if self._periods == 1:
            return self.beta_end
        fraction = self._time / (self._periods - 1)
        return self.beta_start * math.exp(fraction * math.log(self.beta_end / self.beta_start))
