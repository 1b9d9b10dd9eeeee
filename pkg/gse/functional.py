from dataclasses import dataclass
from typing import Optional

import numpy as np

from gse.constants import LOG2
from gse.model import MixingFunction, xi
from gse.order_param import DiscreteCDF, StepOrderParam, correction_antiderivative
from gse.pde import SpaceGrid, evaluate, solve_finite_beta, solve_zero_t


@dataclass(frozen=True)
class FunctionalValue:
    """
    value = entropy + pde_value - correction, where entropy is log 2 / beta at finite
    temperature and 0 at zero temperature.
    """
    value: float
    pde_value: float
    correction: float
    entropy: float
    grid: dict
    beta: Optional[float] = None

    def to_record(self) -> dict:
        return {
            "value": self.value,
            "pde_value": self.pde_value,
            "correction": self.correction,
            "entropy": self.entropy,
            "grid": self.grid,
            "beta": self.beta,
        }


def correction_integral(m: MixingFunction, gamma: StepOrderParam) -> float:
    """(1/2) int_0^1 t xi''(t) gamma(t) dt, exact on each step."""
    antiderivative = correction_antiderivative(m, np.asarray(gamma.knots))
    return float(0.5 * np.dot(gamma.values, np.diff(antiderivative)))


def parisi_zero_t(m: MixingFunction, gamma: StepOrderParam, g: SpaceGrid) -> FunctionalValue:
    sol = solve_zero_t(m, gamma, g)
    pde_value = float(evaluate(sol, 0.0, m.h)[0])
    correction = correction_integral(m, gamma)
    return FunctionalValue(
        value=pde_value - correction,
        pde_value=pde_value,
        correction=correction,
        entropy=0.0,
        grid=g.to_record(),
    )


def parisi_finite_beta(m: MixingFunction, alpha: DiscreteCDF, beta: float, g: SpaceGrid) -> FunctionalValue:
    sol = solve_finite_beta(m, alpha, beta, g)
    pde_value = float(evaluate(sol, 0.0, m.h)[0])
    correction = correction_integral(m, sol.eta)
    entropy = LOG2 / beta
    return FunctionalValue(
        value=entropy + pde_value - correction,
        pde_value=pde_value,
        correction=correction,
        entropy=entropy,
        grid=g.to_record(),
        beta=beta,
    )


def replica_symmetric_high_temperature(m: MixingFunction, beta: float) -> float:
    """
    P_beta(delta_0) in closed form. With beta alpha = beta on [0, 1) the PDE solution is
    log cosh(beta x) / beta + (beta/2) xi'(1) at t = 0, and the correction integral is
    (beta/2)(xi'(1) - xi(1)), leaving log 2 / beta + log cosh(beta h) / beta + (beta/2) xi(1).
    """
    a = abs(beta * m.h)
    log_cosh = a + np.log1p(np.exp(-2.0 * a)) - LOG2
    return float(LOG2 / beta + log_cosh / beta + 0.5 * beta * xi(m, 1.0))
