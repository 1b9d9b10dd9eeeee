"""
Backward solution of the Parisi PDE

    d_t Psi = -xi''(t)/2 (d_xx Psi + eta(t) (d_x Psi)^2),    Psi(1, x) = f(x),

for a step coefficient eta. On an interval where eta = v is constant the Cole-Hopf
transform linearizes the equation, so one slab is a single Gaussian convolution with
variance xi'(t_{j+1}) - xi'(t_j):

    Psi(t_j, x) = (1/v) log E exp(v Psi(t_{j+1}, x + sigma Z))      (v > 0)
    Psi(t_j, x) = E Psi(t_{j+1}, x + sigma Z)                        (v = 0)

and d_x Psi is carried along as the exponentially tilted average of d_x Psi.
The slab touching t = 1 is evaluated against the boundary in closed form where
possible. Later slabs use Gauss-Hermite quadrature on interpolated levels.

Both boundaries in use (|x| and log cosh(beta x) / beta) are even, so every level is
computed on x >= 0 and mirrored.
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.special import log_ndtr, logsumexp, ndtr, softmax

from gse.constants import (
    BETA_SIGMA_LOCAL,
    LOCAL_PANEL_NODES,
    LOCAL_PANELS,
    LOCAL_U_MAX,
    LOG2,
    MIN_X_MAX_SIGMAS,
    N_X,
    NODE_WEIGHT_CUTOFF,
    QUAD_NODES,
    SQRT_2PI,
    X_MAX_SIGMAS,
)
from gse.errors import GridTooSmallError, OrderParamError, UnknownSlabTimeError
from gse.model import MixingFunction, xi_prime, xi_second
from gse.order_param import DiscreteCDF, StepOrderParam, l1_distance
from gse.types import BoundaryKind


# Stored times closer than this are the same level.
TIME_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SpaceGrid:
    """
    - x_max: nodes are uniform on [-x_max, x_max].
    - n_x: odd node count, so that x = 0 is a node.
    - quad_nodes: Gauss-Hermite order.
    - margin: off-grid extension allowed up to x_max + margin (defaults to x_max).
    """
    x_max: float
    n_x: int = N_X
    quad_nodes: int = QUAD_NODES
    margin: Optional[float] = None

    def __post_init__(self):
        if self.n_x < 3 or self.n_x % 2 == 0:
            raise GridTooSmallError(f"n_x must be odd and >= 3, got {self.n_x}")
        if self.quad_nodes < 8:
            raise GridTooSmallError(f"quad_nodes must be >= 8, got {self.quad_nodes}")
        if not self.x_max > 0.0:
            raise GridTooSmallError(f"x_max must be positive, got {self.x_max}")

    @classmethod
    def default_for(cls, m: MixingFunction, n_x: int = N_X, quad_nodes: int = QUAD_NODES) -> "SpaceGrid":
        x_max = abs(m.h) + X_MAX_SIGMAS * math.sqrt(xi_prime(m, 1.0))
        return cls(x_max=x_max, n_x=n_x, quad_nodes=quad_nodes)

    @property
    def spacing(self) -> float:
        return 2.0 * self.x_max / (self.n_x - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.x_max, self.x_max, self.n_x)

    @property
    def half_nodes(self) -> np.ndarray:
        return self.nodes[self.n_x // 2:]

    @property
    def reach(self) -> float:
        return self.x_max + (self.x_max if self.margin is None else self.margin)

    def refined(self) -> "SpaceGrid":
        return SpaceGrid(
            x_max=self.x_max,
            n_x=2 * self.n_x - 1,
            quad_nodes=2 * self.quad_nodes,
            margin=self.margin,
        )

    def check(self, m: MixingFunction) -> None:
        required = abs(m.h) + MIN_X_MAX_SIGMAS * math.sqrt(xi_prime(m, 1.0))
        if not self.x_max > required:
            raise GridTooSmallError(
                f"x_max={self.x_max} must exceed |h| + {MIN_X_MAX_SIGMAS} sqrt(xi'(1)) = {required}"
            )

    def to_record(self) -> dict:
        return {
            "x_max": self.x_max,
            "n_x": self.n_x,
            "quad_nodes": self.quad_nodes,
            "margin": self.margin,
        }


@lru_cache(maxsize=16)
def _hermite_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights with E g(Z) ~ sum w_i g(z_i)."""
    z, w = hermegauss(n)
    return z, w / SQRT_2PI


@lru_cache(maxsize=1)
def _local_rule() -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [0, LOCAL_U_MAX]."""
    y, w = leggauss(LOCAL_PANEL_NODES)
    width = LOCAL_U_MAX / LOCAL_PANELS
    u = np.concatenate([(j + 0.5 * (y + 1.0)) * width for j in range(LOCAL_PANELS)])
    weights = np.tile(0.5 * width * w, LOCAL_PANELS)
    return u, weights


def mean_abs_gaussian(x, a: float):
    """E|x + aZ| = x (2 Phi(x/a) - 1) + 2 a phi(x/a)."""
    x = np.asarray(x, dtype=float)
    r = x / a
    return x * (2.0 * ndtr(r) - 1.0) + 2.0 * a * np.exp(-0.5 * r * r) / SQRT_2PI


def _log_normal_density(y, sigma: float):
    return -0.5 * (y / sigma) ** 2 - math.log(sigma * SQRT_2PI)


class Boundary:
    kind: BoundaryKind

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def terminal(self, x: np.ndarray, v: float, variance: float, quad_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        One slab against the boundary: returns (Psi, d_x Psi) at x after a Gaussian
        convolution of the given variance with tilt v.
        """
        raise NotImplementedError

    def to_record(self) -> dict:
        raise NotImplementedError


class AbsBoundary(Boundary):
    """Zero temperature: Psi(1, x) = |x|, d_x Psi(1, x) = sign(x) with sign(0) = 0."""
    kind = BoundaryKind.ZERO_TEMPERATURE

    def value(self, x):
        return np.abs(x)

    def derivative(self, x):
        return np.sign(x)

    def terminal(self, x, v, variance, quad_nodes):
        if variance <= 0.0:
            return self.value(x), self.derivative(x)
        sigma = math.sqrt(variance)
        if v == 0.0:
            return mean_abs_gaussian(x, sigma), 2.0 * ndtr(x / sigma) - 1.0

        log_plus, log_minus = _tilted_abs_logs(x, v, sigma)
        psi = 0.5 * v * variance + np.logaddexp(log_plus, log_minus) / v
        dpsi = np.tanh(0.5 * (log_plus - log_minus))
        return psi, dpsi

    def to_record(self):
        return {"kind": self.kind.value}


def _tilted_abs_logs(x, v: float, sigma: float):
    """
    log of e^{vx} Phi((x + v sigma^2)/sigma) and e^{-vx} Phi((v sigma^2 - x)/sigma), whose
    sum times e^{v^2 sigma^2 / 2} is E exp(v |x + sigma Z|).
    """
    shift = v * sigma
    log_plus = v * x + log_ndtr(x / sigma + shift)
    log_minus = -v * x + log_ndtr(shift - x / sigma)
    return log_plus, log_minus


@dataclass(frozen=True)
class LogCoshBoundary(Boundary):
    """Finite temperature: Psi(1, x) = log cosh(beta x) / beta."""
    beta: float
    kind = BoundaryKind.FINITE_BETA

    def value(self, x):
        a = np.abs(self.beta * np.asarray(x, dtype=float))
        return (a + np.log1p(np.exp(-2.0 * a)) - LOG2) / self.beta

    def derivative(self, x):
        return np.tanh(self.beta * np.asarray(x, dtype=float))

    def terminal(self, x, v, variance, quad_nodes):
        if variance <= 0.0:
            return self.value(x), self.derivative(x)
        sigma = math.sqrt(variance)
        rho = v / self.beta
        if abs(rho - 1.0) <= 1e-12:
            # E cosh(beta (x + sigma Z)) = cosh(beta x) exp(beta^2 sigma^2 / 2)
            return self.value(x) + 0.5 * self.beta * variance, self.derivative(x)
        if self.beta * sigma < BETA_SIGMA_LOCAL:
            return _tilted_average(self.value, self.derivative, x, v, sigma, quad_nodes, reach=None)
        return self._split_terminal(x, v, sigma, rho)

    def _split_terminal(self, x, v, sigma, rho):
        """
        cosh(beta y)^rho = 2^-rho e^{v|y|} (1 + e^{-2 beta |y|})^rho: the |y| part is done in
        closed form and the remainder, concentrated within a few 1/beta of y = 0, by
        quadrature in u = beta |y|.
        """
        beta = self.beta
        u, w = _local_rule()
        xs = x[:, None]
        log_right = _log_normal_density(u[None, :] / beta - xs, sigma)
        log_left = _log_normal_density(u[None, :] / beta + xs, sigma)
        decay = np.log1p(np.exp(-2.0 * u))

        if v == 0.0:
            base = mean_abs_gaussian(x, sigma)
            local = (np.exp(log_right) + np.exp(log_left)) @ (w * decay) / beta ** 2
            psi = base - LOG2 / beta + local
            tilt = np.tanh(u) - 1.0
            dlocal = (np.exp(log_right) - np.exp(log_left)) @ (w * tilt) / beta
            return psi, 2.0 * ndtr(x / sigma) - 1.0 + dlocal

        log_plus, log_minus = _tilted_abs_logs(x, v, sigma)
        log_base = 0.5 * v * v * sigma * sigma + np.logaddexp(log_plus, log_minus)
        kernel = np.expm1(rho * decay)
        # (1 + e^{-2u})^{rho - 1} (1 - e^{-2u}) - 1
        dkernel = np.exp((rho - 1.0) * decay) * (-np.expm1(-2.0 * u)) - 1.0
        scale = (rho * u)[None, :] - log_base[:, None]
        right = np.exp(log_right + scale)
        left = np.exp(log_left + scale)
        ratio = (right + left) @ (w * kernel) / beta
        dratio = (right - left) @ (w * dkernel) / beta

        psi = (log_base + np.log1p(ratio)) / v - LOG2 / beta
        dpsi = (np.tanh(0.5 * (log_plus - log_minus)) + dratio) / (1.0 + ratio)
        return psi, np.clip(dpsi, -1.0, 1.0)

    def to_record(self):
        return {"kind": self.kind.value, "beta": self.beta}


def _tilted_average(psi_fn, dpsi_fn, x, v, sigma, quad_nodes, reach):
    """
    (1/v) log E exp(v Psi(x + sigma Z)) and the tilted mean of d_x Psi, by Gauss-Hermite.
    """
    z, w = _hermite_rule(quad_nodes)
    nodes = x[:, None] + sigma * z[None, :]
    if reach is not None:
        heavy = w > NODE_WEIGHT_CUTOFF
        furthest = float(np.max(np.abs(nodes[:, heavy])))
        if furthest > reach:
            raise GridTooSmallError(
                f"quadrature nodes reach |x|={furthest:.4g} beyond x_max + margin = {reach:.4g}"
            )
    values = psi_fn(nodes)
    slopes = dpsi_fn(nodes)
    if v == 0.0:
        return values @ w, slopes @ w
    exponents = v * values + np.log(w)[None, :]
    psi = logsumexp(exponents, axis=1) / v
    dpsi = np.sum(softmax(exponents, axis=1) * slopes, axis=1)
    return psi, dpsi


class _Level:
    """Interpolant of one stored time level with linear-growth extension off grid."""

    def __init__(self, nodes: np.ndarray, psi: np.ndarray, dpsi: np.ndarray):
        self.x_max = nodes[-1]
        self.psi_edge = psi[-1]
        self._psi = CubicHermiteSpline(nodes, psi, dpsi, extrapolate=False)
        self._dpsi = PchipInterpolator(nodes, dpsi, extrapolate=False)

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        inside = self._psi(np.clip(x, -self.x_max, self.x_max))
        return np.where(a > self.x_max, self.psi_edge + (a - self.x_max), inside)

    def dpsi(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.clip(self._dpsi(np.clip(x, -self.x_max, self.x_max)), -1.0, 1.0)
        return np.where(np.abs(x) > self.x_max, np.sign(x), inside)


@dataclass
class PdeSolution:
    """
    Psi and d_x Psi on the grid at every stored time: the slab boundaries of eta, any
    extra levels requested, and t = 1.
    """
    model: MixingFunction
    eta: StepOrderParam
    boundary: Boundary
    grid: SpaceGrid
    times: Tuple[float, ...]
    psi: Dict[float, np.ndarray]
    dpsi: Dict[float, np.ndarray]
    _levels: Dict[float, _Level] = field(default_factory=dict, repr=False)

    def level_time(self, t: float) -> float:
        times = np.asarray(self.times)
        index = int(np.argmin(np.abs(times - t)))
        if abs(times[index] - t) > TIME_TOLERANCE:
            raise UnknownSlabTimeError(f"no stored level at t={t}")
        return self.times[index]

    def level(self, t: float) -> _Level:
        t = self.level_time(t)
        if t not in self._levels:
            self._levels[t] = _Level(self.grid.nodes, self.psi[t], self.dpsi[t])
        return self._levels[t]

    def header(self) -> dict:
        return {
            "model": {"coeffs": [list(pair) for pair in self.model.coeffs], "h": self.model.h},
            "eta": self.eta.to_pairs(),
            "boundary": self.boundary.to_record(),
            "grid": self.grid.to_record(),
            "times": list(self.times),
        }


def _mirror_even(half: np.ndarray) -> np.ndarray:
    return np.concatenate([half[:0:-1], half])


def _mirror_odd(half: np.ndarray) -> np.ndarray:
    return np.concatenate([-half[:0:-1], half])


def _solve(
    m: MixingFunction,
    eta: StepOrderParam,
    boundary: Boundary,
    g: SpaceGrid,
    times: Iterable[float] = (),
) -> PdeSolution:
    g.check(m)
    half = g.half_nodes
    knots = eta.knots
    extra = sorted(
        {float(t) for t in times if 0.0 <= t < 1.0}
        - set(knots),
    )
    extra = [t for t in extra if min(abs(t - k) for k in knots) > TIME_TOLERANCE]

    psi = {1.0: boundary.value(g.nodes)}
    dpsi = {1.0: boundary.derivative(g.nodes)}
    source = None

    for j in reversed(range(len(eta.values))):
        t_lo, t_hi = knots[j], knots[j + 1]
        v = eta.values[j]
        targets = [t for t in reversed(extra) if t_lo < t < t_hi] + [t_lo]
        xi_hi = xi_prime(m, t_hi)
        for t in targets:
            variance = max(xi_hi - xi_prime(m, t), 0.0)
            if t_hi == 1.0:
                level_psi, level_dpsi = boundary.terminal(half, v, variance, g.quad_nodes)
            else:
                level_psi, level_dpsi = _tilted_average(
                    source.psi, source.dpsi, half, v, math.sqrt(variance), g.quad_nodes, g.reach
                )
            level_dpsi = np.clip(level_dpsi, -1.0, 1.0)
            level_dpsi[0] = 0.0
            psi[t] = _mirror_even(level_psi)
            dpsi[t] = _mirror_odd(level_dpsi)
            logging.debug(f"Slab\t => t={t:.6g} eta={v:.6g} variance={variance:.6g}")
        source = _Level(g.nodes, psi[t_lo], dpsi[t_lo])

    return PdeSolution(
        model=m,
        eta=eta,
        boundary=boundary,
        grid=g,
        times=tuple(sorted(psi)),
        psi=psi,
        dpsi=dpsi,
    )


def solve_zero_t(
    m: MixingFunction,
    gamma: StepOrderParam,
    g: SpaceGrid,
    times: Iterable[float] = (),
) -> PdeSolution:
    """Psi_gamma with boundary |x|; eta = gamma."""
    return _solve(m, gamma, AbsBoundary(), g, times)


def solve_finite_beta(
    m: MixingFunction,
    alpha: DiscreteCDF,
    beta: float,
    g: SpaceGrid,
    times: Iterable[float] = (),
) -> PdeSolution:
    """Psi_{alpha,beta} with boundary log cosh(beta x) / beta; eta = beta alpha."""
    if not beta > 0.0:
        raise OrderParamError(f"beta must be positive, got {beta}")
    return _solve(m, alpha.as_step().scaled(beta), LogCoshBoundary(beta), g, times)


def with_times(sol: PdeSolution, times: Iterable[float]) -> PdeSolution:
    """Re-solve with additional stored levels."""
    times = set(times) | set(sol.times)
    return _solve(sol.model, sol.eta, sol.boundary, sol.grid, times)


def evaluate(sol: PdeSolution, t: float, x) -> Tuple[np.ndarray, np.ndarray]:
    """(Psi(t, x), d_x Psi(t, x)) at a stored time; exact boundary at t = 1."""
    t = sol.level_time(t)
    if t == 1.0:
        return sol.boundary.value(x), sol.boundary.derivative(x)
    level = sol.level(t)
    return level.psi(x), level.dpsi(x)


@dataclass(frozen=True)
class LipschitzReport:
    gap: float
    bound: float
    distance: float
    tolerance: float
    ok: bool


def lipschitz_check(
    m: MixingFunction,
    gamma: StepOrderParam,
    other: StepOrderParam,
    g: SpaceGrid,
    tolerance: float = 1e-6,
) -> LipschitzReport:
    """
    sup_x |Psi_gamma(0, x) - Psi_other(0, x)| against 2 xi''(1) d(gamma, other).
    """
    first = solve_zero_t(m, gamma, g)
    second = solve_zero_t(m, other, g)
    gap = float(np.max(np.abs(first.psi[0.0] - second.psi[0.0])))
    distance = l1_distance(gamma, other)
    bound = 2.0 * xi_second(m, 1.0) * distance
    ok = gap <= bound + tolerance
    if not ok:
        logging.warning(f"LipschitzViolation\t => gap={gap:.3e} bound={bound:.3e}")
    return LipschitzReport(gap=gap, bound=bound, distance=distance, tolerance=tolerance, ok=ok)


def write_solution(sol: PdeSolution, directory: str) -> None:
    """JSON header plus one CSV (x, psi, dpsi) per stored level."""
    os.makedirs(directory, exist_ok=True)
    header = sol.header()
    header["files"] = {}
    for index, t in enumerate(sol.times):
        name = f"level_{index:04d}.csv"
        header["files"][name] = t
        table = np.column_stack([sol.grid.nodes, sol.psi[t], sol.dpsi[t]])
        np.savetxt(os.path.join(directory, name), table, delimiter=",", header="x,psi,dpsi", comments="")
    with open(os.path.join(directory, "solution.json"), "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
