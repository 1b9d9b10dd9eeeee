import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Sequence, Tuple

import numpy as np

from gse.constants import LOG2
from gse.errors import DomainError, OrderParamError
from gse.model import MixingFunction, xi, xi_prime


# Masses below this are treated as absent atoms.
MASS_EPSILON = 1e-15


@dataclass(frozen=True)
class StepOrderParam:
    """
    Right-continuous nonnegative nondecreasing step function on [0, 1).

    gamma(s) = values[j] on [breakpoints[j], breakpoints[j + 1]) with breakpoints[0] = 0
    and an implicit closing breakpoint at 1. Adjacent equal values are merged so that
    equal functions have equal representations.
    """
    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        breakpoints = [float(t) for t in self.breakpoints]
        values = [float(v) for v in self.values]

        if len(breakpoints) == 0 or len(breakpoints) != len(values):
            raise OrderParamError(
                f"need one value per breakpoint, got {len(breakpoints)} breakpoints and {len(values)} values"
            )
        if breakpoints[0] != 0.0:
            raise OrderParamError(f"breakpoints[0] must be 0, got {breakpoints[0]}")
        for j in range(1, len(breakpoints)):
            if not breakpoints[j - 1] < breakpoints[j] < 1.0:
                raise OrderParamError(
                    f"breakpoints must increase strictly inside [0, 1): breakpoints[{j}]={breakpoints[j]}"
                )
        for j, v in enumerate(values):
            if not (math.isfinite(v) and v >= 0.0):
                raise OrderParamError(f"values must be finite and nonnegative: values[{j}]={v}")
            if j > 0 and v < values[j - 1]:
                raise OrderParamError(
                    f"values must be nondecreasing: values[{j}]={v} < values[{j - 1}]={values[j - 1]}"
                )

        merged_t, merged_v = [breakpoints[0]], [values[0]]
        for t, v in zip(breakpoints[1:], values[1:]):
            if v != merged_v[-1]:
                merged_t.append(t)
                merged_v.append(v)

        object.__setattr__(self, "breakpoints", tuple(merged_t))
        object.__setattr__(self, "values", tuple(merged_v))

    @classmethod
    def constant(cls, value: float) -> "StepOrderParam":
        return cls(breakpoints=(0.0,), values=(value,))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "StepOrderParam":
        pairs = [tuple(pair) for pair in pairs]
        return cls(
            breakpoints=tuple(t for t, _ in pairs),
            values=tuple(v for _, v in pairs),
        )

    def to_pairs(self) -> List[List[float]]:
        return [[t, v] for t, v in zip(self.breakpoints, self.values)]

    @property
    def knots(self) -> Tuple[float, ...]:
        return self.breakpoints + (1.0,)

    @property
    def num_steps(self) -> int:
        """Number of jumps."""
        return len(self.values) - 1

    @property
    def sup(self) -> float:
        """gamma(1-)."""
        return self.values[-1]

    def scaled(self, factor: float) -> "StepOrderParam":
        return StepOrderParam(
            breakpoints=self.breakpoints,
            values=tuple(factor * v for v in self.values),
        )

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        index = np.searchsorted(np.asarray(self.breakpoints), s, side="right") - 1
        result = np.asarray(self.values)[np.clip(index, 0, len(self.values) - 1)]
        return float(result) if result.ndim == 0 else result


@dataclass(frozen=True)
class DiscreteCDF:
    """
    Probability distribution function on [0, 1] with finitely many atoms.
    alpha(t) is the cumulative mass of atoms <= t.
    """
    atoms: Tuple[float, ...]
    masses: Tuple[float, ...]

    def __post_init__(self):
        pairs = [(float(q), float(w)) for q, w in zip(self.atoms, self.masses)]
        if len(self.atoms) != len(self.masses):
            raise OrderParamError("need one mass per atom")
        for j, (q, w) in enumerate(pairs):
            if not 0.0 <= q <= 1.0:
                raise OrderParamError(f"atoms must lie in [0, 1]: atoms[{j}]={q}")
            if not (math.isfinite(w) and w >= 0.0):
                raise OrderParamError(f"masses must be nonnegative: masses[{j}]={w}")
            if j > 0 and q <= pairs[j - 1][0]:
                raise OrderParamError(f"atoms must increase strictly: atoms[{j}]={q}")
        pairs = [(q, w) for q, w in pairs if w > MASS_EPSILON]
        total = sum(w for _, w in pairs)
        if abs(total - 1.0) > 1e-9:
            raise OrderParamError(f"masses must sum to 1, got {total}")

        object.__setattr__(self, "atoms", tuple(q for q, _ in pairs))
        object.__setattr__(self, "masses", tuple(w / total for _, w in pairs))

    @classmethod
    def dirac(cls, q: float) -> "DiscreteCDF":
        return cls(atoms=(q,), masses=(1.0,))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "DiscreteCDF":
        pairs = [tuple(pair) for pair in pairs]
        return cls(atoms=tuple(q for q, _ in pairs), masses=tuple(w for _, w in pairs))

    def to_pairs(self) -> List[List[float]]:
        return [[q, w] for q, w in zip(self.atoms, self.masses)]

    @property
    def q_max(self) -> float:
        """Smallest atom at which alpha reaches 1."""
        cumulative = np.cumsum(self.masses)
        index = int(np.argmax(cumulative >= 1.0 - 1e-12))
        return self.atoms[index]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        cumulative = np.concatenate([[0.0], np.cumsum(self.masses)])
        index = np.searchsorted(np.asarray(self.atoms), t, side="right")
        result = np.minimum(cumulative[index], 1.0)
        return float(result) if result.ndim == 0 else result

    def as_step(self) -> StepOrderParam:
        """alpha restricted to [0, 1)."""
        inner = [q for q in self.atoms if 0.0 < q < 1.0]
        breakpoints = [0.0] + inner
        values = [min(float(self(t)), 1.0) for t in breakpoints]
        # Guard against cumulative sums that lose monotonicity in the last ulp.
        values = list(np.maximum.accumulate(values))
        return StepOrderParam(breakpoints=tuple(breakpoints), values=tuple(values))


def l1_distance(gamma: StepOrderParam, other: StepOrderParam, upper: float = 1.0) -> float:
    """
    Integral of |gamma - other| over [0, upper], exact on the merged partition.
    """
    cuts = np.union1d(gamma.breakpoints, other.breakpoints)
    cuts = np.append(cuts[cuts < upper], upper)
    left = cuts[:-1]
    lengths = np.diff(cuts)
    return float(np.sum(np.abs(gamma(left) - other(left)) * lengths))


def truncate(gamma: StepOrderParam, n: float) -> StepOrderParam:
    if n < 0.0:
        raise OrderParamError(f"truncation level must be nonnegative, got {n}")
    return StepOrderParam(
        breakpoints=gamma.breakpoints,
        values=tuple(min(v, n) for v in gamma.values),
    )


def embed_finite_beta(gamma: StepOrderParam, beta: float) -> DiscreteCDF:
    """
    alpha_beta = gamma / beta on [0, 1) with the remaining mass placed at 1.
    """
    if not beta > gamma.sup:
        raise OrderParamError(f"beta must exceed gamma(1-)={gamma.sup}, got beta={beta}")

    atoms, masses = [], []
    previous = 0.0
    for t, v in zip(gamma.breakpoints, gamma.values):
        if v > previous:
            atoms.append(t)
            masses.append((v - previous) / beta)
        previous = v
    if 1.0 - previous / beta > 0.0:
        atoms.append(1.0)
        masses.append(1.0 - previous / beta)

    return DiscreteCDF(atoms=tuple(atoms), masses=tuple(masses))


def minimizer_envelope(m: MixingFunction, s: float) -> float:
    """
    Upper bound sqrt(2 xi'(1) log 2) / (xi(1) - xi(s)) on beta * alpha_{P,beta}(s).
    """
    if s >= 1.0:
        return math.inf
    if s < 0.0:
        raise DomainError(f"argument must lie in [0, 1), got {s}")
    denominator = xi(m, 1.0) - xi(m, s)
    if denominator <= 0.0:
        return math.inf
    return math.sqrt(2.0 * xi_prime(m, 1.0) * LOG2) / denominator


def discretize(f: Callable[[float], float], n_steps: int) -> StepOrderParam:
    """
    Step approximation of a nondecreasing gamma by its left-endpoint values on a
    uniform partition of [0, 1) into n_steps + 1 intervals.
    """
    breakpoints = np.linspace(0.0, 1.0, n_steps + 2)[:-1]
    values = np.maximum.accumulate([max(float(f(t)), 0.0) for t in breakpoints])
    return StepOrderParam(breakpoints=tuple(breakpoints), values=tuple(values))


def split_longest(gamma: StepOrderParam, k: int) -> Tuple[List[float], List[float]]:
    """
    Raw (breakpoints, values) for gamma with exactly k jumps, splitting the longest
    interval at its midpoint while fewer jumps are present. Equal values are allowed.
    """
    breakpoints = list(gamma.breakpoints)
    values = list(gamma.values)
    assert len(breakpoints) - 1 <= k, f"gamma already has more than {k} jumps"

    while len(breakpoints) - 1 < k:
        knots = breakpoints + [1.0]
        lengths = np.diff(knots)
        j = int(np.argmax(lengths))
        breakpoints.insert(j + 1, knots[j] + lengths[j] / 2.0)
        values.insert(j + 1, values[j])

    return breakpoints, values


def correction_antiderivative(m: MixingFunction, t) -> np.ndarray:
    """A(t) = t xi'(t) - xi(t), so that A'(t) = t xi''(t)."""
    t = np.asarray(t, dtype=float)
    return t * xi_prime(m, t) - xi(m, t)
