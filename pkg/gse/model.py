from dataclasses import dataclass, field
from typing import Iterable, Tuple, Union

import numpy as np

from gse.errors import DomainError, ModelError


ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ModelDiagnostics:
    xi_one: float
    xi_prime_one: float
    xi_second_one: float
    decay_sum: float
    degrees: Tuple[int, ...]


@dataclass(frozen=True)
class MixingFunction:
    """
    Mixed p-spin model with mixture xi(s) = sum_p c_p^2 s^p and external field h.

    - coeffs: (p, c_p) pairs; entries with c_p == 0 are dropped and the rest sorted by p.
    - h: strength of the external field.
    """
    coeffs: Tuple[Tuple[int, float], ...]
    h: float = 0.0
    _degrees: np.ndarray = field(init=False, repr=False, compare=False)
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pairs = tuple(
            sorted((int(p), float(c)) for p, c in self.coeffs if float(c) != 0.0)
        )
        object.__setattr__(self, "coeffs", pairs)
        object.__setattr__(self, "h", float(self.h))
        _check(self)
        object.__setattr__(self, "_degrees", np.array([p for p, _ in pairs], dtype=float))
        object.__setattr__(self, "_weights", np.array([c * c for _, c in pairs]))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Iterable[float]], h: float = 0.0) -> "MixingFunction":
        return cls(coeffs=tuple((int(p), float(c)) for p, c in pairs), h=h)

    @classmethod
    def sk(cls, h: float = 0.0) -> "MixingFunction":
        return cls(coeffs=((2, 1.0 / np.sqrt(2.0)),), h=h)

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(p for p, _ in self.coeffs)

    @property
    def key(self) -> str:
        terms = ",".join(f"{p}:{c!r}" for p, c in self.coeffs)
        return f"[{terms}]h={self.h!r}"

    def polynomial(self, s: ArrayLike, order: int = 0) -> ArrayLike:
        """
        d^order/ds^order of sum_p c_p^2 s^p, no domain check.
        """
        s = np.asarray(s, dtype=float)
        p = self._degrees
        factor = np.ones_like(p)
        for j in range(order):
            factor = factor * (p - j)
        powers = np.power.outer(s, p - order)
        result = powers @ (factor * self._weights)
        return float(result) if result.ndim == 0 else result


def _check(m: MixingFunction) -> None:
    if len(m.coeffs) == 0:
        raise ModelError("no nonzero coefficient")
    degrees = [p for p, _ in m.coeffs]
    for p in degrees:
        if p < 2:
            raise ModelError(f"p must be >= 2, got p={p}")
    if len(set(degrees)) != len(degrees):
        raise ModelError(f"degrees must be distinct, got {degrees}")
    if not np.isfinite(m.h):
        raise ModelError(f"external field must be finite, got h={m.h}")


def _in_unit_interval(s: ArrayLike) -> None:
    values = np.asarray(s, dtype=float)
    if np.any(values < 0.0) or np.any(values > 1.0) or np.any(np.isnan(values)):
        raise DomainError(f"argument must lie in [0, 1], got {s}")


def xi(m: MixingFunction, s: ArrayLike) -> ArrayLike:
    _in_unit_interval(s)
    return m.polynomial(s, 0)


def xi_prime(m: MixingFunction, s: ArrayLike) -> ArrayLike:
    _in_unit_interval(s)
    return m.polynomial(s, 1)


def xi_second(m: MixingFunction, s: ArrayLike) -> ArrayLike:
    _in_unit_interval(s)
    return m.polynomial(s, 2)


def overlap_covariance(m: MixingFunction, r: ArrayLike) -> ArrayLike:
    """
    E X_N(s1) X_N(s2) / N as a function of the overlap r in [-1, 1].
    """
    values = np.asarray(r, dtype=float)
    if np.any(np.abs(values) > 1.0):
        raise DomainError(f"overlap must lie in [-1, 1], got {r}")
    return m.polynomial(r, 0)


def validate(m: MixingFunction) -> ModelDiagnostics:
    _check(m)
    return ModelDiagnostics(
        xi_one=xi(m, 1.0),
        xi_prime_one=xi_prime(m, 1.0),
        xi_second_one=xi_second(m, 1.0),
        decay_sum=float(sum(2.0 ** p * c * c for p, c in m.coeffs)),
        degrees=m.degrees,
    )
