from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from gse.constants import MAX_TENSOR_ENTRIES
from gse.errors import BudgetExceededError
from gse.model import MixingFunction
from gse.types import Seed


# Largest intermediate array (entries) of a batched contraction.
CONTRACTION_ENTRIES = 1 << 24


@dataclass(frozen=True)
class ReducedForm:
    """
    H(sigma) = const + f . sigma + 1/2 sigma Q sigma + 1/6 sum K sigma sigma sigma, with Q and K
    symmetric and zero on repeated indices. K is a (1, 1, 1) placeholder when cubic is False.
    """
    const: float
    f: np.ndarray
    q: np.ndarray
    kt: np.ndarray
    cubic: bool

    def caches(self, sigma: np.ndarray):
        """(energy, Q sigma, P) at sigma with P_ij = sum_c K_ijc sigma_c."""
        q_sigma = self.q @ sigma
        if self.cubic:
            p_mat = np.einsum("ijk,k->ij", self.kt, sigma)
            cubic_term = sigma @ p_mat @ sigma / 6.0
        else:
            p_mat = np.zeros((1, 1))
            cubic_term = 0.0
        energy = self.const + self.f @ sigma + 0.5 * sigma @ q_sigma + cubic_term
        return float(energy), q_sigma, p_mat


@dataclass
class DisorderSample:
    """
    One realization of H_N(sigma) = sum_p c_p N^{-(p-1)/2} sum g_{i_1..i_p} sigma_{i_1}..sigma_{i_p} + h sum sigma_i.
    Couplings are kept as drawn, one (N,)*p tensor of standard Gaussians per active p.
    """
    model: MixingFunction
    n: int
    couplings: Dict[int, np.ndarray]
    seed: Optional[Seed] = None
    _reduced: Optional[ReducedForm] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        assert self.n >= 1, f"N must be >= 1, got {self.n}"
        for p in self.model.degrees:
            tensor = self.couplings[p]
            assert tensor.shape == (self.n,) * p, f"p={p} tensor has shape {tensor.shape}"

    @classmethod
    def from_couplings(cls, m: MixingFunction, couplings: Dict[int, np.ndarray]) -> "DisorderSample":
        couplings = {p: np.asarray(g, dtype=float) for p, g in couplings.items()}
        n = next(iter(couplings.values())).shape[0]
        return cls(model=m, n=n, couplings=couplings)

    @property
    def symmetric(self) -> bool:
        """H(-sigma) = H(sigma)."""
        return self.model.h == 0.0 and all(p % 2 == 0 for p in self.model.degrees)

    def scaled(self, p: int) -> np.ndarray:
        c = dict(self.model.coeffs)[p]
        return c * self.n ** (-(p - 1) / 2.0) * self.couplings[p]

    def gaussian_part(self, spins: np.ndarray) -> np.ndarray:
        """X_N for a batch of configurations of shape (B, N)."""
        spins = np.atleast_2d(np.asarray(spins, dtype=float))
        total = np.zeros(spins.shape[0])
        for p in self.model.degrees:
            tensor = self.scaled(p)
            chunk = max(1, CONTRACTION_ENTRIES // self.n ** (p - 1))
            for start in range(0, spins.shape[0], chunk):
                block = spins[start:start + chunk]
                partial = np.tensordot(block, tensor, axes=([1], [p - 1]))
                for _ in range(p - 1):
                    partial = np.einsum("b...i,bi->b...", partial, block)
                total[start:start + chunk] += partial
        return total

    def energies(self, spins: np.ndarray) -> np.ndarray:
        """H_N for a batch of configurations of shape (B, N)."""
        spins = np.atleast_2d(np.asarray(spins, dtype=float))
        return self.gaussian_part(spins) + self.model.h * spins.sum(axis=1)

    def energy(self, sigma: np.ndarray) -> float:
        return float(self.energies(sigma[None, :])[0])

    def reduced(self) -> Optional[ReducedForm]:
        """Multilinear form for p in {2, 3}; None when a higher degree is active."""
        if any(p > 3 for p in self.model.degrees):
            return None
        if self._reduced is not None:
            return self._reduced

        n = self.n
        const = 0.0
        f = np.full(n, self.model.h)
        q = np.zeros((n, n))
        kt = np.zeros((1, 1, 1))
        cubic = 3 in self.model.degrees

        if 2 in self.model.degrees:
            w = self.scaled(2)
            const += float(np.trace(w))
            q = w + w.T
            np.fill_diagonal(q, 0.0)
        if cubic:
            t = self.scaled(3)
            diagonal = np.einsum("iii->i", t)
            f = f + np.einsum("iim->m", t) + np.einsum("imi->m", t) + np.einsum("mii->m", t) - 2.0 * diagonal
            kt = sum(t.transpose(perm) for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)))
            index = np.arange(n)
            kt[index, index, :] = 0.0
            kt[index, :, index] = 0.0
            kt[:, index, index] = 0.0

        self._reduced = ReducedForm(const=const, f=f, q=q, kt=np.ascontiguousarray(kt), cubic=cubic)
        return self._reduced


def tensor_entries(m: MixingFunction, n: int) -> int:
    return sum(n ** p for p in m.degrees)


def sample_disorder(m: MixingFunction, n: int, seed: Seed) -> DisorderSample:
    """Gaussian tensors drawn in increasing p from a Philox stream keyed by the seed."""
    assert n >= 1, f"N must be >= 1, got {n}"
    entries = tensor_entries(m, n)
    if entries > MAX_TENSOR_ENTRIES:
        raise BudgetExceededError(f"N={n} needs {entries} coupling entries, budget is {MAX_TENSOR_ENTRIES}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    couplings = {p: rng.standard_normal((n,) * p) for p in m.degrees}
    return DisorderSample(model=m, n=n, couplings=couplings, seed=seed)


def configurations(start: int, stop: int, n: int) -> np.ndarray:
    """Spins for codes start..stop-1; bit i set means sigma_i = -1."""
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return 1.0 - 2.0 * bits
