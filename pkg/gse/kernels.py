"""
Compiled inner loops over spin configurations for Hamiltonians of the reduced form

    H(sigma) = const + f . sigma + 1/2 sigma Q sigma + 1/6 sum_ijk K_ijk sigma_i sigma_j sigma_k

with Q and K symmetric and vanishing on repeated indices, so H is multilinear and
flipping spin k changes it by -2 sigma_k * field_k where

    field_k = f_k + (Q sigma)_k + 1/2 (P sigma)_k,    P_ij = sum_c K_ijc sigma_c.

The caches q_sigma = Q sigma and P are updated in place on every flip.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def local_field(k, sigma, f, q_sigma, p_mat, cubic):
    value = f[k] + q_sigma[k]
    if cubic:
        acc = 0.0
        for j in range(sigma.shape[0]):
            acc += p_mat[k, j] * sigma[j]
        value += 0.5 * acc
    return value


@njit(cache=True)
def flip(k, sigma, q, kt, q_sigma, p_mat, cubic):
    s = sigma[k]
    n = sigma.shape[0]
    for i in range(n):
        q_sigma[i] -= 2.0 * s * q[i, k]
    if cubic:
        for i in range(n):
            for j in range(n):
                p_mat[i, j] -= 2.0 * s * kt[i, j, k]
    sigma[k] = -s


@njit(cache=True)
def gray_code_scan(sigma, energy, f, q, kt, q_sigma, p_mat, cubic, n_free, beta):
    """
    Visit all 2^n_free settings of the first n_free spins in Gray-code order starting
    from `sigma`. Returns (max energy, Gray code of the maximizer, log sum exp(beta (E - max))).
    The last quantity is 0 when beta is 0.
    """
    best = energy
    best_code = 0
    code = 0
    log_max = beta * energy
    acc = 1.0
    total = 1 << n_free
    for c in range(1, total):
        k = 0
        while ((c >> k) & 1) == 0:
            k += 1
        field = local_field(k, sigma, f, q_sigma, p_mat, cubic)
        energy -= 2.0 * sigma[k] * field
        flip(k, sigma, q, kt, q_sigma, p_mat, cubic)
        code ^= 1 << k
        if energy > best:
            best = energy
            best_code = code
        if beta > 0.0:
            x = beta * energy
            if x > log_max:
                acc = acc * math.exp(log_max - x) + 1.0
                log_max = x
            else:
                acc += math.exp(x - log_max)
    if beta > 0.0:
        return best, best_code, log_max + math.log(acc) - beta * best
    return best, best_code, 0.0


@njit(cache=True)
def metropolis_sweep(sigma, energy, f, q, kt, q_sigma, p_mat, cubic, beta, order, uniforms):
    """One Metropolis sweep maximizing H at inverse temperature beta. Returns (energy, accepted)."""
    accepted = 0
    for step in range(order.shape[0]):
        k = order[step]
        delta = -2.0 * sigma[k] * local_field(k, sigma, f, q_sigma, p_mat, cubic)
        if delta >= 0.0 or uniforms[step] < math.exp(beta * delta):
            flip(k, sigma, q, kt, q_sigma, p_mat, cubic)
            energy += delta
            accepted += 1
    return energy, accepted


@njit(cache=True)
def quench(sigma, energy, f, q, kt, q_sigma, p_mat, cubic):
    """Greedy single flips until no flip increases H."""
    improved = True
    while improved:
        improved = False
        for k in range(sigma.shape[0]):
            delta = -2.0 * sigma[k] * local_field(k, sigma, f, q_sigma, p_mat, cubic)
            if delta > 1e-12:
                flip(k, sigma, q, kt, q_sigma, p_mat, cubic)
                energy += delta
                improved = True
    return energy


def spins_from_code(code: int, n: int) -> np.ndarray:
    """Bit i set means sigma_i = -1."""
    bits = (int(code) >> np.arange(n)) & 1
    return 1.0 - 2.0 * bits
