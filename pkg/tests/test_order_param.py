import math

import numpy as np
import pytest

from gse.constants import LOG2
from gse.errors import DomainError, OrderParamError
from gse.model import MixingFunction
from gse.order_param import (
    DiscreteCDF,
    StepOrderParam,
    correction_antiderivative,
    discretize,
    embed_finite_beta,
    l1_distance,
    minimizer_envelope,
    split_longest,
    truncate,
)


SK = MixingFunction.sk()


PURE_3 = MixingFunction.from_pairs([(3, 1.0)])


def random_gamma(rng: np.random.Generator, k: int) -> StepOrderParam:
    breakpoints = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 1.0, size=k))])
    values = np.cumsum(rng.exponential(0.5, size=k + 1))
    return StepOrderParam(breakpoints=tuple(breakpoints), values=tuple(values))


def test_step_evaluation():
    """
    gamma is right-continuous with value v_{j+1} on [t_j, t_{j+1}).
    """
    gamma = StepOrderParam.from_pairs([(0.0, 1.0), (0.5, 3.0)])

    assert gamma(0.0) == 1.0
    assert gamma(0.49) == 1.0
    assert gamma(0.5) == 3.0
    assert gamma(0.99) == 3.0
    assert list(gamma(np.array([0.25, 0.75]))) == [1.0, 3.0]
    assert gamma.knots == (0.0, 0.5, 1.0)
    assert gamma.sup == 3.0


def test_equal_values_are_merged():
    """
    Equal functions have equal representations.
    """
    gamma = StepOrderParam.from_pairs([(0.0, 1.0), (0.3, 1.0), (0.6, 2.0), (0.8, 2.0)])

    assert gamma == StepOrderParam.from_pairs([(0.0, 1.0), (0.6, 2.0)])
    assert gamma.num_steps == 1


def test_invalid_step_functions_name_the_index():
    """
    Decreasing or negative values and bad breakpoints are rejected with the index.
    """
    with pytest.raises(OrderParamError, match=r"values\[2\]"):
        StepOrderParam.from_pairs([(0.0, 1.0), (0.3, 2.0), (0.6, 1.5)])
    with pytest.raises(OrderParamError, match=r"values\[0\]"):
        StepOrderParam.from_pairs([(0.0, -1.0)])
    with pytest.raises(OrderParamError, match=r"breakpoints\[1\]"):
        StepOrderParam.from_pairs([(0.0, 1.0), (1.0, 2.0)])
    with pytest.raises(OrderParamError, match="breakpoints\\[0\\]"):
        StepOrderParam.from_pairs([(0.1, 1.0)])


def test_l1_distance_examples():
    """
    Exact distances on the merged partition.
    """
    zero = StepOrderParam.constant(0.0)
    one = StepOrderParam.constant(1.0)
    jump = StepOrderParam.from_pairs([(0.0, 0.0), (0.5, 2.0)])

    assert l1_distance(zero, one) == pytest.approx(1.0, abs=1e-15)
    assert l1_distance(jump, jump) == 0.0
    assert l1_distance(jump, one) == pytest.approx(1.0, abs=1e-15)


def test_l1_distance_matches_riemann_sum():
    """
    Cross-check against a midpoint sum on a fine grid.
    """
    POINTS = 1_000_000
    rng = np.random.default_rng(1)

    gamma, other = random_gamma(rng, 3), random_gamma(rng, 4)
    s = (np.arange(POINTS) + 0.5) / POINTS
    riemann = np.mean(np.abs(gamma(s) - other(s)))

    assert l1_distance(gamma, other) == pytest.approx(riemann, abs=1e-4)


def test_l1_distance_is_a_metric():
    """
    Symmetry and the triangle inequality on random triples.
    """
    rng = np.random.default_rng(7)

    for _ in range(50):
        a, b, c = (random_gamma(rng, int(rng.integers(0, 5))) for _ in range(3))
        assert l1_distance(a, b) == pytest.approx(l1_distance(b, a), abs=1e-14)
        assert l1_distance(a, c) <= l1_distance(a, b) + l1_distance(b, c) + 1e-14


def test_l1_distance_restricted():
    """
    The distance on [0, upper] ignores the rest of the interval.
    """
    gamma = StepOrderParam.from_pairs([(0.0, 0.0), (0.9, 5.0)])

    assert l1_distance(gamma, StepOrderParam.constant(0.0), upper=0.95) == pytest.approx(0.25)
    assert l1_distance(gamma, StepOrderParam.constant(0.0), upper=0.5) == 0.0


def test_truncate():
    """
    Pointwise minimum with a constant.
    """
    assert truncate(StepOrderParam.constant(3.0), 2.0) == StepOrderParam.constant(2.0)
    gamma = StepOrderParam.from_pairs([(0.0, 0.0), (0.3, 1.0), (0.6, 5.0)])
    assert truncate(gamma, 1.0).values == (0.0, 1.0)
    assert truncate(gamma, 0.0) == StepOrderParam.constant(0.0)


def test_truncate_converges():
    """
    d(gamma, min(gamma, n)) equals the integral of (gamma - n)^+ and vanishes for large n.
    """
    rng = np.random.default_rng(3)
    gamma = random_gamma(rng, 4)

    for n in (0.5, 1.0, 2.0, 10.0):
        excess = sum(
            max(v - n, 0.0) * (b - a)
            for v, a, b in zip(gamma.values, gamma.knots[:-1], gamma.knots[1:])
        )
        assert l1_distance(gamma, truncate(gamma, n)) == pytest.approx(excess, abs=1e-14)
    assert l1_distance(gamma, truncate(gamma, gamma.sup)) == 0.0


def test_embed_finite_beta_examples():
    """
    alpha_beta = gamma / beta on [0, 1) with the rest of the mass at 1.
    """
    alpha = embed_finite_beta(StepOrderParam.constant(2.0), 4.0)
    assert alpha.atoms == (0.0, 1.0)
    assert alpha.masses == pytest.approx((0.5, 0.5))
    assert alpha(0.7) == pytest.approx(0.5)
    assert alpha(1.0) == pytest.approx(1.0)

    assert embed_finite_beta(StepOrderParam.constant(0.0), 3.0) == DiscreteCDF.dirac(1.0)

    alpha = embed_finite_beta(StepOrderParam.from_pairs([(0.0, 1.0), (0.5, 3.0)]), 10.0)
    assert alpha(0.0) == pytest.approx(0.1)
    assert alpha(0.49) == pytest.approx(0.1)
    assert alpha(0.5) == pytest.approx(0.3)
    assert alpha(0.999) == pytest.approx(0.3)
    assert alpha(1.0) == pytest.approx(1.0)


def test_embed_finite_beta_inverts_scaling():
    """
    beta * alpha_beta(s) = gamma(s) for every s < 1.
    """
    rng = np.random.default_rng(11)
    S = np.linspace(0.0, 0.999, 500)

    for _ in range(20):
        gamma = random_gamma(rng, 3)
        for beta in (gamma.sup + 0.5, 2.0 * gamma.sup + 1.0, 100.0 + gamma.sup):
            alpha = embed_finite_beta(gamma, beta)
            assert beta * alpha(S) == pytest.approx(gamma(S), abs=1e-12)
            assert alpha.as_step().scaled(beta).values == pytest.approx(gamma.values, abs=1e-12)


def test_embed_finite_beta_rejects_small_beta():
    """
    beta must exceed gamma(1-).
    """
    with pytest.raises(OrderParamError):
        embed_finite_beta(StepOrderParam.constant(2.0), 2.0)


def test_discrete_cdf():
    """
    Cumulative mass, q_max and validation.
    """
    alpha = DiscreteCDF.from_pairs([(0.0, 0.25), (0.4, 0.75), (1.0, 0.0)])

    assert alpha(0.0) == pytest.approx(0.25)
    assert alpha(0.5) == pytest.approx(1.0)
    assert alpha.q_max == 0.4
    assert alpha.atoms == (0.0, 0.4)
    assert alpha.as_step() == StepOrderParam.from_pairs([(0.0, 0.25), (0.4, 1.0)])

    with pytest.raises(OrderParamError):
        DiscreteCDF.from_pairs([(0.0, 0.5), (0.5, 0.4)])
    with pytest.raises(OrderParamError):
        DiscreteCDF.from_pairs([(0.5, 0.5), (0.2, 0.5)])
    with pytest.raises(OrderParamError):
        DiscreteCDF.from_pairs([(1.5, 1.0)])


def test_minimizer_envelope():
    """
    sqrt(2 xi'(1) log 2) / (xi(1) - xi(s)), infinite at s = 1.
    """
    assert minimizer_envelope(SK, 0.0) == pytest.approx(2.35482, abs=1e-5)
    assert minimizer_envelope(PURE_3, 0.0) == pytest.approx(math.sqrt(6.0 * LOG2), rel=1e-14)
    assert minimizer_envelope(PURE_3, 0.0) == pytest.approx(2.0393, abs=1e-4)
    assert minimizer_envelope(SK, 0.5) == pytest.approx(math.sqrt(2.0 * LOG2) / 0.375, rel=1e-14)
    assert minimizer_envelope(SK, 1.0) == math.inf
    assert minimizer_envelope(SK, 1.0 - 1e-9) > 1e8
    with pytest.raises(DomainError):
        minimizer_envelope(SK, -0.5)


def test_discretize():
    """
    Left-endpoint steps of a continuous nondecreasing function.
    """
    STEPS = 9

    gamma = discretize(lambda t: 2.0 * t, STEPS)

    assert gamma.num_steps == STEPS
    assert gamma.breakpoints == pytest.approx(np.linspace(0.0, 1.0, STEPS + 2)[:-1])
    assert gamma(0.55) == pytest.approx(1.0)
    assert l1_distance(gamma, discretize(lambda t: 2.0 * t, 4 * STEPS)) < 2.0 / (STEPS + 1)


def test_split_longest():
    """
    The same function with exactly k breakpoints after the first.
    """
    gamma = StepOrderParam.from_pairs([(0.0, 1.0), (0.8, 2.0)])

    breakpoints, values = split_longest(gamma, 3)

    assert len(breakpoints) == 4
    assert breakpoints == sorted(breakpoints)
    assert StepOrderParam(tuple(breakpoints), tuple(values)) == gamma


def test_correction_antiderivative():
    """
    A(t) = t xi'(t) - xi(t) has derivative t xi''(t).
    """
    assert correction_antiderivative(PURE_3, 1.0) == pytest.approx(2.0)
    assert correction_antiderivative(SK, 1.0) == pytest.approx(0.5)
    assert correction_antiderivative(SK, 0.0) == 0.0
