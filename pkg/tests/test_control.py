import math

import numpy as np
import pytest
from scipy.stats import norm

from gse.control import (
    ControlPolicy,
    McParams,
    duality_gap,
    feedback_policy,
    random_table_policy,
    simulate_functional,
    verify_variational,
    xi_clock,
)
from gse.errors import StepCountTooSmallError
from gse.model import MixingFunction, xi_prime
from gse.order_param import DiscreteCDF, StepOrderParam
from gse.pde import SpaceGrid, evaluate, solve_finite_beta, solve_zero_t
from gse.types import Seed


SK = MixingFunction.sk()


PURE_3 = MixingFunction.from_pairs([(3, 1.0)])


TWO_STEP = StepOrderParam.from_pairs([(0.0, 0.5), (0.5, 1.5)])


PARAMS = McParams(n_paths=20_000, n_steps=64, seed=Seed(11), n_se=4.0)


def small_grid(m: MixingFunction = SK) -> SpaceGrid:
    return SpaceGrid.default_for(m, n_x=513, quad_nodes=32)


def test_clock_contains_breakpoints():
    """
    Partitions start at s, end at 1 and contain every breakpoint of eta.
    """
    times = xi_clock(SK, TWO_STEP, 0.0, 8)

    assert len(times) == 9
    assert times[0] == 0.0
    assert times[-1] == 1.0
    assert 0.5 in times
    assert times == pytest.approx(np.linspace(0.0, 1.0, 9), abs=1e-14)


def test_clock_is_uniform_in_xi_prime():
    """
    Each step carries the same xi' increment within a segment of eta.
    """
    eta = StepOrderParam.from_pairs([(0.0, 0.3), (0.6, 1.0)])

    for n in (5, 16, 33):
        times = xi_clock(PURE_3, eta, 0.0, n)
        assert len(times) == n + 1
        assert np.all(np.diff(times) > 0.0)
        assert 0.6 in times
        for a, b in ((0.0, 0.6), (0.6, 1.0)):
            inside = times[(times >= a) & (times <= b)]
            increments = np.diff(xi_prime(PURE_3, inside))
            assert increments == pytest.approx(np.full(len(increments), increments[0]), abs=1e-12)


def test_clock_doubling_is_a_refinement():
    """
    The 2n-step partition contains the n-step one.
    """
    times = xi_clock(PURE_3, TWO_STEP, 0.2, 16)
    coarse = xi_clock(PURE_3, TWO_STEP, 0.2, 8)

    assert np.array_equal(times[0::2], coarse)


def test_clock_needs_a_step_per_segment():
    """
    Fewer steps than segments of eta is an error.
    """
    with pytest.raises(StepCountTooSmallError):
        xi_clock(SK, TWO_STEP, 0.0, 1)
    assert list(xi_clock(SK, TWO_STEP, 0.75, 1)) == [0.75, 1.0]


def test_drift_step_too_large():
    """
    eta xi'' dt above the limit asks for more steps.
    """
    gamma = StepOrderParam.constant(50.0)
    sol = solve_zero_t(SK, gamma, small_grid())

    with pytest.raises(StepCountTooSmallError, match="increase n_steps"):
        simulate_functional(SK, gamma, sol, ControlPolicy.constant(0.0), 0.0, 0.0, n_paths=10, n_steps=4)


def test_zero_control_zero_gamma():
    """
    gamma = 0, u = 0: F = E|Z| = sqrt(2/pi).
    """
    gamma = StepOrderParam.constant(0.0)
    sol = solve_zero_t(SK, gamma, small_grid())

    estimate = simulate_functional(SK, gamma, sol, ControlPolicy.constant(0.0), 0.0, 0.0, n_paths=20_000, n_steps=16, seed=Seed(1))

    assert abs(estimate.mean - math.sqrt(2.0 / math.pi)) <= 4.0 * estimate.std_error
    assert estimate.n_paths == 20_000


def test_start_close_to_one():
    """
    From s = 1 - 1e-6 the paths barely move: F ~ |x|.
    """
    gamma = StepOrderParam.constant(0.0)
    sol = solve_zero_t(SK, gamma, small_grid())

    estimate = simulate_functional(SK, gamma, sol, ControlPolicy.constant(0.0), 1.0 - 1e-6, 1.0, n_paths=1000, n_steps=2)

    assert abs(estimate.mean - 1.0) <= 4.0 * estimate.std_error + 1e-9
    assert estimate.std_error < 1e-4


def test_constant_control_is_exact():
    """
    gamma = 1, u = 1/2: Y(1) = 1/2 + Z exactly, F = E|1/2 + Z| - 1/8.
    """
    gamma = StepOrderParam.constant(1.0)
    sol = solve_zero_t(SK, gamma, small_grid())
    expected = 0.5 * (2.0 * norm.cdf(0.5) - 1.0) + 2.0 * norm.pdf(0.5) - 0.125

    estimate = simulate_functional(SK, gamma, sol, ControlPolicy.constant(0.5), 0.0, 0.0, n_paths=20_000, n_steps=32, seed=Seed(2))

    assert abs(estimate.mean - expected) <= 4.0 * estimate.std_error
    assert estimate.mean < float(evaluate(sol, 0.0, 0.0)[0])


def test_feedback_is_bounded():
    """
    |u*(t, x)| <= 1, u*(t, 0) = 0 on symmetric models and u* = 0 from t = 1 on.
    """
    rng = np.random.default_rng(0)
    sol = solve_zero_t(SK, TWO_STEP, small_grid())
    policy = feedback_policy(sol)

    for t in rng.uniform(0.0, 1.0, size=200):
        x = rng.normal(0.0, 5.0, size=500)
        assert np.all(np.abs(policy(t, x)) <= 1.0)
        assert float(policy(t, np.array([0.0]))[0]) == 0.0
    assert list(policy(1.0, np.array([-2.0, 3.0]))) == [0.0, 0.0]


def test_feedback_vanishes_on_the_last_step():
    """
    Built from an Euler partition, u* = 0 from the start of its last step and d_x Psi before it.
    """
    times = xi_clock(SK, TWO_STEP, 0.0, 16)
    sol = solve_zero_t(SK, TWO_STEP, small_grid())
    policy = feedback_policy(sol, times)
    x = np.array([0.5, 2.0])

    assert list(policy(times[-2], x)) == [0.0, 0.0]
    assert list(policy(0.5 * (times[-2] + 1.0), x)) == [0.0, 0.0]
    assert np.all(np.abs(policy(times[-3], x)) > 0.0)
    assert np.all(np.abs(feedback_policy(sol)(times[-2], x)) > 0.0)


def test_policies():
    """
    Constant and table policies.
    """
    assert list(ControlPolicy.constant(-0.5)(0.3, np.zeros(3))) == [-0.5] * 3
    with pytest.raises(AssertionError):
        ControlPolicy.constant(1.5)

    table = ControlPolicy.from_table([0.0, 0.5], [-1.0, 1.0], [[-1.0, 1.0], [0.5, 0.5]])
    assert table(0.2, np.array([0.0, 3.0])) == pytest.approx([0.0, 1.0])
    assert table(0.7, np.array([0.0])) == pytest.approx([0.5])

    policy = random_table_policy(Seed(3))
    assert policy.table.shape == (8, 9)
    assert np.all(np.abs(policy(0.4, np.linspace(-10.0, 10.0, 50))) <= 1.0)


def test_variational_inequality_holds():
    """
    F(u) <= Psi(s, x) for the battery and F(u*) ~ Psi(s, x).
    """
    gamma = StepOrderParam.constant(1.0)
    sol = solve_zero_t(SK, gamma, small_grid())

    report = verify_variational(SK, gamma, sol, 0.0, 0.0, PARAMS)

    assert report.ok, report.violations
    assert report.psi == pytest.approx(float(evaluate(sol, 0.0, 0.0)[0]))
    assert len(report.checks) == 4 + PARAMS.random_tables + 1
    assert report.to_record()["violations"] == []


def test_variational_two_step_midway():
    """
    The check from an interior start time on a two-step gamma.
    """
    sol = solve_zero_t(SK, TWO_STEP, small_grid())

    report = verify_variational(SK, TWO_STEP, sol, 0.5, 0.5, PARAMS)

    assert report.ok, report.violations


def test_all_policies_tie_when_eta_vanishes():
    """
    With eta = 0 the control has no effect and every policy gives the same paths.
    """
    gamma = StepOrderParam.constant(0.0)
    sol = solve_zero_t(SK, gamma, small_grid())

    report = verify_variational(SK, gamma, sol, 0.0, 0.3, PARAMS)

    assert report.ok
    for check in report.checks:
        assert check.estimate.mean == report.optimal.mean


def test_duality_with_feedback():
    """
    For u = u* the gap is the last step alone, where u = 0, and the right-hand side matches Psi.
    """
    gamma = StepOrderParam.constant(1.0)
    sol = solve_zero_t(SK, gamma, small_grid())
    last_drift = 1.0 / PARAMS.n_steps

    report = duality_gap(SK, gamma, sol, feedback_policy(sol), 0.0, 0.0, PARAMS)

    assert 0.0 < report.gap.mean <= 0.5 * last_drift
    assert report.right.mean == pytest.approx(report.functional.mean + report.gap.mean)
    assert report.ok


def test_duality_with_constant_controls():
    """
    For a suboptimal u the gap is positive and right = F(u) + gap still matches Psi.
    """
    gamma = StepOrderParam.constant(1.0)
    sol = solve_zero_t(SK, gamma, small_grid())

    report = duality_gap(SK, gamma, sol, ControlPolicy.constant(0.0), 0.0, 0.0, PARAMS)
    assert report.ok
    assert report.gap.mean > 0.0
    assert report.right.mean == pytest.approx(report.functional.mean + report.gap.mean)

    gamma = StepOrderParam.constant(2.0)
    sol = solve_zero_t(SK, gamma, small_grid())
    report = duality_gap(SK, gamma, sol, ControlPolicy.constant(1.0), 0.0, 0.5, PARAMS)
    assert report.gap.mean > 5.0 * report.gap.std_error
    assert report.functional.mean < report.psi


def test_duality_without_eta():
    """
    eta = 0: no gap and right = F.
    """
    gamma = StepOrderParam.constant(0.0)
    sol = solve_zero_t(SK, gamma, small_grid())

    report = duality_gap(SK, gamma, sol, ControlPolicy.constant(1.0), 0.0, 1.0, PARAMS)

    assert report.gap.mean == 0.0
    assert report.right.mean == report.functional.mean
    assert report.ok


def test_finite_beta_feedback():
    """
    alpha = delta_0, beta = 1: u* = tanh(x) and Psi(0, 0) = xi'(1) / 2.
    """
    alpha, beta = DiscreteCDF.dirac(0.0), 1.0
    sol = solve_finite_beta(SK, alpha, beta, small_grid())

    report = duality_gap(SK, (alpha, beta), sol, feedback_policy(sol), 0.0, 0.0, PARAMS)

    assert report.psi == pytest.approx(0.5, abs=1e-8)
    assert 0.0 < report.gap.mean <= 0.5 / PARAMS.n_steps
    assert report.ok


def test_eta_must_match_the_solution():
    """
    The order parameter driving the paths is the one the PDE was solved for.
    """
    sol = solve_zero_t(SK, StepOrderParam.constant(1.0), small_grid())

    with pytest.raises(AssertionError):
        simulate_functional(SK, StepOrderParam.constant(2.0), sol, ControlPolicy.constant(0.0), 0.0, 0.0, n_paths=10, n_steps=4)
