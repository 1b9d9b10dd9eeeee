import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from gse.constants import LOG2
from gse.model import MixingFunction
from gse.optimizer import (
    OptimizerConfig,
    beta_sweep,
    decode_alpha,
    decode_gamma,
    encode_gamma,
    gse_estimate,
    minimize_finite_beta,
    minimize_zero_t,
    richardson_tail,
    value_caps,
)
from gse.order_param import StepOrderParam, l1_distance, minimizer_envelope
from gse.pde import SpaceGrid
from gse.runner import Runner
from gse.types import Seed


SK = MixingFunction.sk()


TWO_STEP = StepOrderParam.from_pairs([(0.0, 0.5), (0.5, 1.5)])


def sk_constant_value(c: float) -> float:
    """P(c) for SK in closed form."""
    return c / 4.0 + math.log(2.0 * norm.cdf(c)) / c


def search_grid(m: MixingFunction = SK) -> SpaceGrid:
    return SpaceGrid.default_for(m, n_x=257, quad_nodes=32)


def test_decoded_parameters_are_feasible():
    """
    Any real vector decodes to a valid capped step function.
    """
    K = 3
    rng = np.random.default_rng(2)

    for _ in range(200):
        params = rng.normal(0.0, 5.0, size=2 * K + 1)
        gamma = decode_gamma(params, K, SK, "envelope")
        breakpoints = np.asarray(gamma.breakpoints)
        assert breakpoints[0] == 0.0
        assert np.all(np.diff(breakpoints) > 0.0)
        assert np.all(breakpoints < 1.0)
        caps = value_caps(SK, breakpoints, "envelope")
        assert np.all(np.asarray(gamma.values) <= caps + 1e-12)

        alpha = decode_alpha(params, K)
        assert sum(alpha.masses) == pytest.approx(1.0)
        assert alpha.atoms[-1] <= 1.0


def test_encode_then_decode():
    """
    Encoding a feasible gamma and decoding it gives the same function.
    """
    gamma = StepOrderParam.from_pairs([(0.0, 0.2), (0.4, 0.7), (0.7, 1.1)])

    decoded = decode_gamma(encode_gamma(gamma.breakpoints, gamma.values), 2, SK, "envelope")

    assert decoded.breakpoints == pytest.approx(gamma.breakpoints, abs=1e-12)
    assert decoded.values == pytest.approx(gamma.values, abs=1e-12)


def test_value_caps():
    """
    The envelope cap follows the minimizer envelope and is clamped at 50.
    """
    caps = value_caps(SK, np.array([0.0, 0.5, 0.999999]), "envelope")

    assert caps[0] == pytest.approx(minimizer_envelope(SK, 0.0))
    assert caps[1] == pytest.approx(minimizer_envelope(SK, 0.5))
    assert caps[2] == 50.0
    assert list(value_caps(SK, np.array([0.0, 0.5]), 2.0)) == [2.0, 2.0]


def test_replica_symmetric_optimum():
    """
    k = 0 on SK agrees with a bounded scalar minimization of the closed form.
    """
    cfg = OptimizerConfig(k=0, restarts=2, seed=Seed(1))

    result = minimize_zero_t(SK, cfg, search_grid())

    reference = minimize_scalar(sk_constant_value, bounds=(1e-6, minimizer_envelope(SK, 0.0)), method="bounded", options={"xatol": 1e-10})
    assert result.value == pytest.approx(reference.fun, abs=1e-6)
    assert result.gamma.values[0] == pytest.approx(reference.x, abs=1e-2)
    assert result.value == pytest.approx(0.7688, abs=1e-3)
    assert result.value < math.sqrt(2.0 / math.pi)
    assert len(result.trace) == 2


def test_cap_zero_gives_zero_gamma():
    """
    A cap of 0 forces gamma = 0 and P = E|Z| for SK.
    """
    cfg = OptimizerConfig(k=0, restarts=1, value_cap=0.0)

    result = minimize_zero_t(SK, cfg, search_grid())

    assert result.gamma == StepOrderParam.constant(0.0)
    assert result.value == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-9)
    assert result.cap_policy == "constant 0.0"


def test_binding_constant_cap():
    """
    A cap below the unconstrained optimum is attained.
    """
    cfg = OptimizerConfig(k=0, restarts=1, value_cap=0.5)

    result = minimize_zero_t(SK, cfg, search_grid())

    assert result.gamma.sup == 0.5
    assert result.value == pytest.approx(sk_constant_value(0.5), abs=1e-9)


def assert_nested(report, k_max: int, f_tol: float):
    values = [row["value"] for row in report.rows]
    assert [row["k"] for row in report.rows] == list(range(k_max + 1))
    assert all(b <= a + f_tol for a, b in zip(values, values[1:]))
    assert report.estimate <= report.zero_step_bound + f_tol


def test_optima_are_nested():
    """
    Optima over k = 0..3 never increase and stay below the k = 0 bound.
    """
    cfg = OptimizerConfig(restarts=1, max_iters=300, seed=Seed(3))

    report = gse_estimate(SK, 3, cfg, search_grid())

    assert_nested(report, 3, cfg.f_tol)
    assert report.rows[-1]["value"] < report.rows[0]["value"] - 1e-3
    assert report.zero_step_bound == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-9)
    assert report.error >= 0.0
    assert report.to_record()["cap_policy"] == cfg.cap_policy


def test_optima_are_nested_for_pure_3_spin():
    """
    Same on xi(s) = s^3.
    """
    m = MixingFunction.from_pairs([(3, 1.0)])
    cfg = OptimizerConfig(restarts=1, max_iters=300, seed=Seed(3))

    report = gse_estimate(m, 3, cfg, search_grid(m))

    assert_nested(report, 3, cfg.f_tol)


def test_strong_field_is_replica_symmetric():
    """
    At h = 5 extra jumps gain nothing and the estimate stays within 1e-3 of the k = 0 value.
    """
    m = MixingFunction.sk(h=5.0)
    cfg = OptimizerConfig(restarts=1, max_iters=200, seed=Seed(3))

    report = gse_estimate(m, 1, cfg, search_grid(m))

    assert_nested(report, 1, cfg.f_tol)
    assert report.estimate == pytest.approx(report.rows[0]["value"], abs=1e-3)
    assert report.rows[0]["value"] == pytest.approx(5.0, abs=1e-3)


def test_warm_start_is_never_worse():
    """
    Restart 0 from a (k - 1)-step optimum ends at or below its value.
    """
    g = search_grid()
    previous = minimize_zero_t(SK, OptimizerConfig(k=0, restarts=1), g)

    result = minimize_zero_t(SK, OptimizerConfig(k=1, restarts=1, max_iters=50), g, initial=previous.gamma)

    assert result.value <= previous.value + 1e-12


def test_restarts_run_in_parallel():
    """
    The same restarts give the same result in one process or two.
    """
    cfg = OptimizerConfig(k=1, restarts=2, max_iters=40, seed=Seed(8))
    g = search_grid()

    sequential = minimize_zero_t(SK, cfg, g, runner=Runner(1))
    parallel = minimize_zero_t(SK, cfg, g, runner=Runner(2))

    assert parallel.value == sequential.value
    assert [t.value for t in parallel.trace] == [t.value for t in sequential.trace]


def test_richardson_tail():
    """
    Geometric tails are summed; anything else contributes nothing.
    """
    assert richardson_tail([1.0, 0.5, 0.25]) == pytest.approx(0.25)
    assert richardson_tail([1.0, 0.5]) == 0.0
    assert richardson_tail([1.0, 0.9, 0.7]) == 0.0
    assert richardson_tail([1.0, 1.0, 1.0]) == 0.0


def test_high_temperature_finite_beta_optimum():
    """
    Below the critical temperature the optimizer finds delta_0 for SK.
    """
    BETA = 0.5
    cfg = OptimizerConfig(k=0, restarts=2, seed=Seed(5))

    result = minimize_finite_beta(SK, BETA, cfg, search_grid())

    assert result.value == pytest.approx(LOG2 / BETA + BETA / 4.0, abs=1e-6)
    assert result.diagnostics["envelope_ok"]
    assert result.beta == BETA
    assert result.cap_policy == "none"


def test_beta_sweep():
    """
    |P_beta(alpha_beta) - P(gamma)| shrinks along the sweep.
    """
    sweep = beta_sweep(SK, TWO_STEP, [4.0, 16.0, 64.0], search_grid())

    differences = [row["difference"] for row in sweep.rows]
    assert differences == sorted(differences, reverse=True)
    for row in sweep.rows:
        assert row["difference"] <= row["entropy"] + 1e-9
        assert row["zero_t_value"] == sweep.rows[0]["zero_t_value"]
    assert sweep.gamma_star is None
    assert sweep.weak_convergence_monotone is None


def test_beta_sweep_with_optimum():
    """
    With an optimizer config each row carries the finite-beta optimum; a given gamma* is used as is.
    """
    cfg = OptimizerConfig(k=0, restarts=1, max_iters=60)
    gamma_star = StepOrderParam.constant(1.0)

    sweep = beta_sweep(SK, TWO_STEP, [4.0], search_grid(), cfg=cfg, gamma_star=gamma_star)

    row = sweep.rows[0]
    assert set(row) >= {"optimum", "optimum_distance", "q_max", "envelope_ok"}
    assert row["optimum_distance"] >= 0.0
    assert isinstance(row["envelope_ok"], bool)
    assert sweep.gamma_star is gamma_star
    assert sweep.weak_convergence_monotone is True
    assert sweep.to_record()["gamma_star"] == [[0.0, 1.0]]


def test_beta_sweep_approaches_zero_t_optimum():
    """
    beta alpha*_beta is measured against the zero-temperature optimum and gets closer as beta grows.
    """
    BETAS = [4.0, 8.0, 16.0]
    g = search_grid()
    cfg = OptimizerConfig(k=1, restarts=1, max_iters=150, seed=Seed(3))

    sweep = beta_sweep(SK, TWO_STEP, BETAS, g, cfg=cfg)

    gamma_star = minimize_zero_t(SK, cfg, g).gamma
    assert sweep.gamma_star == gamma_star
    for row in sweep.rows:
        alpha = minimize_finite_beta(SK, row["beta"], cfg, g).alpha
        expected = l1_distance(alpha.as_step().scaled(row["beta"]), gamma_star, upper=0.95)
        assert row["optimum_distance"] == pytest.approx(expected, abs=1e-12)
    assert sweep.weak_convergence_monotone
