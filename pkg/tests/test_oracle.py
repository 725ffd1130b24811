import math

import numpy as np
import pytest

from psrelay.channel import SystemParams, decompose, generate_channel_pair
from psrelay.fixed_q import FixedQProblem
from psrelay.joint import JointProblem
from psrelay.oracle import GridSpec, oracle_fixed_q, oracle_joint

SMALL = GridSpec(eps_steps=41, simplex_steps=21, refine_rounds=2)


def fixed_problem(seed=0, d=2, eta=0.8):
    params = SystemParams(p_source=100.0, sigma1_sq=5.0, sigma2_sq=2.0, eta=eta,
                          m_src=d, l_relay=d, n_dst=d, d_streams=d)
    eig = decompose(generate_channel_pair(seed, params, 10.0), d)
    return FixedQProblem.from_eigensystem(eig, params)


def joint_problem(seed=0, d=2, eta=0.8, p=100.0):
    params = SystemParams(p_source=p, sigma1_sq=5.0, sigma2_sq=2.0, eta=eta,
                          m_src=d, l_relay=d, n_dst=d, d_streams=d)
    eig = decompose(generate_channel_pair(seed, params, 10.0), d)
    return JointProblem.from_eigensystem(eig, params)


class TestGridSpec:
    def test_rejects_degenerate_counts(self):
        with pytest.raises(ValueError):
            GridSpec(eps_steps=1)


class TestOracleFixedQ:
    def test_dimension_guard(self):
        prob = FixedQProblem(alpha=(1.0,) * 4, beta=(1.0,) * 4,
                             rho1=1.0, rho2=1.0, eta=1.0)
        with pytest.raises(ValueError):
            oracle_fixed_q(prob, SMALL)

    def test_zero_budget(self):
        prob = FixedQProblem(alpha=(2.0, 1.0), beta=(1.0, 0.5),
                             rho1=1.0, rho2=1.0, eta=0.0)
        res = oracle_fixed_q(prob, SMALL)
        assert res.capacity == 0.0
        assert np.all(res.x == 0.0)

    def test_returned_point_feasible(self):
        for seed in range(4):
            prob = fixed_problem(seed)
            res = oracle_fixed_q(prob, SMALL)
            budget = prob.eta * res.eps * prob.rho2 * sum(prob.alpha)
            assert budget - float(np.sum(res.x)) >= -1e-12 * max(budget, 1.0)
            assert np.all(res.x >= 0.0)
            assert 0.0 <= res.eps <= 1.0

    def test_refinement_monotone(self):
        res = oracle_fixed_q(fixed_problem(1), SMALL)
        assert all(b >= a - 1e-12 for a, b in zip(res.round_values, res.round_values[1:]))

    def test_value_nondecreasing_in_resolution(self):
        prob = fixed_problem(2)
        coarse = oracle_fixed_q(prob, GridSpec(eps_steps=26, simplex_steps=16,
                                               refine_rounds=2))
        fine = oracle_fixed_q(prob, GridSpec(eps_steps=51, simplex_steps=31,
                                             refine_rounds=2))
        assert fine.capacity >= coarse.capacity - 1e-12

    def test_single_mode_matches_scan_of_closed_form(self):
        # with one mode the budget is fully spent: x1 = eta*eps*rho2*alpha1
        prob = FixedQProblem(alpha=(3.0,), beta=(1.2,), rho1=2.0, rho2=1.5, eta=0.7)
        res = oracle_fixed_q(prob)

        def cap_at(eps):
            x = prob.eta * eps * prob.rho2 * prob.alpha[0]
            a = (1 - eps) * prob.rho1 * prob.alpha[0]
            bx = prob.beta[0] * x
            return 0.5 * math.log2(1 + a * bx / (1 + a + bx))

        grid_best = max(cap_at(e) for e in np.linspace(0.0, 1.0, 100_001))
        assert abs(res.capacity - grid_best) <= 5e-2
        x_budget = prob.eta * res.eps * prob.rho2 * prob.alpha[0]
        assert res.x[0] == pytest.approx(x_budget, rel=1e-2)


class TestOracleJoint:
    def test_dimension_guard(self):
        prob = JointProblem(alpha=(1.0,) * 3, beta=(1.0,) * 3, p_source=1.0,
                            sigma1_sq=1.0, sigma2_sq=1.0, eta=1.0)
        with pytest.raises(ValueError):
            oracle_joint(prob, SMALL)

    def test_zero_power_budget(self):
        prob = JointProblem(alpha=(2.0, 1.0), beta=(1.0, 0.5), p_source=0.0,
                            sigma1_sq=1.0, sigma2_sq=1.0, eta=1.0)
        res = oracle_joint(prob, SMALL)
        assert res.capacity == 0.0

    def test_returned_point_feasible(self):
        prob = joint_problem(3)
        res = oracle_joint(prob, SMALL)
        assert float(np.sum(res.q)) <= prob.p_source * (1 + 1e-12)
        harvest = res.eps * prob.eta * float(np.dot(prob.alpha, res.q))
        assert harvest - float(np.sum(res.d)) >= -1e-12 * max(harvest, 1.0)
        assert np.all(res.q >= 0.0) and np.all(res.d >= 0.0)

    def test_refinement_monotone(self):
        res = oracle_joint(joint_problem(4), SMALL)
        assert all(b >= a - 1e-12 for a, b in zip(res.round_values, res.round_values[1:]))

    def test_symmetric_modes_give_near_uniform_q(self):
        prob = JointProblem(alpha=(2.0, 2.0), beta=(1.5, 1.5), p_source=10.0,
                            sigma1_sq=1.0, sigma2_sq=1.0, eta=0.9)
        grid = GridSpec(eps_steps=41, simplex_steps=41, refine_rounds=2)
        res = oracle_joint(prob, grid)
        cell = prob.p_source / (grid.simplex_steps - 1)
        assert abs(float(res.q[0] - res.q[1])) <= cell + 1e-12
