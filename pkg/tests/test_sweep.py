import numpy as np
import pytest

from sicaoc import (ControlBounds, OcProblem, SweepNonConvergence,
                    SweepSettings, TimeGrid, integrate_fixed)
from sicaoc.model import rhs_normalized
from sicaoc.sweep import (backward_pass, forward_pass, relative_change_test,
                          sica_problem, solve, update_control)

X0 = np.array([0.6, 0.2, 0.1, 0.1])


@pytest.fixture
def problem(params):
    return sica_problem(params, ControlBounds(0.5), X0)


def zero_problem():
    return OcProblem(dim=4, state_field=lambda t, x, u: np.zeros(4),
                     adjoint_field=lambda t, x, lam, u: np.zeros(4),
                     control_law=lambda x, lam: 0.0,
                     bounds=ControlBounds(0.5), x0=X0,
                     terminal_adjoint=np.zeros(4))


class TestForwardPass:
    def test_zero_control_matches_fixed_rk4_bitwise(self, params, problem):
        grid = TimeGrid(0.0, 20.0, 100)
        swept = forward_pass(problem, np.zeros(101), grid)
        plain = integrate_fixed("rk4", lambda t, x: rhs_normalized(params, x),
                                grid, X0)
        assert np.array_equal(swept.states, plain.states)

    def test_single_interval_uses_endpoint_and_midpoint_controls(self, problem):
        grid = TimeGrid(0.0, 0.02, 1)
        u = np.array([0.1, 0.3])
        out = forward_pass(problem, u, grid).states[1]
        h = grid.h
        f = problem.state_field
        um = 0.5 * (u[0] + u[1])
        k1 = f(0.0, X0, u[0])
        k2 = f(h / 2, X0 + (h / 2) * k1, um)
        k3 = f(h / 2, X0 + (h / 2) * k2, um)
        k4 = f(h, X0 + h * k3, u[1])
        np.testing.assert_array_equal(out, X0 + (h / 6) * (k1 + 2 * (k2 + k3) + k4))

    def test_constant_prevention_lowers_infection_everywhere(self, problem):
        grid = TimeGrid(0.0, 20.0, 100)
        base = forward_pass(problem, np.zeros(101), grid)
        treated = forward_pass(problem, np.full(101, 0.5), grid)
        assert np.all(treated.states[1:, 1] < base.states[1:, 1])

    def test_control_length_checked(self, problem):
        with pytest.raises(ValueError):
            forward_pass(problem, np.zeros(5), TimeGrid(0.0, 1.0, 10))


class TestBackwardPass:
    def test_terminal_node_is_exact_transversality(self, problem):
        grid = TimeGrid(0.0, 20.0, 50)
        x = forward_pass(problem, np.zeros(51), grid)
        lam = backward_pass(problem, x, np.zeros(51))
        assert np.array_equal(lam.states[-1], np.zeros(4))

    def test_zero_problem_keeps_zero_costate(self):
        prob = zero_problem()
        grid = TimeGrid(0.0, 1.0, 10)
        x = forward_pass(prob, np.zeros(11), grid)
        lam = backward_pass(prob, x, np.zeros(11))
        np.testing.assert_array_equal(lam.states, np.zeros((11, 4)))

    def test_terminal_costate_slope(self, problem):
        # with lam(T) = 0 only the cost gradient survives in the field
        grid = TimeGrid(0.0, 20.0, 50)
        x = forward_pass(problem, np.zeros(51), grid)
        slope = problem.adjoint_field(20.0, x.states[-1], np.zeros(4), 0.0)
        np.testing.assert_array_equal(slope, [-1.0, 1.0, 0.0, 0.0])


class TestUpdateControl:
    def test_law_at_old_control_is_fixed_point(self, problem):
        grid = TimeGrid(0.0, 2.0, 4)
        u = np.full(5, 0.2)
        x = forward_pass(problem, u, grid)
        lam = backward_pass(problem, x, u)
        law = np.array([problem.control_law(x.states[k], lam.states[k])
                        for k in range(5)])
        out = update_control(problem, x, lam, law, 0.5)
        np.testing.assert_allclose(out, law, rtol=1e-15)

    def test_zero_everywhere(self):
        prob = zero_problem()
        grid = TimeGrid(0.0, 1.0, 4)
        x = forward_pass(prob, np.zeros(5), grid)
        lam = backward_pass(prob, x, np.zeros(5))
        np.testing.assert_array_equal(
            update_control(prob, x, lam, np.zeros(5), 0.5), np.zeros(5))

    def test_relaxation_arithmetic(self, problem):
        grid = TimeGrid(0.0, 2.0, 4)
        u_old = np.zeros(5)
        x = forward_pass(problem, u_old, grid)
        # costate gap large enough that the law clamps to the bound everywhere
        lam_states = np.zeros((5, 4))
        lam_states[:, 0] = 100.0
        from sicaoc.integrators import Trajectory
        lam = Trajectory(grid, lam_states)
        out = update_control(problem, x, lam, u_old, 0.5)
        np.testing.assert_array_equal(out, np.full(5, 0.25))


class TestRelativeChangeTest:
    def test_identical_vectors_converge(self):
        v = np.array([1.0, 2.0, 3.0])
        margin = relative_change_test([(v, v)], 1e-3)
        assert margin == pytest.approx(1e-3 * 6.0, rel=1e-14)
        assert margin >= 0.0

    def test_collapse_to_zero_fails(self):
        old = np.array([1.0, -2.0])
        new = np.zeros(2)
        assert relative_change_test([(old, new)], 1e-3) == pytest.approx(-3.0)

    def test_boundary_margin(self):
        old = np.array([1.001, 1.001])
        new = np.array([1.0, 1.0])
        margin = relative_change_test([(old, new)], 1e-3)
        assert margin == pytest.approx(0.0, abs=1e-12)
        assert margin >= 0.0

    def test_minimum_over_pairs(self):
        good = (np.array([1.0]), np.array([1.0]))
        bad = (np.array([5.0]), np.array([0.0]))
        assert relative_change_test([good, bad], 1e-3) == pytest.approx(-5.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            relative_change_test([(np.zeros(2), np.zeros(3))], 1e-3)


class TestSolve:
    def test_default_instance_converges_and_improves(self, default_sweep):
        result = default_sweep["result"]
        settings = default_sweep["settings"]
        assert result.converged
        assert result.iterations <= settings.max_iterations
        assert np.array_equal(result.adjoints.states[-1], np.zeros(4))
        assert np.all(result.control >= 0.0)
        assert np.all(result.control <= 0.5)
        from sicaoc.model import objective
        j_zero = objective(default_sweep["uncontrolled"],
                           np.zeros(settings.grid.node_count))
        assert result.objective > j_zero

    def test_degenerate_bounds_reproduce_uncontrolled_run(self, params):
        grid = TimeGrid(0.0, 20.0, 200)
        prob = sica_problem(params, ControlBounds(0.0), X0)
        result = solve(prob, SweepSettings(grid=grid))
        assert np.array_equal(result.control, np.zeros(201))
        plain = integrate_fixed("rk4", lambda t, x: rhs_normalized(params, x),
                                grid, X0)
        assert np.array_equal(result.states.states, plain.states)

    def test_constant_law_with_full_weight_converges_fast(self, params):
        prob = sica_problem(params, ControlBounds(0.5), X0)
        prob.control_law = lambda x, lam: 0.3
        grid = TimeGrid(0.0, 20.0, 100)
        settings = SweepSettings(grid=grid, relaxation=1.0,
                                 initial_control=np.full(101, 0.3))
        result = solve(prob, settings)
        assert result.converged
        assert result.iterations <= 2
        np.testing.assert_array_equal(result.control, np.full(101, 0.3))

    def test_exhaustion_raises_with_last_iterate(self, params):
        prob = sica_problem(params, ControlBounds(0.5), X0)
        settings = SweepSettings(grid=TimeGrid(0.0, 20.0, 100),
                                 delta_error=1e-12, max_iterations=1)
        with pytest.raises(SweepNonConvergence) as exc:
            solve(prob, settings)
        assert exc.value.margin < 0.0
        result = exc.value.result
        assert not result.converged
        assert result.iterations == 1
        assert result.states.states.shape == (101, 4)

    def test_restart_from_converged_control_is_stable(self, params, default_sweep):
        base = default_sweep["result"]
        prob = sica_problem(params, ControlBounds(0.5), X0)
        settings = SweepSettings(initial_control=base.control)
        again = solve(prob, settings)
        assert again.iterations <= 2
        assert np.abs(again.control - base.control).max() <= 1e-3


class TestSweepSettings:
    def test_validation(self):
        with pytest.raises(ValueError):
            SweepSettings(delta_error=0.0)
        with pytest.raises(ValueError):
            SweepSettings(relaxation=0.0)
        with pytest.raises(ValueError):
            SweepSettings(relaxation=1.5)
        with pytest.raises(ValueError):
            SweepSettings(max_iterations=0)
        with pytest.raises(ValueError):
            SweepSettings(initial_control=np.zeros(3))
