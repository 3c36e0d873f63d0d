# tests/unit/test_eigensolver.py

import math

import numpy as np
import pytest

import numerics.eigensolver as eigensolver
from core.exceptions import NonConvergenceError, ScheduleFailureError
from numerics.eigensolver import (
    DescentResult,
    GroundState,
    SolverOptions,
    TrailEntry,
    descend,
    infinity_ground_state,
    lagged_weights,
    laplacian_matrix,
    log_concavity_check,
    rayleigh_quotient,
    reference_eigenvalue_p2,
    solve_p_ground_state,
)
from numerics.field import ScalarField, distance_field, rasterize
from numerics.geometry import max_distance


class TestOptions:
    def test_defaults_cover_schedule(self):
        opts = SolverOptions()
        assert opts.p_schedule[0] == 2 and opts.p_schedule[-1] == 64

    @pytest.mark.parametrize("kwargs", [
        {"tolerance": 0.0},
        {"max_iterations": 0},
        {"p_schedule": (1.5, 4)},
        {"p_schedule": (2, 8, 4)},
        {"backtrack": 1.0},
        {"stationarity_tolerance": 0.0},
        {"preconditioner": "jacobi"},
        {"refresh_every": 0},
        {"weight_floor": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolverOptions(**kwargs)

    def test_trail_must_increase(self, disc_distance):
        trail = [TrailEntry(4.0, 1.0, 1, 0.0), TrailEntry(2.0, 1.0, 1, 0.0)]
        with pytest.raises(ValueError):
            GroundState(u=disc_distance.u, trail=trail)


class TestLaplacian:
    def test_symmetric_with_dirichlet_diagonal(self, square):
        grid = rasterize(square, 0.125)
        a = laplacian_matrix(grid)
        assert a.shape == (49, 49)
        assert abs(a - a.T).max() == 0
        assert a.diagonal() == pytest.approx(np.full(49, 4.0 / 0.125 ** 2))

    def test_reference_eigenvalue_of_unit_square(self, square):
        grid = rasterize(square, 1.0 / 32.0)
        # continuum first eigenvalue pi^2 * 2, so Lambda_2 = pi * sqrt(2)
        assert reference_eigenvalue_p2(grid) == pytest.approx(math.pi * math.sqrt(2.0), rel=0.01)


class TestRayleighQuotient:
    def test_p2_matches_quadratic_form(self, square):
        grid = rasterize(square, 0.125)
        u = distance_field(square, grid)
        log_r, _ = rayleigh_quotient(u, 2.0)
        v = u.values[grid.inside]
        expected = (v @ (laplacian_matrix(grid) @ v)) / (v @ v)
        assert math.exp(log_r) == pytest.approx(expected, rel=1e-10)

    def test_scale_invariant(self, square):
        grid = rasterize(square, 0.125)
        u = distance_field(square, grid)
        a, _ = rayleigh_quotient(u, 8.0)
        b, _ = rayleigh_quotient(u.scaled(37.0), 8.0)
        assert a == pytest.approx(b, abs=1e-10)

    def test_large_p_is_finite(self, disc_distance):
        log_r, grad = rayleigh_quotient(disc_distance.u, 64.0)
        assert np.isfinite(log_r)
        assert np.all(np.isfinite(grad))

    def test_gradient_matches_finite_difference(self, square):
        grid = rasterize(square, 0.125)
        u = distance_field(square, grid)
        _, grad = rayleigh_quotient(u, 4.0)
        k = 24
        step = 1e-6
        bumped = u.values.copy()
        bumped[grid.inside] = bumped[grid.inside] + step * (np.arange(grid.n_inside) == k)
        up, _ = rayleigh_quotient(u.with_values(bumped), 4.0)
        bumped[grid.inside] = bumped[grid.inside] - 2.0 * step * (np.arange(grid.n_inside) == k)
        down, _ = rayleigh_quotient(u.with_values(bumped), 4.0)
        assert grad[k] == pytest.approx((up - down) / (2.0 * step), rel=1e-4, abs=1e-7)

    def test_zero_field(self, disc_grid):
        with pytest.raises(ValueError):
            rayleigh_quotient(ScalarField(disc_grid, np.zeros((disc_grid.nx, disc_grid.ny))), 2.0)


class TestDescent:
    def test_p2_matches_sparse_eigensolver(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        u, lam = solve_p_ground_state(square, grid, 2.0, SolverOptions(tolerance=1e-9))
        assert lam == pytest.approx(reference_eigenvalue_p2(grid), rel=1e-3)
        assert u.inside_values().min() >= 0.0

    def test_eigenvalue_decreases_monotonically(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        result = descend(grid, 4.0, SolverOptions(tolerance=1e-8), distance_field(square, grid))
        history = np.array(result.history)
        assert np.all(np.diff(history) <= 1e-12 * history[0])

    def test_iteration_cap_raises_with_best_iterate(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        opts = SolverOptions(max_iterations=1, tolerance=1e-15)
        with pytest.raises(NonConvergenceError) as info:
            descend(grid, 8.0, opts, distance_field(square, grid))
        assert info.value.best_iterate is not None
        assert info.value.best_lambda > 0

    def test_rejects_p_below_two(self, square):
        grid = rasterize(square, 0.125)
        with pytest.raises(ValueError):
            descend(grid, 1.5, SolverOptions(), distance_field(square, grid))


class TestLogConcavity:
    def test_distance_of_disc_is_log_concave(self, disc_distance, rng):
        report = log_concavity_check(disc_distance, 200, rng)
        assert report.passed
        assert report.value("violations") == 0

    def test_log_convex_bump_fails(self, square, rng):
        grid = rasterize(square, 1.0 / 32.0)
        # exp(2|x - c|^2) is log-convex
        u = ScalarField.from_function(grid, lambda p: np.exp(2.0 * np.sum((p - 0.5) ** 2, axis=1)))
        report = log_concavity_check(GroundState.from_field(u, square), 200, rng, slack_constant=0.1)
        assert not report.passed


class TestPreconditioner:
    def test_lagged_weights_at_p2_are_uniform(self, square):
        grid = rasterize(square, 0.125)
        wx, wy = lagged_weights(distance_field(square, grid), 2.0, floor=1e-3)
        np.testing.assert_allclose(wx, 1.001)
        np.testing.assert_allclose(wy, 1.001)

    def test_lagged_weights_bounded_by_one_plus_floor(self, square):
        grid = rasterize(square, 0.125)
        wx, wy = lagged_weights(distance_field(square, grid), 8.0, floor=1e-3)
        for w in (wx, wy):
            assert w.min() >= 1e-3
            assert w.max() <= 1.001 + 1e-12

    def test_laplacian_preconditioner_still_available(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        opts = SolverOptions(tolerance=1e-9, preconditioner="laplacian")
        _, lam = solve_p_ground_state(square, grid, 2.0, opts)
        assert lam == pytest.approx(reference_eigenvalue_p2(grid), rel=1e-3)


class TestStoppingRule:
    def test_small_decrease_alone_does_not_stop(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        # every step satisfies the decrease test, none the stationarity test
        opts = SolverOptions(tolerance=1.0, stationarity_tolerance=1e-9, max_iterations=3)
        with pytest.raises(NonConvergenceError):
            descend(grid, 4.0, opts, distance_field(square, grid))

    def test_stops_when_both_tests_hold(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        opts = SolverOptions(tolerance=1.0, stationarity_tolerance=1e9, max_iterations=50)
        result = descend(grid, 4.0, opts, distance_field(square, grid))
        assert result.iterations <= 1

    def test_returned_iterate_is_stationary(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        opts = SolverOptions(tolerance=1.0)
        result = descend(grid, 4.0, opts, distance_field(square, grid))
        assert result.residual <= opts.stationarity_tolerance


def _fake_descend(lam_of_p, fail_at=None):
    def fake(grid, p, opts, start, solve=None):
        if p == fail_at:
            raise NonConvergenceError("cap reached", best_iterate=start, best_lambda=lam_of_p(p))
        return DescentResult(u=start, lambda_p=lam_of_p(p), iterations=3, residual=1e-4, history=[lam_of_p(p)])

    return fake


class TestInfinityGroundState:
    def test_trail_and_normalization(self, square, monkeypatch):
        monkeypatch.setattr(eigensolver, "descend", _fake_descend(lambda p: 2.0 + 1.0 / p))
        grid = rasterize(square, 1.0 / 16.0)
        seed = distance_field(square, grid).scaled(3.0)
        gs = infinity_ground_state(square, grid, SolverOptions(seed_field=seed))
        assert [t.p for t in gs.trail] == [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
        assert gs.u.max() == pytest.approx(max_distance(square))
        assert gs.converged
        assert gs.lambda_inf == pytest.approx(2.0)

    def test_unconverged_exponent_keeps_best_iterate(self, square, monkeypatch):
        monkeypatch.setattr(eigensolver, "descend", _fake_descend(lambda p: 2.0 + 1.0 / p, fail_at=64))
        grid = rasterize(square, 1.0 / 16.0)
        gs = infinity_ground_state(square, grid, SolverOptions(max_iterations=7))
        assert not gs.converged
        assert math.isnan(gs.trail[-1].residual)
        assert gs.trail[-1].iterations == 7
        assert gs.trail[-1].lambda_p == pytest.approx(2.0 + 1.0 / 64.0)

    def test_far_trail_is_a_schedule_failure(self, square, monkeypatch):
        monkeypatch.setattr(eigensolver, "descend", _fake_descend(lambda p: 10.0))
        grid = rasterize(square, 1.0 / 16.0)
        with pytest.raises(ScheduleFailureError):
            infinity_ground_state(square, grid, SolverOptions())

    def test_schedule_must_reach_64(self, square):
        grid = rasterize(square, 1.0 / 16.0)
        with pytest.raises(ValueError):
            infinity_ground_state(square, grid, SolverOptions(p_schedule=(2, 4, 8)))


class TestComputedDisc:
    def test_normalized_to_max_distance(self, disc_ground_state):
        assert disc_ground_state.u.max() == pytest.approx(1.0)
        assert disc_ground_state.u.inside_values().min() >= 0.0

    def test_trail_decreases_toward_one(self, disc_ground_state):
        trail = disc_ground_state.trail
        assert [t.p for t in trail] == [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
        lams = np.array([t.lambda_p for t in trail])
        assert np.all(np.diff(lams) < 0.0)
        assert abs(lams[-1] - 1.0) < 0.2

    def test_close_to_distance(self, disc, disc_ground_state):
        grid = disc_ground_state.grid
        d = distance_field(disc, grid)
        assert np.abs(disc_ground_state.u.values - d.values)[grid.inside].max() <= 0.1
