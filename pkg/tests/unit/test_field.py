# tests/unit/test_field.py

import numpy as np
import pytest
import sympy

from core.exceptions import GridTooCoarseError, OutsideHullError
from numerics.field import (
    PAD_CELLS,
    NodeKind,
    ScalarField,
    distance_field,
    gradient,
    hessian,
    infinity_laplacian,
    interpolate,
    lp_norm,
    rasterize,
    sphere_max,
    sup_norm,
    write_pgm,
)


class TestRasterize:
    def test_padding_and_size(self, square):
        grid = rasterize(square, 0.125)
        assert grid.nx == grid.ny == 9 + 2 * PAD_CELLS
        assert grid.origin == pytest.approx((-2 * 0.125, -2 * 0.125))

    def test_boundary_nodes_are_exterior(self, square):
        grid = rasterize(square, 0.125)
        i, j = grid.nearest_node((0.0, 0.5))
        assert grid.kind[i, j] == NodeKind.EXTERIOR
        i, j = grid.nearest_node((0.125, 0.5))
        assert grid.kind[i, j] == NodeKind.BOUNDARY_ADJACENT
        i, j = grid.nearest_node((0.5, 0.5))
        assert grid.kind[i, j] == NodeKind.INTERIOR

    def test_square_inside_count(self, square):
        grid = rasterize(square, 0.125)
        assert grid.n_inside == 7 * 7

    def test_too_coarse(self, square):
        with pytest.raises(GridTooCoarseError):
            rasterize(square, 0.3)

    def test_half_inradius_accepted(self, square):
        grid = rasterize(square, 0.25)
        assert grid.n_inside == 9

    def test_nonpositive_spacing(self, disc):
        with pytest.raises(ValueError):
            rasterize(disc, 0.0)


class TestScalarField:
    def test_exterior_forced_to_boundary_value(self, disc_grid):
        f = ScalarField(disc_grid, np.full((disc_grid.nx, disc_grid.ny), 7.0))
        assert np.all(f.values[~disc_grid.inside] == 0.0)
        assert np.all(f.values[disc_grid.inside] == 7.0)

    def test_values_are_read_only(self, disc_grid):
        f = ScalarField(disc_grid, np.zeros((disc_grid.nx, disc_grid.ny)))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_non_finite_rejected(self, disc_grid):
        values = np.zeros((disc_grid.nx, disc_grid.ny))
        i, j = disc_grid.nearest_node((0.0, 0.0))
        values[i, j] = np.nan
        with pytest.raises(ValueError):
            ScalarField(disc_grid, values)

    def test_shape_mismatch(self, disc_grid):
        with pytest.raises(ValueError):
            ScalarField(disc_grid, np.zeros((3, 3)))

    def test_to_frame_columns(self, square):
        grid = rasterize(square, 0.25)
        frame = distance_field(square, grid).to_frame()
        assert list(frame.columns) == ["i", "j", "x", "y", "value"]
        assert len(frame) == grid.nx * grid.ny
        assert frame["value"].max() == pytest.approx(0.5)

    def test_norms(self, square):
        grid = rasterize(square, 0.125)
        one = ScalarField.from_function(grid, lambda pts: np.ones(len(pts)))
        assert sup_norm(one) == 1.0
        assert lp_norm(one, 2.0) == pytest.approx(0.125 * 7.0)


class TestDerivatives:
    def test_gradient_exact_on_linear(self, disc_grid):
        f = ScalarField.from_function(disc_grid, lambda p: 2.0 * p[:, 0] - 3.0 * p[:, 1])
        g = gradient(f)
        core = disc_grid.full_stencil
        np.testing.assert_allclose(g.x[core], 2.0, atol=1e-9)
        np.testing.assert_allclose(g.y[core], -3.0, atol=1e-9)

    def test_hessian_exact_on_quadratic(self, disc_grid):
        f = ScalarField.from_function(disc_grid, lambda p: p[:, 0] ** 2 + 3.0 * p[:, 0] * p[:, 1] - p[:, 1] ** 2)
        fxx, fxy, fyy = hessian(f)
        core = disc_grid.full_stencil
        np.testing.assert_allclose(fxx[core], 2.0, atol=1e-7)
        np.testing.assert_allclose(fxy[core], 3.0, atol=1e-7)
        np.testing.assert_allclose(fyy[core], -2.0, atol=1e-7)

    def test_infinity_laplacian_of_quadratic(self, disc_grid):
        # u = x^2: grad = (2x, 0), Hessian xx = 2, so the operator is 8 x^2
        f = ScalarField.from_function(disc_grid, lambda p: p[:, 0] ** 2)
        lap = infinity_laplacian(f)
        X, _ = disc_grid.mesh
        core = disc_grid.full_stencil
        np.testing.assert_allclose(lap.values[core], 8.0 * X[core] ** 2, atol=1e-6)

    def test_infinity_laplacian_against_symbolic(self, disc):
        x, y = sympy.symbols("x y")
        expr = sympy.sin(x) * sympy.cos(2 * y) + x * y
        gx, gy = sympy.diff(expr, x), sympy.diff(expr, y)
        exact = sympy.lambdify(
            (x, y),
            gx ** 2 * sympy.diff(expr, x, 2) + 2 * gx * gy * sympy.diff(expr, x, y) + gy ** 2 * sympy.diff(expr, y, 2),
            "numpy",
        )
        fn = sympy.lambdify((x, y), expr, "numpy")

        grid = rasterize(disc, 1.0 / 64.0)
        f = ScalarField.from_function(grid, lambda p: fn(p[:, 0], p[:, 1]))
        X, Y = grid.mesh
        deep = (grid.kind == NodeKind.INTERIOR) & (np.hypot(X, Y) < 0.5)
        lap = infinity_laplacian(f).values[deep]
        np.testing.assert_allclose(lap, exact(X[deep], Y[deep]), atol=2e-2)

    def test_infinity_laplacian_of_distance_small_away_from_center(self, disc):
        grid = rasterize(disc, 1.0 / 64.0)
        d = distance_field(disc, grid)
        X, Y = grid.mesh
        far = (grid.kind == NodeKind.INTERIOR) & (np.hypot(X, Y) > 0.4) & (np.hypot(X, Y) < 0.9)
        assert np.abs(infinity_laplacian(d).values[far]).max() < 0.05

    def test_boundary_adjacent_nodes_read_the_dirichlet_extension(self, square):
        grid = rasterize(square, 0.125)
        one = ScalarField.from_function(grid, lambda pts: np.ones(len(pts)))
        g = gradient(one)
        fxx, _, _ = hessian(one)
        i, j = grid.nearest_node((0.125, 0.5))
        assert grid.kind[i, j] == NodeKind.BOUNDARY_ADJACENT
        # left neighbour is exterior and holds the boundary value 0
        assert g.x[i, j] == pytest.approx(1.0 / (2.0 * 0.125))
        assert g.y[i, j] == pytest.approx(0.0)
        assert fxx[i, j] == pytest.approx(-1.0 / 0.125 ** 2)
        i, j = grid.nearest_node((0.5, 0.5))
        assert g.x[i, j] == 0.0 and fxx[i, j] == 0.0

    def test_full_stencil_excludes_nodes_next_to_the_exterior(self, square):
        grid = rasterize(square, 0.125)
        assert grid.full_stencil.sum() == 5 * 5
        assert not np.any(grid.full_stencil & grid.boundary_adjacent)


class TestInterpolation:
    def test_exact_on_linear(self, disc_grid):
        f = ScalarField.from_function(disc_grid, lambda p: 1.0 + p[:, 0] + 2.0 * p[:, 1])
        pts = np.array([[0.013, -0.27], [0.5, 0.5], [-0.31, 0.11]])
        np.testing.assert_allclose(interpolate(f, pts), 1.0 + pts[:, 0] + 2.0 * pts[:, 1], atol=1e-12)
        assert interpolate(f, (0.1, 0.2)) == pytest.approx(1.5)

    def test_outside_hull(self, disc_grid):
        f = ScalarField(disc_grid, np.zeros((disc_grid.nx, disc_grid.ny)))
        with pytest.raises(OutsideHullError):
            interpolate(f, (5.0, 0.0))

    def test_sphere_max_of_linear(self, disc_grid):
        f = ScalarField.from_function(disc_grid, lambda p: p[:, 0])
        value, point = sphere_max(f, (0.0, 0.0), 0.25, nsamples=64)
        assert value == pytest.approx(0.25)
        np.testing.assert_allclose(point, [0.25, 0.0], atol=1e-12)

    def test_sphere_max_needs_samples(self, disc_grid):
        f = ScalarField(disc_grid, np.zeros((disc_grid.nx, disc_grid.ny)))
        with pytest.raises(ValueError):
            sphere_max(f, (0.0, 0.0), 0.1, nsamples=8)


class TestPgm:
    def test_header_and_sidecar(self, tmp_path):
        data = np.arange(12, dtype=float).reshape(4, 3)
        path = write_pgm(tmp_path / "field.pgm", data)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n4 3\n65535\n")
        assert len(raw) == len(b"P5\n4 3\n65535\n") + 4 * 3 * 2
        sidecar = tmp_path / "field.pgm.scale.txt"
        assert sidecar.read_text() == "min 0\nmax 11\n"
