# numerics/supconv.py

import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import binary_erosion, distance_transform_edt

from core.exceptions import EpsilonTooLargeError
from numerics.field import ScalarField, VectorField, gradient, hessian, infinity_laplacian
from numerics.geometry import hausdorff
from verification.report import Measurement, Report

logger = logging.getLogger(__name__)


def _upper_envelope(f: List[float], a: float) -> Tuple[List[float], List[int]]:
    """max_k f[k] - a*(i - k)^2 for every i, with the maximizing k.

    Lower envelope of the parabolas a*(i - k)^2 - f[k] (Felzenszwalb-Huttenlocher).
    """
    n = len(f)
    g = [-x for x in f]
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    z[0], z[1] = -math.inf, math.inf

    def meet(q: int, r: int) -> float:
        return ((g[q] + a * q * q) - (g[r] + a * r * r)) / (2.0 * a * (q - r))

    for q in range(1, n):
        s = meet(q, v[k])
        while s <= z[k]:
            k -= 1
            s = meet(q, v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = math.inf

    out = [0.0] * n
    arg = [0] * n
    k = 0
    for i in range(n):
        while z[k + 1] < i:
            k += 1
        r = v[k]
        arg[i] = r
        out[i] = f[r] - a * (i - r) * (i - r)
    return out, arg


def _transform(values: np.ndarray, a: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    nx, ny = values.shape
    rows = np.empty_like(values)
    arg_i = np.empty(values.shape, dtype=np.int64)
    for j in range(ny):
        out, arg = _upper_envelope(values[:, j].tolist(), a)
        rows[:, j] = out
        arg_i[:, j] = arg

    result = np.empty_like(values)
    arg_j = np.empty(values.shape, dtype=np.int64)
    for i in range(nx):
        out, arg = _upper_envelope(rows[i, :].tolist(), a)
        result[i, :] = out
        arg_j[i, :] = arg

    # the row pass chose i* for the column j* selected by the column pass
    best_i = arg_i[np.arange(nx)[:, None], arg_j]
    return result, best_i, arg_j


def sup_convolution_with_argmax(u: ScalarField, epsilon: float) -> Tuple[ScalarField, np.ndarray]:
    """u^eps and the maximizing node y(x) as coordinates, shape (nx, ny, 2)"""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    grid = u.grid
    a = grid.h ** 2 / (2.0 * epsilon)

    start = time.perf_counter()
    values, best_i, best_j = _transform(np.asarray(u.values, dtype=float), a)
    logger.debug(f"Sup-convolution eps={epsilon:g} on {grid.nx}x{grid.ny} took {time.perf_counter() - start:.3f}s")

    argmax = np.stack([
        grid.origin[0] + grid.h * best_i,
        grid.origin[1] + grid.h * best_j,
    ], axis=-1)
    return ScalarField(grid, values, u.boundary_value), argmax


def sup_convolution(u: ScalarField, epsilon: float) -> ScalarField:
    """u^eps(x) = max over grid nodes y of u(y) - |x - y|^2 / (2 eps)"""
    return sup_convolution_with_argmax(u, epsilon)[0]


def brute_force_sup_convolution(u: ScalarField, epsilon: float) -> ScalarField:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    grid = u.grid
    pts = np.column_stack([c.ravel() for c in grid.mesh])
    vals = u.values.ravel()
    out = np.empty(len(pts))
    for k, x in enumerate(pts):
        d2 = np.sum((pts - x) ** 2, axis=1)
        out[k] = np.max(vals - d2 / (2.0 * epsilon))
    return ScalarField(grid, out.reshape(grid.nx, grid.ny), u.boundary_value)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Nodes of mask with a 4-neighbour outside mask"""
    padded = np.pad(mask, 1, constant_values=False)
    full = padded[2:, 1:-1] & padded[:-2, 1:-1] & padded[1:-1, 2:] & padded[1:-1, :-2]
    return mask & ~full


@dataclass(frozen=True, eq=False)
class SupConvResult:
    epsilon: float
    u_eps: ScalarField
    rho: float
    U_eps: np.ndarray
    A_eps: np.ndarray
    Omega_eps: np.ndarray
    M_eps: np.ndarray
    m_eps: float
    u_max: float
    b_eps: float
    c_eps: float
    y_map: VectorField
    argmax: np.ndarray

    @property
    def boundary_A(self) -> np.ndarray:
        return mask_boundary(self.A_eps)

    @property
    def boundary_Omega(self) -> np.ndarray:
        return mask_boundary(self.Omega_eps)

    def masks(self):
        return {
            "U_eps": self.U_eps,
            "A_eps": self.A_eps,
            "Omega_eps": self.Omega_eps,
            "M_eps": self.M_eps,
        }


def c_epsilon(b_eps: float, epsilon: float) -> float:
    return b_eps + 0.5 * epsilon * (1.0 - b_eps) ** 2


def build_eps_sets(
    u: ScalarField,
    u_eps: ScalarField,
    epsilon: float,
    argmax: Optional[np.ndarray] = None
) -> SupConvResult:
    """Sets U_eps, A_eps, Omega_eps, M_eps and the maps attached to them.

    A field that vanishes identically gives empty sets; any other field whose
    A_eps is empty raises EpsilonTooLargeError.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    grid = u.grid
    top = u.max()
    rho = 2.0 * math.sqrt(epsilon * max(top, 0.0))

    U = grid.inside & (u.values > epsilon)
    A = U & (distance_transform_edt(U) * grid.h > rho)
    if not A.any() and top > 0:
        raise EpsilonTooLargeError(
            f"epsilon too large: A_eps is empty for eps={epsilon:g} (rho={rho:.4g}, max u={top:.4g})"
        )

    grad = gradient(u_eps)
    gnorm = np.hypot(grad.x, grad.y)

    dA = mask_boundary(A)
    m_eps = float(u_eps.values[dA].max()) if dA.any() else 0.0
    Omega = A & (u_eps.values > m_eps)

    dOmega = mask_boundary(Omega)
    b_eps = float(1.0 - gnorm[dOmega].min()) if dOmega.any() else float("nan")
    c_eps = c_epsilon(b_eps, epsilon)
    M = Omega & (u_eps.values > top - c_eps) if np.isfinite(c_eps) else np.zeros_like(Omega)

    X, Y = grid.mesh
    y_map = VectorField(grid, np.stack([X + epsilon * grad.x, Y + epsilon * grad.y], axis=-1))
    if argmax is None:
        argmax = np.stack([X, Y], axis=-1)

    result = SupConvResult(
        epsilon=epsilon,
        u_eps=u_eps,
        rho=rho,
        U_eps=U,
        A_eps=A,
        Omega_eps=Omega,
        M_eps=M,
        m_eps=m_eps,
        u_max=top,
        b_eps=b_eps,
        c_eps=c_eps,
        y_map=y_map,
        argmax=argmax,
    )
    logger.debug(summary_text(result))
    return result


def convolve(u: ScalarField, epsilon: float) -> SupConvResult:
    u_eps, argmax = sup_convolution_with_argmax(u, epsilon)
    return build_eps_sets(u, u_eps, epsilon, argmax=argmax)


def summary_text(sc: SupConvResult) -> str:
    return (
        f"eps={sc.epsilon:g} rho={sc.rho:.6g} m_eps={sc.m_eps:.6g} "
        f"b_eps={sc.b_eps:.6g} c_eps={sc.c_eps:.6g} "
        f"|U|={int(sc.U_eps.sum())} |A|={int(sc.A_eps.sum())} "
        f"|Omega|={int(sc.Omega_eps.sum())} |M|={int(sc.M_eps.sum())}"
    )


def _midpoint_pairs(mask: np.ndarray, n: int, rng: np.random.Generator) -> List[Tuple[Tuple[int, int], ...]]:
    """Random node pairs in mask whose midpoint is a grid node"""
    I, J = np.nonzero(mask)
    pairs = []
    if len(I) < 2:
        return pairs
    for _ in range(n):
        a = rng.integers(len(I))
        same = np.flatnonzero(((I - I[a]) % 2 == 0) & ((J - J[a]) % 2 == 0))
        b = same[rng.integers(len(same))]
        if a == b:
            continue
        pairs.append(((I[a], J[a]), (I[b], J[b]), ((I[a] + I[b]) // 2, (J[a] + J[b]) // 2)))
    return pairs


def lipschitz_estimate(u: ScalarField) -> float:
    grad = gradient(u)
    return float(np.hypot(grad.x, grad.y)[u.grid.inside].max())


def smooth_region(u: ScalarField, core: np.ndarray, hess_cap: float, margin: float) -> Tuple[np.ndarray, float]:
    """Core nodes whose neighbourhood of radius `margin` has discrete Hessian norm <= hess_cap"""
    fxx, fxy, fyy = hessian(u)
    frob = np.sqrt(fxx ** 2 + 2.0 * fxy ** 2 + fyy ** 2)
    tame = core & (frob <= hess_cap)
    steps = int(math.ceil(margin / u.grid.h))
    if steps > 0:
        tame = binary_erosion(tame, iterations=steps)
    hmax = float(frob[tame].max()) if tame.any() else 0.0
    return tame, hmax


def check_lemma_approx1(
    u: ScalarField,
    results: Sequence[SupConvResult],
    rng: Optional[np.random.Generator] = None,
    nsegments: int = 200,
    core_level: Optional[float] = None,
    tolerance: Optional[float] = None
) -> Report:
    """Semiconvexity, uniform convergence and gradient convergence of u^eps"""
    rng = rng or np.random.default_rng(0)
    grid = u.grid
    top = u.max()
    if top <= 0 or not results:
        return Report.from_measurements(
            "lemma_approx1",
            [
                Measurement("semiconvexity_defect", 0.0, 0.0),
                Measurement("sup_error_smallest_eps", 0.0, 0.0),
                Measurement("gradient_error_smallest_eps", 0.0, 0.0),
            ],
            notes="identically zero field" if top <= 0 else "no epsilon supplied",
        )

    ordered = sorted(results, key=lambda r: -r.epsilon)
    level = 0.3 * top if core_level is None else core_level
    core = grid.inside & (u.values > level)
    X, Y = grid.mesh
    lip = lipschitz_estimate(u)

    # (a) x -> u^eps(x) + |x|^2/(2 eps) is midpoint convex on Omega_eps
    worst_convexity = 0.0
    for sc in ordered:
        w = sc.u_eps.values + (X ** 2 + Y ** 2) / (2.0 * sc.epsilon)
        scale = float(np.abs(w[grid.inside]).max())
        for pa, pb, pm in _midpoint_pairs(sc.Omega_eps, nsegments, rng):
            defect = w[pm] - 0.5 * (w[pa] + w[pb])
            worst_convexity = max(worst_convexity, defect / max(scale, 1.0))

    # (b) sup |u^eps - u| over the core decreases with eps
    errors = [float(np.abs(sc.u_eps.values - u.values)[core].max()) if core.any() else 0.0 for sc in ordered]
    increases = sum(1 for e0, e1 in zip(errors, errors[1:]) if e1 > e0 + 1e-12)
    smallest = ordered[-1]
    sup_tol = tolerance if tolerance is not None else smallest.epsilon * lip ** 2 / 2.0 + grid.h * lip

    # (c) gradient error where u is smooth
    tame, hmax = smooth_region(u, core, hess_cap=1.0 / (10.0 * grid.h), margin=smallest.rho)
    grad_u, grad_e = gradient(u), gradient(smallest.u_eps)
    if tame.any():
        gerr = float(np.hypot(grad_e.x - grad_u.x, grad_e.y - grad_u.y)[tame].max())
    else:
        gerr = 0.0
    grad_tol = 2.0 * smallest.epsilon * hmax * lip + 4.0 * grid.h * max(hmax, 1.0)

    measurements = [
        Measurement("semiconvexity_defect", worst_convexity, 1e-9),
        Measurement("sup_error_increases", increases, 0),
        Measurement("sup_error_smallest_eps", errors[-1], sup_tol),
        Measurement("gradient_error_smallest_eps", gerr, grad_tol),
        Measurement.info("smooth_nodes", int(tame.sum())),
    ]
    for sc, err in zip(ordered, errors):
        measurements.append(Measurement.info(f"sup_error_eps_{sc.epsilon:g}", err))
    for (s0, e0), (s1, e1) in zip(zip(ordered, errors), zip(ordered[1:], errors[1:])):
        if e1 > 0:
            measurements.append(Measurement.info(f"sup_error_ratio_{s0.epsilon:g}_{s1.epsilon:g}", e0 / e1))

    return Report.from_measurements("lemma_approx1", measurements)


def check_max_preserved(u: ScalarField, results: Sequence[SupConvResult]) -> Report:
    """max and argmax of u^eps over closure(Omega_eps) agree with those of u"""
    grid = u.grid
    top = u.max()
    lip = lipschitz_estimate(u) if top > 0 else 0.0
    argmax_u = u.argmax_points(rel_tol=1e-12)

    measurements = []
    notes = []
    for sc in sorted(results, key=lambda r: -r.epsilon):
        region = sc.Omega_eps | mask_boundary(sc.Omega_eps)
        if not region.any():
            notes.append(f"eps={sc.epsilon:g}: Omega_eps empty")
            continue
        vals = np.where(region, sc.u_eps.values, -np.inf)
        top_eps = float(vals.max())
        argmax_eps = grid.points(region & (vals >= top_eps - 1e-12 * abs(top_eps)))
        measurements.append(Measurement(f"max_gap_eps_{sc.epsilon:g}", abs(top_eps - top), 2.0 * grid.h * lip))
        measurements.append(Measurement(f"argmax_hausdorff_eps_{sc.epsilon:g}", hausdorff(argmax_u, argmax_eps), 2.0 * grid.h))

    if not measurements:
        return Report.vacuous("max_preserved", "; ".join(notes) or "no epsilon supplied")
    return Report.from_measurements("max_preserved", measurements, notes="; ".join(notes))


def q_region(sc: SupConvResult) -> np.ndarray:
    """Nodes of Omega_eps with u^eps < |grad u^eps| - (eps/2)|grad u^eps|^2"""
    grad = gradient(sc.u_eps)
    g = np.hypot(grad.x, grad.y)
    return sc.Omega_eps & (sc.u_eps.values < g - 0.5 * sc.epsilon * g ** 2)


def q_region_and_supine(u: ScalarField, sc: SupConvResult, tol_residual: Optional[float] = None) -> Report:
    """Fraction of Q_eps where u^eps is numerically infinity-subharmonic"""
    Q = q_region(sc)
    if not Q.any():
        logger.warning(f"Q_eps is empty at eps={sc.epsilon:g}")
        return Report.vacuous("q_region", f"Q_eps empty at eps={sc.epsilon:g}", [Measurement.info("q_nodes", 0)])

    tol = 10.0 * u.grid.h if tol_residual is None else tol_residual
    minus_lap = -infinity_laplacian(sc.u_eps).values[Q]
    fraction = float(np.mean(minus_lap <= tol))
    return Report.from_measurements(
        "q_region",
        [
            Measurement("subharmonic_fraction", fraction, 0.99, sense="ge"),
            Measurement.info("q_nodes", int(Q.sum())),
            Measurement.info("max_minus_inf_laplacian", float(minus_lap.max())),
            Measurement.info("epsilon", sc.epsilon),
        ],
    )
