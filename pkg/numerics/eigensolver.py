# numerics/eigensolver.py

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import eigsh, factorized

from core.exceptions import NonConvergenceError, ScheduleFailureError
from numerics.field import Grid, ScalarField, distance_field
from numerics.geometry import ConvexDomain, lambda_infinity, max_distance
from verification.report import Measurement, Report

logger = logging.getLogger(__name__)

# forward/backward difference pairings averaged in the discrete energy
_DIFF_COMBOS = ((1, 1), (1, -1), (-1, 1), (-1, -1))

PRECONDITIONERS = ("weighted", "laplacian")


@dataclass
class SolverOptions:
    max_iterations: int = 2000
    tolerance: float = 1e-7
    stationarity_tolerance: float = 1e-3
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    p_schedule: Sequence[float] = (2, 4, 8, 16, 32, 64)
    seed_field: Optional[ScalarField] = None
    continuation_tolerance: float = 0.05
    preconditioner: str = "weighted"
    refresh_every: int = 20
    weight_floor: float = 1e-3

    def __post_init__(self):
        if not self.tolerance > 0 or not self.stationarity_tolerance > 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo < 1:
            raise ValueError("line search parameters must lie in (0, 1)")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if self.refresh_every < 1 or not self.weight_floor > 0:
            raise ValueError("refresh_every must be >= 1 and weight_floor positive")
        sched = list(self.p_schedule)
        if not sched or sched[0] < 2:
            raise ValueError("p_schedule must start at an exponent >= 2")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("p_schedule must be strictly increasing")


@dataclass(frozen=True)
class TrailEntry:
    p: float
    lambda_p: float
    iterations: int
    residual: float


@dataclass
class GroundState:
    """Normalized nonnegative field plus the eigenvalue trail that produced it"""

    u: ScalarField
    trail: List[TrailEntry] = field(default_factory=list)
    normalization: str = "sup-norm-to-max-distance"
    converged: bool = False
    lambda_inf: Optional[float] = None

    def __post_init__(self):
        ps = [t.p for t in self.trail]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("trail exponents must be strictly increasing")

    @classmethod
    def from_field(cls, u: ScalarField, dom: Optional[ConvexDomain] = None) -> "GroundState":
        """Wrap a given field (for example the distance function) as a converged state"""
        lam = lambda_infinity(dom) if dom is not None else None
        return cls(u=u, trail=[], normalization="as-given", converged=True, lambda_inf=lam)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def final_lambda(self) -> Optional[float]:
        return self.trail[-1].lambda_p if self.trail else None

    def trail_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(t.p, t.lambda_p, t.iterations, t.residual) for t in self.trail],
            columns=["p", "lambda_p", "iterations", "residual"],
        )


@dataclass
class DescentResult:
    u: ScalarField
    lambda_p: float
    iterations: int
    residual: float
    history: List[float]



def weighted_laplacian(grid: Grid, wx: np.ndarray, wy: np.ndarray) -> sparse.csc_matrix:
    """Dirichlet stiffness matrix of sum_e w_e (u_a - u_b)^2 / h^2 on inside nodes.

    wx[i, j] weights the edge (i, j)-(i+1, j) and wy[i, j] the edge (i, j)-(i, j+1).
    Edges to exterior nodes keep their weight on the diagonal. Row order = grid.inside order.
    """
    inside = grid.inside
    n = int(inside.sum())
    idx = -np.ones(inside.shape, dtype=np.int64)
    idx[inside] = np.arange(n)

    diag = np.zeros(n)
    rows, cols, vals = [], [], []
    for axis, w in ((0, wx), (1, wy)):
        nb = np.roll(idx, -1, axis=axis)
        # wrap-around edges join padding nodes only
        a_in, b_in = idx >= 0, nb >= 0
        np.add.at(diag, idx[a_in], w[a_in])
        np.add.at(diag, nb[b_in], w[b_in])
        both = a_in & b_in
        rows += [idx[both], nb[both]]
        cols += [nb[both], idx[both]]
        vals += [-w[both], -w[both]]
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    a = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return (a / grid.h ** 2).tocsc()


def laplacian_matrix(grid: Grid) -> sparse.csc_matrix:
    """5-point Dirichlet Laplacian on inside nodes (row order = grid.inside order)"""
    ones = np.ones((grid.nx, grid.ny))
    return weighted_laplacian(grid, ones, ones)


def _differences(U: np.ndarray, h: float, sx: int, sy: int) -> Tuple[np.ndarray, np.ndarray]:
    if sx > 0:
        gx = (np.roll(U, -1, axis=0) - U) / h
    else:
        gx = (U - np.roll(U, 1, axis=0)) / h
    if sy > 0:
        gy = (np.roll(U, -1, axis=1) - U) / h
    else:
        gy = (U - np.roll(U, 1, axis=1)) / h
    return gx, gy


def _adjoint(q: np.ndarray, h: float, s: int, axis: int) -> np.ndarray:
    if s > 0:
        return (np.roll(q, 1, axis=axis) - q) / h
    return (q - np.roll(q, -1, axis=axis)) / h


def lagged_weights(u: ScalarField, p: float, floor: float = 1e-3) -> Tuple[np.ndarray, np.ndarray]:
    """Edge weights (|grad u| / max |grad u|)^(p-2) + floor of the linearized p-energy.

    Each combination of one-sided differences contributes to the edge its
    difference runs along; the four contributions are averaged.
    """
    grid = u.grid
    U = np.where(grid.inside, u.values, 0.0)
    norms = {c: np.hypot(*_differences(U, grid.h, *c)) for c in _DIFF_COMBOS}
    big = max(float(n.max()) for n in norms.values())
    if big == 0:
        raise ValueError("lagged weights undefined for the zero field")
    w = {c: (n / big) ** (p - 2.0) for c, n in norms.items()}
    wx = 0.25 * (w[(1, 1)] + w[(1, -1)] + np.roll(w[(-1, 1)] + w[(-1, -1)], -1, axis=0))
    wy = 0.25 * (w[(1, 1)] + w[(-1, 1)] + np.roll(w[(1, -1)] + w[(-1, -1)], -1, axis=1))
    return wx + floor, wy + floor


def _rayleigh_parts(u: ScalarField, p: float) -> Tuple[float, np.ndarray, np.ndarray]:
    grid = u.grid
    h = grid.h
    U = np.where(grid.inside, u.values, 0.0)

    diffs = [_differences(U, h, sx, sy) for sx, sy in _DIFF_COMBOS]
    norms = [np.hypot(gx, gy) for gx, gy in diffs]
    big = max(float(n.max()) for n in norms)
    top = float(np.abs(U).max())
    if big == 0 or top == 0:
        raise ValueError("Rayleigh quotient undefined for the zero field")

    scaled = [n / big for n in norms]
    s_num = sum(float(np.sum(a ** p)) for a in scaled)
    log_num = math.log(h ** 2 / 4.0) + p * math.log(big) + math.log(s_num)

    ratio = np.abs(U) / top
    t_den = float(np.sum(ratio[grid.inside] ** p))
    log_den = math.log(h ** 2) + p * math.log(top) + math.log(t_den)

    grad_num = np.zeros_like(U)
    for (sx, sy), (gx, gy), a in zip(_DIFF_COMBOS, diffs, scaled):
        w = p * a ** (p - 2.0) / (big ** 2 * s_num)
        grad_num += _adjoint(w * gx, h, sx, axis=0) + _adjoint(w * gy, h, sy, axis=1)
    grad_den = p * ratio ** (p - 1.0) * np.sign(U) / (top * t_den)

    inside = grid.inside
    return log_num - log_den, (grad_num - grad_den)[inside], grad_den[inside]


def rayleigh_quotient(u: ScalarField, p: float) -> Tuple[float, np.ndarray]:
    """log R_p(u) and its gradient with respect to the inside node values.

    Both integrals are evaluated with the largest gradient (resp. value)
    factored out so that powers up to p = 64 stay inside double range.
    """
    log_r, grad, _ = _rayleigh_parts(u, p)
    return log_r, grad


def _normalized(u_inside: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    top = u_inside.max()
    scaled = u_inside / top
    norm = top * (grid.h ** 2 * np.sum(scaled ** p)) ** (1.0 / p)
    return u_inside / norm


def _embed(grid: Grid, u_inside: np.ndarray) -> ScalarField:
    values = np.zeros((grid.nx, grid.ny))
    values[grid.inside] = u_inside
    return ScalarField(grid, values, 0.0)


def stationarity(solve, grad: np.ndarray, grad_den: np.ndarray) -> float:
    """|P^-1 grad log R| / |P^-1 grad log D| in the max norm; zero exactly at critical points"""
    num = float(np.abs(solve(grad)).max())
    den = float(np.abs(solve(grad_den)).max())
    return num / den if den > 0 else math.inf


def descend(grid: Grid, p: float, opts: SolverOptions, start: ScalarField, solve=None) -> DescentResult:
    """Preconditioned projected descent on log R_p from `start`.

    Stops when the one-step relative decrease of Lambda_p is below
    opts.tolerance and the stationarity measure is below
    opts.stationarity_tolerance. The preconditioner is either the fixed
    Laplacian (`solve` may pass its factorization) or the stiffness matrix
    of the lagged p-energy weights, refreshed every opts.refresh_every steps.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    weighted = opts.preconditioner == "weighted"
    if solve is None and not weighted:
        solve = factorized(laplacian_matrix(grid))

    u = np.clip(start.values[grid.inside], 0.0, None)
    if not u.max() > 0:
        raise ValueError("starting field must be positive somewhere")
    u = _normalized(u, grid, p)
    J, g, g_den = _rayleigh_parts(_embed(grid, u), p)

    history = [math.exp(J / p)]
    step = None
    last_dmax = None
    rel = float("inf")
    stat = float("inf")

    for iteration in range(1, opts.max_iterations + 1):
        refreshed = weighted and (iteration - 1) % opts.refresh_every == 0
        if refreshed:
            wx, wy = lagged_weights(_embed(grid, u), p, opts.weight_floor)
            solve = factorized(weighted_laplacian(grid, wx, wy))

        d = -solve(g)
        dmax = max(float(np.abs(d).max()), 1e-300)
        if step is None:
            step = 0.5 * u.max() / dmax
        elif refreshed and last_dmax is not None:
            step *= last_dmax / dmax
        last_dmax = dmax

        accepted = False
        for _ in range(opts.max_backtracks):
            v = np.clip(u + step * d, 0.0, None)
            if v.max() > 0:
                J_new, g_new, g_den_new = _rayleigh_parts(_embed(grid, v), p)
                if J_new <= J + opts.armijo * min(float(g @ (v - u)), 0.0):
                    accepted = True
                    break
            step *= opts.backtrack

        if not accepted or J_new > J:
            stat = stationarity(solve, g, g_den)
            if stat <= opts.stationarity_tolerance:
                logger.debug(f"p={p:g} iter={iteration}: line search exhausted at stationarity {stat:.3g}")
                break
            raise NonConvergenceError(
                f"p={p:g}: line search exhausted at iteration {iteration} with stationarity {stat:.3g}",
                best_iterate=_embed(grid, u),
                best_lambda=history[-1],
            )

        lam_old, lam_new = math.exp(J / p), math.exp(J_new / p)
        rel = (lam_old - lam_new) / lam_old
        u = _normalized(v, grid, p)
        J, g, g_den = J_new, g_new, g_den_new
        history.append(lam_new)
        step /= opts.backtrack

        if iteration % 100 == 0:
            logger.debug(f"p={p:g} iter={iteration}: lambda={lam_new:.8g} rel_decrease={rel:.3g}")
        if rel < opts.tolerance:
            stat = stationarity(solve, g, g_den)
            if stat <= opts.stationarity_tolerance:
                break
    else:
        raise NonConvergenceError(
            f"p={p:g}: no convergence within {opts.max_iterations} iterations "
            f"(last relative decrease {rel:.3g}, stationarity {stat:.3g})",
            best_iterate=_embed(grid, u),
            best_lambda=history[-1],
        )

    return DescentResult(
        u=_embed(grid, u),
        lambda_p=history[-1],
        iterations=len(history) - 1,
        residual=stat,
        history=history,
    )


def solve_p_ground_state(
    dom: ConvexDomain,
    grid: Grid,
    p: float,
    opts: SolverOptions,
    warm_start: Optional[ScalarField] = None
) -> Tuple[ScalarField, float]:
    """First Dirichlet p-eigenfunction (unit L^p norm) and Λ_p = R_p^{1/p}"""
    start = warm_start or opts.seed_field or distance_field(dom, grid)
    result = descend(grid, p, opts, start)
    logger.info(f"p={p:g}: lambda_p={result.lambda_p:.6g} after {result.iterations} iterations")
    return result.u, result.lambda_p


def _sup_change(a: ScalarField, b: ScalarField) -> float:
    na = a.inside_values() / a.max()
    nb = b.inside_values() / b.max()
    return float(np.abs(na - nb).max())


def infinity_ground_state(dom: ConvexDomain, grid: Grid, opts: SolverOptions) -> GroundState:
    """Continuation along opts.p_schedule, normalized so that max u = max distance.

    `converged` holds only when every exponent met the stopping rule and the
    last continuation step moved the normalized field by less than
    opts.continuation_tolerance.
    """
    sched = list(opts.p_schedule)
    if sched[0] > 2 or sched[-1] < 64:
        raise ValueError("p_schedule must cover [2, 64]")

    solve = factorized(laplacian_matrix(grid)) if opts.preconditioner == "laplacian" else None
    current = opts.seed_field or distance_field(dom, grid)
    trail: List[TrailEntry] = []
    previous: Optional[ScalarField] = None
    change = float("inf")
    unconverged: List[float] = []

    for p in sched:
        try:
            result = descend(grid, p, opts, current, solve=solve)
            u_p, lam, iters, resid = result.u, result.lambda_p, result.iterations, result.residual
        except NonConvergenceError as e:
            logger.warning(f"Continuing schedule with best iterate: {e}")
            unconverged.append(float(p))
            u_p, lam, iters, resid = e.best_iterate, e.best_lambda, opts.max_iterations, float("nan")
        trail.append(TrailEntry(p=float(p), lambda_p=lam, iterations=iters, residual=resid))
        logger.info(f"p={p:g}: lambda_p={lam:.6g} ({iters} iterations, stationarity {resid:.3g})")
        if previous is not None:
            change = _sup_change(previous, u_p)
        previous = current = u_p

    lam_inf = lambda_infinity(dom)
    gap = abs(trail[-1].lambda_p - lam_inf)
    if gap > 0.5 * lam_inf:
        raise ScheduleFailureError(
            f"schedule failure: lambda_{trail[-1].p:g}={trail[-1].lambda_p:.6g} is {gap:.3g} away from {lam_inf:.6g}"
        )

    u = current.scaled(max_distance(dom) / current.max())
    converged = change < opts.continuation_tolerance and not unconverged
    if unconverged:
        logger.warning(f"Stopping rule not met at p in {unconverged}")
    if change >= opts.continuation_tolerance:
        logger.warning(f"Last continuation step changed the normalized field by {change:.3g}")
    return GroundState(u=u, trail=trail, converged=converged, lambda_inf=lam_inf)


def reference_eigenpair_p2(grid: Grid) -> Tuple[float, ScalarField]:
    """Smallest eigenpair of the 5-point Dirichlet Laplacian by shift-invert"""
    a = laplacian_matrix(grid)
    vals, vecs = eigsh(a, k=1, sigma=0.0, which="LM")
    vec = np.abs(vecs[:, 0])
    return math.sqrt(float(vals[0])), _embed(grid, _normalized(vec, grid, 2.0))


def reference_eigenvalue_p2(grid: Grid) -> float:
    return reference_eigenpair_p2(grid)[0]


def log_concavity_check(
    gs: GroundState,
    nsegments: int,
    rng: Optional[np.random.Generator] = None,
    slack_constant: float = 10.0
) -> Report:
    """Midpoint test of log-concavity on random node pairs whose midpoint is a node"""
    if nsegments < 1:
        raise ValueError("nsegments must be positive")
    rng = rng or np.random.default_rng(0)
    u = gs.u
    grid = u.grid
    top = u.max()
    ok = grid.inside & (u.values > 0.01 * top)
    I, J = np.nonzero(ok)

    worst = -np.inf
    violations = 0
    tested = 0
    for _ in range(nsegments):
        a = rng.integers(len(I))
        # partner of equal index parity so the midpoint is a grid node
        same = np.flatnonzero(((I - I[a]) % 2 == 0) & ((J - J[a]) % 2 == 0))
        b = same[rng.integers(len(same))]
        if a == b:
            continue
        mi, mj = (I[a] + I[b]) // 2, (J[a] + J[b]) // 2
        ua, ub, um = u.values[I[a], J[a]], u.values[I[b], J[b]], u.values[mi, mj]
        if um <= 0:
            defect = np.inf
        else:
            slack = slack_constant * grid.h * top / min(ua, ub, um)
            defect = 0.5 * (math.log(ua) + math.log(ub)) - math.log(um) - slack
        tested += 1
        worst = max(worst, defect)
        violations += defect > 0

    notes = "" if gs.converged else "ground state not converged"
    return Report.from_measurements(
        "log_concavity",
        [
            Measurement("max_defect_over_slack", float(worst) if tested else 0.0, 0.0),
            Measurement.info("segments", tested),
            Measurement.info("violations", violations),
        ],
        notes=notes,
    )

