# numerics/gradflow.py

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.ndimage import distance_transform_edt

from core.exceptions import CriticalStartError, HypothesisViolatedError, OutsideHullError
from numerics.field import ScalarField, bilinear, gradient, hessian, interpolate, sphere_max
from numerics.geometry import hausdorff
from numerics.supconv import SupConvResult, mask_boundary
from verification.report import Measurement, Report

logger = logging.getLogger(__name__)

ENTERED_TARGET = "entered_target"
LEFT_GRID = "left_grid"
STALLED = "stalled"


@dataclass(eq=False)
class Trajectory:
    """Sampled flow curve; `step` is dt for the ODE flow and delta for the sphere-max scheme"""

    t: np.ndarray
    points: np.ndarray
    u_val: np.ndarray
    grad_norm: np.ndarray
    terminal: str
    step: float
    h: float
    hessian_bound: float = 0.0
    entry_time: Optional[float] = None

    def __len__(self) -> int:
        return len(self.t)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t,
            "x": self.points[:, 0],
            "y": self.points[:, 1],
            "u": self.u_val,
            "gradnorm": self.grad_norm,
            "terminal": self.terminal,
        })


class FlowField:
    """Interpolated value, gradient and Hessian norm of a scalar field.

    The gradient is extended to exterior nodes by its value at the nearest
    inside node so that bilinear reads next to the boundary are not damped.
    """

    def __init__(self, f: ScalarField):
        self.f = f
        grid = f.grid
        grad = gradient(f)
        _, (ii, jj) = distance_transform_edt(~grid.inside, return_indices=True)
        self._gx = grad.x[ii, jj]
        self._gy = grad.y[ii, jj]
        fxx, fxy, fyy = hessian(f)
        self._hess = np.sqrt(fxx ** 2 + 2.0 * fxy ** 2 + fyy ** 2)[ii, jj]
        norms = np.hypot(grad.x, grad.y)[grid.inside]
        self.gmax = float(norms.max()) if norms.size else 0.0

    def value(self, x) -> float:
        return interpolate(self.f, x)

    def gradient(self, x) -> np.ndarray:
        grid = self.f.grid
        return np.array([bilinear(grid, self._gx, x), bilinear(grid, self._gy, x)])

    def hessian_norm(self, x) -> float:
        return float(bilinear(self.f.grid, self._hess, x))


def _start_checks(ff: FlowField, x0: np.ndarray, stall: float) -> None:
    if not ff.f.grid.in_hull(x0[None, :])[0]:
        raise OutsideHullError(f"start point {tuple(x0)} is outside the grid hull")
    g0 = np.linalg.norm(ff.gradient(x0))
    if g0 <= stall:
        raise CriticalStartError(f"starting in critical set: |grad f({tuple(x0)})| = {g0:.3g}")


def _crossing(t0: float, t1: float, u0: float, u1: float, level: float) -> float:
    if u1 == u0:
        return t1
    return t0 + (t1 - t0) * (level - u0) / (u1 - u0)


def flow_ode(
    f: ScalarField,
    x0,
    dt: float,
    stop_level: float,
    max_time: float,
    stall_fraction: float = 1e-6,
    flow_field: Optional[FlowField] = None
) -> Trajectory:
    """Normalized gradient flow x' = grad f / |grad f| with the classical RK4 step"""
    if not dt > 0:
        raise ValueError("dt must be positive")
    ff = flow_field or FlowField(f)
    stall = stall_fraction * ff.gmax
    x = np.asarray(x0, dtype=float).reshape(2)
    _start_checks(ff, x, stall)

    def direction(p: np.ndarray) -> np.ndarray:
        if not ff.f.grid.in_hull(p[None, :])[0]:
            raise OutsideHullError("flow left the grid hull")
        g = ff.gradient(p)
        n = np.linalg.norm(g)
        if n <= stall:
            raise CriticalStartError("flow reached the critical set")
        return g / n

    t = 0.0
    u = ff.value(x)
    ts, xs, us, gs, hs = [t], [x.copy()], [u], [np.linalg.norm(ff.gradient(x))], [ff.hessian_norm(x)]
    terminal = STALLED
    entry = None

    if u > stop_level:
        terminal, entry = ENTERED_TARGET, 0.0

    while terminal != ENTERED_TARGET and t < max_time - 1e-12:
        try:
            k1 = direction(x)
            k2 = direction(x + 0.5 * dt * k1)
            k3 = direction(x + 0.5 * dt * k2)
            k4 = direction(x + dt * k3)
            x_new = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            if not ff.f.grid.in_hull(x_new[None, :])[0]:
                raise OutsideHullError("flow left the grid hull")
        except OutsideHullError:
            terminal = LEFT_GRID
            break
        except CriticalStartError:
            terminal = STALLED
            break

        u_new = ff.value(x_new)
        if u_new < u:
            # ascent lost to interpolation round-off near a critical point
            terminal = STALLED
            break
        g_new = float(np.linalg.norm(ff.gradient(x_new)))
        if g_new <= stall:
            terminal = STALLED
            break

        if u_new > stop_level:
            entry = _crossing(t, t + dt, u, u_new, stop_level)
            terminal = ENTERED_TARGET
        t += dt
        x, u = x_new, u_new
        ts.append(t)
        xs.append(x.copy())
        us.append(u)
        gs.append(g_new)
        hs.append(ff.hessian_norm(x))

    logger.debug(f"ODE flow from {tuple(np.round(np.asarray(x0, dtype=float), 4))}: {terminal} after {len(ts)} samples")
    return Trajectory(
        t=np.array(ts),
        points=np.array(xs),
        u_val=np.array(us),
        grad_norm=np.array(gs, dtype=float),
        terminal=terminal,
        step=dt,
        h=f.grid.h,
        hessian_bound=float(max(hs)),
        entry_time=entry,
    )


def flow_discrete(
    f: ScalarField,
    x0,
    delta: float,
    stop_level: float,
    nsamples: int = 64,
    max_steps: Optional[int] = None,
    stall_fraction: float = 1e-6,
    flow_field: Optional[FlowField] = None
) -> Trajectory:
    """x_j = argmax of f over the circle of radius delta around x_{j-1}"""
    if not delta > 0:
        raise ValueError("delta must be positive")
    ff = flow_field or FlowField(f)
    x = np.asarray(x0, dtype=float).reshape(2)
    _start_checks(ff, x, stall_fraction * ff.gmax)

    grid = f.grid
    if max_steps is None:
        span = grid.h * max(grid.nx, grid.ny)
        max_steps = int(math.ceil(4.0 * span / delta))

    u = ff.value(x)
    ts, xs, us, gs, hs = [0.0], [x.copy()], [u], [np.linalg.norm(ff.gradient(x))], [ff.hessian_norm(x)]
    terminal = STALLED
    entry = 0.0 if u > stop_level else None
    if entry is not None:
        terminal = ENTERED_TARGET

    step = 0
    while terminal != ENTERED_TARGET and step < max_steps:
        try:
            u_new, x_new = sphere_max(f, x, delta, nsamples)
        except OutsideHullError:
            terminal = LEFT_GRID
            break
        if u_new <= u:
            terminal = STALLED
            break
        step += 1
        t = step * delta
        if u_new > stop_level:
            entry = _crossing(t - delta, t, u, u_new, stop_level)
            terminal = ENTERED_TARGET
        x, u = x_new, u_new
        ts.append(t)
        xs.append(x.copy())
        us.append(u)
        gs.append(float(np.linalg.norm(ff.gradient(x))))
        hs.append(ff.hessian_norm(x))

    return Trajectory(
        t=np.array(ts),
        points=np.array(xs),
        u_val=np.array(us),
        grad_norm=np.array(gs, dtype=float),
        terminal=terminal,
        step=delta,
        h=grid.h,
        hessian_bound=float(max(hs)),
        entry_time=entry,
    )


def trajectory_hausdorff(a: Trajectory, b: Trajectory) -> float:
    return hausdorff(a.points, b.points)


def flow_slack(traj: Trajectory, constant: float = 10.0) -> float:
    """C * (h + step) * Lip(grad f) with Lip read from the Hessian along the curve"""
    return constant * (traj.h + traj.step) * max(traj.hessian_bound, 1e-12)


def flow_diagnostics(
    traj: Trajectory,
    slack: Optional[float] = None,
    affine_tol: Optional[float] = None,
    gradient_spread_tol: Optional[float] = None,
    slack_constant: float = 10.0
) -> Report:
    """Monotone |grad u|, convex u and (optionally) affine u along a trajectory"""
    if len(traj) < 3:
        raise ValueError("flow diagnostics need at least 3 samples")
    s = flow_slack(traj, slack_constant) if slack is None else slack

    dg = np.diff(traj.grad_norm)
    d2u = np.diff(traj.u_val, n=2)
    mean_g = float(np.mean(traj.grad_norm))
    spread = float((traj.grad_norm.max() - traj.grad_norm.min()) / mean_g) if mean_g > 0 else 0.0

    measurements = [
        Measurement("min_gradnorm_increment", float(dg.min()), -s, sense="ge"),
        Measurement("min_second_difference", float(d2u.min()), -s * traj.step, sense="ge"),
        Measurement("affinity_defect", float(np.abs(d2u).max()), affine_tol),
        Measurement("gradnorm_spread", spread, gradient_spread_tol),
        Measurement.info("samples", len(traj)),
        Measurement.info("slack", s),
    ]
    return Report.from_measurements("flow_properties", measurements, notes=f"terminal={traj.terminal}")


def _pick_nodes(mask: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    I, J = np.nonzero(mask)
    if len(I) == 0:
        return np.empty((0, 2), dtype=int)
    take = rng.choice(len(I), size=min(n, len(I)), replace=False)
    take.sort()
    return np.column_stack([I[take], J[take]])


def resolved_level(sc: SupConvResult, cells: float = 3.0) -> Tuple[float, bool]:
    """Top of the flow target: u_max - c_eps, lowered to `cells` grid lengths of ascent below the maximum.

    Near a kinked maximum M_eps shrinks below one cell and interpolated
    gradients are damped there, so flows stop where the grid still resolves
    the field. The flag reports whether the level was lowered.
    """
    target = sc.u_max - sc.c_eps
    if not sc.Omega_eps.any():
        return target, False
    grad = gradient(sc.u_eps)
    gmax = float(np.hypot(grad.x, grad.y)[sc.Omega_eps].max())
    cap = sc.u_max - cells * sc.u_eps.grid.h * gmax
    if cap < target:
        return cap, True
    return target, False


def check_propagation_bound(
    sc: SupConvResult,
    gs,
    n_start: int,
    rng: Optional[np.random.Generator] = None,
    dt: Optional[float] = None,
    slack_constant: float = 10.0
) -> Report:
    """Gradient lower bound 1 - b_eps propagated from the boundary of Omega_eps into it"""
    rng = rng or np.random.default_rng(0)
    grid = sc.u_eps.grid
    if not sc.Omega_eps.any():
        return Report.vacuous("propagation_bound", f"Omega_eps empty at eps={sc.epsilon:g}")
    if not sc.b_eps < 1:
        raise HypothesisViolatedError(f"hypothesis violated: b_eps={sc.b_eps:.4g} >= 1")

    top = gs.u.max()
    level, limited = resolved_level(sc)
    floor = 1.0 - sc.b_eps
    node_slack = slack_constant * (grid.h + sc.epsilon)
    dt = dt or grid.h / 2.0

    ff = FlowField(sc.u_eps)
    monotone_bad = 0
    floor_bad = 0
    launched = 0
    critical = 0
    for i, j in _pick_nodes(mask_boundary(sc.Omega_eps), n_start, rng):
        try:
            traj = flow_ode(sc.u_eps, grid.point(i, j), dt, level, max_time=4.0 * top / max(floor, 0.1), flow_field=ff)
        except CriticalStartError:
            critical += 1
            continue
        launched += 1
        before = traj.u_val <= level
        g = traj.grad_norm[before]
        traj_slack = slack_constant * (grid.h + dt) * max(traj.hessian_bound, 1.0) * dt
        if len(g) > 1 and np.diff(g).min() < -traj_slack:
            monotone_bad += 1
        if len(g) and g.min() < floor - node_slack:
            floor_bad += 1

    region = sc.Omega_eps & ~sc.M_eps & (sc.u_eps.values <= level)
    grad = gradient(sc.u_eps)
    gnorm = np.hypot(grad.x, grad.y)[region]
    fraction = float(np.mean(gnorm >= floor - node_slack)) if gnorm.size else 1.0

    return Report.from_measurements(
        "propagation_bound",
        [
            Measurement("node_fraction_above_floor", fraction, 0.99, sense="ge"),
            Measurement("trajectories_losing_monotonicity", monotone_bad, 0),
            Measurement("trajectories_below_floor", floor_bad, 0),
            Measurement.info("b_eps", sc.b_eps),
            Measurement.info("c_eps", sc.c_eps),
            Measurement.info("level", level),
            Measurement.info("resolution_limited", limited),
            Measurement.info("trajectories", launched),
            Measurement.info("critical_starts", critical),
        ],
        notes=f"eps={sc.epsilon:g}",
    )


def launch_from_boundary(
    sc: SupConvResult,
    n_start: int,
    rng: np.random.Generator,
    dt: Optional[float] = None
) -> List[Trajectory]:
    """Flows of u^eps from nodes of the boundary of Omega_eps up to M_eps (see resolved_level)"""
    grid = sc.u_eps.grid
    dt = dt or grid.h / 2.0
    level, _ = resolved_level(sc)
    if not sc.Omega_eps.any() or not np.isfinite(level):
        return []
    ff = FlowField(sc.u_eps)
    out = []
    for i, j in _pick_nodes(mask_boundary(sc.Omega_eps), n_start, rng):
        try:
            out.append(flow_ode(sc.u_eps, grid.point(i, j), dt, level, max_time=4.0 * max(sc.u_max, 1.0), flow_field=ff))
        except CriticalStartError:
            continue
    return out


def entry_time_bound(sc: SupConvResult, trajectories: Sequence[Trajectory], tol: Optional[float] = None) -> Report:
    """Entry time into M_eps is at most max u^eps / alpha_eps"""
    grid = sc.u_eps.grid
    level, limited = resolved_level(sc)
    region = (sc.Omega_eps | mask_boundary(sc.Omega_eps)) & ~sc.M_eps & (sc.u_eps.values <= level)
    entered = [t for t in trajectories if t.terminal == ENTERED_TARGET and t.entry_time is not None]
    if not region.any() or not entered:
        return Report.vacuous("entry_time_bound", "no trajectory entered M_eps")

    grad = gradient(sc.u_eps)
    alpha = float(np.hypot(grad.x, grad.y)[region].min())
    if alpha <= 0:
        return Report.vacuous("entry_time_bound", "alpha_eps vanishes on Omega_eps outside M_eps")

    top = float(sc.u_eps.values[grid.inside].max())
    bound = top / alpha
    slack = tol if tol is not None else 2.0 * (max(t.step for t in entered) + grid.h)
    worst = max(t.entry_time for t in entered)
    return Report.from_measurements(
        "entry_time_bound",
        [
            Measurement("max_entry_time", worst, bound + slack),
            Measurement.info("alpha_eps", alpha),
            Measurement.info("bound", bound),
            Measurement.info("resolution_limited", limited),
            Measurement.info("trajectories", len(entered)),
        ],
    )


def coverage_check(
    sc: SupConvResult,
    stride: int = 2,
    dt: Optional[float] = None,
    sectors: int = 8
) -> Report:
    """Backward flows from Omega_eps outside M_eps reach the boundary of Omega_eps"""
    grid = sc.u_eps.grid
    region = sc.Omega_eps & ~sc.M_eps
    if not region.any():
        return Report.vacuous("flow_coverage", "Omega_eps outside M_eps has no nodes")
    if stride < 1:
        raise ValueError("stride must be >= 1")

    dt = dt or grid.h / 2.0
    reverse = sc.u_eps.scaled(-1.0)
    ff = FlowField(reverse)
    I, J = np.nonzero(region)
    keep = (I % stride == 0) & (J % stride == 0)
    if not keep.any():
        keep[:] = True
    I, J = I[keep], J[keep]

    top = float(sc.u_eps.values[sc.Omega_eps].max())
    covered = np.zeros(len(I), dtype=bool)
    for k, (i, j) in enumerate(zip(I, J)):
        try:
            traj = flow_ode(reverse, grid.point(i, j), dt, -sc.m_eps, max_time=4.0 * max(top, 1.0), flow_field=ff)
        except CriticalStartError:
            continue
        covered[k] = traj.terminal == ENTERED_TARGET

    fraction = float(covered.mean())
    notes = ""
    if not covered.all():
        center = grid.points(sc.M_eps).mean(axis=0) if sc.M_eps.any() else grid.points(sc.Omega_eps).mean(axis=0)
        pts = np.column_stack([grid.xs[I[~covered]], grid.ys[J[~covered]]]) - center
        angles = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
        hit = sorted(set((angles // (2.0 * np.pi / sectors)).astype(int).tolist()))
        notes = f"uncovered starts in angular sectors {hit} of {sectors}"
    return Report.from_measurements(
        "flow_coverage",
        [
            Measurement("covered_fraction", fraction, 0.95, sense="ge"),
            Measurement.info("starts", len(I)),
        ],
        notes=notes,
    )


GROUND_STATE_BAND = (0.2, 0.6)
GROUND_STATE_LEVEL = 0.9


def ground_state_trajectories(
    gs,
    n_start: int,
    rng: Optional[np.random.Generator] = None,
    dt: Optional[float] = None
) -> List[Trajectory]:
    """Flows of u from a band 0.2 < u/max u < 0.6 up to the level 0.9 max u"""
    rng = rng or np.random.default_rng(0)
    u = gs.u
    grid = u.grid
    top = u.max()
    dt = dt or grid.h / 2.0
    lo, hi = GROUND_STATE_BAND
    band = grid.interior & (u.values > lo * top) & (u.values < hi * top)
    ff = FlowField(u)

    out = []
    for i, j in _pick_nodes(band, n_start, rng):
        try:
            out.append(flow_ode(u, grid.point(i, j), dt, GROUND_STATE_LEVEL * top, max_time=2.0 * top, flow_field=ff))
        except CriticalStartError:
            continue
    return out


def summarize_flows(
    trajectories: Sequence[Trajectory],
    spread_tol: Optional[float] = 0.05,
    slack_constant: float = 10.0,
    name: str = "flow_properties"
) -> Report:
    """flow_diagnostics over a batch: monotonicity counted, worst gradient spread asserted"""
    spreads = []
    failures = 0
    for traj in trajectories:
        if len(traj) < 3:
            continue
        report = flow_diagnostics(traj, slack_constant=slack_constant)
        spreads.append(report.value("gradnorm_spread"))
        failures += not report.passed

    if not spreads:
        return Report.vacuous(name, "no trajectory with enough samples")
    return Report.from_measurements(
        name,
        [
            Measurement("diagnostics_failures", failures, 0),
            Measurement("max_gradnorm_spread", float(max(spreads)), spread_tol),
            Measurement.info("trajectories", len(spreads)),
        ],
    )


def _path_length(traj: Trajectory) -> float:
    return float(np.linalg.norm(np.diff(traj.points, axis=0), axis=1).sum())


def cross_check_discrete(
    gs,
    trajectories: Sequence[Trajectory],
    delta: Optional[float] = None,
    nsamples: int = 64,
    count: int = 4
) -> List[Measurement]:
    """Re-run the first `count` entered ODE flows with the sphere-max scheme and compare the curves.

    The two curves may differ by the sampling steps plus the angular
    resolution of the sphere search accumulated over the path.
    """
    u = gs.u
    h = u.grid.h
    delta = delta or 2.0 * h
    entered = [t for t in trajectories if t.terminal == ENTERED_TARGET and len(t) > 1][:count]
    if not entered:
        return [Measurement.info("cross_checked", 0)]

    ff = FlowField(u)
    level = GROUND_STATE_LEVEL * u.max()
    worst = 0.0
    allowed = math.inf
    for traj in entered:
        disc = flow_discrete(u, traj.points[0], delta, level, nsamples=nsamples, flow_field=ff)
        gap = trajectory_hausdorff(traj, disc)
        tol = 2.0 * (h + delta) + 2.0 * _path_length(traj) * math.pi / nsamples
        if gap - tol > worst - allowed:
            worst, allowed = gap, tol
    logger.debug(f"Discrete flow cross-check on {len(entered)} trajectories: worst gap {worst:.4g} (allowed {allowed:.4g})")
    return [
        Measurement("max_ode_discrete_hausdorff", worst, allowed),
        Measurement.info("cross_checked", len(entered)),
    ]


def ground_state_flow_check(
    gs,
    n_start: int,
    rng: Optional[np.random.Generator] = None,
    dt: Optional[float] = None,
    spread_tol: Optional[float] = 0.05,
    slack_constant: float = 10.0,
    trajectories: Optional[Sequence[Trajectory]] = None,
    delta: Optional[float] = None,
    nsamples: int = 64,
    cross_checks: int = 4
) -> Report:
    """|grad u| stays constant along flows of u started away from its maximum set,
    and the sphere-max scheme follows the same curves"""
    if trajectories is None:
        trajectories = ground_state_trajectories(gs, n_start, rng=rng, dt=dt)
    summary = summarize_flows(trajectories, spread_tol=spread_tol, slack_constant=slack_constant)
    if summary.verdict == "vacuous":
        return summary
    measurements = summary.measurements + cross_check_discrete(gs, trajectories, delta, nsamples, cross_checks)
    return Report.from_measurements("flow_properties", measurements)
