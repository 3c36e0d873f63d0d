# core/check_registry.py

import logging
from typing import Dict, List, Sequence, Type

import numpy as np
import pandas as pd

from core.base_check import BaseCheck, RunContext
from numerics.eigensolver import log_concavity_check
from numerics.field import NodeKind
from numerics.geometry import cut_locus, is_stadium_like, max_distance
from numerics.gradflow import (
    check_propagation_bound,
    coverage_check,
    entry_time_bound,
    ground_state_flow_check,
    ground_state_trajectories,
    launch_from_boundary,
)
from numerics.supconv import check_lemma_approx1, check_max_preserved, q_region_and_supine
from verification.ground_state_checks import (
    boundary_gradient_profile,
    compare_with_distance,
    eikonal_comparison,
    lambda_limit,
    residual_check,
    ridge_s_minus,
    rigidity_test,
    s_minus_check,
    semiconcavity_test,
)
from verification.report import Report

logger = logging.getLogger(__name__)


def _trajectory_table(trajectories) -> pd.DataFrame:
    frames = []
    for k, traj in enumerate(trajectories):
        frame = traj.to_frame()
        frame.insert(0, "trajectory", k)
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["trajectory", "t", "x", "y", "u", "gradnorm", "terminal"])
    return pd.concat(frames, ignore_index=True)


class StadiumLikeCheck(BaseCheck):
    name = "is_stadium_like"

    def prepare(self, ctx: RunContext):
        return None

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        h = ctx.grid.h
        self.emit("cut_locus", cut_locus(ctx.domain, h).to_frame())
        return is_stadium_like(ctx.domain, ctx.tolerances.stadium_c * h)


class LambdaLimitCheck(BaseCheck):
    name = "lambda_limit"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return lambda_limit(ctx.ground_state, ctx.domain, ctx.tolerances.lambda_rel)


class LogConcavityCheck(BaseCheck):
    name = "log_concavity"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return log_concavity_check(ctx.ground_state, ctx.tolerances.segments, rng, ctx.slack_constant)


class LemmaApprox1Check(BaseCheck):
    name = "lemma_approx1"
    needs_supconv = True
    needs_unit_frame = True

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return check_lemma_approx1(ctx.unit_state.u, ctx.supconv, rng, nsegments=ctx.tolerances.segments)


class MaxPreservedCheck(BaseCheck):
    name = "max_preserved"
    needs_supconv = True
    needs_unit_frame = True

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return check_max_preserved(ctx.unit_state.u, ctx.supconv)


class QRegionCheck(BaseCheck):
    name = "q_region"
    needs_supconv = True
    needs_unit_frame = True

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return q_region_and_supine(ctx.unit_state.u, ctx.smallest_supconv())


class FlowPropertiesCheck(BaseCheck):
    name = "flow_properties"
    needs_unit_frame = True

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        flow = ctx.config.flow
        trajectories = ground_state_trajectories(ctx.unit_state, flow.n_start, rng=rng, dt=flow.dt)
        self.emit("trajectories", _trajectory_table(trajectories))
        return ground_state_flow_check(
            ctx.unit_state,
            flow.n_start,
            slack_constant=ctx.slack_constant,
            trajectories=trajectories,
            delta=flow.delta,
        )


class PropagationBoundCheck(BaseCheck):
    name = "propagation_bound"
    needs_supconv = True
    needs_unit_frame = True

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        flow = ctx.config.flow
        return check_propagation_bound(
            ctx.smallest_supconv(),
            ctx.unit_state,
            flow.n_start,
            rng=rng,
            dt=flow.dt,
            slack_constant=ctx.slack_constant,
        )


class EntryTimeCheck(BaseCheck):
    name = "entry_time_bound"
    needs_supconv = True
    needs_unit_frame = True

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        sc = ctx.smallest_supconv()
        trajectories = launch_from_boundary(sc, ctx.config.flow.n_start, rng, dt=ctx.config.flow.dt)
        self.emit("trajectories", _trajectory_table(trajectories))
        return entry_time_bound(sc, trajectories)


class CoverageCheck(BaseCheck):
    name = "flow_coverage"
    needs_supconv = True
    needs_unit_frame = True

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        flow = ctx.config.flow
        return coverage_check(ctx.smallest_supconv(), stride=flow.coverage_stride, dt=flow.dt)


class CompareWithDistanceCheck(BaseCheck):
    name = "compare_with_distance"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return compare_with_distance(ctx.ground_state, ctx.domain, ctx.tolerances.distance_c)


class ResidualCheck(BaseCheck):
    name = "residual"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return residual_check(ctx.ground_state, ctx.domain, ctx.tolerances.residual_c)


class SMinusCheck(BaseCheck):
    name = "s_minus"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        tol = ctx.tolerances
        return s_minus_check(ctx.ground_state, ctx.domain, tol.s_minus_points, rng, tol.s_minus)


class RidgeSMinusCheck(BaseCheck):
    name = "ridge_s_minus"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return ridge_s_minus(ctx.ground_state, ctx.domain, ctx.tolerances.s_minus)


class SemiconcavityCheck(BaseCheck):
    name = "semiconcavity"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        grid = ctx.grid
        depth = ctx.domain.depth(grid.points(np.ones(grid.kind.shape, dtype=bool))).reshape(grid.nx, grid.ny)
        margin = max(3.0 * grid.h, 0.1 * max_distance(ctx.domain))
        region = (grid.kind == NodeKind.INTERIOR) & (depth >= margin)
        return semiconcavity_test(ctx.ground_state.u, region, ctx.tolerances.segments, rng)


class BoundaryFlatnessCheck(BaseCheck):
    name = "boundary_flatness"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        return boundary_gradient_profile(ctx.ground_state, ctx.domain)


class EikonalCheck(BaseCheck):
    name = "eikonal_comparison"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        tol = ctx.tolerances
        return eikonal_comparison(ctx.ground_state.u, ctx.domain, tol=tol.eikonal, c_h=tol.distance_c)


class RigidityCheck(BaseCheck):
    name = "rigidity_test"

    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        tol = ctx.tolerances
        return rigidity_test(
            ctx.ground_state,
            ctx.domain,
            tau=tol.rigidity_tau,
            sup_tol=tol.sup_distance,
            hausdorff_tol=tol.stadium_c * ctx.grid.h,
        )


CHECKS: Dict[str, Type[BaseCheck]] = {
    cls.name: cls
    for cls in (
        StadiumLikeCheck,
        LambdaLimitCheck,
        LogConcavityCheck,
        LemmaApprox1Check,
        MaxPreservedCheck,
        QRegionCheck,
        FlowPropertiesCheck,
        PropagationBoundCheck,
        EntryTimeCheck,
        CoverageCheck,
        CompareWithDistanceCheck,
        ResidualCheck,
        SMinusCheck,
        RidgeSMinusCheck,
        SemiconcavityCheck,
        BoundaryFlatnessCheck,
        EikonalCheck,
        RigidityCheck,
    )
}

CHECK_NAMES = tuple(CHECKS)


def build_checks(names: Sequence[str]) -> List[BaseCheck]:
    """Fresh check instances in registry order"""
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    return [CHECKS[n]() for n in CHECK_NAMES if n in names]


def needs_supconv(names: Sequence[str]) -> bool:
    return any(CHECKS[n].needs_supconv for n in names)
