# numerics/geometry.py

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linprog
from scipy.spatial.distance import directed_hausdorff

from core.exceptions import (
    DegenerateProjectionError,
    InvalidDomainError,
    OutsideDomainError,
)
from verification.report import Measurement, Report

logger = logging.getLogger(__name__)

DISC = "disc"
POLYGON = "polygon"
STADIUM = "stadium"
PARALLEL_SET = "parallel_set"

FINITE = "finite"
SEGMENT = "segment"
POLYLINE = "polyline"


@dataclass(frozen=True, eq=False)
class PointSet:
    """Finite sample of a planar set; `segments` keeps exact pieces when known"""

    points: np.ndarray
    kind_tag: str
    segments: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if self.kind_tag not in (FINITE, SEGMENT, POLYLINE):
            raise ValueError(f"unknown kind_tag {self.kind_tag}")
        if self.kind_tag != FINITE and len(pts) < 2:
            raise ValueError(f"{self.kind_tag} point set needs at least 2 points")

    def __len__(self) -> int:
        return len(self.points)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "x": self.points[:, 0],
            "y": self.points[:, 1],
            "tag": self.kind_tag,
        })

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")


def hausdorff(a: PointSet, b: PointSet) -> float:
    """Symmetric Hausdorff distance between two sampled sets"""
    pa = np.atleast_2d(getattr(a, "points", a))
    pb = np.atleast_2d(getattr(b, "points", b))
    return float(max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0]))


def densify(segments: Sequence[Tuple[np.ndarray, np.ndarray]], resolution: float) -> np.ndarray:
    """Sample every segment at spacing <= resolution, endpoints included"""
    chunks = []
    for p, q in segments:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        n = max(1, int(math.ceil(np.linalg.norm(q - p) / resolution)))
        s = np.linspace(0.0, 1.0, n + 1)[:, None]
        chunks.append(p + s * (q - p))
    pts = np.vstack(chunks)
    _, idx = np.unique(np.round(pts, 12), axis=0, return_index=True)
    return pts[np.sort(idx)]


class ConvexDomain:
    """Planar convex domain {x : dist(x, core) < radius} or a convex polygon.

    The core is a point (disc), a segment (stadium) or a strictly convex CCW
    polygon (polygon when radius == 0, parallel set otherwise). Every distance
    quantity is closed form: d(x) = radius - s_core(x), s_core the signed
    distance to the core.
    """

    def __init__(self, kind: str, core: np.ndarray, radius: float):
        self.kind = kind
        self.core = np.atleast_2d(np.asarray(core, dtype=float))
        self.radius = float(radius)
        self._validate()

        if len(self.core) >= 3:
            edges = np.roll(self.core, -1, axis=0) - self.core
            lengths = np.linalg.norm(edges, axis=1)
            # outward normals of a CCW polygon
            self._normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / lengths[:, None]
            self._offsets = np.einsum("ij,ij->i", self._normals, self.core)
        else:
            self._normals = None
            self._offsets = None

        lo = self.core.min(axis=0) - self.radius
        hi = self.core.max(axis=0) + self.radius
        self.bounding_box = (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    # Constructors

    @classmethod
    def disc(cls, center: Sequence[float] = (0.0, 0.0), radius: float = 1.0) -> "ConvexDomain":
        return cls(DISC, np.array([center], dtype=float), radius)

    @classmethod
    def polygon(cls, vertices: Sequence[Sequence[float]]) -> "ConvexDomain":
        return cls(POLYGON, np.array(vertices, dtype=float), 0.0)

    @classmethod
    def stadium(cls, spine: Sequence[Sequence[float]], radius: float) -> "ConvexDomain":
        return cls(STADIUM, np.array(spine, dtype=float), radius)

    @classmethod
    def parallel_set(cls, vertices: Sequence[Sequence[float]], radius: float) -> "ConvexDomain":
        return cls(PARALLEL_SET, np.array(vertices, dtype=float), radius)

    @classmethod
    def square(cls, side: float = 1.0) -> "ConvexDomain":
        return cls.polygon([(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)])

    def _validate(self) -> None:
        if self.kind == DISC:
            if len(self.core) != 1 or not self.radius > 0:
                raise InvalidDomainError("disc needs one center and radius > 0")
        elif self.kind == STADIUM:
            if len(self.core) != 2 or not self.radius > 0:
                raise InvalidDomainError("stadium needs a two-point spine and radius > 0")
            if np.linalg.norm(self.core[1] - self.core[0]) == 0:
                raise InvalidDomainError("stadium spine endpoints coincide")
        elif self.kind in (POLYGON, PARALLEL_SET):
            if len(self.core) < 3:
                raise InvalidDomainError("polygon needs at least 3 vertices")
            if self.kind == POLYGON and self.radius != 0:
                raise InvalidDomainError("polygon radius must be 0")
            if self.kind == PARALLEL_SET and not self.radius > 0:
                raise InvalidDomainError("parallel set radius must be > 0")
            e = np.roll(self.core, -1, axis=0) - self.core
            cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
            if np.any(cross <= 0):
                raise InvalidDomainError("polygon must be strictly convex and counter-clockwise")
        else:
            raise InvalidDomainError(f"unknown domain kind {self.kind}")

    @property
    def scale(self) -> float:
        x0, y0, x1, y1 = self.bounding_box
        return max(x1 - x0, y1 - y0)

    def describe(self) -> str:
        return f"{self.kind}(core={self.core.tolist()}, radius={self.radius:g})"

    def rescaled(self, factor: float) -> "ConvexDomain":
        """Homothety about the origin"""
        return ConvexDomain(self.kind, self.core * factor, self.radius * factor)

    # Core distance

    def _segment_foot(self, pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ab = b - a
        t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
        foot = a + t[:, None] * ab
        return np.linalg.norm(pts - foot, axis=1), foot

    def core_signed_distance(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if len(self.core) == 1:
            return np.linalg.norm(pts - self.core[0], axis=1)
        if len(self.core) == 2:
            return self._segment_foot(pts, self.core[0], self.core[1])[0]

        lines = pts @ self._normals.T - self._offsets
        inside = np.all(lines <= 0.0, axis=1)
        outside_dist = np.min(
            np.column_stack([
                self._segment_foot(pts, self.core[i], self.core[(i + 1) % len(self.core)])[0]
                for i in range(len(self.core))
            ]),
            axis=1,
        )
        return np.where(inside, np.max(lines, axis=1), outside_dist)

    def depth(self, pts) -> np.ndarray:
        """Signed distance to the boundary, positive inside"""
        return self.radius - self.core_signed_distance(pts)

    def chebyshev_radius(self) -> float:
        """Inradius of the core (0 for point and segment cores)"""
        if len(self.core) < 3:
            return 0.0
        return _chebyshev_center(self._normals, self._offsets)[1]


def _chebyshev_center(normals: np.ndarray, offsets: np.ndarray) -> Tuple[np.ndarray, float]:
    a_ub = np.hstack([normals, np.ones((len(normals), 1))])
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=a_ub,
        b_ub=offsets,
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    if not res.success:
        raise InvalidDomainError(f"max inscribed circle LP failed: {res.message}")
    return res.x[:2], float(res.x[2])


def _as_point(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(2)


def distance(dom: ConvexDomain, x) -> float:
    """Exact distance from x to the boundary of dom"""
    x = _as_point(x)
    d = float(dom.depth(x[None, :])[0])
    if d < -1e-12 * dom.scale:
        raise OutsideDomainError(x)
    return max(d, 0.0)


def _arc(center: np.ndarray, radius: float, theta0: float, sweep: float, samples: int) -> np.ndarray:
    n = max(2, int(math.ceil(samples * sweep / (2.0 * math.pi))) + 1)
    full = math.isclose(sweep, 2.0 * math.pi)
    thetas = theta0 + np.linspace(0.0, sweep, n, endpoint=not full)
    return center + radius * np.column_stack([np.cos(thetas), np.sin(thetas)])


def projection_set(dom: ConvexDomain, x, tol: float = 1e-9, circle_samples: int = 64) -> PointSet:
    """Boundary points realizing distance(x) within tol"""
    x = _as_point(x)
    d = float(dom.depth(x[None, :])[0])
    if d < -tol:
        raise OutsideDomainError(x)
    if d <= tol:
        raise DegenerateProjectionError(f"point {tuple(x)} lies on the boundary")

    r = dom.radius
    core = dom.core
    s = float(dom.core_signed_distance(x[None, :])[0])

    if s > tol:
        # unique nearest core point
        if len(core) == 1:
            foot = core[0]
        elif len(core) == 2:
            foot = dom._segment_foot(x[None, :], core[0], core[1])[1][0]
        else:
            k = len(core)
            cands = [dom._segment_foot(x[None, :], core[i], core[(i + 1) % k]) for i in range(k)]
            foot = cands[int(np.argmin([c[0][0] for c in cands]))][1][0]
        direction = (x - foot) / np.linalg.norm(x - foot)
        return PointSet(foot + r * direction, FINITE)

    if len(core) >= 3 and s < -tol:
        lines = dom._normals @ x - dom._offsets
        active = np.flatnonzero(lines >= lines.max() - tol)
        pts = np.array([x + (-lines[i] + r) * dom._normals[i] for i in active])
        return PointSet(pts, FINITE)

    # x on the core: boundary points x + r * (outward normal cone)
    if len(core) == 1:
        return PointSet(_arc(x, r, 0.0, 2.0 * math.pi, circle_samples), POLYLINE)

    if len(core) == 2:
        a, b = core
        u = (b - a) / np.linalg.norm(b - a)
        n = np.array([-u[1], u[0]])
        t = float((x - a) @ u)
        length = float(np.linalg.norm(b - a))
        if t <= tol:
            theta0 = math.atan2(n[1], n[0])
            return PointSet(_arc(x, r, theta0, math.pi, circle_samples), POLYLINE)
        if t >= length - tol:
            theta0 = math.atan2(-n[1], -n[0])
            return PointSet(_arc(x, r, theta0, math.pi, circle_samples), POLYLINE)
        return PointSet(np.array([x + r * n, x - r * n]), FINITE)

    lines = dom._normals @ x - dom._offsets
    active = np.flatnonzero(np.abs(lines) <= tol)
    if len(active) == 1:
        return PointSet(x + r * dom._normals[active[0]], FINITE)
    # vertex: edges i-1 and i meet; normals turn counter-clockwise
    k = len(core)
    first, second = (active[0], active[1]) if (active[0] + 1) % k == active[1] else (active[1], active[0])
    t0 = math.atan2(dom._normals[first][1], dom._normals[first][0])
    t1 = math.atan2(dom._normals[second][1], dom._normals[second][0])
    sweep = (t1 - t0) % (2.0 * math.pi)
    return PointSet(_arc(x, r, t0, sweep, circle_samples), POLYLINE)


def max_distance(dom: ConvexDomain) -> float:
    return dom.radius + dom.chebyshev_radius()


def high_ridge(dom: ConvexDomain, tol: float = 1e-9) -> PointSet:
    """Argmax set of the distance function: a point or a segment"""
    core = dom.core
    if len(core) == 1:
        return PointSet(core.copy(), FINITE)
    if len(core) == 2:
        return PointSet(core.copy(), SEGMENT, segments=core[None, :, :].copy())

    center, rho = _chebyshev_center(dom._normals, dom._offsets)
    relax = tol * dom.scale
    extremes = []
    for direction in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)):
        res = linprog(
            c=np.asarray(direction, dtype=float),
            A_ub=dom._normals,
            b_ub=dom._offsets - rho + relax,
            bounds=[(None, None), (None, None)],
            method="highs",
        )
        if res.success:
            extremes.append(res.x)
    extremes = np.array(extremes)
    gaps = np.linalg.norm(extremes[:, None, :] - extremes[None, :, :], axis=2)
    i, j = np.unravel_index(np.argmax(gaps), gaps.shape)
    if gaps[i, j] <= 1e3 * relax:
        return PointSet(center[None, :], FINITE)
    seg = np.array([extremes[i], extremes[j]])
    return PointSet(seg, SEGMENT, segments=seg[None, :, :].copy())


def _concurrency(normals: np.ndarray, offsets: np.ndarray, idx: Sequence[int]) -> Optional[Tuple[np.ndarray, float]]:
    """Point at equal inner offset t from three edge lines"""
    a = np.hstack([normals[list(idx)], np.ones((3, 1))])
    if abs(np.linalg.det(a)) < 1e-14:
        return None
    sol = np.linalg.solve(a, offsets[list(idx)])
    return sol[:2], float(sol[2])


def polygon_skeleton(vertices: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Medial axis of a convex polygon as a list of straight arcs.

    Wavefront propagation: every edge line moves inward at unit speed and
    the earliest edge to shrink to a point is removed; each removal closes
    the two bisector arcs of its endpoints.
    """
    active = list(range(len(vertices)))
    starts = [vertices[i].copy() for i in active]  # vertex m sits between active[m-1] and active[m]
    arcs: List[Tuple[np.ndarray, np.ndarray]] = []
    t_now = 0.0
    eps = 1e-12 * max(1.0, float(np.abs(vertices).max()))

    while len(active) > 3:
        k = len(active)
        events = []
        for m in range(k):
            hit = _concurrency(normals, offsets, (active[m - 1], active[m], active[(m + 1) % k]))
            if hit is not None and hit[1] >= t_now - eps:
                events.append((hit[1], m, hit[0]))
        if not events:
            break
        t_min = min(e[0] for e in events)
        collapse = {m: p for t, m, p in events if t <= t_min + 1e-9 * max(1.0, t_min)}
        for m, p in collapse.items():
            arcs.append((starts[m], p))
            arcs.append((starts[(m + 1) % k], p))

        new_active, new_starts = [], []
        for m in range(k):
            if m in collapse:
                continue
            prev = (m - 1) % k
            new_starts.append(collapse[prev] if prev in collapse else starts[m])
            new_active.append(active[m])
        active, starts = new_active, new_starts
        t_now = t_min

    if len(active) == 3:
        hit = _concurrency(normals, offsets, active)
        if hit is not None:
            for s in starts:
                arcs.append((s, hit[0]))
    elif len(active) == 2:
        arcs.append((starts[0], starts[1]))

    unique = []
    for p, q in arcs:
        if np.linalg.norm(p - q) <= eps:
            continue
        if any(
            (np.allclose(p, a) and np.allclose(q, b)) or (np.allclose(p, b) and np.allclose(q, a))
            for a, b in unique
        ):
            continue
        unique.append((np.asarray(p), np.asarray(q)))
    return unique


def cut_locus(dom: ConvexDomain, resolution: float) -> PointSet:
    """Medial axis of the domain (skeleton of its core), sampled at `resolution`"""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    core = dom.core
    if len(core) == 1:
        return PointSet(core.copy(), FINITE)
    if len(core) == 2:
        return PointSet(densify([(core[0], core[1])], resolution), SEGMENT, segments=core[None, :, :].copy())
    arcs = polygon_skeleton(core, dom._normals, dom._offsets)
    logger.debug(f"Skeleton of {dom.describe()} has {len(arcs)} arcs")
    return PointSet(densify(arcs, resolution), POLYLINE, segments=np.array([[p, q] for p, q in arcs]))


def _densified(ps: PointSet, resolution: float) -> np.ndarray:
    if ps.segments is None:
        return ps.points
    return densify([(s[0], s[1]) for s in ps.segments], resolution)


def is_stadium_like(dom: ConvexDomain, tol: float) -> Report:
    """Cut locus equals high ridge up to Hausdorff distance tol"""
    resolution = tol / 4.0
    cut = _densified(cut_locus(dom, resolution), resolution)
    ridge_set = high_ridge(dom)
    ridge = _densified(ridge_set, resolution)
    gap = hausdorff(cut, ridge)

    passed = gap <= tol
    if not passed:
        tag = "not-stadium"
    elif ridge_set.kind_tag == FINITE:
        tag = "disc"
    else:
        tag = "segment-parallel-set"

    logger.info(f"is_stadium_like {dom.describe()}: hausdorff={gap:.6g} tag={tag}")
    return Report(
        name="is_stadium_like",
        passed=passed,
        measurements=[Measurement("hausdorff_cut_high", gap, tol)],
        notes=f"classification={tag}",
    )


def lambda_infinity(dom: ConvexDomain) -> float:
    return 1.0 / max_distance(dom)
