"""Timing balls, their intersection, and verifier placement checks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import cdist

from .errors import MeasurementRejected, UsageError
from .spacetime import SPEED_OF_LIGHT, Position

# refuse grids with more columns than this; callers coarsen the resolution instead
MAX_GRID_COLUMNS = 4_000_000


@dataclass(frozen=True)
class Ball:
    center: Position
    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius >= 0):
            raise UsageError(f"ball radius must be finite and non-negative, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.dim


@dataclass(frozen=True)
class Region:
    """Intersection of closed balls."""

    balls: tuple[Ball, ...]

    def __post_init__(self):
        balls = tuple(self.balls)
        if not balls:
            raise UsageError("a region needs at least one ball")
        if len({b.dim for b in balls}) != 1:
            raise UsageError("all balls in a region must share a dimension")
        object.__setattr__(self, "balls", balls)

    @property
    def dim(self) -> int:
        return self.balls[0].dim

    def refined(self, ball: Ball) -> "Region":
        return Region(self.balls + (ball,))

    def describe(self) -> str:
        parts = [f"({b.center}, {b.radius:.6g})" for b in self.balls]
        return "[" + ", ".join(parts) + "]"


def ball_from_timing(
    send_time: float,
    receive_time: float,
    delta1: float,
    delta2: float,
    center: Position,
    speed: float = SPEED_OF_LIGHT,
) -> Ball:
    """Ball implied by a round trip: half the corrected round-trip time times the speed.

    Raises MeasurementRejected when the reply came back sooner than the
    processing time alone allows.
    """
    corrected = receive_time - send_time - delta1 - delta2
    if corrected < 0:
        raise MeasurementRejected(
            f"reply returned {-corrected:.3e} s earlier than processing allows"
        )
    return Ball(center, speed * corrected / 2.0)


def ball_from_one_way(
    completion_time: float,
    receive_time: float,
    slack: float,
    center: Position,
    speed: float = SPEED_OF_LIGHT,
) -> Ball:
    """Ball for a scheduled transmission that should have completed at ``completion_time``.

    ``slack`` is how early the sender may legitimately have completed
    (transmit jitter plus clock offset bound).
    """
    elapsed = receive_time - completion_time + slack
    if elapsed < 0:
        raise MeasurementRejected(f"reply arrived {-elapsed:.3e} s before it could have been sent")
    return Ball(center, speed * elapsed)


def region_contains(region: Region, p: Position, atol: float = 1e-9) -> bool:
    """True iff ``p`` lies in every ball; ``atol`` (metres) absorbs float rounding."""
    if p.dim != region.dim:
        raise UsageError(f"dimension mismatch: point {p.dim}, region {region.dim}")
    return all(b.center.distance(p) <= b.radius + atol for b in region.balls)


def _centers_radii(region: Region) -> tuple[np.ndarray, np.ndarray]:
    centers = np.array([b.center.coords for b in region.balls])
    radii = np.array([b.radius for b in region.balls])
    return centers, radii


def region_witness(region: Region) -> Optional[np.ndarray]:
    """A point inside the region, or None if the balls have no common point."""
    centers, radii = _centers_radii(region)
    if region.dim == 1:
        lo, hi = np.max(centers[:, 0] - radii), np.min(centers[:, 0] + radii)
        return np.array([(lo + hi) / 2]) if lo <= hi else None
    scale = max(float(np.max(radii)), 1.0)
    # minimise s subject to |x - c_k|^2 - r_k^2 <= s, in units of the largest radius
    c, r = centers / scale, radii / scale
    order = np.argsort(r)
    x0 = np.append(c[order[0]], float(np.max(np.sum((c - c[order[0]]) ** 2, axis=1) - r**2)))
    cons = {
        "type": "ineq",
        "fun": lambda z: z[-1] - (np.sum((z[:-1] - c) ** 2, axis=1) - r**2),
        "jac": lambda z: np.hstack([-2 * (z[:-1] - c), np.ones((len(r), 1))]),
    }
    res = minimize(lambda z: z[-1], x0, jac=lambda z: np.eye(len(z))[-1],
                   constraints=[cons], method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    x = res.x[:-1] * scale
    inside = np.linalg.norm(centers - x, axis=1) <= radii + 1e-9 * scale
    return x if inside.all() else None


def region_is_empty(region: Region) -> bool:
    return region_witness(region) is None


def _farthest_pair_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    try:
        points = points[ConvexHull(points).vertices]
    except (QhullError, ValueError):
        pass
    best = 0.0
    chunk = max(1, 2_000_000 // len(points))
    for start in range(0, len(points), chunk):
        best = max(best, float(cdist(points[start : start + chunk], points).max()))
    return best


def region_bounding_box(region: Region) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Axis-aligned box ``(lo, hi)`` containing the region, or None when it is empty.

    Each face comes from a convex solve (extreme coordinate subject to the
    ball constraints); the box is widened by a small safety margin to cover
    solver tolerance.
    """
    centers, radii = _centers_radii(region)
    d = region.dim
    if d == 1:
        lo, hi = np.max(centers[:, 0] - radii), np.min(centers[:, 0] + radii)
        return (np.array([lo]), np.array([hi])) if lo <= hi else None
    x0 = region_witness(region)
    if x0 is None:
        return None
    lo = np.max(centers - radii[:, None], axis=0)
    hi = np.min(centers + radii[:, None], axis=0)
    scale = max(float(np.max(radii)), 1.0)
    c, r, z0 = centers / scale, radii / scale, x0 / scale
    cons = {
        "type": "ineq",
        "fun": lambda z: r**2 - np.sum((z - c) ** 2, axis=1),
        "jac": lambda z: -2 * (z - c),
    }
    for a in range(d):
        for sign in (1.0, -1.0):
            e = np.zeros(d)
            e[a] = sign
            res = minimize(lambda z: e @ z, z0, jac=lambda z: e, constraints=[cons],
                           method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
            if res.success:
                v = res.x[a] * scale
                if sign > 0:
                    lo[a] = max(lo[a], v)
                else:
                    hi[a] = min(hi[a], v)
    margin = 1e-6 * scale
    return lo - margin, hi + margin


def effective_resolution(region: Region, resolution: float, max_cells: int) -> float:
    """``resolution`` coarsened so the grid spans at most ``max_cells`` cells per axis."""
    box = region_bounding_box(region)
    if box is None or region.dim == 1:
        return resolution
    extent = float(np.max(box[1] - box[0]))
    return max(resolution, extent / max_cells)


def _cell_meets_region(lo: np.ndarray, hi: np.ndarray, centers, radii) -> bool:
    """True iff the axis-aligned cell [lo, hi] shares a point with every ball at once."""
    scale = max(float(np.max(radii)), 1.0)
    c, r = centers / scale, radii / scale
    blo, bhi = lo / scale, hi / scale
    x0 = np.clip(np.mean(c, axis=0), blo, bhi)
    z0 = np.append(x0, float(np.max(np.sum((c - x0) ** 2, axis=1) - r**2)))
    cons = {
        "type": "ineq",
        "fun": lambda z: z[-1] - (np.sum((z[:-1] - c) ** 2, axis=1) - r**2),
        "jac": lambda z: np.hstack([-2 * (z[:-1] - c), np.ones((len(r), 1))]),
    }
    bounds = list(zip(blo, bhi)) + [(None, None)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # SLSQP clipping chatter
        res = minimize(lambda z: z[-1], z0, jac=lambda z: np.eye(len(z))[-1], bounds=bounds,
                       constraints=[cons], method="SLSQP", options={"ftol": 1e-14, "maxiter": 300})
    if not res.success:
        return True  # undecided: keep the cell, the bound stays valid
    return bool(res.x[-1] <= 1e-9)


def _dual_weights(k: int, steps: int = 64) -> np.ndarray:
    """Weight vectors on the simplex: every vertex and a sweep along every edge."""
    rows = [np.eye(k)]
    t = np.linspace(0, 1, steps + 1)[1:-1]
    for a in range(k):
        for b in range(a + 1, k):
            w = np.zeros((len(t), k))
            w[:, a], w[:, b] = t, 1 - t
            rows.append(w)
    return np.vstack(rows)


def _cells_meet_region(los: np.ndarray, his: np.ndarray, centers, radii) -> np.ndarray:
    """Vectorised version of ``_cell_meets_region`` for many cells.

    Cheap certificates settle most cells: a feasible point found by
    alternating projections proves contact; a weighted sum of the ball
    constraints that stays positive over the whole cell proves there is
    none. Only the rest go to the exact solver.
    """
    scale = max(float(np.max(radii)), 1.0)
    c, r = centers / scale, radii / scale
    lo, hi = los / scale, his / scale
    # declaring contact only ever keeps a cell, so that side may be lenient
    meet_tol, sep_tol = 1e-7, 1e-9

    # contact: project alternately onto the cell and each ball
    x = np.clip(np.mean(c, axis=0), lo, hi)
    for _ in range(60):
        for k in range(len(r)):
            v = x - c[k]
            dist = np.linalg.norm(v, axis=1)
            far = dist > r[k]
            x[far] = c[k] + v[far] * (r[k] / dist[far])[:, None]
        x = np.clip(x, lo, hi)
    excess = np.max(np.linalg.norm(x[:, None, :] - c[None], axis=2) - r, axis=1)
    meets = excess <= meet_tol

    # separation: min over the cell of sum_k w_k (|x - c_k|^2 - r_k^2) > 0.
    # Any weights giving a positive minimum prove the cell misses the region.
    sq = np.sum(c**2, axis=1) - r**2

    def dual(w, idx):
        total = w.sum(axis=-1)
        cbar = (w @ c) / total[..., None]
        const = w @ sq - total * np.sum(cbar**2, axis=-1)
        near = np.clip(cbar, lo[idx, None], hi[idx, None])
        return total * np.sum((near - cbar) ** 2, axis=-1) + const

    w = _dual_weights(len(r))
    undecided = np.flatnonzero(~meets)
    separated = np.zeros(len(lo), dtype=bool)
    for start in range(0, len(undecided), 256):
        idx = undecided[start : start + 256]
        g = dual(np.broadcast_to(w, (len(idx),) + w.shape), idx)
        separated[idx] = np.max(g, axis=1) > sep_tol
        # sharpen on the best edge: the dual is concave along it
        rest = idx[~separated[idx]]
        if len(rest) == 0 or len(r) < 2:
            continue
        best = w[np.argmax(g[~separated[idx]], axis=1)]
        pair = np.argsort(-best, axis=1)[:, :2]
        a, b = np.zeros(len(rest)), np.ones(len(rest))
        rows = np.arange(len(rest))

        def along(t):
            v = np.zeros((len(rest), 1, len(r)))
            v[rows, 0, pair[:, 0]] = t
            v[rows, 0, pair[:, 1]] = 1 - t
            return dual(v, rest)[:, 0]

        for _ in range(40):
            m1, m2 = a + (b - a) / 3, b - (b - a) / 3
            left = along(m1) < along(m2)
            a = np.where(left, m1, a)
            b = np.where(left, b, m2)
        t = (a + b) / 2
        separated[rest] = along(t) > sep_tol
        # the minimiser for the best weights is a contact point when the dual is <= 0
        v = np.zeros((len(rest), len(r)))
        v[rows, pair[:, 0]] = t
        v[rows, pair[:, 1]] = 1 - t
        cbar = (v @ c) / v.sum(axis=1)[:, None]
        x = np.clip(cbar, lo[rest], hi[rest])
        gap = np.max(np.linalg.norm(x[:, None, :] - c[None], axis=2) - r, axis=1)
        meets[rest] |= gap <= meet_tol

    for k in np.flatnonzero(~meets & ~separated):  # rare
        meets[k] = _cell_meets_region(los[k], his[k], centers, radii)
    return meets


def _retained_cells(region: Region, resolution: float, box) -> np.ndarray:
    """Lattice indices of the lowest and highest candidate cell in every grid column.

    Cells are ``[k*res, (k+1)*res)`` per axis, restricted to those touching
    ``box``. A cell is a candidate when it touches every ball separately, so
    every cell that touches the region is a candidate. The lattice does not
    depend on the region, so adding a ball can only remove candidates.
    """
    centers, radii = _centers_radii(region)
    d = region.dim
    lo, hi = box
    k0 = np.floor(lo / resolution).astype(np.int64)
    k1 = np.maximum(k0, np.ceil(hi / resolution).astype(np.int64) - 1)
    counts = k1 - k0 + 1
    if int(np.prod(counts[:-1])) > MAX_GRID_COLUMNS:
        raise UsageError(
            f"grid of {int(np.prod(counts[:-1]))} columns is too fine; use a coarser resolution"
        )
    axes = [np.arange(k0[a], k1[a] + 1) for a in range(d - 1)]
    cols = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d - 1)
    # squared distance from each ball centre to each column's cross-section rectangle
    near = np.clip(centers[None, :, :-1], cols[:, None, :] * resolution,
                   (cols[:, None, :] + 1) * resolution)
    rest2 = np.sum((near - centers[None, :, :-1]) ** 2, axis=2)
    w2 = radii[None, :] ** 2 - rest2
    ok = np.all(w2 >= 0, axis=1)
    w = np.sqrt(np.where(ok, w2.T, 0.0).T)
    zlo = np.max(centers[None, :, -1] - w, axis=1)
    zhi = np.min(centers[None, :, -1] + w, axis=1)
    ilo = np.maximum(np.ceil(zlo / resolution - 1).astype(np.int64), k0[-1])
    ihi = np.minimum(np.floor(zhi / resolution).astype(np.int64), k1[-1])
    keep = ok & (ilo <= ihi)
    cols, ilo, ihi = cols[keep], ilo[keep], ihi[keep]
    return np.unique(np.vstack([np.column_stack([cols, ilo]), np.column_stack([cols, ihi])]), axis=0)


def _hull_vertices(points: np.ndarray) -> np.ndarray:
    try:
        return ConvexHull(points).vertices
    except (QhullError, ValueError):
        return np.arange(len(points))


def region_diameter_bound(region: Region, resolution: float = 1.0) -> Optional[float]:
    """Upper bound on the region's diameter in metres, or None when it is empty.

    Exact for one ball and in 1D. In 2D/3D the region is covered with grid
    cells of side ``resolution``; cells on the hull of the covering are
    checked exactly against the region, and the bound is the farthest pair
    of surviving cell centres plus one cell diagonal. It never falls below
    the true diameter and exceeds it by at most ``2 * resolution * sqrt(d)``.
    """
    if resolution <= 0:
        raise UsageError("resolution must be positive")
    centers, radii = _centers_radii(region)
    if region.dim == 1:
        lo, hi = np.max(centers[:, 0] - radii), np.min(centers[:, 0] + radii)
        return float(hi - lo) if lo <= hi else None
    box = region_bounding_box(region)
    if box is None:
        return None
    if len(region.balls) == 1:
        return 2.0 * float(radii[0])
    cells = _retained_cells(region, resolution, box)
    alive = np.ones(len(cells), dtype=bool)
    checked = np.zeros(len(cells), dtype=bool)
    while True:
        idx = np.flatnonzero(alive)
        verts = idx[_hull_vertices((cells[idx] + 0.5) * resolution)] if len(idx) > 2 else idx
        todo = verts[~checked[verts]]
        if len(todo) == 0:
            break
        checked[todo] = True
        lo = cells[todo] * resolution
        alive[todo] = _cells_meet_region(lo, lo + resolution, centers, radii)
        if not alive.any():
            break
    points = (cells[alive] + 0.5) * resolution
    bound = _farthest_pair_distance(points) + resolution * math.sqrt(region.dim)
    caps = (2.0 * float(np.min(radii)), float(np.linalg.norm(box[1] - box[0])))
    return float(min(bound, *caps))


def convex_hull_condition(verifier_positions: Sequence[Position], L: Position) -> bool:
    """True iff ``L`` lies in the convex hull of the verifier sites."""
    if not verifier_positions:
        return False
    pts = np.array([p.coords for p in verifier_positions])
    if pts.shape[1] != L.dim:
        raise UsageError("dimension mismatch between verifiers and L")
    target = np.array(L.coords)
    if L.dim == 1:
        return bool(pts.min() <= target[0] <= pts.max())
    M = len(pts)
    A_eq = np.vstack([pts.T, np.ones(M)])
    b_eq = np.append(target, 1.0)
    res = linprog(np.zeros(M), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * M, method="highs")
    return res.status == 0


@dataclass(frozen=True)
class LineProjection:
    origin: np.ndarray
    direction: np.ndarray
    max_residual: float

    def coordinate(self, p: Position) -> float:
        return float(np.dot(np.asarray(p.coords) - self.origin, self.direction))

    def project(self, p: Position) -> Position:
        return Position((self.coordinate(p),))

    def project_vector(self, v: Sequence[float]) -> tuple[float]:
        return (float(np.dot(np.asarray(v, dtype=float), self.direction)),)


def fit_line(points: Sequence[Position]) -> LineProjection:
    """Least-squares line through ``points`` (principal axis of the point cloud)."""
    pts = np.array([p.coords for p in points], dtype=float)
    origin = pts.mean(axis=0)
    centred = pts - origin
    if np.allclose(centred, 0):
        direction = np.eye(pts.shape[1])[0]
    else:
        direction = np.linalg.svd(centred, full_matrices=False)[2][0]
        # fix the sign so the first point has the smallest coordinate
        if np.dot(centred[0], direction) > 0:
            direction = -direction
    residual = centred - np.outer(centred @ direction, direction)
    return LineProjection(origin, direction, float(np.max(np.linalg.norm(residual, axis=1))))
