"""Convex polyhedra, safe flight corridors and vehicle shapes.

A polyhedron is stored in H-representation ``{p | n_k . p - d_k <= 0}`` with
unit outer normals. Vertices are enumerated once on construction (by the dual
transform about a Chebyshev centre) and cached.

Working limits: up to 128 faces per polyhedron and 64 vertices per shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

MAX_FACES = 128
MAX_SHAPE_VERTICES = 64
VERTEX_TOL = 1e-9
CONNECTION_EPS = 1e-6


class GeometryError(ValueError):
    """Base class for invalid polyhedron input."""


class DegenerateNormal(GeometryError):
    pass


class UnboundedPolyhedron(GeometryError):
    pass


class EmptyInterior(GeometryError):
    pass


def _as_halfspace_array(halfspaces) -> NDArray[np.float64]:
    rows = []
    for h in halfspaces:
        if len(h) == 2 and np.ndim(h[0]) == 1:
            n, d = h
            rows.append([*np.asarray(n, dtype=float), float(d)])
        else:
            rows.append(np.asarray(h, dtype=float))
    H = np.asarray(rows, dtype=float).reshape(-1, 4)
    return H


def chebyshev_center(A: NDArray, b: NDArray) -> tuple[NDArray, float]:
    """Centre and radius of the largest ball inside ``A x <= b``.

    ``A`` must have unit rows. The radius is capped at 1e6 so unbounded sets
    still return a finite answer; a radius <= 0 means no interior.
    """
    k = A.shape[0]
    c = np.zeros(4)
    c[3] = -1.0
    A_ub = np.hstack([A, np.ones((k, 1))])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b,
        bounds=[(None, None)] * 3 + [(None, 1e6)],
        method="highs",
    )
    if res.status != 0:
        return np.zeros(3), -np.inf
    return res.x[:3], float(res.x[3])


def _dual_vertices(A: NDArray, b: NDArray, center: NDArray) -> NDArray:
    slack = b - A @ center
    dual = A / slack[:, None]
    try:
        hull = ConvexHull(dual)
    except QhullError as exc:
        raise UnboundedPolyhedron("half-spaces do not enclose a bounded region") from exc
    # An unbounded polyhedron puts the origin on (or outside) the dual hull.
    offsets = hull.equations[:, 3]
    if np.any(offsets > -1e-12):
        raise UnboundedPolyhedron("half-spaces do not enclose a bounded region")
    verts = center + hull.equations[:, :3] / (-offsets[:, None])
    # polish: re-solve each vertex from the planes active at it
    for i, v in enumerate(verts):
        active = np.abs(A @ v - b) <= 1e-7 * max(1.0, float(np.max(np.abs(b))))
        if np.count_nonzero(active) >= 3:
            sol, *_ = np.linalg.lstsq(A[active], b[active], rcond=None)
            if np.max(np.abs(sol - v)) < 1e-6:
                verts[i] = sol
    return _dedupe(verts, VERTEX_TOL, center)


def _dedupe(points: NDArray, tol: float, center: NDArray) -> NDArray:
    kept: list[NDArray] = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in kept):
            kept.append(p)
    out = np.array(kept).reshape(-1, 3)
    # lexicographic order on quantized offsets from the center, so that ties
    # broken by round-off do not reorder vertices under translation
    rel = out - center
    key = np.round(rel / max(1.0, float(np.max(np.abs(rel)))), 9)
    order = np.lexsort(key.T[::-1])
    return out[order]


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """Bounded convex polyhedron with nonempty interior.

    Use :func:`make_polyhedron` rather than constructing directly.
    """

    normals: NDArray[np.float64]
    offsets: NDArray[np.float64]
    vertices: NDArray[np.float64]
    interior_point: NDArray[np.float64]
    inradius: float

    @property
    def halfspaces(self) -> NDArray[np.float64]:
        """``(K, 4)`` array of rows ``[nx, ny, nz, d]``."""
        return np.hstack([self.normals, self.offsets[:, None]])

    @property
    def num_faces(self) -> int:
        return self.normals.shape[0]

    def slack(self, p: ArrayLike) -> NDArray[np.float64]:
        return self.normals @ np.asarray(p, dtype=float) - self.offsets

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        return make_polyhedron(np.vstack([self.halfspaces, other.halfspaces]))

    def translated(self, delta: ArrayLike) -> "Polyhedron":
        delta = np.asarray(delta, dtype=float)
        return make_polyhedron(
            np.hstack([self.normals, (self.offsets + self.normals @ delta)[:, None]])
        )

    def to_json(self) -> dict:
        return {"halfspaces": self.halfspaces.tolist()}


def make_polyhedron(halfspaces) -> Polyhedron:
    """Build a polyhedron from ``(normal, offset)`` pairs or ``[nx, ny, nz, d]`` rows.

    Normals are rescaled to unit length (offsets rescaled to match) and exact
    duplicate faces are dropped.

    Raises:
        DegenerateNormal: a normal has zero length.
        UnboundedPolyhedron: fewer than 4 faces or the set is unbounded.
        EmptyInterior: the half-spaces have no common interior point.
    """
    H = _as_halfspace_array(halfspaces)
    if H.shape[0] > MAX_FACES:
        raise GeometryError(f"at most {MAX_FACES} faces supported, got {H.shape[0]}")
    norms = np.linalg.norm(H[:, :3], axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateNormal("half-space normal has zero length")
    H = H / norms[:, None]
    _, first = np.unique(np.round(H, 12), axis=0, return_index=True)
    H = H[np.sort(first)]
    if H.shape[0] < 4:
        raise UnboundedPolyhedron("a bounded polyhedron needs at least 4 half-spaces")
    A, b = H[:, :3], H[:, 3]
    center, radius = chebyshev_center(A, b)
    if not np.isfinite(radius) or radius <= 1e-12:
        raise EmptyInterior("half-spaces have no common interior")
    if radius >= 1e6 - 1.0:
        raise UnboundedPolyhedron("half-spaces do not enclose a bounded region")
    verts = _dual_vertices(A, b, center)
    return Polyhedron(
        normals=A, offsets=b, vertices=verts, interior_point=center, inradius=radius
    )


def enumerate_vertices(P: Polyhedron) -> NDArray[np.float64]:
    """All extreme points of ``P`` as an ``(N, 3)`` array."""
    return P.vertices.copy()


def contains(P: Polyhedron, p: ArrayLike, tol: float = 0.0) -> bool:
    return bool(np.max(P.slack(p)) <= tol)


def box(lo: ArrayLike, hi: ArrayLike) -> Polyhedron:
    """Axis-aligned box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    rows = []
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        rows.append([*e, hi[axis]])
        rows.append([*(-e), -lo[axis]])
    return make_polyhedron(rows)


@dataclass(frozen=True, eq=False)
class Corridor:
    """Ordered polyhedra plus the polyhedron index assigned to each piece."""

    polyhedra: tuple[Polyhedron, ...]
    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "polyhedra", tuple(self.polyhedra))
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))

    @property
    def num_pieces(self) -> int:
        return len(self.assignment)

    def to_json(self) -> dict:
        return {
            "polyhedra": [P.to_json() for P in self.polyhedra],
            "assignment": list(self.assignment),
        }


def default_assignment(num_polyhedra: int, pieces_per_polyhedron: int) -> list[int]:
    return [i // pieces_per_polyhedron for i in range(num_polyhedra * pieces_per_polyhedron)]


def load_corridor(path: str | Path, pieces_per_polyhedron: int = 2) -> Corridor:
    """Read a corridor file; a missing ``assignment`` gets the default builder."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return corridor_from_json(data, pieces_per_polyhedron)


def corridor_from_json(data: dict, pieces_per_polyhedron: int = 2) -> Corridor:
    polys = tuple(make_polyhedron(p["halfspaces"]) for p in data["polyhedra"])
    assignment = data.get("assignment")
    if assignment is None:
        assignment = default_assignment(len(polys), pieces_per_polyhedron)
    return Corridor(polys, tuple(assignment))


def save_corridor(corridor: Corridor, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corridor.to_json(), fh, indent=2)
        fh.write("\n")


@dataclass
class CorridorReport:
    pair_ok: list[bool]
    assignment_ok: bool
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.assignment_ok and all(self.pair_ok)

    @property
    def failing_pairs(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i, good in enumerate(self.pair_ok) if not good]


def interiors_overlap(P: Polyhedron, Q: Polyhedron, eps: float = CONNECTION_EPS) -> bool:
    """True if some point has slack <= -eps on every face of both sets."""
    A = np.vstack([P.normals, Q.normals])
    b = np.concatenate([P.offsets, Q.offsets])
    _, radius = chebyshev_center(A, b)
    return radius >= eps


def validate_corridor(c: Corridor) -> CorridorReport:
    msgs: list[str] = []
    pair_ok = []
    for i in range(len(c.polyhedra) - 1):
        good = interiors_overlap(c.polyhedra[i], c.polyhedra[i + 1])
        pair_ok.append(good)
        if not good:
            msgs.append(f"polyhedra {i} and {i + 1} have no common interior")
    a = np.asarray(c.assignment)
    n = len(c.polyhedra)
    assignment_ok = (
        a.size > 0
        and a[0] == 0
        and a[-1] == n - 1
        and bool(np.all(np.diff(a) >= 0))
        and bool(np.all(np.diff(a) <= 1))
    )
    if not assignment_ok:
        msgs.append(
            "assignment must be nondecreasing, start at 0, end at the last polyhedron "
            "and visit every polyhedron"
        )
    return CorridorReport(pair_ok=pair_ok, assignment_ok=assignment_ok, messages=msgs)


@dataclass(frozen=True, eq=False)
class VehicleShape:
    """Convex hull vertices of the vehicle, in the body frame."""

    body_vertices: NDArray[np.float64]

    def __post_init__(self):
        v = np.asarray(self.body_vertices, dtype=float).reshape(-1, 3)
        if v.shape[0] < 1 or v.shape[0] > MAX_SHAPE_VERTICES:
            raise GeometryError(f"shape needs 1..{MAX_SHAPE_VERTICES} vertices")
        if v.shape[0] > 1 and np.allclose(v, v[0]):
            raise GeometryError("shape vertices are all coincident")
        object.__setattr__(self, "body_vertices", v)

    @property
    def radius(self) -> float:
        return float(np.max(np.linalg.norm(self.body_vertices, axis=1)))

    @classmethod
    def cuboid(cls, lx: float = 1.0, ly: float = 1.0, lz: float = 0.35) -> "VehicleShape":
        signs = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)])
        return cls(signs * np.array([lx, ly, lz]) / 2.0)


def vehicle_vertex_world(
    shape: VehicleShape, p: ArrayLike, R: ArrayLike, l: int
) -> NDArray[np.float64]:
    return np.asarray(p, dtype=float) + np.asarray(R, dtype=float) @ shape.body_vertices[l]


def shape_world(shape: VehicleShape, p: ArrayLike, R: ArrayLike) -> NDArray[np.float64]:
    """All world-frame vertices, ``(L, 3)``."""
    return np.asarray(p, dtype=float) + shape.body_vertices @ np.asarray(R, dtype=float).T


def shape_inside(P: Polyhedron, shape: VehicleShape, p, R, tol: float = 0.0) -> bool:
    w = shape_world(shape, p, R)
    return bool(np.max(w @ P.normals.T - P.offsets) <= tol)


def polyhedra_from_boxes(boxes: Sequence[tuple[Sequence[float], Sequence[float]]]):
    return tuple(box(lo, hi) for lo, hi in boxes)
