"""Smooth surjections that remove the waypoint and duration constraints.

* ``T = exp(tau)`` maps R onto positive durations.
* ``q = sum_i w_i v_i`` with ``w_i = (1 + xi_i^2) / sum_k (1 + xi_k^2)`` maps
  R^N onto the interior of the polytope with vertices ``v_1..v_N``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .attitude import sigma_from_rotation
from .geometry import Corridor, Polyhedron

log = logging.getLogger(__name__)

TAU_LIMIT = 30.0
T_MIN = 0.1


def forward_T(tau: ArrayLike) -> NDArray[np.float64]:
    tau = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau) > TAU_LIMIT):
        log.warning("clamping tau to [-%g, %g]", TAU_LIMIT, TAU_LIMIT)
        tau = np.clip(tau, -TAU_LIMIT, TAU_LIMIT)
    return np.exp(tau)


def pullback_T(T: ArrayLike, dL_dT: ArrayLike) -> NDArray[np.float64]:
    """``dL/dtau`` given durations already mapped by :func:`forward_T`."""
    return np.asarray(dL_dT, dtype=float) * np.asarray(T, dtype=float)


def inverse_T(T: ArrayLike) -> NDArray[np.float64]:
    return np.log(np.asarray(T, dtype=float))


@dataclass(frozen=True, eq=False)
class WaypointContainer:
    """Polytope an interior position waypoint must occupy, kept by its vertices."""

    polyhedron: Polyhedron
    vertices: NDArray[np.float64]
    junction: bool

    @property
    def size(self) -> int:
        return self.vertices.shape[0]

    @property
    def centroid(self) -> NDArray[np.float64]:
        return self.vertices.mean(axis=0)


def forward_q(xi: ArrayLike, container: WaypointContainer) -> NDArray[np.float64]:
    xi = np.asarray(xi, dtype=float)
    a = 1.0 + xi * xi
    w = a / np.sum(a)
    return w @ container.vertices


def pullback_q(
    xi: ArrayLike, container: WaypointContainer, dL_dq: ArrayLike
) -> NDArray[np.float64]:
    """``dL/dxi_i = (2 xi_i / S) (v_i - q) . dL/dq``."""
    xi = np.asarray(xi, dtype=float)
    S = np.sum(1.0 + xi * xi)
    q = forward_q(xi, container)
    return (2.0 * xi / S) * ((container.vertices - q) @ np.asarray(dL_dq, dtype=float))


def build_containers(corridor: Corridor) -> list[WaypointContainer]:
    """One container per interior knot: a polyhedron, or the overlap of two at a junction."""
    cache: dict[tuple[int, int], Polyhedron] = {}
    out = []
    a = corridor.assignment
    for j in range(1, len(a)):
        left, right = a[j - 1], a[j]
        key = (left, right)
        if key not in cache:
            P = corridor.polyhedra[left]
            cache[key] = P if left == right else P.intersect(corridor.polyhedra[right])
        P = cache[key]
        out.append(WaypointContainer(P, P.vertices, junction=left != right))
    return out


@dataclass(frozen=True)
class DecisionVars:
    """Unconstrained variables: per-waypoint ``xi`` blocks, attitude waypoints, ``tau``."""

    xi: tuple[NDArray[np.float64], ...]
    q_sigma: NDArray[np.float64]
    tau: NDArray[np.float64]

    @property
    def size(self) -> int:
        return sum(x.size for x in self.xi) + self.q_sigma.size + self.tau.size

    def pack(self) -> NDArray[np.float64]:
        parts = [*self.xi, self.q_sigma.ravel(), self.tau]
        return np.concatenate(parts) if parts else np.zeros(0)

    @classmethod
    def unpack(cls, x: ArrayLike, xi_sizes: list[int], M: int) -> "DecisionVars":
        x = np.asarray(x, dtype=float)
        xi = []
        k = 0
        for n in xi_sizes:
            xi.append(x[k : k + n].copy())
            k += n
        q_sigma = x[k : k + 3 * (M - 1)].reshape(M - 1, 3).copy()
        k += 3 * (M - 1)
        tau = x[k : k + M].copy()
        return cls(tuple(xi), q_sigma, tau)


def initialize(
    corridor: Corridor,
    containers: list[WaypointContainer],
    start: ArrayLike,
    goal: ArrayLike,
    R_start: ArrayLike,
    R_goal: ArrayLike,
    v_max: float,
    t_min: float = T_MIN,
    attitude_jitter: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DecisionVars:
    """Centroid waypoints, linearly interpolated attitudes, speed-limited durations.

    ``attitude_jitter`` adds seeded Gaussian noise to the attitude waypoints,
    which breaks the mirror symmetry of level starts in symmetric slots.
    """
    M = corridor.num_pieces
    xi = tuple(np.zeros(c.size) for c in containers)
    s0 = sigma_from_rotation(R_start)
    s1 = sigma_from_rotation(R_goal)
    frac = np.arange(1, M)[:, None] / M
    q_sigma = (1.0 - frac) * s0 + frac * s1
    if attitude_jitter > 0.0:
        rng = rng if rng is not None else np.random.default_rng(0)
        q_sigma = q_sigma + attitude_jitter * rng.standard_normal(q_sigma.shape)
    pts = np.vstack(
        [np.asarray(start, dtype=float)]
        + [c.centroid for c in containers]
        + [np.asarray(goal, dtype=float)]
    )
    dist = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    tau = np.log(np.maximum(dist / v_max, t_min))
    return DecisionVars(xi, q_sigma, tau)
