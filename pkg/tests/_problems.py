"""Shared generators and finite-difference oracles for the test suite."""

from __future__ import annotations

import numpy as np

from omnitraj.attitude import rotation_from_sigma
from omnitraj.elimination import DecisionVars
from omnitraj.geometry import Corridor, VehicleShape, box
from omnitraj.penalty import PenaltyConfig
from omnitraj.problem import build_problem, objective


def random_box_chain(rng, n_box: int, M: int) -> Corridor:
    """Chain of overlapping random boxes, each next center inside the previous box."""
    c = np.array([0.0, 0.0, 1.0])
    boxes = []
    for _ in range(n_box):
        half = rng.uniform(0.8, 1.5, 3)
        boxes.append(box(c - half, c + half))
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        c = c + d * rng.uniform(0.5, 1.0) * half.min()
    assignment = tuple(i * n_box // M for i in range(M))
    return Corridor(tuple(boxes), assignment)


def random_problem(rng, s: int | None = None, M: int | None = None):
    """A random problem with every penalty class likely to be partially active.

    Magnitudes are kept moderate (objective values of order 1 to 1e3) so
    that central differences at step 1e-6 sit well above round-off.
    """
    s = int(rng.choice([3, 4])) if s is None else s
    M = int(rng.integers(2, 9)) if M is None else M
    n_box = int(rng.integers(1, M + 1))
    corridor = random_box_chain(rng, n_box, M)
    pen = PenaltyConfig(
        v_max=rng.uniform(0.3, 0.8),
        a_max=rng.uniform(0.2, 0.8),
        omega_max=rng.uniform(0.3, 1.0),
        kappa=int(rng.integers(4, 17)),
        W_v=rng.uniform(1, 20),
        W_a=rng.uniform(1, 20),
        W_omega=rng.uniform(1, 20),
        W_c=rng.uniform(1, 20),
        k_rho=rng.uniform(0, 1),
    )
    polys = corridor.polyhedra
    spec = build_problem(
        corridor,
        VehicleShape.cuboid(*rng.uniform(0.5, 1.2, 3)),
        polys[0].interior_point,
        polys[-1].interior_point,
        R_start=rotation_from_sigma(rng.normal(scale=0.1, size=3)),
        R_goal=rotation_from_sigma(rng.normal(scale=0.1, size=3)),
        s=s,
        penalty=pen,
    )
    # entries bounded away from zero: d q / d xi_i is proportional to xi_i
    xi = tuple(rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 1.5, n) for n in spec.xi_sizes)
    v = DecisionVars(xi, rng.normal(scale=0.1, size=(M - 1, 3)), np.log(rng.uniform(1.5, 3.0, M)))
    return spec, v


def central_fd(f, x, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def richardson_fd(f, x, h: float = 1e-3) -> np.ndarray:
    """Fourth-order central difference; truncation O(h^4), round-off O(eps / h)."""
    return (4.0 * central_fd(f, x, h / 2) - central_fd(f, x, h)) / 3.0


def objective_fn(spec):
    sizes, M = spec.xi_sizes, spec.M
    return lambda x: objective(DecisionVars.unpack(x, sizes, M), spec).value


def coordinate_errors(g, fd, abs_below: float = 1e-8) -> np.ndarray:
    """Relative error per coordinate; absolute where both magnitudes are below ``abs_below``."""
    g, fd = np.asarray(g), np.asarray(fd)
    scale = np.maximum(np.abs(g), np.abs(fd))
    small = scale < abs_below
    return np.where(small, np.abs(g - fd), np.abs(g - fd) / np.where(small, 1.0, scale))
