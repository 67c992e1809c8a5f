"""Minimum-control-effort piecewise polynomials over R^6.

Each piece is a degree ``2s - 1`` polynomial ``z(t) = c_i^T beta(t - t_{i-1})``
with ``beta(a) = [1, a, ..., a^(2s-1)]``. Given the boundary derivative stacks,
the interior waypoints ``q`` and the durations ``T``, the coefficients are the
unique solution of a banded ``2Ms x 2Ms`` system (all six channels share the
matrix and are solved as six right-hand sides):

* rows ``0..s-1``: derivatives ``0..s-1`` of the first piece at ``t_0``;
* per interior knot: the waypoint value, then continuity of orders ``0..2s-2``;
* last ``s`` rows: derivatives ``0..s-1`` of the last piece at ``t_M``.

That interpolant is the minimizer of ``int |z^(s)|^2`` under the same
constraints. The LU factors are kept on the :class:`Trajectory` so gradients
can be pulled back through the adjoint system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import lapack

log = logging.getLogger(__name__)

MIN_DURATION = 1e-6
DIM = 6


class SplineError(ValueError):
    pass


class NonPositiveDuration(SplineError):
    pass


class SingularSystem(SplineError):
    pass


class OutOfDomain(SplineError):
    pass


@lru_cache(maxsize=None)
def _falling(n: int, k: int) -> int:
    """``n! / (n - k)!`` (zero when ``k > n``)."""
    return factorial(n) // factorial(n - k) if k <= n else 0


def basis(n_coef: int, t: ArrayLike, order: int = 0) -> NDArray[np.float64]:
    """``beta^(order)(t)`` for ``n_coef`` monomials; shape ``t.shape + (n_coef,)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (n_coef,))
    for m in range(order, n_coef):
        out[..., m] = _falling(m, order) * t ** (m - order)
    return out


@lru_cache(maxsize=None)
def _gram_coefficients(s: int) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    # exact rationals a_m a_n / (m + n - 2s + 1), cast once
    n = 2 * s
    coef = np.zeros((n, n))
    power = np.zeros((n, n), dtype=np.int64)
    for m in range(s, n):
        for k in range(s, n):
            p = m + k - 2 * s + 1
            coef[m, k] = float(Fraction(_falling(m, s) * _falling(k, s), p))
            power[m, k] = p
    return coef, power


def gram_matrix(s: int, T: float) -> NDArray[np.float64]:
    """``int_0^T beta^(s) beta^(s)^T dt``."""
    coef, power = _gram_coefficients(s)
    return coef * np.where(power > 0, float(T) ** power, 0.0)


@dataclass(frozen=True)
class BoundaryCondition:
    """Derivative stacks at both ends: row ``k`` is ``z^(k)`` (shape ``(s, 6)``)."""

    z_o: NDArray[np.float64]
    z_f: NDArray[np.float64]

    def __post_init__(self):
        z_o = np.atleast_2d(np.asarray(self.z_o, dtype=float))
        z_f = np.atleast_2d(np.asarray(self.z_f, dtype=float))
        if z_o.shape != z_f.shape:
            raise ValueError("start and end stacks differ in shape")
        if not (np.all(np.isfinite(z_o)) and np.all(np.isfinite(z_f))):
            raise ValueError("boundary stacks must be finite")
        object.__setattr__(self, "z_o", z_o)
        object.__setattr__(self, "z_f", z_f)

    @classmethod
    def rest(cls, s: int, start: ArrayLike, end: ArrayLike) -> "BoundaryCondition":
        """Zero derivatives above order 0."""
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        z_o = np.zeros((s, start.size))
        z_f = np.zeros((s, end.size))
        z_o[0] = start
        z_f[0] = end
        return cls(z_o, z_f)

    def translated(self, delta: ArrayLike) -> "BoundaryCondition":
        z_o = self.z_o.copy()
        z_f = self.z_f.copy()
        z_o[0] += delta
        z_f[0] += delta
        return BoundaryCondition(z_o, z_f)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solved piecewise polynomial; ``coeffs`` has shape ``(M, 2s, dim)``."""

    s: int
    coeffs: NDArray[np.float64]
    durations: NDArray[np.float64]
    _lu: tuple | None = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    @property
    def knots(self) -> NDArray[np.float64]:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def total_duration(self) -> float:
        return float(np.sum(self.durations))

    def locate(self, t: ArrayLike) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Piece index and local time; pieces are right-open except the last."""
        t = np.asarray(t, dtype=float)
        knots = self.knots
        scale = max(1.0, knots[-1])
        if np.any(t < knots[0] - 1e-12 * scale) or np.any(t > knots[-1] + 1e-12 * scale):
            raise OutOfDomain(f"t outside [{knots[0]}, {knots[-1]}]")
        idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, self.M - 1)
        return idx, t - knots[idx]

    def eval(self, t: ArrayLike, order: int = 0) -> NDArray[np.float64]:
        """``z^(order)(t)``; vectorized over ``t``."""
        if order < 0:
            raise ValueError("order must be nonnegative")
        idx, local = self.locate(t)
        b = basis(2 * self.s, local, order)
        return np.einsum("...m,...md->...d", b, self.coeffs[idx])

    def piece_eval(self, i: int, local: ArrayLike, order: int = 0) -> NDArray[np.float64]:
        return basis(2 * self.s, local, order) @ self.coeffs[i]

    def translated(self, delta: ArrayLike) -> "Trajectory":
        c = self.coeffs.copy()
        c[:, 0, : len(delta)] += delta
        return Trajectory(self.s, c, self.durations.copy())


def _bandwidth(s: int) -> int:
    return 3 * s - 1


def _assemble_band(s: int, T: NDArray) -> NDArray:
    M = T.size
    n = 2 * M * s
    ncoef = 2 * s
    kl = ku = _bandwidth(s)
    ab = np.zeros((2 * kl + ku + 1, n))

    def put(row: int, col: int, val: float) -> None:
        ab[kl + ku + row - col, col] = val

    for k in range(s):
        put(k, k, float(factorial(k)))
    for i in range(1, M):
        base = s + 2 * s * (i - 1)
        left = 2 * s * (i - 1)
        right = 2 * s * i
        Ti = T[i - 1]
        for m in range(ncoef):
            put(base, left + m, Ti**m)
        for k in range(2 * s - 1):
            row = base + 1 + k
            for m in range(k, ncoef):
                put(row, left + m, _falling(m, k) * Ti ** (m - k))
            put(row, right + k, -float(factorial(k)))
    base = n - s
    left = 2 * s * (M - 1)
    for k in range(s):
        for m in range(k, ncoef):
            put(base + k, left + m, _falling(m, k) * T[-1] ** (m - k))
    return ab


def _band_matvec(ab: NDArray, kl: int, ku: int, x: NDArray) -> NDArray:
    """``A @ x`` in extended precision for ``A`` stored in LAPACK band layout."""
    n = ab.shape[1]
    xl = x.astype(np.longdouble)
    y = np.zeros(x.shape, dtype=np.longdouble)
    for d in range(-kl, ku + 1):
        # entry (row, row + d) lives at ab[kl + ku - d, row + d]
        lo, hi = max(0, -d), min(n, n - d)
        if hi <= lo:
            continue
        y[lo:hi] += ab[kl + ku - d, lo + d : hi + d].astype(np.longdouble)[:, None] * xl[lo + d : hi + d]
    return y


def solve_coefficients(
    s: int, q: ArrayLike, T: ArrayLike, bc: BoundaryCondition
) -> Trajectory:
    """Coefficients of the minimum-effort interpolant.

    Args:
        s: integrator order; pieces have degree ``2s - 1``.
        q: interior waypoints, shape ``(M - 1, dim)``.
        T: piece durations, shape ``(M,)``.
        bc: boundary stacks with ``s`` rows each.
    """
    T = np.atleast_1d(np.asarray(T, dtype=float))
    M = T.size
    if M < 1:
        raise ValueError("need at least one piece")
    if np.any(~np.isfinite(T)) or np.any(T <= 0.0):
        raise NonPositiveDuration("durations must be finite and positive")
    if np.any(T < MIN_DURATION):
        log.warning("clamping %d durations to %g s", int(np.sum(T < MIN_DURATION)), MIN_DURATION)
        T = np.maximum(T, MIN_DURATION)
    if bc.z_o.shape[0] != s:
        raise ValueError(f"boundary stacks need {s} rows, got {bc.z_o.shape[0]}")
    dim = bc.z_o.shape[1]
    q = np.asarray(q, dtype=float).reshape(M - 1, dim)

    n = 2 * M * s
    rhs = np.zeros((n, dim))
    rhs[:s] = bc.z_o
    for i in range(1, M):
        rhs[s + 2 * s * (i - 1)] = q[i - 1]
    rhs[n - s :] = bc.z_f

    kl = ku = _bandwidth(s)
    ab = _assemble_band(s, T)
    lu, piv, info = lapack.dgbtrf(ab, kl, ku)
    if info != 0:
        raise SingularSystem(f"banded factorization failed (info={info})")
    x, info = lapack.dgbtrs(lu, kl, ku, rhs, piv)
    if info != 0 or not np.all(np.isfinite(x)):
        raise SingularSystem("banded solve failed")
    # one step of refinement with an extended-precision residual
    r = (rhs - _band_matvec(ab, kl, ku, x)).astype(float)
    dx, info = lapack.dgbtrs(lu, kl, ku, r, piv)
    if info == 0 and np.all(np.isfinite(dx)):
        x = x + dx
    return Trajectory(s=s, coeffs=x.reshape(M, 2 * s, dim), durations=T, _lu=(lu, piv))


@lru_cache(maxsize=None)
def _gauss_legendre(s: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    # s nodes on [0, 1]: exact for |z^(s)|^2, which has degree 2s - 2
    x, w = np.polynomial.legendre.leggauss(s)
    return 0.5 * (x + 1.0), 0.5 * w


def smoothness_cost_and_gradients(
    traj: Trajectory,
) -> tuple[float, NDArray[np.float64], NDArray[np.float64]]:
    """``J = sum_i int |z^(s)|^2`` with its gradients w.r.t. coefficients and durations.

    The integral is evaluated by Gauss-Legendre quadrature, which is exact for
    this degree and sums only nonnegative terms; the equivalent Gram-matrix
    form ``c^T G c`` loses several digits to cancellation.
    """
    s = traj.s
    nodes, weights = _gauss_legendre(s)
    J = 0.0
    dc = np.zeros_like(traj.coeffs)
    dT = np.zeros(traj.M)
    for i in range(traj.M):
        c = traj.coeffs[i]
        Ti = traj.durations[i]
        B = basis(2 * s, Ti * nodes, s)
        zs = B @ c
        wz = (Ti * weights)[:, None] * zs
        J += float(np.sum(wz * zs))
        dc[i] = 2.0 * B.T @ wz
        zT = basis(2 * s, Ti, s) @ c
        dT[i] = float(zT @ zT)
    return J, dc, dT


def backprop_to_q_T(
    traj: Trajectory, dL_dc: ArrayLike, dL_dT_direct: ArrayLike | None = None
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Pull a coefficient gradient back to waypoints and durations.

    Returns ``(dL/dq, dL/dT)`` with shapes ``(M - 1, dim)`` and ``(M,)``.
    """
    if traj._lu is None:
        raise ValueError("trajectory carries no factorization; build it with solve_coefficients")
    s, M = traj.s, traj.M
    dim = traj.coeffs.shape[2]
    n = 2 * M * s
    G = np.asarray(dL_dc, dtype=float).reshape(n, dim)
    lu, piv = traj._lu
    kl = ku = _bandwidth(s)
    lam, info = lapack.dgbtrs(lu, kl, ku, G, piv, trans=1)
    if info != 0:
        raise SingularSystem("adjoint solve failed")

    dq = np.array([lam[s + 2 * s * (i - 1)] for i in range(1, M)]).reshape(M - 1, dim)
    dT = np.zeros(M) if dL_dT_direct is None else np.array(dL_dT_direct, dtype=float)
    ncoef = 2 * s
    for i in range(1, M):
        base = s + 2 * s * (i - 1)
        Ti = traj.durations[i - 1]
        c = traj.coeffs[i - 1]
        # rows at this knot evaluate orders 0, 0, 1, ..., 2s-2 of the left piece
        orders = np.concatenate([[1], np.arange(1, 2 * s)])
        derivs = np.stack([basis(ncoef, Ti, int(k)) @ c for k in orders])
        dT[i - 1] -= float(np.sum(lam[base : base + 2 * s] * derivs))
    c = traj.coeffs[-1]
    derivs = np.stack([basis(ncoef, traj.durations[-1], k + 1) @ c for k in range(s)])
    dT[-1] -= float(np.sum(lam[n - s :] * derivs))
    return dq, dT
