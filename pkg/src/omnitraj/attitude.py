"""Attitude as an unconstrained 3-vector via stereographic projection.

``sigma`` maps to the unit quaternion ``Q = [(|s|^2 - 1), 2 s] / (|s|^2 + 1)``
(pole ``(1, 0, 0, 0)`` excluded). Quaternions are ``(w, x, y, z)`` with the
Hamilton product; ``R(Q)`` rotates body vectors into the world frame and the
world-frame angular velocity satisfies ``omega^ = dR/dt R^T``.

All functions accept a single sigma ``(3,)`` or a batch ``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


class NonUnitQuaternion(ValueError):
    pass


def hat(v: ArrayLike) -> NDArray[np.float64]:
    """Skew matrix so that ``hat(a) @ b == cross(a, b)``; batched over leading axes."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(M: ArrayLike) -> NDArray[np.float64]:
    M = np.asarray(M, dtype=float)
    return 0.5 * np.stack(
        [M[..., 2, 1] - M[..., 1, 2], M[..., 0, 2] - M[..., 2, 0], M[..., 1, 0] - M[..., 0, 1]],
        axis=-1,
    )


def quat_from_sigma(sigma: ArrayLike) -> NDArray[np.float64]:
    sigma = np.asarray(sigma, dtype=float)
    ss = np.sum(sigma * sigma, axis=-1, keepdims=True)
    den = ss + 1.0
    return np.concatenate([(ss - 1.0) / den, 2.0 * sigma / den], axis=-1)


def sigma_from_quat(Q: ArrayLike) -> NDArray[np.float64]:
    """Inverse projection using the lift with ``w <= 0``, so ``|sigma| <= 1``."""
    Q = np.asarray(Q, dtype=float)
    Q = np.where(Q[..., :1] > 0.0, -Q, Q)
    return Q[..., 1:] / (1.0 - Q[..., :1])


def _rotation_poly(Q: NDArray) -> NDArray:
    # quadratic form of R(Q); equals the rotation only for unit Q
    w, r = Q[..., 0], Q[..., 1:]
    rr = np.sum(r * r, axis=-1)
    eye = np.broadcast_to(np.eye(3), Q.shape[:-1] + (3, 3))
    return (
        (w * w - rr)[..., None, None] * eye
        + 2.0 * r[..., :, None] * r[..., None, :]
        + 2.0 * w[..., None, None] * hat(r)
    )


def rotation_from_quat(Q: ArrayLike, tol: float = 1e-9) -> NDArray[np.float64]:
    Q = np.asarray(Q, dtype=float)
    if np.any(np.abs(np.linalg.norm(Q, axis=-1) - 1.0) > tol):
        raise NonUnitQuaternion("quaternion norm differs from 1")
    return _rotation_poly(Q)


def quat_from_rotation(R: ArrayLike) -> NDArray[np.float64]:
    """Unit quaternion of a single rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    diag = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    k = int(np.argmax(diag))
    if k == 0:
        w = 0.5 * np.sqrt(1.0 + tr)
        q = np.array([w, (R[2, 1] - R[1, 2]) / (4 * w), (R[0, 2] - R[2, 0]) / (4 * w),
                      (R[1, 0] - R[0, 1]) / (4 * w)])
    elif k == 1:
        x = 0.5 * np.sqrt(1.0 + 2 * R[0, 0] - tr)
        q = np.array([(R[2, 1] - R[1, 2]) / (4 * x), x, (R[0, 1] + R[1, 0]) / (4 * x),
                      (R[0, 2] + R[2, 0]) / (4 * x)])
    elif k == 2:
        y = 0.5 * np.sqrt(1.0 + 2 * R[1, 1] - tr)
        q = np.array([(R[0, 2] - R[2, 0]) / (4 * y), (R[0, 1] + R[1, 0]) / (4 * y), y,
                      (R[1, 2] + R[2, 1]) / (4 * y)])
    else:
        z = 0.5 * np.sqrt(1.0 + 2 * R[2, 2] - tr)
        q = np.array([(R[1, 0] - R[0, 1]) / (4 * z), (R[0, 2] + R[2, 0]) / (4 * z),
                      (R[1, 2] + R[2, 1]) / (4 * z), z])
    return q / np.linalg.norm(q)


def sigma_from_rotation(R: ArrayLike) -> NDArray[np.float64]:
    return sigma_from_quat(quat_from_rotation(R))


def rotation_from_sigma(sigma: ArrayLike) -> NDArray[np.float64]:
    return _rotation_poly(quat_from_sigma(sigma))


def axis_angle(axis: ArrayLike, angle: float) -> NDArray[np.float64]:
    """Rotation matrix for ``angle`` radians about ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = hat(a)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


def quat_jacobian(sigma: ArrayLike) -> NDArray[np.float64]:
    """``G`` with ``G[..., k, a] = dQ_a / dsigma_k`` (shape ``(..., 3, 4)``)."""
    sigma = np.asarray(sigma, dtype=float)
    ss = np.sum(sigma * sigma, axis=-1)[..., None, None]
    den = ss + 1.0
    G = np.empty(sigma.shape[:-1] + (3, 4))
    G[..., :, 0] = 4.0 * sigma / den[..., 0] ** 2
    eye = np.broadcast_to(np.eye(3), sigma.shape[:-1] + (3, 3))
    G[..., :, 1:] = 2.0 * eye / den - 4.0 * sigma[..., :, None] * sigma[..., None, :] / den**2
    return G


def quat_hessians(sigma: ArrayLike) -> NDArray[np.float64]:
    """Hessians ``H[..., a, k, m] = d^2 Q_a / dsigma_k dsigma_m`` (shape ``(..., 4, 3, 3)``).

    With ``S = |sigma|^2 + 1``::

        H_w        = 4 I / S^2 - 16 s s^T / S^3
        H_a[k, m]  = -4 (d_ak s_m + d_am s_k + d_km s_a) / S^2 + 16 s_a s_k s_m / S^3
    """
    s = np.asarray(sigma, dtype=float)
    S = (np.sum(s * s, axis=-1) + 1.0)[..., None, None]
    eye = np.broadcast_to(np.eye(3), s.shape[:-1] + (3, 3))
    ssT = s[..., :, None] * s[..., None, :]
    H = np.empty(s.shape[:-1] + (4, 3, 3))
    H[..., 0, :, :] = 4.0 * eye / S**2 - 16.0 * ssT / S**3
    for a in range(3):
        sa = s[..., a][..., None, None]
        ea = np.zeros(3)
        ea[a] = 1.0
        t = ea[:, None] * s[..., None, :] + s[..., :, None] * ea[None, :] + eye * sa
        H[..., a + 1, :, :] = -4.0 * t / S**2 + 16.0 * sa * ssT / S**3
    return H


def u_matrix(Q: ArrayLike) -> NDArray[np.float64]:
    """``U(Q) = [-r | w I + r^]`` (shape ``(..., 3, 4)``); linear in ``Q``."""
    Q = np.asarray(Q, dtype=float)
    w, r = Q[..., 0], Q[..., 1:]
    U = np.empty(Q.shape[:-1] + (3, 4))
    U[..., :, 0] = -r
    U[..., :, 1:] = w[..., None, None] * np.eye(3) + hat(r)
    return U


def u_apply(a: NDArray, b: NDArray) -> NDArray:
    """``U(a) @ b`` without forming ``U``."""
    return -a[..., 1:] * b[..., :1] + a[..., :1] * b[..., 1:] + np.cross(a[..., 1:], b[..., 1:])


def rotate_jacobian(Q: NDArray, v: NDArray) -> NDArray:
    """``d(R(Q) v)/dQ`` for the quadratic form of ``R`` (shape ``(..., 3, 4)``).

    ``v`` broadcasts against the batch of ``Q``.
    """
    w, r = Q[..., 0], Q[..., 1:]
    shape = np.broadcast_shapes(Q.shape[:-1], v.shape[:-1])
    J = np.empty(shape + (3, 4))
    rv = np.sum(r * v, axis=-1)
    J[..., :, 0] = 2.0 * w[..., None] * v + 2.0 * np.cross(r, v)
    J[..., :, 1:] = (
        -2.0 * v[..., :, None] * r[..., None, :]
        + 2.0 * rv[..., None, None] * np.eye(3)
        + 2.0 * r[..., :, None] * v[..., None, :]
        - 2.0 * w[..., None, None] * hat(v)
    )
    return J


@dataclass(frozen=True)
class AttitudeEval:
    sigma: NDArray[np.float64]
    Q: NDArray[np.float64]
    R: NDArray[np.float64]
    G: NDArray[np.float64]
    H: NDArray[np.float64]
    U: NDArray[np.float64]
    Gamma: NDArray[np.float64]


def eval_attitude(sigma: ArrayLike) -> AttitudeEval:
    sigma = np.asarray(sigma, dtype=float)
    Q = quat_from_sigma(sigma)
    G = quat_jacobian(sigma)
    U = u_matrix(Q)
    return AttitudeEval(
        sigma=sigma,
        Q=Q,
        R=_rotation_poly(Q),
        G=G,
        H=quat_hessians(sigma),
        U=U,
        Gamma=U @ np.swapaxes(G, -1, -2),
    )


def angular_velocity(ev: AttitudeEval, sigma_dot: ArrayLike) -> NDArray[np.float64]:
    """World-frame body rate ``omega = 2 Gamma sigma_dot``."""
    sigma_dot = np.asarray(sigma_dot, dtype=float)
    return 2.0 * np.einsum("...ij,...j->...i", ev.Gamma, sigma_dot)


def quat_rates(sigma, sigma_dot, sigma_ddot):
    """``(Q, Qdot, Qddot)`` along a curve with the given sigma derivatives."""
    sigma = np.asarray(sigma, dtype=float)
    sd = np.asarray(sigma_dot, dtype=float)
    sdd = np.asarray(sigma_ddot, dtype=float)
    G = quat_jacobian(sigma)
    H = quat_hessians(sigma)
    Q = quat_from_sigma(sigma)
    Qd = np.einsum("...ka,...k->...a", G, sd)
    Qdd = np.einsum("...akm,...k,...m->...a", H, sd, sd) + np.einsum("...ka,...k->...a", G, sdd)
    return Q, Qd, Qdd


def angular_acceleration(sigma, sigma_dot, sigma_ddot) -> NDArray[np.float64]:
    """``d omega/dt = 2 (U(Qdot) Qdot + U(Q) Qddot)``."""
    Q, Qd, Qdd = quat_rates(sigma, sigma_dot, sigma_ddot)
    return 2.0 * (u_apply(Qd, Qd) + u_apply(Q, Qdd))
