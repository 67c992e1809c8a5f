"""Sampled constraint penalties with analytic gradients.

Each piece ``i`` is sampled at ``t_{i-1} + (j / kappa) T_i`` for
``j = 1..kappa``. A sample contributes ``W * max(g, 0)^3 * T_i / kappa`` for
the constraint values

* speed         ``g = |p'|^2 - v_max^2``
* acceleration  ``g = |p''|^2 - a_max^2``
* body rate     ``g = |omega|^2 - omega_max^2``
* safety        ``g = n_k . (p + R v_l) - d_k`` for every shape vertex and face
  of the polyhedron assigned to the piece.

A piece whose polyhedron differs from its predecessor's also gets a safety
sample at ``j = 0``: its start point is otherwise only checked against the
previous polyhedron.

Any sampled quantity depends on ``T_i`` only through the sample time, so its
duration derivative is ``(j / kappa)`` times its time derivative.

Pieces are processed in fixed blocks of :data:`BLOCK` and reduced in piece
order, so the result is bit-identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .attitude import (
    angular_acceleration,
    quat_from_sigma,
    quat_hessians,
    quat_jacobian,
    rotate_jacobian,
    u_apply,
    u_matrix,
    _rotation_poly,
)
from .geometry import Corridor, VehicleShape
from .spline import Trajectory, basis

CLASSES = ("velocity", "acceleration", "omega", "safety")
BLOCK = 8
TRUST_RADIUS = 1.0


class AssignmentMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    v_max: float = 0.8
    a_max: float = 5.0
    omega_max: float = 0.8
    kappa: int = 16
    W_v: float = 1e4
    W_a: float = 1e4
    W_omega: float = 1e4
    W_c: float = 9e4
    k_rho: float = 0.05

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.omega_max) <= 0:
            raise ValueError("limits must be positive")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if min(self.W_v, self.W_a, self.W_omega, self.W_c, self.k_rho) < 0:
            raise ValueError("weights must be nonnegative")


@dataclass
class PenaltyReport:
    total: float
    subtotals: dict[str, float]
    max_violation: dict[str, float]
    grad_c: NDArray[np.float64]
    grad_T: NDArray[np.float64]
    grad_c_by_class: dict[str, NDArray[np.float64]] = field(default_factory=dict, repr=False)
    grad_T_by_class: dict[str, NDArray[np.float64]] = field(default_factory=dict, repr=False)


def violation_cubed(x):
    """``max(x, 0)^3``."""
    return np.maximum(x, 0.0) ** 3


def violation_cubed_grad(x):
    return 3.0 * np.maximum(x, 0.0) ** 2


def _padded_faces(corridor: Corridor) -> tuple[NDArray, NDArray]:
    kmax = max(P.num_faces for P in corridor.polyhedra)
    npoly = len(corridor.polyhedra)
    N = np.zeros((npoly, kmax, 3))
    d = np.full((npoly, kmax), 1e6)
    for i, P in enumerate(corridor.polyhedra):
        N[i, : P.num_faces] = P.normals
        d[i, : P.num_faces] = P.offsets
    a = np.asarray(corridor.assignment)
    return N[a], d[a]


def _junction_mask(corridor: Corridor) -> NDArray[np.bool_]:
    a = np.asarray(corridor.assignment)
    return np.concatenate([[False], a[1:] != a[:-1]])


def _omega_terms(S0, S1, S2):
    """Body rate, its time derivative, and gradients of ``|omega|^2``."""
    Q = quat_from_sigma(S0)
    G = quat_jacobian(S0)
    H = quat_hessians(S0)
    Qd = np.einsum("...ka,...k->...a", G, S1)
    omega = 2.0 * u_apply(Q, Qd)
    omega_dot = angular_acceleration(S0, S1, S2)
    U = u_matrix(Q)
    # d|w|^2/d sigma_dot = 4 Gamma^T w, Gamma = U G^T
    Uw = np.einsum("...ia,...i->...a", U, omega)
    g_sd = 4.0 * np.einsum("...ka,...a->...k", G, Uw)
    # d w / d sigma_k = 2 [U(G_k) Qdot + U(Q) (H sigma_dot)_k]
    Hsd = np.einsum("...akm,...m->...ka", H, S1)
    dw = 2.0 * (u_apply(G, Qd[..., None, :]) + u_apply(Q[..., None, :], Hsd))
    g_s = 2.0 * np.einsum("...ki,...i->...k", dw, omega)
    return omega, omega_dot, g_s, g_sd


def _block(traj, pieces, N_all, d_all, junction, shape: VehicleShape, cfg: PenaltyConfig):
    s = traj.s
    nc = 2 * s
    kappa = cfg.kappa
    c = traj.coeffs[pieces]
    T = traj.durations[pieces]
    nb = len(pieces)
    frac = np.arange(1, kappa + 1) / kappa
    alpha = T[:, None] * frac[None, :]
    B = [basis(nc, alpha, k) for k in range(4)]
    cp, cs = c[..., :3], c[..., 3:]
    P1 = np.einsum("ijm,imd->ijd", B[1], cp)
    P2 = np.einsum("ijm,imd->ijd", B[2], cp)
    P3 = np.einsum("ijm,imd->ijd", B[3], cp)
    w = T / kappa

    values = np.zeros((nb, 4))
    maxv = np.full(4, -np.inf)
    gc = {k: np.zeros((nb, nc, 6)) for k in CLASSES}
    gT = {k: np.zeros(nb) for k in CLASSES}

    def rate_term(idx, name, weight, x, xdot, Bx, limit, cols):
        g = np.sum(x * x, axis=-1) - limit * limit
        V = violation_cubed(g)
        dV = violation_cubed_grad(g)
        values[:, idx] = weight * np.sum(V, axis=1) * w
        maxv[idx] = np.max(np.sqrt(np.sum(x * x, axis=-1))) - limit
        coef = weight * (w[:, None] * dV) * 2.0
        gc[name][..., cols] = np.einsum("ij,ijm,ijd->imd", coef, Bx, x)
        gT[name] = weight * (
            np.sum(V, axis=1) / kappa
            + w * np.sum(dV * 2.0 * np.sum(x * xdot, axis=-1) * frac, axis=1)
        )

    rate_term(0, "velocity", cfg.W_v, P1, P2, B[1], cfg.v_max, slice(0, 3))
    rate_term(1, "acceleration", cfg.W_a, P2, P3, B[2], cfg.a_max, slice(0, 3))

    S0 = np.einsum("ijm,imd->ijd", B[0], cs)
    S1 = np.einsum("ijm,imd->ijd", B[1], cs)
    S2 = np.einsum("ijm,imd->ijd", B[2], cs)
    omega, omega_dot, g_s, g_sd = _omega_terms(S0, S1, S2)
    g = np.sum(omega * omega, axis=-1) - cfg.omega_max**2
    V = violation_cubed(g)
    dV = violation_cubed_grad(g)
    values[:, 2] = cfg.W_omega * np.sum(V, axis=1) * w
    maxv[2] = np.max(np.linalg.norm(omega, axis=-1)) - cfg.omega_max
    coef = cfg.W_omega * w[:, None] * dV
    gc["omega"][..., 3:] = np.einsum("ij,ijm,ijd->imd", coef, B[0], g_s) + np.einsum(
        "ij,ijm,ijd->imd", coef, B[1], g_sd
    )
    gT["omega"] = cfg.W_omega * (
        np.sum(V, axis=1) / kappa
        + w * np.sum(dV * 2.0 * np.sum(omega * omega_dot, axis=-1) * frac, axis=1)
    )

    # whole-body safety; column 0 is the j = 0 sample, live only at junctions
    frac = np.arange(0, kappa + 1) / kappa
    B = [np.concatenate([basis(nc, np.zeros((nb, 1)), k), B[k]], axis=1) for k in range(2)]
    P0 = np.einsum("ijm,imd->ijd", B[0], cp)
    P1 = np.einsum("ijm,imd->ijd", B[1], cp)
    S0 = np.einsum("ijm,imd->ijd", B[0], cs)
    S1 = np.einsum("ijm,imd->ijd", B[1], cs)
    Q = quat_from_sigma(S0)
    Qd = np.einsum("...ka,...k->...a", quat_jacobian(S0), S1)
    omega = 2.0 * u_apply(Q, Qd)
    R = _rotation_poly(Q)
    Nf = N_all[pieces]
    df = d_all[pieces]
    pslack = np.einsum("ijd,ikd->ijk", P0, Nf) - df[:, None, :]
    reach = shape.radius + TRUST_RADIUS
    live = np.ones((nb, kappa + 1), dtype=bool)
    live[:, 0] = junction[pieces]
    ii, jj, kk = np.nonzero((pslack > -reach) & live[:, :, None])
    if ii.size:
        n = Nf[ii, kk]
        Rv = np.einsum("cab,lb->cla", R[ii, jj], shape.body_vertices)
        gl = pslack[ii, jj, kk][:, None] + np.einsum("cla,ca->cl", Rv, n)
        maxv[3] = float(np.max(gl))
        ca, la = np.nonzero(gl > 0.0)
        if ca.size:
            gv = gl[ca, la]
            Vc = gv**3
            dVc = 3.0 * gv**2
            pi, pj = ii[ca], jj[ca]
            na = n[ca]
            np.add.at(values[:, 3], pi, cfg.W_c * Vc * w[pi])
            coef = cfg.W_c * w[pi] * dVc
            b0 = B[0][pi, pj]
            np.add.at(gc["safety"][..., :3], pi, coef[:, None, None] * b0[:, :, None] * na[:, None, :])
            Qa = Q[pi, pj]
            J = rotate_jacobian(Qa, shape.body_vertices[la])
            nJ = np.einsum("ca,cab->cb", na, J)
            dg_ds = np.einsum("cka,ca->ck", quat_jacobian(S0[pi, pj]), nJ)
            np.add.at(gc["safety"][..., 3:], pi, coef[:, None, None] * b0[:, :, None] * dg_ds[:, None, :])
            vel = P1[pi, pj] + np.cross(omega[pi, pj], Rv[ca, la])
            dgdt = np.sum(na * vel, axis=-1)
            np.add.at(gT["safety"], pi, cfg.W_c * (Vc / kappa + w[pi] * dVc * frac[pj] * dgdt))
    else:
        maxv[3] = float(np.max(pslack[live])) if pslack.size else -np.inf
    return values, maxv, gc, gT


def evaluate(
    traj: Trajectory,
    corridor: Corridor,
    shape: VehicleShape,
    cfg: PenaltyConfig,
    threads: int = 1,
) -> PenaltyReport:
    """Total penalty and its gradients w.r.t. coefficients and durations."""
    M = traj.M
    if len(corridor.assignment) != M:
        raise AssignmentMismatch(f"corridor assigns {len(corridor.assignment)} pieces, trajectory has {M}")
    N_all, d_all = _padded_faces(corridor)
    junction = _junction_mask(corridor)
    blocks = [np.arange(b, min(b + BLOCK, M)) for b in range(0, M, BLOCK)]

    def run(p):
        return _block(traj, p, N_all, d_all, junction, shape, cfg)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(p) for p in blocks]

    values = np.concatenate([r[0] for r in results])
    maxv = np.max(np.stack([r[1] for r in results]), axis=0)
    gc = {k: np.concatenate([r[2][k] for r in results]) for k in CLASSES}
    gT = {k: np.concatenate([r[3][k] for r in results]) for k in CLASSES}
    subtotals = {k: float(np.sum(values[:, i])) for i, k in enumerate(CLASSES)}
    grad_c = gc["velocity"] + gc["acceleration"] + gc["omega"] + gc["safety"]
    grad_T = gT["velocity"] + gT["acceleration"] + gT["omega"] + gT["safety"]
    return PenaltyReport(
        total=float(np.sum(values)),
        subtotals=subtotals,
        max_violation=dict(zip(CLASSES, (float(v) for v in maxv))),
        grad_c=grad_c,
        grad_T=grad_T,
        grad_c_by_class=gc,
        grad_T_by_class=gT,
    )


def max_violation_profile(
    traj: Trajectory,
    corridor: Corridor,
    shape: VehicleShape,
    cfg: PenaltyConfig,
    oversample: int = 4,
) -> dict[str, float]:
    """Worst speed, acceleration, body rate and vertex penetration on a dense grid.

    Samples ``oversample * kappa`` points per piece plus each piece's start.
    Penetration is the largest face slack of any shape vertex in meters
    (negative means clearance).
    """
    n = oversample * cfg.kappa
    N_all, d_all = _padded_faces(corridor)
    out = {"speed": 0.0, "acceleration": 0.0, "omega": 0.0, "penetration": -np.inf}
    nc = 2 * traj.s
    for i in range(traj.M):
        frac = np.arange(0, n + 1) / n
        alpha = traj.durations[i] * frac
        c = traj.coeffs[i]
        B = [basis(nc, alpha, k) for k in range(3)]
        p, v, a = (b @ c[:, :3] for b in B)
        sg, sd, _ = (b @ c[:, 3:] for b in B)
        Q = quat_from_sigma(sg)
        Qd = np.einsum("jka,jk->ja", quat_jacobian(sg), sd)
        omega = 2.0 * u_apply(Q, Qd)
        R = _rotation_poly(Q)
        world = p[:, None, :] + np.einsum("jab,lb->jla", R, shape.body_vertices)
        k = corridor.polyhedra[corridor.assignment[i]].num_faces
        slack = np.einsum("jla,ka->jlk", world, N_all[i, :k]) - d_all[i, :k]
        out["speed"] = max(out["speed"], float(np.max(np.linalg.norm(v, axis=1))))
        out["acceleration"] = max(out["acceleration"], float(np.max(np.linalg.norm(a, axis=1))))
        out["omega"] = max(out["omega"], float(np.max(np.linalg.norm(omega, axis=1))))
        out["penetration"] = max(out["penetration"], float(np.max(slack)))
    return out
