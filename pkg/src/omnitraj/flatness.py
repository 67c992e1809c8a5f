"""State and wrench recovery along a trajectory ``z = [p, sigma]``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .attitude import angular_acceleration, eval_attitude, angular_velocity, hat
from .spline import Trajectory

GRAVITY = np.array([0.0, 0.0, -9.8])


@dataclass(frozen=True)
class VehicleParams:
    # fixture values, not measured vehicle data
    m: float = 4.0
    J_b: NDArray[np.float64] = field(default_factory=lambda: np.diag([0.08, 0.08, 0.14]))
    g: NDArray[np.float64] = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        J = np.asarray(self.J_b, dtype=float)
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-10:
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "J_b", J)
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))


@dataclass(frozen=True)
class FlatSample:
    t: float
    p: NDArray[np.float64]
    v: NDArray[np.float64]
    a: NDArray[np.float64]
    Q: NDArray[np.float64]
    R: NDArray[np.float64]
    omega: NDArray[np.float64]
    omega_dot: NDArray[np.float64] | None = None
    f_b: NDArray[np.float64] | None = None
    tau_b: NDArray[np.float64] | None = None


def state_at(traj: Trajectory, params: VehicleParams, t: float) -> FlatSample:
    z = [traj.eval(t, k) for k in range(3)]
    ev = eval_attitude(z[0][3:])
    return FlatSample(
        t=float(t),
        p=z[0][:3],
        v=z[1][:3],
        a=z[2][:3],
        Q=ev.Q,
        R=ev.R,
        omega=angular_velocity(ev, z[1][3:]),
    )


def input_at(traj: Trajectory, params: VehicleParams, t: float) -> FlatSample:
    """State plus body-frame force ``m R^T (a - g)`` and torque ``R^T (w x J w + J dw)``."""
    st = state_at(traj, params, t)
    sigma = [traj.eval(t, k)[3:] for k in range(3)]
    omega_dot = angular_acceleration(*sigma)
    R = st.R
    J = R @ params.J_b @ R.T
    f_b = params.m * R.T @ (st.a - params.g)
    tau_b = R.T @ (hat(st.omega) @ J @ st.omega + J @ omega_dot)
    return FlatSample(
        t=st.t, p=st.p, v=st.v, a=st.a, Q=st.Q, R=R, omega=st.omega,
        omega_dot=omega_dot, f_b=f_b, tau_b=tau_b,
    )


def sample_times(traj: Trajectory, dt: float) -> NDArray[np.float64]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    t_end = traj.total_duration
    n = int(np.floor(t_end / dt + 1e-9))
    ts = np.arange(n + 1) * dt
    ts = ts[ts < t_end - 1e-12]
    return np.append(ts, t_end)


def sample_profile(traj: Trajectory, params: VehicleParams, dt: float) -> list[FlatSample]:
    """Full samples at ``0, dt, 2 dt, ...`` plus the final time."""
    return [input_at(traj, params, t) for t in sample_times(traj, dt)]
