"""The unconstrained trajectory problem: objective assembly and optimization."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .attitude import sigma_from_rotation
from .elimination import (
    DecisionVars,
    WaypointContainer,
    build_containers,
    forward_q,
    forward_T,
    initialize,
    pullback_q,
    pullback_T,
)
from .flatness import VehicleParams
from .geometry import Corridor, VehicleShape, validate_corridor
from .penalty import PenaltyConfig, evaluate
from .solver import LineSearchFailure, SolverConfig, Trace, minimize
from .spline import (
    BoundaryCondition,
    Trajectory,
    backprop_to_q_T,
    smoothness_cost_and_gradients,
    solve_coefficients,
)

log = logging.getLogger(__name__)


class InvalidCorridor(ValueError):
    def __init__(self, message: str, failing_pairs: list[tuple[int, int]]):
        super().__init__(message)
        self.failing_pairs = failing_pairs


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    corridor: Corridor
    shape: VehicleShape
    bc: BoundaryCondition
    s: int
    pieces_per_polyhedron: int
    penalty: PenaltyConfig
    vehicle: VehicleParams
    containers: tuple[WaypointContainer, ...]
    threads: int = 1

    @property
    def M(self) -> int:
        return self.corridor.num_pieces

    @property
    def xi_sizes(self) -> list[int]:
        return [c.size for c in self.containers]

    def translated(self, delta: ArrayLike) -> "ProblemSpec":
        delta = np.asarray(delta, dtype=float)
        corridor = Corridor(
            tuple(P.translated(delta) for P in self.corridor.polyhedra), self.corridor.assignment
        )
        full = np.concatenate([delta, np.zeros(3)])
        return replace(
            self,
            corridor=corridor,
            bc=self.bc.translated(full),
            containers=tuple(build_containers(corridor)),
        )


def build_problem(
    corridor: Corridor,
    shape: VehicleShape,
    start: ArrayLike,
    goal: ArrayLike,
    R_start: ArrayLike | None = None,
    R_goal: ArrayLike | None = None,
    s: int = 4,
    penalty: PenaltyConfig | None = None,
    vehicle: VehicleParams | None = None,
    pieces_per_polyhedron: int = 2,
    threads: int = 1,
    validate: bool = True,
) -> ProblemSpec:
    """Rest-to-rest problem between two poses.

    Raises:
        InvalidCorridor: adjacent polyhedra do not overlap or the assignment is malformed.
    """
    if validate:
        report = validate_corridor(corridor)
        if not report.ok:
            raise InvalidCorridor("; ".join(report.messages), report.failing_pairs)
    R_start = np.eye(3) if R_start is None else np.asarray(R_start, dtype=float)
    R_goal = np.eye(3) if R_goal is None else np.asarray(R_goal, dtype=float)
    z0 = np.concatenate([np.asarray(start, dtype=float), sigma_from_rotation(R_start)])
    zf = np.concatenate([np.asarray(goal, dtype=float), sigma_from_rotation(R_goal)])
    return ProblemSpec(
        corridor=corridor,
        shape=shape,
        bc=BoundaryCondition.rest(s, z0, zf),
        s=s,
        pieces_per_polyhedron=pieces_per_polyhedron,
        penalty=penalty or PenaltyConfig(),
        vehicle=vehicle or VehicleParams(),
        containers=tuple(build_containers(corridor)),
        threads=threads,
    )


def initial_guess(spec: ProblemSpec, attitude_jitter: float = 0.0, seed: int = 0) -> DecisionVars:
    from .attitude import rotation_from_sigma

    return initialize(
        spec.corridor,
        list(spec.containers),
        spec.bc.z_o[0, :3],
        spec.bc.z_f[0, :3],
        rotation_from_sigma(spec.bc.z_o[0, 3:]),
        rotation_from_sigma(spec.bc.z_f[0, 3:]),
        spec.penalty.v_max,
        attitude_jitter=attitude_jitter,
        rng=np.random.default_rng(seed),
    )


@dataclass
class ObjectiveEval:
    value: float
    grad_xi: tuple[NDArray[np.float64], ...]
    grad_qsigma: NDArray[np.float64]
    grad_tau: NDArray[np.float64]
    diagnostics: dict = field(default_factory=dict)
    trajectory: Trajectory | None = field(default=None, repr=False)

    def packed_gradient(self) -> NDArray[np.float64]:
        return DecisionVars(self.grad_xi, self.grad_qsigma, self.grad_tau).pack()


def waypoints(vars: DecisionVars, spec: ProblemSpec) -> NDArray[np.float64]:
    """Interior waypoints ``(M - 1, 6)`` for the given variables."""
    qp = np.array([forward_q(x, c) for x, c in zip(vars.xi, spec.containers)]).reshape(-1, 3)
    return np.hstack([qp, vars.q_sigma])


def trajectory_for(vars: DecisionVars, spec: ProblemSpec) -> Trajectory:
    return solve_coefficients(spec.s, waypoints(vars, spec), forward_T(vars.tau), spec.bc)


def objective(vars: DecisionVars, spec: ProblemSpec) -> ObjectiveEval:
    """Smoothness + time regularization + penalties, with the gradient in decision space."""
    T = forward_T(vars.tau)
    traj = solve_coefficients(spec.s, waypoints(vars, spec), T, spec.bc)
    J, dJ_dc, dJ_dT = smoothness_cost_and_gradients(traj)
    pen = evaluate(traj, spec.corridor, spec.shape, spec.penalty, threads=spec.threads)
    k_rho = spec.penalty.k_rho
    T_sum = float(np.sum(T))
    value = J + k_rho * T_sum + pen.total

    dq, dT = backprop_to_q_T(traj, dJ_dc + pen.grad_c, dJ_dT + k_rho + pen.grad_T)
    grad_xi = tuple(pullback_q(x, c, dq[j, :3]) for j, (x, c) in enumerate(zip(vars.xi, spec.containers)))
    return ObjectiveEval(
        value=value,
        grad_xi=grad_xi,
        grad_qsigma=dq[:, 3:].copy(),
        grad_tau=pullback_T(T, dT),
        diagnostics={
            "J": J,
            "T_sum": T_sum,
            "time_cost": k_rho * T_sum,
            "penalty": pen.total,
            **{f"penalty_{k}": v for k, v in pen.subtotals.items()},
        },
        trajectory=traj,
    )


@dataclass
class OptimizeResult:
    trajectory: Trajectory
    vars: DecisionVars
    final: ObjectiveEval
    history: list[dict]
    trace: Trace
    status: str
    wall_time: float

    @property
    def iterations(self) -> int:
        return self.trace.iterations

    @property
    def ok(self) -> bool:
        return self.status == "converged"


def optimize(
    spec: ProblemSpec,
    init: DecisionVars | None = None,
    solver: SolverConfig | None = None,
) -> OptimizeResult:
    """Run L-BFGS from ``init`` and re-solve the trajectory at the best point.

    Hitting the iteration cap or a line-search failure does not raise; the
    best point so far is returned with ``status`` set accordingly.
    """
    solver = solver or SolverConfig()
    init = init if init is not None else initial_guess(spec)
    sizes, M = spec.xi_sizes, spec.M
    last: dict = {}
    history: list[dict] = []

    def oracle(x):
        ev = objective(DecisionVars.unpack(x, sizes, M), spec)
        last["ev"] = ev
        return ev.value, ev.packed_gradient()

    def record(x, fx):
        d = dict(last["ev"].diagnostics)
        d["iteration"] = len(history)
        d["value"] = fx
        history.append(d)

    start = time.perf_counter()
    try:
        x, trace = minimize(oracle, init.pack(), solver, callback=record)
        status = trace.status
    except LineSearchFailure as exc:
        x, trace, status = exc.x, exc.trace, "linesearch_failure"
        log.warning("line search failed after %d iterations", trace.iterations)
    wall = time.perf_counter() - start
    best = DecisionVars.unpack(x, sizes, M)
    final = objective(best, spec)
    return OptimizeResult(
        trajectory=final.trajectory,
        vars=best,
        final=final,
        history=history,
        trace=trace,
        status=status,
        wall_time=wall,
    )
