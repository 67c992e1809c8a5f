"""Limited-memory BFGS with Armijo backtracking.

Curvature pairs with ``s.y <= 1e-12 |s| |y|`` are skipped rather than
enforcing Wolfe conditions, which keeps the line search to function values
plus one gradient per accepted step.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

Oracle = Callable[[NDArray[np.float64]], tuple[float, NDArray[np.float64]]]


class SolverError(RuntimeError):
    pass


class NonFiniteObjective(SolverError):
    pass


class LineSearchFailure(SolverError):
    """No step satisfied the Armijo condition; carries the best point found."""

    def __init__(self, message: str, x: NDArray[np.float64], trace: "Trace"):
        super().__init__(message)
        self.x = x
        self.trace = trace


@dataclass(frozen=True)
class SolverConfig:
    memory: int = 16
    grad_tol: float = 1e-5
    max_iters: int = 3000
    c1: float = 1e-4
    backtrack: float = 0.5
    max_linesearch: int = 60
    min_step: float = 1e-16
    # relative-decrease stop: (f[k - past] - f[k]) / max(1, |f[k]|) < delta;
    # delta = 0 disables it
    past: int = 3
    delta: float = 1e-6

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0.0 < self.c1 < 1.0:
            raise ValueError("c1 must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.past < 1 or self.delta < 0:
            raise ValueError("past must be >= 1 and delta >= 0")


@dataclass
class Trace:
    values: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    evaluations: int = 0
    status: str = "running"
    reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.steps)


def _two_loop(g: NDArray, pairs: deque) -> NDArray:
    d = -g.copy()
    if not pairs:
        return d
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ d)
        d -= a * y
        alphas.append(a)
    s, y, _ = pairs[-1]
    d *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ d)
        d += (a - b) * s
    return d


def minimize(
    f: Oracle,
    x0: ArrayLike,
    cfg: SolverConfig = SolverConfig(),
    callback: Callable[[NDArray[np.float64], float], None] | None = None,
) -> tuple[NDArray[np.float64], Trace]:
    """Minimize a smooth function given an oracle returning ``(value, gradient)``.

    Stops with status ``"converged"`` when ``|g| <= grad_tol * max(1, |x|)``
    (reason ``"gradient"``) or when the value dropped by less than
    ``delta * max(1, |f|)`` over the last ``past`` iterations (reason
    ``"decrease"``); otherwise after ``max_iters`` iterations (status
    ``"max_iters"``).

    Raises:
        NonFiniteObjective: the value or gradient at ``x0`` is not finite.
        LineSearchFailure: backtracking found no acceptable step.
    """
    x = np.array(x0, dtype=float)
    fx, g = f(x)
    g = np.asarray(g, dtype=float)
    trace = Trace(evaluations=1)
    if not np.isfinite(fx) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective("objective is not finite at the initial point")
    trace.values.append(float(fx))
    trace.grad_norms.append(float(np.linalg.norm(g)))
    pairs: deque = deque(maxlen=cfg.memory)

    for it in range(cfg.max_iters):
        gnorm = np.linalg.norm(g)
        if gnorm <= cfg.grad_tol * max(1.0, np.linalg.norm(x)):
            trace.status, trace.reason = "converged", "gradient"
            return x, trace
        vals = trace.values
        if cfg.delta > 0 and len(vals) > cfg.past:
            if vals[-1 - cfg.past] - fx < cfg.delta * max(1.0, abs(fx)):
                trace.status, trace.reason = "converged", "decrease"
                return x, trace
        d = _two_loop(g, pairs)
        slope = float(g @ d)
        if not slope < 0.0:
            # stale curvature: restart from steepest descent
            pairs.clear()
            d = -g
            slope = -float(gnorm**2)
        step = 1.0 / gnorm if it == 0 else 1.0
        accepted = False
        for _ in range(cfg.max_linesearch):
            x_new = x + step * d
            f_new, g_new = f(x_new)
            trace.evaluations += 1
            if np.isfinite(f_new) and f_new <= fx + cfg.c1 * step * slope:
                g_new = np.asarray(g_new, dtype=float)
                if np.all(np.isfinite(g_new)):
                    accepted = True
                    break
            step *= cfg.backtrack
            if step < cfg.min_step:
                break
        if not accepted:
            trace.status = "linesearch_failure"
            raise LineSearchFailure("no step satisfies the sufficient-decrease condition", x, trace)
        sk = x_new - x
        yk = g_new - g
        sy = float(sk @ yk)
        if sy > 1e-12 * np.linalg.norm(sk) * np.linalg.norm(yk):
            pairs.append((sk, yk, 1.0 / sy))
        x, fx, g = x_new, float(f_new), g_new
        trace.values.append(fx)
        trace.grad_norms.append(float(np.linalg.norm(g)))
        trace.steps.append(step)
        if callback is not None:
            callback(x, fx)

    trace.status = "max_iters"
    return x, trace
