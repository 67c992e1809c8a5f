"""Command-line front end: ``run``, ``fixture`` and ``bench``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fixtures import KINDS, InvalidParams, make_fixture, write_fixture
from .flatness import VehicleParams, sample_profile
from .geometry import Corridor, GeometryError, VehicleShape, load_corridor
from .penalty import PenaltyConfig, max_violation_profile
from .problem import InvalidCorridor, OptimizeResult, ProblemSpec, build_problem, initial_guess, optimize
from .solver import SolverConfig, SolverError
from .spline import Trajectory

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_CORRIDOR, EXIT_SOLVER = 0, 1, 2, 3

PROFILE_COLUMNS = (
    "t[s]",
    "px[m]", "py[m]", "pz[m]",
    "vx[m/s]", "vy[m/s]", "vz[m/s]",
    "ax[m/s^2]", "ay[m/s^2]", "az[m/s^2]",
    "qw[-]", "qx[-]", "qy[-]", "qz[-]",
    "wx[rad/s]", "wy[rad/s]", "wz[rad/s]",
    "fbx[N]", "fby[N]", "fbz[N]",
    "taubx[N*m]", "tauby[N*m]", "taubz[N*m]",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a ``run`` needs besides the corridor itself.

    Relative paths are resolved against the directory of the config file.
    """

    corridor: str | None = None
    start: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    goal: list[float] = field(default_factory=lambda: [1.0, 0.0, 0.0])
    start_rotation: list[list[float]] | None = None
    goal_rotation: list[list[float]] | None = None
    s: int = 4
    kappa: int = 16
    v_max: float = 0.8
    a_max: float = 5.0
    omega_max: float = 0.8
    W_v: float = 1e4
    W_a: float = 1e4
    W_omega: float = 1e4
    W_c: float = 9e4
    k_rho: float = 0.05
    pieces_per_polyhedron: int = 2
    solver: dict = field(default_factory=dict)
    shape: dict = field(default_factory=lambda: {"cuboid": [1.0, 1.0, 0.35]})
    shape_file: str | None = None
    vehicle: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = 0
    attitude_jitter: float = 0.05
    profile_dt: float = 0.02
    threads: int = 1
    # report tolerances: relative margin on rate limits, absolute on penetration
    report_margin: float = 0.02
    penetration_tol: float = 1e-3
    base_dir: str = "."

    def __post_init__(self):
        for name in ("s", "kappa", "pieces_per_polyhedron", "threads"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.s < 2:
            raise ConfigError("s must be >= 2")
        for name in ("v_max", "a_max", "omega_max", "profile_dt"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("W_v", "W_a", "W_omega", "W_c", "k_rho", "attitude_jitter",
                     "report_margin", "penetration_tol"):
            if float(getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        for name in ("start", "goal"):
            if np.asarray(getattr(self, name), dtype=float).shape != (3,):
                raise ConfigError(f"{name} must be a 3-vector")
        for name in ("start_rotation", "goal_rotation"):
            R = getattr(self, name)
            if R is not None and np.asarray(R, dtype=float).shape != (3, 3):
                raise ConfigError(f"{name} must be a 3x3 matrix")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**{**data, "base_dir": str(base_dir)})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data, path.parent)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def penalty_config(self) -> PenaltyConfig:
        return PenaltyConfig(
            v_max=self.v_max, a_max=self.a_max, omega_max=self.omega_max, kappa=self.kappa,
            W_v=self.W_v, W_a=self.W_a, W_omega=self.W_omega, W_c=self.W_c, k_rho=self.k_rho,
        )

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"solver: {exc}") from exc

    def vehicle_params(self) -> VehicleParams:
        try:
            return VehicleParams(**self.vehicle)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"vehicle: {exc}") from exc

    def vehicle_shape(self) -> VehicleShape:
        spec = self.shape
        if self.shape_file is not None:
            try:
                spec = json.loads(self.resolve(self.shape_file).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read shape file: {exc}") from exc
        try:
            if "cuboid" in spec:
                return VehicleShape.cuboid(*spec["cuboid"])
            return VehicleShape(np.asarray(spec["body_vertices"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad shape description: {exc}") from exc


def build_from_config(cfg: RunConfig, corridor: Corridor) -> ProblemSpec:
    return build_problem(
        corridor,
        cfg.vehicle_shape(),
        cfg.start,
        cfg.goal,
        R_start=cfg.start_rotation,
        R_goal=cfg.goal_rotation,
        s=cfg.s,
        penalty=cfg.penalty_config(),
        vehicle=cfg.vehicle_params(),
        pieces_per_polyhedron=cfg.pieces_per_polyhedron,
        threads=cfg.threads,
    )


def solve(cfg: RunConfig, spec: ProblemSpec) -> OptimizeResult:
    init = initial_guess(spec, attitude_jitter=cfg.attitude_jitter, seed=cfg.seed)
    return optimize(spec, init, cfg.solver_config())


# --- artifact writers -------------------------------------------------------


def trajectory_json(traj: Trajectory) -> dict:
    return {
        "s": traj.s,
        "dim": int(traj.coeffs.shape[2]),
        "layout": "coeffs[piece][power][dim], z = [px, py, pz, sigma1, sigma2, sigma3]",
        "durations": traj.durations.tolist(),
        "coeffs": traj.coeffs.tolist(),
    }


def profile_rows(traj: Trajectory, params: VehicleParams, dt: float) -> list[list[float]]:
    rows = []
    for smp in sample_profile(traj, params, dt):
        rows.append([smp.t, *smp.p, *smp.v, *smp.a, *smp.Q, *smp.omega, *smp.f_b, *smp.tau_b])
    return rows


def profile_csv(rows: list[list[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    return buf.getvalue()


def violation_report(result: OptimizeResult, spec: ProblemSpec, cfg: RunConfig) -> dict:
    """Dense-sampled maxima against the limits.

    ``exceedance`` is how far each maximum lies beyond its limit plus the
    reporting margin, so a feasible run reports all zeros.
    """
    pen = spec.penalty
    prof = max_violation_profile(result.trajectory, spec.corridor, spec.shape, pen, oversample=4)
    limits = {
        "speed": pen.v_max * (1 + cfg.report_margin),
        "acceleration": pen.a_max * (1 + cfg.report_margin),
        "omega": pen.omega_max * (1 + cfg.report_margin),
        "penetration": cfg.penetration_tol,
    }
    exceed = {k: max(0.0, prof[k] - limits[k]) for k in limits}
    return {
        "oversample": 4,
        "maxima": prof,
        "limits": {"v_max": pen.v_max, "a_max": pen.a_max, "omega_max": pen.omega_max},
        "thresholds": limits,
        "exceedance": exceed,
        "feasible": all(v == 0.0 for v in exceed.values()),
        "penalty": {k: v for k, v in result.final.diagnostics.items() if k.startswith("penalty")},
    }


def plot_svg(rows: list[list[float]], pen: PenaltyConfig, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.asarray(rows)
    t = data[:, 0]
    series = [
        ("speed [m/s]", np.linalg.norm(data[:, 4:7], axis=1), pen.v_max),
        ("acceleration [m/s^2]", np.linalg.norm(data[:, 7:10], axis=1), pen.a_max),
        ("body rate [rad/s]", np.linalg.norm(data[:, 14:17], axis=1), pen.omega_max),
    ]
    with matplotlib.rc_context({"svg.hashsalt": "omnitraj", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
        for ax, (label, y, lim) in zip(axes, series):
            ax.plot(t, y, color="tab:blue", lw=1.2)
            ax.axhline(lim, color="tab:red", ls="--", lw=1.0)
            ax.set_ylabel(label)
            ax.grid(alpha=0.3)
        axes[-1].set_xlabel("t [s]")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)


def write_artifacts(result: OptimizeResult, spec: ProblemSpec, cfg: RunConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    rows = profile_rows(result.trajectory, spec.vehicle, cfg.profile_dt)
    (out / "trajectory.json").write_text(json.dumps(trajectory_json(result.trajectory), indent=1) + "\n")
    (out / "profile.csv").write_text(profile_csv(rows), encoding="utf-8")
    report = violation_report(result, spec, cfg)
    (out / "violations.json").write_text(json.dumps(report, indent=2) + "\n")
    plot_svg(rows, spec.penalty, out / "profile.svg")
    d = result.final.diagnostics
    values = result.trace.values
    summary = {
        "status": result.status,
        "J": d["J"],
        "T_sum": d["T_sum"],
        "objective": result.final.value,
        "iterations": result.iterations,
        "evaluations": result.trace.evaluations,
        "M": spec.M,
        "monotone": bool(all(b <= a for a, b in zip(values, values[1:]))),
        "feasible": report["feasible"],
        "wall_time": result.wall_time,
        "t_opt_per_M": result.wall_time / spec.M,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


# --- operations ---------------------------------------------------------------


def run(
    config_path: str | Path,
    corridor_path: str | Path | None = None,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> int:
    """Load, solve and export. Returns the process exit code."""
    try:
        cfg = RunConfig.load(config_path)
        overrides = {}
        if seed is not None:
            overrides["seed"] = seed
        if threads is not None:
            overrides["threads"] = threads
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        # surface errors in nested sections before any work is done
        cfg.solver_config(), cfg.vehicle_params(), cfg.vehicle_shape()
        if corridor_path is None:
            if cfg.corridor is None:
                raise ConfigError("no corridor given in the config or on the command line")
            corridor_path = cfg.resolve(cfg.corridor)
        out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.out)
        try:
            corridor = load_corridor(corridor_path, cfg.pieces_per_polyhedron)
        except OSError as exc:
            raise ConfigError(f"cannot read corridor {corridor_path}: {exc}") from exc
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"malformed corridor file {corridor_path}: {exc}") from exc
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        spec = build_from_config(cfg, corridor)
    except InvalidCorridor as exc:
        print(f"error: invalid corridor, failing pairs {exc.failing_pairs}: {exc}", file=sys.stderr)
        return EXIT_CORRIDOR
    except GeometryError as exc:
        print(f"error: invalid corridor: {exc}", file=sys.stderr)
        return EXIT_CORRIDOR
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = solve(cfg, spec)
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    summary = write_artifacts(result, spec, cfg, out)
    print(json.dumps({k: summary[k] for k in ("status", "iterations", "J", "T_sum", "feasible")}))
    if not result.ok:
        print(f"error: solver stopped with status {result.status}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def straight_corridor(M: int, pieces_per_polyhedron: int = 2, box_length: float = 2.0) -> tuple[Corridor, list, list]:
    """Straight fixture with exactly ``M`` pieces spread over ``M // ppp`` boxes."""
    n_boxes = max(1, M // pieces_per_polyhedron)
    corridor, cfg = make_fixture("straight", {"length": box_length * n_boxes, "boxes": n_boxes})
    assignment = tuple(i * n_boxes // M for i in range(M))
    return Corridor(corridor.polyhedra, assignment), cfg["start"], cfg["goal"]


def bench_scaling(cfg: RunConfig | None = None, Ms=(4, 8, 16, 32, 64), repeats: int = 3) -> dict:
    """Median optimizer wall time per piece count on the straight fixture.

    Runs are sequential. Returns the table, the final durations of each
    size (to check determinism across repeats) and a least-squares line
    ``t_opt = slope * M + intercept`` with its R^2.
    """
    cfg = cfg or RunConfig()
    rows, durations = [], {}
    for M in Ms:
        corridor, start, goal = straight_corridor(M, cfg.pieces_per_polyhedron)
        run_cfg = dataclasses.replace(cfg, start=start, goal=goal)
        spec = build_from_config(run_cfg, corridor)
        times, monotone = [], True
        for _ in range(max(1, repeats)):
            res = solve(run_cfg, spec)
            times.append(res.wall_time)
            v = res.trace.values
            monotone = monotone and all(b <= a for a, b in zip(v, v[1:]))
        t_med = statistics.median(times)
        rows.append({
            "M": M,
            "t_opt": t_med,
            "t_opt_per_M": t_med / M,
            "iterations": res.iterations,
            "status": res.status,
            "monotone": monotone,
        })
        durations[M] = res.trajectory.durations.tolist()
    fit = {"slope": None, "intercept": None, "r2": None}
    if len(rows) >= 2:
        x = np.array([r["M"] for r in rows], dtype=float)
        y = np.array([r["t_opt"] for r in rows])
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
        fit = {"slope": float(slope), "intercept": float(intercept), "r2": r2}
    return {"rows": rows, "fit": fit, "durations": durations}


def format_bench(result: dict) -> str:
    lines = [f"{'M':>4} {'t_opt[s]':>10} {'t_opt/M[ms]':>12} {'iters':>6}"]
    for r in result["rows"]:
        lines.append(f"{r['M']:>4} {r['t_opt']:>10.4f} {1e3 * r['t_opt_per_M']:>12.3f} {r['iterations']:>6}")
    fit = result["fit"]
    if fit["r2"] is not None:
        lines.append(f"fit: t_opt = {fit['slope']:.4g} * M + {fit['intercept']:.4g}, R^2 = {fit['r2']:.4f}")
    return "\n".join(lines)


# --- entry point ----------------------------------------------------------------


def _parse_params(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidParams(f"expected key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omnitraj", description="Whole-body SE(3) trajectory optimization in box corridors.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve one problem and export artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--corridor")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)

    f = sub.add_parser("fixture", help="write a synthetic corridor and config")
    f.add_argument("kind", choices=KINDS)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")

    b = sub.add_parser("bench", help="t_opt scaling on the straight fixture")
    b.add_argument("--config")
    b.add_argument("--ms", default="4,8,16,32,64", help="comma-separated piece counts")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--threads", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", help="write the table as JSON into this directory")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "run":
        return run(args.config, args.corridor, args.out, args.seed, args.threads)
    if args.command == "fixture":
        try:
            cpath, fpath = write_fixture(args.kind, args.out, _parse_params(args.param), args.seed)
        except (InvalidParams, TypeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"wrote {cpath} and {fpath}")
        return EXIT_OK
    # bench
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        overrides = {k: v for k, v in (("threads", args.threads), ("seed", args.seed)) if v is not None}
        cfg = dataclasses.replace(cfg, **overrides) if overrides else cfg
        Ms = [int(m) for m in args.ms.split(",") if m.strip()]
        if any(m < 1 for m in Ms):
            raise ConfigError("piece counts must be positive")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = bench_scaling(cfg, Ms, args.repeats)
    print(format_bench(result))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.json").write_text(json.dumps(result, indent=2) + "\n")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
