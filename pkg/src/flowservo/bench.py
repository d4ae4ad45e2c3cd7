"""Benchmark suites, the task-by-method result matrix, and the convergence sweep.

Everything here is a pure function of its seeds, so reports and sweep tables
are byte-reproducible. The task-by-method matrix optionally fans out over a
process pool; results are gathered in task order either way.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .control import ControllerConfig
from .features import DEFAULT_GRID, FeatureGrid
from .loop import MethodSpec, RunLimits, run_servo
from .scene import DIFFICULTIES, ServoTask, generate_scene, sample_task
from .se3 import DEFAULT_INTRINSICS, Intrinsics, Pose, pose_error, rotation_about_axis

# Suite shape when no per-difficulty count is given: mirrors a 10-task
# benchmark split 3 easy / 4 medium / 3 hard.
DEFAULT_SUITE_SHAPE = {"easy": 3, "medium": 4, "hard": 3}
DEFAULT_SUITE_SIZE = 10

ROTATION_PRESETS = {
    "small": (10.0, 10.0, 25.0),
    "medium": (20.0, 20.0, 40.0),
    "large": (30.0, 30.0, 50.0),
}


def _mix_seed(master: int, *parts: int) -> int:
    """Deterministic 63-bit seed derived from a master seed and indices."""
    h = (int(master) * 0x9E3779B97F4A7C15) & 0x7FFFFFFFFFFFFFFF
    for p in parts:
        h = (h ^ (int(p) + 0x100000001B3)) * 0x100000001B3 & 0x7FFFFFFFFFFFFFFF
    return h


def make_suite(
    master_seed: int,
    difficulty: str,
    count: int,
    scene_variant: str = "cloud",
    scene_params: dict | None = None,
    k: Intrinsics = DEFAULT_INTRINSICS,
    grid: FeatureGrid = DEFAULT_GRID,
) -> list[ServoTask]:
    """Generate `count` seeded tasks of one difficulty."""
    d_idx = DIFFICULTIES.index(difficulty)
    tasks = []
    for i in range(count):
        scene = generate_scene(_mix_seed(master_seed, d_idx, i, 0), scene_variant, scene_params)
        tasks.append(sample_task(_mix_seed(master_seed, d_idx, i, 1), difficulty, scene, k, grid))
    return tasks


@dataclass(frozen=True)
class BenchRow:
    task_id: str
    difficulty: str
    method: str
    init_t_err: float
    init_r_err: float
    final_t_err: float
    final_r_err: float
    traj_len: float
    iterations: int
    converged: bool
    reason: str


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchRow, ...]

    def aggregates(self) -> list[dict]:
        """Per (difficulty, method) means and convergence counts, in row order."""
        groups: dict[tuple[str, str], list[BenchRow]] = {}
        for row in self.rows:
            groups.setdefault((row.difficulty, row.method), []).append(row)
        out = []
        for (difficulty, method), rows in groups.items():
            out.append(
                {
                    "difficulty": difficulty,
                    "method": method,
                    "mean_init_t_err": float(np.mean([r.init_t_err for r in rows])),
                    "mean_init_r_err": float(np.mean([r.init_r_err for r in rows])),
                    "mean_final_t_err": float(np.mean([r.final_t_err for r in rows])),
                    "mean_final_r_err": float(np.mean([r.final_r_err for r in rows])),
                    "converged": sum(r.converged for r in rows),
                    "total": len(rows),
                }
            )
        return out


def _run_one(args) -> BenchRow:
    task, task_id, method_name, cfg, limits, k, grid = args
    init_t, init_r = pose_error(task.initial_pose, task.desired_pose)
    result = run_servo(task, MethodSpec(method_name), cfg, limits, k, grid)
    return BenchRow(
        task_id=task_id,
        difficulty=task.difficulty,
        method=method_name,
        init_t_err=init_t,
        init_r_err=init_r,
        final_t_err=result.final_t_err,
        final_r_err=result.final_r_err,
        traj_len=result.traj_len,
        iterations=result.iterations,
        converged=result.converged,
        reason=result.reason,
    )


def _run_matrix(jobs: int, arglist: list) -> list:
    if jobs <= 1 or len(arglist) <= 1:
        return [_run_one(a) for a in arglist]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, arglist))


def run_bench(
    master_seed: int,
    difficulties: list[str],
    n: int | None,
    methods: list[str],
    scene_variant: str = "cloud",
    scene_params: dict | None = None,
    cfg: ControllerConfig | None = None,
    limits: RunLimits | None = None,
    jobs: int = 1,
    k: Intrinsics = DEFAULT_INTRINSICS,
    grid: FeatureGrid = DEFAULT_GRID,
) -> BenchmarkReport:
    """Run every method on every seeded task; n=None uses the 3/4/3 suite shape."""
    cfg = cfg or ControllerConfig()
    limits = limits or RunLimits()
    arglist = []
    for difficulty in difficulties:
        count = DEFAULT_SUITE_SHAPE[difficulty] if n is None else n
        tasks = make_suite(master_seed, difficulty, count, scene_variant, scene_params, k, grid)
        for i, task in enumerate(tasks):
            task_id = f"{difficulty}-{i:03d}"
            for method in methods:
                arglist.append((task, task_id, method, cfg, limits, k, grid))
    return BenchmarkReport(rows=tuple(_run_matrix(jobs, arglist)))


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def report_csv(report: BenchmarkReport) -> bytes:
    lines = [
        "task_id,difficulty,method,init_t_err,init_r_err,final_t_err,final_r_err,"
        "traj_len,iterations,converged,reason"
    ]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    r.task_id,
                    r.difficulty,
                    r.method,
                    _fmt(r.init_t_err),
                    _fmt(r.init_r_err),
                    _fmt(r.final_t_err),
                    _fmt(r.final_r_err),
                    _fmt(r.traj_len),
                    str(r.iterations),
                    "true" if r.converged else "false",
                    r.reason,
                ]
            )
        )
    return ("\n".join(lines) + "\n").encode("ascii")


def aggregate_table(report: BenchmarkReport) -> str:
    header = f"{'difficulty':<10} {'method':<20} {'T.err':>10} {'R.err':>10} {'conv':>7}"
    lines = [header, "-" * len(header)]
    for agg in report.aggregates():
        lines.append(
            f"{agg['difficulty']:<10} {agg['method']:<20} "
            f"{agg['mean_final_t_err']:>10.4f} {agg['mean_final_r_err']:>10.4f} "
            f"{agg['converged']:>4}/{agg['total']}"
        )
    return "\n".join(lines)


@dataclass(frozen=True)
class SweepConfig:
    """Convergence-basin sweep: grow a per-axis offset step by step."""

    rotations_deg: tuple[float, float, float] = ROTATION_PRESETS["medium"]
    step: float = 0.4
    max_offset: float = 4.0
    environments: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_offset < self.step:
            raise ValueError("max_offset must be at least one step")
        if self.environments < 1:
            raise ValueError("environments must be at least 1")
        if len(self.rotations_deg) != 3:
            raise ValueError("rotation set-point must have three components")


def batch_count(cfg: SweepConfig) -> int:
    return int(math.ceil(cfg.max_offset / cfg.step - 1e-9))


def _sweep_offset_pose(cfg: SweepConfig, batch: int) -> Pose:
    """Camera-frame offset of batch*step along each axis plus the rotation set-point."""
    rx, ry, rz = (math.radians(a) for a in cfg.rotations_deg)
    rot = (
        rotation_about_axis(np.array([1.0, 0.0, 0.0]), rx)
        @ rotation_about_axis(np.array([0.0, 1.0, 0.0]), ry)
        @ rotation_about_axis(np.array([0.0, 0.0, 1.0]), rz)
    )
    d = batch * cfg.step
    return Pose(rot, np.array([d, d, d]))


def sweep_tasks(cfg: SweepConfig) -> list[list[ServoTask]]:
    """Seeded plane-scene tasks per batch: fixed initial pose, offset desired pose.

    Plane scenes keep geometry in view at every offset the sweep reaches;
    the plane distance scales with the sweep range.
    """
    scene_params = {
        "distance_min": cfg.max_offset + 3.5,
        "distance_max": cfg.max_offset + 5.5,
    }
    initial = Pose.identity()
    batches = []
    for b in range(1, batch_count(cfg) + 1):
        offset = _sweep_offset_pose(cfg, b)
        tasks = []
        for e in range(cfg.environments):
            scene = generate_scene(_mix_seed(cfg.seed, b, e), "plane", scene_params)
            tasks.append(
                ServoTask(
                    scene=scene,
                    initial_pose=initial,
                    desired_pose=initial.compose(offset),
                    difficulty="custom",
                    seed=_mix_seed(cfg.seed, b, e),
                )
            )
        batches.append(tasks)
    return batches


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    methods: tuple[str, ...]
    ratios: tuple[tuple[float, ...], ...]  # [batch][method]

    def offsets(self) -> list[float]:
        return [b * self.config.step for b in range(1, len(self.ratios) + 1)]


def run_sweep(
    cfg: SweepConfig,
    methods: list[str],
    controller: ControllerConfig | None = None,
    limits: RunLimits | None = None,
    jobs: int = 1,
    k: Intrinsics = DEFAULT_INTRINSICS,
    grid: FeatureGrid = DEFAULT_GRID,
) -> SweepResult:
    controller = controller or ControllerConfig()
    limits = limits or RunLimits()
    batches = sweep_tasks(cfg)
    arglist = []
    for b, tasks in enumerate(batches):
        for e, task in enumerate(tasks):
            for method in methods:
                arglist.append((task, f"b{b + 1:02d}-e{e:03d}", method, controller, limits, k, grid))
    rows = _run_matrix(jobs, arglist)
    n_methods = len(methods)
    per_batch = cfg.environments * n_methods
    ratios = []
    for b in range(len(batches)):
        chunk = rows[b * per_batch : (b + 1) * per_batch]
        counts = [0] * n_methods
        for i, row in enumerate(chunk):
            counts[i % n_methods] += bool(row.converged)
        ratios.append(tuple(c / cfg.environments for c in counts))
    return SweepResult(config=cfg, methods=tuple(methods), ratios=tuple(ratios))


def sweep_csv(result: SweepResult) -> bytes:
    cfg = result.config
    rx, ry, rz = cfg.rotations_deg
    lines = [
        "# convergence sweep: desired pose offset by batch*step along each of the",
        "# initial camera's x, y, z axes simultaneously; initial pose fixed",
        f"# rotation set-point deg (Rx*Ry*Rz about camera axes): {_fmt(rx)},{_fmt(ry)},{_fmt(rz)}",
        f"# environments per batch: {cfg.environments}; master seed: {cfg.seed}",
        "batch,offset_m," + ",".join(result.methods),
    ]
    for b, ratios in enumerate(result.ratios):
        offset = (b + 1) * cfg.step
        lines.append(f"{b + 1},{_fmt(offset)}," + ",".join(_fmt(r) for r in ratios))
    return ("\n".join(lines) + "\n").encode("ascii")
