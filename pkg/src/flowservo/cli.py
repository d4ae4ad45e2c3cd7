"""Command-line front end: run one task, run benchmark suites, sweep the basin.

Exit codes: 0 success (for `run`: converged), 2 run did not converge,
1 usage or IO error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .bench import (
    ROTATION_PRESETS,
    SweepConfig,
    aggregate_table,
    report_csv,
    run_bench,
    run_sweep,
    sweep_csv,
)
from .control import ControllerConfig
from .flowio import FileFormatError
from .loop import METHODS, MethodSpec, RunLimits, Thresholds, run_servo, write_trajectory_csv
from .scene import DIFFICULTIES, TaskGenerationError, generate_scene, load_task, sample_task, save_task
from .svgplot import render_plots


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit code 1, not argparse's 2
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("FLOWSERVO_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _controller(args) -> ControllerConfig:
    return ControllerConfig(gain=args.lam, damping=args.mu)


def _limits(args) -> RunLimits:
    return RunLimits(max_iters=args.max_iters, thresholds=Thresholds())


def _add_controller_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="controller gain")
    p.add_argument("--mu", type=float, default=1e-3, help="damping")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--out", default=None, help="output directory (default: $FLOWSERVO_OUT or .)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def cmd_run(args) -> int:
    if args.task:
        task = load_task(args.task)
    else:
        if args.seed is None or args.difficulty is None:
            raise UsageError("run: provide either --task FILE or both --seed and --difficulty")
        scene = generate_scene(args.seed, args.scene)
        task = sample_task(args.seed, args.difficulty, scene)
    if args.method == "photometric" and task.scene.variant != "plane":
        raise UsageError("run: photometric requires a plane scene (--scene plane)")
    method = MethodSpec(args.method, provider_dir=args.provider_dir)
    result = run_servo(task, method, _controller(args), _limits(args))
    out = _out_dir(args)
    (out / "trajectory.csv").write_bytes(write_trajectory_csv(result))
    save_task(task, out / "task.json")
    print(
        f"converged={'true' if result.converged else 'false'} "
        f"t_err={result.final_t_err:.9g} r_err={result.final_r_err:.9g} "
        f"traj_len={result.traj_len:.9g} iters={result.iterations} reason={result.reason}"
    )
    return 0 if result.converged else 2


def cmd_bench(args) -> int:
    difficulties = list(DIFFICULTIES) if args.suite == "all" else [args.suite]
    methods = args.methods.split(",")
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"bench: unknown method {m!r}; expected one of {METHODS}")
    if "photometric" in methods and args.scene != "plane":
        raise UsageError("bench: photometric requires --scene plane")
    report = run_bench(
        master_seed=args.seed,
        difficulties=difficulties,
        n=args.n,
        methods=methods,
        scene_variant=args.scene,
        cfg=_controller(args),
        limits=_limits(args),
        jobs=args.jobs,
    )
    out = _out_dir(args)
    (out / "bench.csv").write_bytes(report_csv(report))
    print(aggregate_table(report))
    return 0


def cmd_sweep(args) -> int:
    if args.preset:
        rotations = ROTATION_PRESETS[args.preset]
    else:
        parts = args.rotations.split(",")
        if len(parts) != 3:
            raise UsageError("sweep: --rotations must be rx,ry,rz in degrees")
        rotations = tuple(float(p) for p in parts)
    cfg = SweepConfig(
        rotations_deg=rotations,
        step=args.step,
        max_offset=args.max,
        environments=args.environments,
        seed=args.seed,
    )
    methods = args.methods.split(",")
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"sweep: unknown method {m!r}; expected one of {METHODS}")
    result = run_sweep(cfg, methods, _controller(args), _limits(args), jobs=args.jobs)
    out = _out_dir(args)
    data = sweep_csv(result)
    (out / "sweep.csv").write_bytes(data)
    (out / "sweep.svg").write_bytes(render_plots(data))
    sys.stdout.write(data.decode("ascii"))
    return 0


def cmd_plot(args) -> int:
    data = Path(args.csv).read_bytes()
    Path(args.svg).write_bytes(render_plots(data))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="flowservo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one servo task")
    p_run.add_argument("--task", default=None, help="task config file (JSON)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--difficulty", choices=DIFFICULTIES, default=None)
    p_run.add_argument("--scene", choices=("cloud", "plane"), default="cloud")
    p_run.add_argument("--method", required=True, choices=METHODS)
    p_run.add_argument("--provider-dir", default=None, help="directory of external flow/depth files")
    _add_controller_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run the task-by-method benchmark matrix")
    p_bench.add_argument("--suite", choices=DIFFICULTIES + ("all",), default="all")
    p_bench.add_argument("--n", type=int, default=None, help="tasks per suite (default 3/4/3 shape)")
    p_bench.add_argument("--methods", default="flow-true-depth")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--scene", choices=("cloud", "plane"), default="cloud")
    _add_controller_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_sweep = sub.add_parser("sweep", help="convergence-basin sweep over growing offsets")
    p_sweep.add_argument("--preset", choices=tuple(ROTATION_PRESETS), default=None)
    p_sweep.add_argument("--rotations", default="20,20,40", help="set-point rx,ry,rz in degrees")
    p_sweep.add_argument("--step", type=float, default=0.4)
    p_sweep.add_argument("--max", type=float, default=4.0)
    p_sweep.add_argument("--environments", type=int, default=16)
    p_sweep.add_argument("--methods", default="flow-depth-proxy")
    p_sweep.add_argument("--seed", type=int, default=0)
    _add_controller_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_plot = sub.add_parser("plot", help="render a trajectory or sweep CSV to SVG")
    p_plot.add_argument("--csv", required=True)
    p_plot.add_argument("--svg", required=True)
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, FileFormatError, TaskGenerationError, ValueError) as exc:
        print(f"flowservo: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
