"""Closed-loop servo simulation: observe, control, integrate, log.

Each iteration computes flow and depth for the selected method, turns them
into a twist, integrates the pose, and logs errors. Runs stop on convergence,
divergence, degenerate or ill-conditioned observations, or the iteration cap;
the log is complete regardless of outcome.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import (
    ControllerConfig,
    DegenerateObservationError,
    IllConditionedError,
    clamp_twist,
    flow_to_error,
    lm_velocity,
    pbvs_oracle_velocity,
    photometric_controller,
    stack_interaction,
)
from .features import DEFAULT_GRID, DepthMap, FeatureGrid, FlowField
from .flowio import depth_to_grid, flow_to_grid, read_flo, read_pfm
from .observation import (
    Z_DEFAULT,
    UnsupportedSceneError,
    calibrate_alpha,
    flow_depth,
    oracle_flow,
    render_image,
    sample_intensities,
    true_depth,
)
from .scene import ServoTask, TexturedPlane
from .se3 import (
    DEFAULT_INTRINSICS,
    Intrinsics,
    Pose,
    Twist,
    exp_twist,
    matrix_to_quaternion,
    pose_error,
)

METHODS = (
    "flow-true-depth",
    "flow-depth-proxy",
    "flow-external-depth",
    "photometric",
    "pbvs-oracle",
)


@dataclass(frozen=True)
class MethodSpec:
    """Controller selection plus the provider directory for external files."""

    method: str
    provider_dir: str | Path | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "flow-external-depth" and self.provider_dir is None:
            raise ValueError("flow-external-depth requires a provider directory")


@dataclass(frozen=True)
class Thresholds:
    t: float = 0.04  # meters
    r: float = 1.0  # degrees


@dataclass(frozen=True)
class RunLimits:
    max_iters: int = 5000
    thresholds: Thresholds = Thresholds()
    divergence_factor: float = 3.0

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.divergence_factor > 1:
            raise ValueError("divergence_factor must exceed 1")


@dataclass(frozen=True)
class LogRecord:
    pose: Pose
    twist: Twist
    feat_err: float
    photo_err: float
    depth_err: float
    t_err: float
    r_err: float


@dataclass(frozen=True)
class ServoResult:
    converged: bool
    reason: str  # converged | max_iters | diverged | degenerate | ill_conditioned
    iterations: int
    final_t_err: float
    final_r_err: float
    traj_len: float
    log: tuple[LogRecord, ...]


def check_convergence(t_err: float, r_err: float, thresholds: Thresholds) -> bool:
    """Strictly below both thresholds."""
    if t_err < 0 or r_err < 0:
        raise ValueError("errors must be non-negative")
    return t_err < thresholds.t and r_err < thresholds.r


def _masked(flow: FlowField, depth: DepthMap) -> tuple[FlowField, DepthMap]:
    mask = flow.valid & depth.valid
    return (
        dataclasses.replace(flow, valid=mask),
        dataclasses.replace(depth, valid=mask),
    )


def _median_rel_depth_error(depth: DepthMap, truth: DepthMap) -> float:
    both = depth.valid & truth.valid
    if not np.any(both):
        return math.nan
    rel = np.abs(depth.depth[both] - truth.depth[both]) / truth.depth[both]
    return float(np.median(rel))


def _read_provider_depth(spec: MethodSpec, iteration: int, grid, k) -> DepthMap:
    path = Path(spec.provider_dir) / f"{iteration}_depth.pfm"
    if not path.is_file():
        raise FileNotFoundError(
            f"{spec.method}: missing provider file for iteration {iteration}: {path}"
        )
    return depth_to_grid(read_pfm(path.read_bytes()), grid, k)


def _read_provider_flow(spec: MethodSpec, iteration: int, grid, k) -> FlowField | None:
    path = Path(spec.provider_dir) / f"{iteration}_flow_cur_to_desired.flo"
    if not path.is_file():
        return None
    return flow_to_grid(read_flo(path.read_bytes()), grid, k)


def run_servo(
    task: ServoTask,
    method: MethodSpec,
    cfg: ControllerConfig | None = None,
    limits: RunLimits | None = None,
    k: Intrinsics = DEFAULT_INTRINSICS,
    grid: FeatureGrid = DEFAULT_GRID,
) -> ServoResult:
    """Run one servo task to termination and return trajectory plus metrics."""
    cfg = cfg or ControllerConfig()
    limits = limits or RunLimits()
    scene = task.scene
    desired = task.desired_pose
    is_plane = isinstance(scene, TexturedPlane)
    if method.method == "photometric" and not is_plane:
        raise UnsupportedSceneError("photometric servoing requires a textured-plane scene")

    star_vals = star_valid = None
    image_star = None
    if is_plane:
        star_vals, star_valid = sample_intensities(scene, desired, grid, k)
    if method.method == "photometric":
        image_star, _ = render_image(scene, desired, k)

    pose = task.initial_pose
    init_t_err, _ = pose_error(pose, desired)
    records: list[LogRecord] = []
    steps = 0
    converged = False
    reason = "max_iters"
    prev_pose = None
    prev_twist = None

    while True:
        t_err, r_err = pose_error(pose, desired)

        flow = oracle_flow(scene, pose, desired, grid, k)
        external_flow = None
        if method.method == "flow-external-depth":
            external_flow = _read_provider_flow(method, steps, grid, k)
            if external_flow is not None:
                flow = external_flow
        feat_err = (
            float(np.linalg.norm(flow_to_error(flow, k))) if np.any(flow.valid) else math.nan
        )

        photo_err = math.nan
        if is_plane:
            cur_vals, cur_valid = sample_intensities(scene, pose, grid, k)
            both = cur_valid & star_valid
            if np.any(both):
                photo_err = float(np.mean(np.abs(cur_vals[both] - star_vals[both])))

        depth = None
        depth_err = math.nan
        if method.method == "flow-true-depth":
            depth = true_depth(scene, pose, grid, k)
            depth_err = 0.0 if np.any(depth.valid) else math.nan
        elif method.method == "flow-depth-proxy":
            if prev_pose is None:
                depth = DepthMap(
                    np.full((grid.grid_h, grid.grid_w), Z_DEFAULT),
                    np.ones((grid.grid_h, grid.grid_w), dtype=bool),
                )
            else:
                alpha = calibrate_alpha(prev_twist, cfg.dt, k)
                depth = flow_depth(oracle_flow(scene, prev_pose, pose, grid, k), alpha)
            depth_err = _median_rel_depth_error(depth, true_depth(scene, pose, grid, k))
        elif method.method == "flow-external-depth":
            depth = _read_provider_depth(method, steps, grid, k)
            depth_err = _median_rel_depth_error(depth, true_depth(scene, pose, grid, k))
        elif method.method == "photometric":
            depth = true_depth(scene, pose, grid, k)
            depth_err = 0.0 if np.any(depth.valid) else math.nan

        if check_convergence(t_err, r_err, limits.thresholds):
            converged = True
            reason = "converged"
            records.append(LogRecord(pose, Twist.zero(), feat_err, photo_err, depth_err, t_err, r_err))
            break
        if init_t_err > 0 and t_err > limits.divergence_factor * init_t_err:
            reason = "diverged"
            records.append(LogRecord(pose, Twist.zero(), feat_err, photo_err, depth_err, t_err, r_err))
            break
        if steps >= limits.max_iters:
            reason = "max_iters"
            records.append(LogRecord(pose, Twist.zero(), feat_err, photo_err, depth_err, t_err, r_err))
            break

        try:
            if method.method == "pbvs-oracle":
                twist = clamp_twist(pbvs_oracle_velocity(pose, desired, cfg.gain), cfg)
            elif method.method == "photometric":
                image, _ = render_image(scene, pose, k)
                twist = photometric_controller(image, image_star, depth, k, cfg)
            else:
                mflow, mdepth = _masked(flow, depth)
                interaction = stack_interaction(grid, mdepth, k)
                twist = lm_velocity(interaction, flow_to_error(mflow, k), cfg)
        except DegenerateObservationError:
            reason = "degenerate"
            records.append(LogRecord(pose, Twist.zero(), feat_err, photo_err, depth_err, t_err, r_err))
            break
        except IllConditionedError:
            reason = "ill_conditioned"
            records.append(LogRecord(pose, Twist.zero(), feat_err, photo_err, depth_err, t_err, r_err))
            break

        records.append(LogRecord(pose, twist, feat_err, photo_err, depth_err, t_err, r_err))
        prev_pose, prev_twist = pose, twist
        pose = pose.compose(exp_twist(twist, cfg.dt))
        steps += 1

    positions = np.array([rec.pose.translation for rec in records])
    traj_len = float(np.sum(np.linalg.norm(np.diff(positions, axis=0), axis=1))) if len(records) > 1 else 0.0
    last = records[-1]
    return ServoResult(
        converged=converged,
        reason=reason,
        iterations=steps,
        final_t_err=last.t_err,
        final_r_err=last.r_err,
        traj_len=traj_len,
        log=tuple(records),
    )


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_trajectory_csv(result: ServoResult) -> bytes:
    """Per-iteration trajectory log: pose quaternion, twist, and error columns."""
    lines = ["iter,px,py,pz,qw,qx,qy,qz,v1,v2,v3,v4,v5,v6,feat_err,photo_err,t_err,r_err"]
    for i, rec in enumerate(result.log):
        q = matrix_to_quaternion(rec.pose.rotation)
        fields = (
            [str(i)]
            + [_fmt(v) for v in rec.pose.translation]
            + [_fmt(v) for v in q]
            + [_fmt(v) for v in rec.twist.as_array()]
            + [_fmt(rec.feat_err), _fmt(rec.photo_err), _fmt(rec.t_err), _fmt(rec.r_err)]
        )
        lines.append(",".join(fields))
    return ("\n".join(lines) + "\n").encode("ascii")
