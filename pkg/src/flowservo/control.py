"""Visual-servoing velocity laws.

The core law is damped least squares over a stacked point-feature image
Jacobian:

    v = -gain * (L^T L + damping * diag(L^T L))^-1 L^T e

with e the feature error in normalized image coordinates. The same solver
backs the flow-feature controller and the photometric baseline; a
ground-truth-pose controller serves as the pose-servoing reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import DepthMap, FeatureGrid, FlowField, Image
from .se3 import Intrinsics, Pose, Twist, log_pose

CONDITION_LIMIT = 1e12


class DegenerateObservationError(RuntimeError):
    """Too few (or uninformative) features to constrain the velocity."""


class IllConditionedError(RuntimeError):
    """The damped normal matrix is numerically singular."""


@dataclass(frozen=True)
class ControllerConfig:
    """Gains and limits of the velocity law."""

    gain: float = 0.1  # step-size gain (1/s)
    damping: float = 1e-3  # Levenberg-Marquardt damping, fixed
    dt: float = 1.0  # integration step (s)
    max_linear: float = 0.5  # clamp on |linear| (m/s)
    max_angular: float = 0.3  # clamp on |angular| (rad/s)

    def __post_init__(self) -> None:
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.max_linear > 0 and self.max_angular > 0):
            raise ValueError("velocity clamps must be positive")


@dataclass(frozen=True)
class InteractionMatrix:
    """Stacked 2Nx6 point-feature Jacobian with the grid node of each row pair."""

    matrix: np.ndarray  # (2N, 6)
    node_indices: np.ndarray  # (N,) flat row-major node indices

    def __post_init__(self) -> None:
        mat = np.array(self.matrix, dtype=float)
        idx = np.array(self.node_indices, dtype=int)
        if mat.ndim != 2 or mat.shape[1] != 6 or mat.shape[0] != 2 * idx.shape[0]:
            raise ValueError("matrix must be (2N, 6) with one node index per row pair")
        if not np.all(np.isfinite(mat)):
            raise ValueError("interaction matrix entries must be finite")
        mat.flags.writeable = False
        idx.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "node_indices", idx)


def point_interaction(x: float, y: float, z: float) -> np.ndarray:
    """2x6 interaction matrix of a point feature at normalized (x, y), depth z.

    Maps camera twist (v, w) to the normalized-coordinate velocity (xdot, ydot):

        [ -1/z   0    x/z   x*y     -(1+x^2)  y  ]
        [  0   -1/z   y/z   1+y^2   -x*y     -x  ]
    """
    if not z > 0:
        raise ValueError(f"depth must be positive, got {z}")
    return np.array(
        [
            [-1.0 / z, 0.0, x / z, x * y, -(1.0 + x * x), y],
            [0.0, -1.0 / z, y / z, 1.0 + y * y, -x * y, -x],
        ]
    )


def stack_interaction(grid: FeatureGrid, depth: DepthMap, k: Intrinsics) -> InteractionMatrix:
    """Stack per-node 2x6 blocks for every valid depth node, in node order."""
    if depth.shape != (grid.grid_h, grid.grid_w):
        raise ValueError("depth map dimensions must match the feature grid")
    valid = depth.valid
    n = int(valid.sum())
    if n < 3:
        raise DegenerateObservationError(f"need at least 3 valid nodes, got {n}")
    u, v = grid.pixel_coords(k)
    x = (u[valid] - k.cx) / k.fx
    y = (v[valid] - k.cy) / k.fy
    z = depth.depth[valid]
    rows = np.zeros((n, 2, 6))
    rows[:, 0, 0] = -1.0 / z
    rows[:, 0, 2] = x / z
    rows[:, 0, 3] = x * y
    rows[:, 0, 4] = -(1.0 + x * x)
    rows[:, 0, 5] = y
    rows[:, 1, 1] = -1.0 / z
    rows[:, 1, 2] = y / z
    rows[:, 1, 3] = 1.0 + y * y
    rows[:, 1, 4] = -x * y
    rows[:, 1, 5] = -x
    return InteractionMatrix(rows.reshape(2 * n, 6), np.flatnonzero(valid.ravel()))


def flow_to_error(flow: FlowField, k: Intrinsics) -> np.ndarray:
    """Normalized feature error from pixel flow, one (x, y) pair per valid node.

    The error follows the current-minus-desired convention, so it is the
    negated flow scaled into normalized coordinates.
    """
    du = flow.flow[..., 0][flow.valid]
    dv = flow.flow[..., 1][flow.valid]
    err = np.empty(2 * du.shape[0])
    err[0::2] = -du / k.fx
    err[1::2] = -dv / k.fy
    return err


def clamp_twist(twist: Twist, cfg: ControllerConfig) -> Twist:
    """Scale the whole twist uniformly so both norm limits hold."""
    linear = twist.linear.copy()
    angular = twist.angular.copy()
    for _ in range(4):
        lin = float(np.linalg.norm(linear))
        ang = float(np.linalg.norm(angular))
        scale = 1.0
        if lin > cfg.max_linear:
            scale = min(scale, cfg.max_linear / lin)
        if ang > cfg.max_angular:
            scale = min(scale, cfg.max_angular / ang)
        if scale >= 1.0:
            return Twist(linear, angular)
        linear *= scale
        angular *= scale
    return Twist(linear, angular)


def _lm_solve(matrix: np.ndarray, error: np.ndarray, cfg: ControllerConfig) -> np.ndarray:
    if error.shape != (matrix.shape[0],):
        raise ValueError(
            f"error length {error.shape} does not match {matrix.shape[0]} Jacobian rows"
        )
    normal = matrix.T @ matrix
    damped = normal + cfg.damping * np.diag(np.diag(normal))
    cond = np.linalg.cond(damped)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(f"damped normal matrix condition {cond:.3e}")
    return -cfg.gain * np.linalg.solve(damped, matrix.T @ error)


def lm_velocity(interaction: InteractionMatrix, error: np.ndarray, cfg: ControllerConfig) -> Twist:
    """Damped least-squares velocity from a stacked Jacobian and feature error."""
    v = _lm_solve(interaction.matrix, np.asarray(error, dtype=float), cfg)
    return clamp_twist(Twist.from_array(v), cfg)


def photometric_controller(
    image: Image, image_star: Image, depth: DepthMap, k: Intrinsics, cfg: ControllerConfig
) -> Twist:
    """Direct intensity-error velocity law.

    Features are node intensities; each interaction row is -(grad I)^T L_x
    with the image gradient taken in normalized coordinates by central
    differences over neighboring grid nodes. Border nodes are excluded.
    """
    if image.pixels.shape != (k.height, k.width) or image_star.pixels.shape != image.pixels.shape:
        raise ValueError("images must match the intrinsics' pixel dimensions")
    gh, gw = depth.shape
    grid = FeatureGrid(grid_w=gw, grid_h=gh)
    u, v = grid.pixel_coords(k)
    iu = np.clip(np.rint(u).astype(int), 0, k.width - 1)
    iv = np.clip(np.rint(v).astype(int), 0, k.height - 1)
    cur = image.pixels[iv, iu]
    star = image_star.pixels[iv, iu]
    du, dv = grid.cell_size(k)
    grad_u = np.zeros((gh, gw))
    grad_v = np.zeros((gh, gw))
    grad_u[:, 1:-1] = (cur[:, 2:] - cur[:, :-2]) / (2.0 * du)
    grad_v[1:-1, :] = (cur[2:, :] - cur[:-2, :]) / (2.0 * dv)
    interior = np.zeros((gh, gw), dtype=bool)
    interior[1:-1, 1:-1] = True
    valid = interior & depth.valid
    n = int(valid.sum())
    if n < 3:
        raise DegenerateObservationError(f"need at least 3 valid interior nodes, got {n}")
    x = (u[valid] - k.cx) / k.fx
    y = (v[valid] - k.cy) / k.fy
    z = depth.depth[valid]
    gx = grad_u[valid] * k.fx  # d(intensity)/d(normalized x)
    gy = grad_v[valid] * k.fy
    rows = np.zeros((n, 6))
    rows[:, 0] = gx / z
    rows[:, 1] = gy / z
    rows[:, 2] = -(gx * x + gy * y) / z
    rows[:, 3] = -(gx * x * y + gy * (1.0 + y * y))
    rows[:, 4] = gx * (1.0 + x * x) + gy * x * y
    rows[:, 5] = -gx * y + gy * x
    if np.max(np.abs(rows)) == 0.0:
        raise DegenerateObservationError("textureless image: zero interaction matrix")
    err = cur[valid] - star[valid]
    return clamp_twist(Twist.from_array(_lm_solve(rows, err, cfg)), cfg)


def pbvs_oracle_velocity(current: Pose, desired: Pose, gain: float) -> Twist:
    """Ground-truth pose servoing: v = -gain * log(desired^-1 current).

    The twist is expressed in the current camera frame, so integrating it
    right-multiplied moves the camera along the geodesic toward the goal.
    """
    xi = log_pose(desired.inverse().compose(current))
    return Twist(-gain * xi.linear, -gain * xi.angular)
