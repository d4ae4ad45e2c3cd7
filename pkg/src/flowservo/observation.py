"""Geometric oracles standing in for learned flow and depth estimators.

Flow between two views is computed by back-projecting grid nodes onto scene
geometry in view A and reprojecting into view B; depth comes either from the
same geometry (true depth) or from the magnitude of the previous-to-current
flow (the two-view proxy z = alpha / |flow|).
"""

from __future__ import annotations

import math

import numpy as np

from .features import DepthMap, FeatureGrid, FlowField, Image
from .scene import PointCloud, Scene, TexturedPlane, match_grid_nodes, plane_ray_depths
from .se3 import Intrinsics, Pose, Twist

# Depth-proxy clamp range and fallback depth (meters).
Z_MIN = 0.1
Z_MAX = 10.0
Z_DEFAULT = 1.0

# Flow magnitudes below this (px) carry no depth information.
FLOW_EPSILON = 1e-6

# Sentinel scale meaning "no usable translation this step": the proxy then
# falls back to Z_DEFAULT everywhere.
ALPHA_FALLBACK = math.inf

_MIN_LINEAR_SPEED = 1e-9


class UnsupportedSceneError(ValueError):
    """Raised for operations a scene variant cannot serve (e.g. rendering clouds)."""


def render_image(scene: Scene, pose: Pose, k: Intrinsics) -> tuple[Image, np.ndarray]:
    """Render the plane texture into a full image; returns (image, miss_mask).

    Pixels whose ray misses the plane carry intensity 0 and are flagged in the
    mask.
    """
    if not isinstance(scene, TexturedPlane):
        raise UnsupportedSceneError("only textured planes can be rendered")
    u = np.tile(np.arange(k.width, dtype=float), (k.height, 1))
    v = np.tile(np.arange(k.height, dtype=float)[:, None], (1, k.width))
    values, hit = _plane_intensities(scene, pose, u, v, k)
    return Image(values), ~hit


def sample_intensities(
    scene: Scene, pose: Pose, grid: FeatureGrid, k: Intrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Plane intensity sampled at grid-node pixels; returns (values, valid)."""
    if not isinstance(scene, TexturedPlane):
        raise UnsupportedSceneError("only textured planes have an intensity field")
    u, v = grid.pixel_coords(k)
    return _plane_intensities(scene, pose, u, v, k)


def _plane_intensities(
    scene: TexturedPlane, pose: Pose, u: np.ndarray, v: np.ndarray, k: Intrinsics
) -> tuple[np.ndarray, np.ndarray]:
    depth, hit = plane_ray_depths(scene, pose, u, v, k)
    pts_cam = np.stack(
        [(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth], axis=-1
    )
    values = np.where(hit, scene.intensity(pose.transform(pts_cam)), 0.0)
    return values, hit


def _reproject(
    pts_world: np.ndarray, pose_b: Pose, k: Intrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points into view B; returns (u, v, ok)."""
    cam = pose_b.inverse_transform(pts_world)
    z = cam[..., 2]
    ok = z > 1e-9
    safe_z = np.where(ok, z, 1.0)
    u = k.fx * cam[..., 0] / safe_z + k.cx
    v = k.fy * cam[..., 1] / safe_z + k.cy
    ok = ok & (u >= 0) & (u <= k.width - 1) & (v >= 0) & (v <= k.height - 1)
    return u, v, ok


def oracle_flow(
    scene: Scene, pose_a: Pose, pose_b: Pose, grid: FeatureGrid, k: Intrinsics
) -> FlowField:
    """Exact reprojection flow from view A to view B on the feature grid.

    Nodes are invalid when the A-ray misses geometry, the point falls behind
    camera B, or reprojects outside the image.
    """
    node_u, node_v = grid.pixel_coords(k)
    if isinstance(scene, TexturedPlane):
        depth, hit = plane_ray_depths(scene, pose_a, node_u, node_v, k)
        pts_cam = np.stack(
            [(node_u - k.cx) / k.fx * depth, (node_v - k.cy) / k.fy * depth, depth], axis=-1
        )
        pts_world = pose_a.transform(pts_cam)
        u_b, v_b, ok = _reproject(pts_world, pose_b, k)
        valid = hit & ok
    else:
        idx, matched = match_grid_nodes(scene, pose_a, grid, k)
        pts_world = scene.points[idx].reshape(grid.grid_h, grid.grid_w, 3)
        u_b, v_b, ok = _reproject(pts_world, pose_b, k)
        valid = matched.reshape(grid.grid_h, grid.grid_w) & ok
    flow = np.stack([u_b - node_u, v_b - node_v], axis=-1)
    flow[~valid] = 0.0
    return FlowField(flow, valid)


def true_depth(scene: Scene, pose: Pose, grid: FeatureGrid, k: Intrinsics) -> DepthMap:
    """Exact per-node scene depth at a pose; misses become invalid nodes."""
    node_u, node_v = grid.pixel_coords(k)
    if isinstance(scene, TexturedPlane):
        depth, hit = plane_ray_depths(scene, pose, node_u, node_v, k)
        return DepthMap(depth, hit)
    idx, valid = match_grid_nodes(scene, pose, grid, k)
    z = pose.inverse_transform(scene.points[idx])[:, 2]
    z = np.where(valid, z, 0.0).reshape(grid.grid_h, grid.grid_w)
    return DepthMap(z, valid.reshape(grid.grid_h, grid.grid_w))


def flow_depth(flow_prev_to_cur: FlowField, alpha: float) -> DepthMap:
    """Two-view depth proxy: z = alpha / |flow|, clamped to [Z_MIN, Z_MAX].

    Nodes with invalid or near-zero flow fall back to Z_DEFAULT and stay
    valid. The ALPHA_FALLBACK sentinel forces the fallback everywhere.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    shape = flow_prev_to_cur.shape
    if math.isinf(alpha):
        return DepthMap(np.full(shape, Z_DEFAULT), np.ones(shape, dtype=bool))
    mag = flow_prev_to_cur.magnitudes()
    fallback = (~flow_prev_to_cur.valid) | (mag < FLOW_EPSILON)
    with np.errstate(divide="ignore"):
        z = np.where(fallback, Z_DEFAULT, np.clip(alpha / np.where(fallback, 1.0, mag), Z_MIN, Z_MAX))
    return DepthMap(z, np.ones(shape, dtype=bool))


def calibrate_alpha(commanded_step: Twist, dt: float, k: Intrinsics) -> float:
    """Flow-to-depth scale for the last commanded step: |v| * dt * fx.

    This is the exact scale under the lateral-translation model the proxy is
    built on. A vanishing linear velocity yields ALPHA_FALLBACK.
    """
    if not (math.isfinite(dt) and dt >= 0):
        raise ValueError("dt must be non-negative and finite")
    speed = float(np.linalg.norm(commanded_step.linear))
    if speed < _MIN_LINEAR_SPEED:
        return ALPHA_FALLBACK
    return speed * dt * k.fx
