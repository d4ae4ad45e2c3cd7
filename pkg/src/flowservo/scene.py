"""Procedural synthetic scenes and benchmark task sampling.

Two scene variants: an infinite textured plane (serves photometric methods,
which need a continuous intensity field) and a random point cloud (serves the
point-feature flow pipeline). Both answer exact depth queries; the plane also
answers intensity queries through its procedural texture.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .features import DEFAULT_GRID, FeatureGrid
from .se3 import DEFAULT_INTRINSICS, Intrinsics, Pose, rotation_about_axis

# Pixel radius within which a projected cloud point matches a query pixel.
MATCH_RADIUS_PX = 1.5

# Minimum fraction of grid nodes that must land on geometry at the desired pose.
OBSERVABILITY_MIN = 0.8

MAX_TASK_ATTEMPTS = 100

# Offset bands per difficulty: (translation range in meters, rotation range in degrees).
DIFFICULTY_BANDS = {
    "easy": ((1.0, 1.4), (5.0, 15.0)),
    "medium": ((1.4, 1.6), (15.0, 25.0)),
    "hard": ((2.0, 3.0), (30.0, 50.0)),
}

DIFFICULTIES = tuple(DIFFICULTY_BANDS)


class TaskGenerationError(RuntimeError):
    """Raised when no observable task was found within the attempt budget."""


@dataclass(frozen=True)
class ProceduralTexture:
    """Sum of planar sinusoids plus a 0.5 DC term, clamped to [0, 1].

    value(uv) = clip(0.5 + sum_k a_k * sin(2 pi f_k . uv + phi_k), 0, 1)
    with uv in meters on the plane and f_k in cycles per meter.
    """

    amplitudes: np.ndarray  # (K,)
    frequencies: np.ndarray  # (K, 2)
    phases: np.ndarray  # (K,)

    def __post_init__(self) -> None:
        amp = np.array(self.amplitudes, dtype=float)
        freq = np.array(self.frequencies, dtype=float)
        pha = np.array(self.phases, dtype=float)
        if amp.ndim != 1 or amp.shape[0] < 8:
            raise ValueError("texture needs at least 8 sinusoids")
        if freq.shape != (amp.shape[0], 2) or pha.shape != amp.shape:
            raise ValueError("amplitude/frequency/phase shapes are inconsistent")
        for name, arr in (("amplitudes", amp), ("frequencies", freq), ("phases", pha)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.flags.writeable = False
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "phases", pha)

    def _angles(self, uv: np.ndarray) -> np.ndarray:
        return 2.0 * math.pi * (uv @ self.frequencies.T) + self.phases

    def value_unclamped(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return 0.5 + np.sin(self._angles(uv)) @ self.amplitudes

    def value(self, uv: np.ndarray) -> np.ndarray:
        return np.clip(self.value_unclamped(uv), 0.0, 1.0)

    def gradient(self, uv: np.ndarray) -> np.ndarray:
        """Gradient of the unclamped value w.r.t. uv, shape (..., 2)."""
        uv = np.asarray(uv, dtype=float)
        weights = np.cos(self._angles(uv)) * self.amplitudes
        return 2.0 * math.pi * (weights @ self.frequencies)


@dataclass(frozen=True)
class TexturedPlane:
    """Infinite plane {p : normal . p = offset} carrying a procedural texture."""

    normal: np.ndarray  # unit
    offset: float
    texture: ProceduralTexture
    basis_u: np.ndarray  # in-plane texture axes, orthonormal with the normal
    basis_v: np.ndarray
    bounds: np.ndarray  # (2, 3) nominal working volume
    seed: int
    params: dict

    variant = "plane"

    def __post_init__(self) -> None:
        normal = np.array(self.normal, dtype=float)
        if normal.shape != (3,) or abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise ValueError("plane normal must be a unit 3-vector")
        for name in ("normal", "basis_u", "basis_v", "bounds"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def plane_coords(self, points_world: np.ndarray) -> np.ndarray:
        """2D texture coordinates of world points lying on (or near) the plane."""
        rel = np.asarray(points_world, dtype=float) - self.offset * self.normal
        return np.stack([rel @ self.basis_u, rel @ self.basis_v], axis=-1)

    def intensity(self, points_world: np.ndarray) -> np.ndarray:
        return self.texture.value(self.plane_coords(points_world))


@dataclass(frozen=True)
class PointCloud:
    """Random 3D points with per-point intensity."""

    points: np.ndarray  # (N, 3)
    intensities: np.ndarray  # (N,)
    bounds: np.ndarray  # (2, 3)
    seed: int
    params: dict

    variant = "cloud"

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        vals = np.array(self.intensities, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 500:
            raise ValueError("point cloud needs at least 500 points of shape (N, 3)")
        if vals.shape != (pts.shape[0],):
            raise ValueError("intensities must be one per point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point positions must be finite")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        bounds = np.array(self.bounds, dtype=float)
        for name, arr in (("points", pts), ("intensities", vals), ("bounds", bounds)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


Scene = Union[TexturedPlane, PointCloud]

_PLANE_DEFAULTS = {
    "distance_min": 4.0,
    "distance_max": 7.0,
    "tilt_max_deg": 10.0,
    "k_sinusoids": 8,
    "freq_min": 0.1,
    "freq_max": 0.8,
    "amp_total": 0.45,
}

_CLOUD_DEFAULTS = {
    "n_points": 40000,
    "half_extent": 3.0,
    "z_near": 3.0,
    "z_far": 8.0,
}


def _merge_params(defaults: dict, params: dict | None) -> dict:
    merged = dict(defaults)
    if params:
        unknown = set(params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown scene parameters: {sorted(unknown)}")
        merged.update(params)
    return merged


def generate_scene(seed: int, variant: str, params: dict | None = None) -> Scene:
    """Deterministically generate a scene from a seed and variant parameters."""
    rng = np.random.default_rng(seed)
    if variant == "plane":
        p = _merge_params(_PLANE_DEFAULTS, params)
        if not (0 < p["distance_min"] <= p["distance_max"]):
            raise ValueError("plane distance range must be positive and ordered")
        if int(p["k_sinusoids"]) < 8:
            raise ValueError("texture needs at least 8 sinusoids")
        tilt = math.radians(rng.uniform(0.0, p["tilt_max_deg"]))
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        normal = np.array(
            [math.sin(tilt) * math.cos(azimuth), math.sin(tilt) * math.sin(azimuth), math.cos(tilt)]
        )
        offset = float(rng.uniform(p["distance_min"], p["distance_max"]))
        kk = int(p["k_sinusoids"])
        raw_amp = rng.uniform(0.5, 1.5, size=kk)
        amplitudes = raw_amp * (p["amp_total"] / raw_amp.sum())
        freq_mag = rng.uniform(p["freq_min"], p["freq_max"], size=kk)
        freq_dir = rng.uniform(0.0, 2.0 * math.pi, size=kk)
        frequencies = np.stack([freq_mag * np.cos(freq_dir), freq_mag * np.sin(freq_dir)], axis=1)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=kk)
        texture = ProceduralTexture(amplitudes, frequencies, phases)
        # In-plane texture axes, deterministic given the normal.
        helper = np.array([0.0, 1.0, 0.0]) if abs(normal[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        basis_u = np.cross(helper, normal)
        basis_u /= np.linalg.norm(basis_u)
        basis_v = np.cross(normal, basis_u)
        half = offset + 2.0
        bounds = np.array([[-half, -half, 0.0], [half, half, offset + 2.0]])
        return TexturedPlane(
            normal=normal,
            offset=offset,
            texture=texture,
            basis_u=basis_u,
            basis_v=basis_v,
            bounds=bounds,
            seed=int(seed),
            params=p,
        )
    if variant == "cloud":
        p = _merge_params(_CLOUD_DEFAULTS, params)
        n = int(p["n_points"])
        if not 500 <= n <= 100000:
            raise ValueError("n_points must lie in [500, 100000]")
        if not (p["half_extent"] > 0 and 0 < p["z_near"] < p["z_far"]):
            raise ValueError("cloud extents must be positive and ordered")
        he, zn, zf = p["half_extent"], p["z_near"], p["z_far"]
        low = np.array([-he, -he, zn])
        high = np.array([he, he, zf])
        points = rng.uniform(low, high, size=(n, 3))
        intensities = rng.uniform(0.0, 1.0, size=n)
        return PointCloud(
            points=points,
            intensities=intensities,
            bounds=np.array([low, high]),
            seed=int(seed),
            params=p,
        )
    raise ValueError(f"unknown scene variant: {variant!r}")


def plane_ray_depths(
    scene: TexturedPlane, pose: Pose, u: np.ndarray, v: np.ndarray, k: Intrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ray/plane z-depths for pixel arrays.

    Returns (depth, hit). Rays parallel to the plane or hitting behind the
    camera are misses. Depth is the camera-frame z of the hit point, which
    equals the ray parameter because ray directions are z-normalized.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    dirs_cam = np.stack(
        [(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1
    )
    dirs_world = dirs_cam @ pose.rotation.T
    denom = dirs_world @ scene.normal
    numer = scene.offset - float(pose.translation @ scene.normal)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = numer / denom
    hit = (np.abs(denom) > 1e-12) & (s > 1e-9)
    depth = np.where(hit, s, 0.0)
    return depth, hit


def _project_cloud(
    scene: PointCloud, pose: Pose, k: Intrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Project every cloud point; returns (u, v, z_cam, index) of in-front points."""
    cam = pose.inverse_transform(scene.points)
    front = cam[:, 2] > 1e-9
    cam = cam[front]
    idx = np.flatnonzero(front)
    u = k.fx * cam[:, 0] / cam[:, 2] + k.cx
    v = k.fy * cam[:, 1] / cam[:, 2] + k.cy
    return u, v, cam[:, 2], idx


def query_depth(
    scene: Scene, pose: Pose, pixel: tuple[float, float], k: Intrinsics
) -> float | None:
    """Exact scene depth along the pixel ray, or None on a miss."""
    pu, pv = float(pixel[0]), float(pixel[1])
    if not (0 <= pu <= k.width - 1 and 0 <= pv <= k.height - 1):
        raise ValueError(f"pixel ({pu}, {pv}) outside image bounds")
    if isinstance(scene, TexturedPlane):
        depth, hit = plane_ray_depths(scene, pose, np.array([pu]), np.array([pv]), k)
        return float(depth[0]) if hit[0] else None
    u, v, z, _ = _project_cloud(scene, pose, k)
    d2 = (u - pu) ** 2 + (v - pv) ** 2
    within = d2 <= MATCH_RADIUS_PX**2
    if not np.any(within):
        return None
    cand = np.flatnonzero(within)
    return float(z[cand[np.argmin(d2[cand])]])


def match_grid_nodes(
    scene: PointCloud, pose: Pose, grid: FeatureGrid, k: Intrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Match every grid node to its nearest projected cloud point within 1.5 px.

    Returns (point_index, valid), both flat in row-major node order. Matching
    semantics are identical to query_depth at each node pixel; the fast path
    exploits that a point within the match radius of a node is rounded to that
    node when cells are wider than twice the radius.
    """
    u, v, _, idx = _project_cloud(scene, pose, k)
    node_u, node_v = grid.pixel_coords(k)
    du, dv = grid.cell_size(k)
    n_nodes = grid.n_nodes
    best = np.zeros(n_nodes, dtype=int)
    valid = np.zeros(n_nodes, dtype=bool)
    if min(du, dv) > 2.0 * MATCH_RADIUS_PX:
        ju = np.rint((u - node_u[0, 0]) / du).astype(int)
        iv = np.rint((v - node_v[0, 0]) / dv).astype(int)
        in_grid = (ju >= 0) & (ju < grid.grid_w) & (iv >= 0) & (iv < grid.grid_h)
        ju, iv = ju[in_grid], iv[in_grid]
        u_g, v_g, idx_g = u[in_grid], v[in_grid], idx[in_grid]
        d2 = (u_g - (node_u[0, 0] + ju * du)) ** 2 + (v_g - (node_v[0, 0] + iv * dv)) ** 2
        cand = d2 <= MATCH_RADIUS_PX**2
        node = iv[cand] * grid.grid_w + ju[cand]
        d2c, idxc = d2[cand], idx_g[cand]
        order = np.lexsort((idxc, d2c, node))
        nodes_sorted = node[order]
        uniq, first = np.unique(nodes_sorted, return_index=True)
        best[uniq] = idxc[order][first]
        valid[uniq] = True
        return best, valid
    # Narrow grids: brute force per node with query_depth semantics.
    flat_u, flat_v = node_u.ravel(), node_v.ravel()
    for n in range(n_nodes):
        d2 = (u - flat_u[n]) ** 2 + (v - flat_v[n]) ** 2
        within = d2 <= MATCH_RADIUS_PX**2
        if np.any(within):
            cand = np.flatnonzero(within)
            best[n] = idx[cand[np.argmin(d2[cand])]]
            valid[n] = True
    return best, valid


def observed_fraction(scene: Scene, pose: Pose, grid: FeatureGrid, k: Intrinsics) -> float:
    """Fraction of grid nodes whose ray lands on scene geometry."""
    if isinstance(scene, TexturedPlane):
        u, v = grid.pixel_coords(k)
        _, hit = plane_ray_depths(scene, pose, u, v, k)
        return float(hit.mean())
    _, valid = match_grid_nodes(scene, pose, grid, k)
    return float(valid.mean())


@dataclass(frozen=True)
class ServoTask:
    """One benchmark positioning task: reach desired_pose starting at initial_pose."""

    scene: Scene
    initial_pose: Pose
    desired_pose: Pose
    difficulty: str
    seed: int

    def __post_init__(self) -> None:
        if self.difficulty not in DIFFICULTIES + ("custom",):
            raise ValueError(f"unknown difficulty: {self.difficulty!r}")


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def sample_task(
    seed: int,
    difficulty: str,
    scene: Scene,
    k: Intrinsics = DEFAULT_INTRINSICS,
    grid: FeatureGrid = DEFAULT_GRID,
) -> ServoTask:
    """Draw a pose pair whose offset lies in the difficulty band.

    The desired pose is a jittered scene-facing pose; the initial pose is the
    desired pose composed with a camera-frame offset drawn uniformly from the
    band (direction and rotation axis uniform on the sphere). Re-draws until
    at least 80% of grid nodes observe geometry from the desired pose.
    """
    if difficulty not in DIFFICULTY_BANDS:
        raise ValueError(f"unknown difficulty: {difficulty!r}")
    (t_lo, t_hi), (r_lo, r_hi) = DIFFICULTY_BANDS[difficulty]
    rng = np.random.default_rng(seed)
    for _ in range(MAX_TASK_ATTEMPTS):
        jitter_t = rng.uniform(-0.3, 0.3, size=3)
        jitter_angle = math.radians(rng.uniform(0.0, 5.0))
        desired = Pose(rotation_about_axis(_random_unit(rng), jitter_angle), jitter_t)
        t_mag = rng.uniform(t_lo, t_hi)
        angle = math.radians(rng.uniform(r_lo, r_hi))
        offset = Pose(rotation_about_axis(_random_unit(rng), angle), t_mag * _random_unit(rng))
        if observed_fraction(scene, desired, grid, k) >= OBSERVABILITY_MIN:
            return ServoTask(
                scene=scene,
                initial_pose=desired.compose(offset),
                desired_pose=desired,
                difficulty=difficulty,
                seed=int(seed),
            )
    raise TaskGenerationError(
        f"no observable {difficulty} task found in {MAX_TASK_ATTEMPTS} attempts (seed {seed})"
    )


# --- serialization ---------------------------------------------------------


def _pose_to_rows(pose: Pose) -> list[list[float]]:
    mat = np.hstack([pose.rotation, pose.translation[:, None]])
    return [[float(x) for x in row] for row in mat]


def _pose_from_rows(rows) -> Pose:
    mat = np.asarray(rows, dtype=float)
    if mat.shape != (3, 4):
        raise ValueError(f"pose must be a 3x4 row-major matrix, got shape {mat.shape}")
    return Pose(mat[:, :3], mat[:, 3])


def scene_to_config(scene: Scene) -> dict:
    return {"variant": scene.variant, "seed": scene.seed, "params": dict(scene.params)}


def scene_from_config(cfg: dict) -> Scene:
    return generate_scene(cfg["seed"], cfg["variant"], cfg.get("params"))


def task_to_config(task: ServoTask) -> dict:
    return {
        "scene": scene_to_config(task.scene),
        "seed": task.seed,
        "difficulty": task.difficulty,
        "initial_pose": _pose_to_rows(task.initial_pose),
        "desired_pose": _pose_to_rows(task.desired_pose),
    }


def task_from_config(cfg: dict) -> ServoTask:
    return ServoTask(
        scene=scene_from_config(cfg["scene"]),
        initial_pose=_pose_from_rows(cfg["initial_pose"]),
        desired_pose=_pose_from_rows(cfg["desired_pose"]),
        difficulty=cfg["difficulty"],
        seed=int(cfg["seed"]),
    )


def save_task(task: ServoTask, path: str | Path) -> None:
    Path(path).write_text(json.dumps(task_to_config(task), indent=2) + "\n")


def load_task(path: str | Path) -> ServoTask:
    return task_from_config(json.loads(Path(path).read_text()))
