"""Rigid-body kinematics and pinhole projection.

Poses are world-from-camera transforms; twists are camera-frame velocities.
The convention throughout: integrating a twist right-multiplies the pose,
``pose = pose.compose(exp_twist(twist, dt))``, which makes a fixed point's
camera-frame velocity equal to ``-v - w x p`` (the classical interaction
matrix convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this rotation angle (rad) the closed-form sin/cos coefficients of the
# exp/log maps are replaced by their series expansions.
SMALL_ANGLE = 1e-8

# Within this distance (rad) of pi the log map switches to the symmetric-part
# branch; the antisymmetric-part formula loses precision there.
PI_BRANCH_MARGIN = 1e-6


class BehindCameraError(ValueError):
    """Projection requested for a point with non-positive camera-frame depth."""


def _checked_array(value, shape, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Pose:
    """World-from-camera transform: p_world = rotation @ p_cam + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rot = _checked_array(self.rotation, (3, 3), "rotation")
        tra = _checked_array(self.translation, (3,), "translation")
        if np.linalg.norm(rot.T @ rot - np.eye(3)) > 1e-9:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map camera-frame points (..., 3) into the world frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        """Map world-frame points (..., 3) into the camera frame."""
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation


@dataclass(frozen=True)
class Twist:
    """Camera-frame velocity: linear in m/s, angular in rad/s."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "linear", _checked_array(self.linear, (3,), "linear"))
        object.__setattr__(self, "angular", _checked_array(self.angular, (3,), "angular"))

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_array(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=float)
        if v.shape != (6,):
            raise ValueError(f"twist vector must have shape (6,), got {v.shape}")
        return Twist(v[:3], v[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")


DEFAULT_INTRINSICS = Intrinsics(fx=250.0, fy=250.0, cx=160.0, cy=120.0, width=320, height=240)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _vee_antisymmetric(m: np.ndarray) -> np.ndarray:
    """Vector of the antisymmetric part: vee(m - m^T)."""
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if not n > 0:
        raise ValueError("axis must be nonzero")
    k = skew(axis / n)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def exp_twist(xi: Twist, dt: float) -> Pose:
    """SE(3) exponential of xi * dt.

    R = I + (sin t / t) W + ((1 - cos t) / t^2) W^2  with W = skew(angular * dt),
    translation through the left Jacobian V; both switch to series below
    SMALL_ANGLE.
    """
    if not (isinstance(dt, (int, float)) and math.isfinite(dt)):
        raise ValueError("dt must be a finite number")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    w = xi.angular * dt
    u = xi.linear * dt
    theta = float(np.linalg.norm(w))
    big_w = skew(w)
    w2 = big_w @ big_w
    eye = np.eye(3)
    if theta < SMALL_ANGLE:
        rot = eye + big_w + 0.5 * w2
        v_mat = eye + 0.5 * big_w + w2 / 6.0
    else:
        t2 = theta * theta
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / t2
        c = (theta - math.sin(theta)) / (t2 * theta)
        rot = eye + a * big_w + b * w2
        v_mat = eye + b * big_w + c * w2
    return Pose(rot, v_mat @ u)


def log_pose(p: Pose) -> Twist:
    """SE(3) logarithm on the principal branch (rotation angle in [0, pi])."""
    rot = p.rotation
    trace = rot[0, 0] + rot[1, 1] + rot[2, 2]
    cos_theta = min(1.0, max(-1.0, 0.5 * (trace - 1.0)))
    theta = math.acos(cos_theta)
    anti = _vee_antisymmetric(rot)
    if theta < SMALL_ANGLE:
        w = 0.5 * anti
    elif math.pi - theta < PI_BRANCH_MARGIN:
        # Near pi: recover the axis from the well-conditioned symmetric part
        # (I + (R + R^T)/2 - I)/(1 - cos) = axis axis^T, and the angle from the
        # antisymmetric part, where acos has lost precision.
        sin_theta = min(1.0, 0.5 * float(np.linalg.norm(anti)))
        theta = math.pi - math.asin(sin_theta)
        outer = np.eye(3) + (0.5 * (rot + rot.T) - np.eye(3)) / (1.0 - cos_theta)
        k = int(np.argmax(np.diag(outer)))
        axis = outer[:, k] / np.linalg.norm(outer[:, k])
        if float(axis @ anti) < 0.0:
            axis = -axis
        w = theta * axis
    else:
        w = (theta / (2.0 * math.sin(theta))) * anti
    big_w = skew(w)
    w2 = big_w @ big_w
    if theta < SMALL_ANGLE:
        v_inv = np.eye(3) - 0.5 * big_w + w2 / 12.0
    else:
        t2 = theta * theta
        coeff = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / t2
        v_inv = np.eye(3) - 0.5 * big_w + coeff * w2
    return Twist(v_inv @ p.translation, w)


def pose_error(current: Pose, desired: Pose) -> tuple[float, float]:
    """Translation distance (m) and geodesic rotation angle (deg) between poses."""
    t_err = float(np.linalg.norm(current.translation - desired.translation))
    rel = current.rotation.T @ desired.rotation
    cos_theta = min(1.0, max(-1.0, 0.5 * (rel[0, 0] + rel[1, 1] + rel[2, 2] - 1.0)))
    return t_err, math.degrees(math.acos(cos_theta))


def project(point_cam: np.ndarray, k: Intrinsics) -> tuple[float, float]:
    """Pinhole projection of a camera-frame point to pixel coordinates."""
    x, y, z = np.asarray(point_cam, dtype=float)
    if not z > 0:
        raise BehindCameraError(f"point depth must be positive, got z={z}")
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy


def unproject(pixel: tuple[float, float], depth: float, k: Intrinsics) -> np.ndarray:
    """Camera-frame point on the ray through a pixel at the given z-depth."""
    if not depth > 0:
        raise ValueError(f"depth must be positive, got {depth}")
    u, v = pixel
    return np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])


def normalized_coords(pixel: tuple[float, float], k: Intrinsics) -> tuple[float, float]:
    u, v = pixel
    return (u - k.cx) / k.fx, (v - k.cy) / k.fy


def matrix_to_quaternion(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, canonical sign w >= 0."""
    m = np.asarray(rot, dtype=float)
    diag = np.array([m[0, 0], m[1, 1], m[2, 2]])
    trace = diag.sum()
    if trace > max(diag):
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(diag))
        j, l = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + m[i, i] - m[j, j] - m[l, l], 0.0)) * 2.0
        q = np.zeros(4)
        q[0] = (m[l, j] - m[j, l]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + l] = (m[l, i] + m[i, l]) / s
    q /= np.linalg.norm(q)
    if q[0] < 0 or (q[0] == 0 and (q[1] < 0 or (q[1] == 0 and (q[2] < 0 or (q[2] == 0 and q[3] < 0))))):
        q = -q
    return q
