"""Value types shared across the observation and control pipeline.

Grid-shaped fields (flow, depth, sampled intensities) are stored as
(grid_h, grid_w) arrays; node order is row-major wherever a flat index is
needed, matching ``numpy`` boolean indexing on the same arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se3 import Intrinsics


@dataclass(frozen=True)
class FeatureGrid:
    """Uniform pixel grid of feature points with a half-cell margin."""

    grid_w: int = 32
    grid_h: int = 32

    def __post_init__(self) -> None:
        if self.grid_w < 1 or self.grid_h < 1:
            raise ValueError("grid dimensions must be positive")
        if self.grid_w * self.grid_h < 6:
            raise ValueError("grid must contain at least 6 nodes")

    @property
    def n_nodes(self) -> int:
        return self.grid_w * self.grid_h

    def cell_size(self, k: Intrinsics) -> tuple[float, float]:
        return k.width / self.grid_w, k.height / self.grid_h

    def pixel_coords(self, k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
        """Node pixel coordinates as (u, v) arrays of shape (grid_h, grid_w)."""
        du, dv = self.cell_size(k)
        u = (np.arange(self.grid_w) + 0.5) * du
        v = (np.arange(self.grid_h) + 0.5) * dv
        return np.tile(u, (self.grid_h, 1)), np.tile(v[:, None], (1, self.grid_w))


DEFAULT_GRID = FeatureGrid(32, 32)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FlowField:
    """Per-node pixel displacements (du, dv) with a validity mask.

    Invalid nodes always carry displacement (0, 0).
    """

    flow: np.ndarray  # (h, w, 2)
    valid: np.ndarray  # (h, w) bool

    def __post_init__(self) -> None:
        flow = np.array(self.flow, dtype=float)
        valid = np.array(self.valid, dtype=bool)
        if flow.ndim != 3 or flow.shape[2] != 2:
            raise ValueError(f"flow must have shape (h, w, 2), got {flow.shape}")
        if valid.shape != flow.shape[:2]:
            raise ValueError("valid mask shape must match the flow grid")
        if not np.all(np.isfinite(flow[valid])):
            raise ValueError("valid flow displacements must be finite")
        flow[~valid] = 0.0
        object.__setattr__(self, "flow", _freeze(flow))
        object.__setattr__(self, "valid", _freeze(valid))

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.flow, axis=2)


@dataclass(frozen=True)
class DepthMap:
    """Per-node z-depth in meters with a validity mask."""

    depth: np.ndarray  # (h, w)
    valid: np.ndarray  # (h, w) bool

    def __post_init__(self) -> None:
        depth = np.array(self.depth, dtype=float)
        valid = np.array(self.valid, dtype=bool)
        if depth.ndim != 2:
            raise ValueError(f"depth must have shape (h, w), got {depth.shape}")
        if valid.shape != depth.shape:
            raise ValueError("valid mask shape must match the depth grid")
        vals = depth[valid]
        if not (np.all(np.isfinite(vals)) and np.all(vals > 0)):
            raise ValueError("valid depths must be finite and positive")
        depth[~valid] = 0.0
        object.__setattr__(self, "depth", _freeze(depth))
        object.__setattr__(self, "valid", _freeze(valid))

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True)
class Image:
    """Grayscale image with intensities in [0, 1]."""

    pixels: np.ndarray  # (h, w)

    def __post_init__(self) -> None:
        pixels = np.array(self.pixels, dtype=float)
        if pixels.ndim != 2:
            raise ValueError(f"pixels must have shape (h, w), got {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("intensities must be finite")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", _freeze(pixels))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]
