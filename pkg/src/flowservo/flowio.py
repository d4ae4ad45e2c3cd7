"""Bit-exact Middlebury .flo and grayscale PFM codecs.

These are the interchange formats for externally computed flow and depth.
Round trips through write/read preserve every payload bit for files that use
the canonical invalid-value sentinels emitted by the writers (1e10 for flow,
0.0 for depth).
"""

from __future__ import annotations

import struct

import numpy as np

from .features import DepthMap, FeatureGrid, FlowField
from .se3 import Intrinsics

FLO_MAGIC = 202021.25
FLO_INVALID = 1e10  # written for invalid nodes
FLO_INVALID_THRESHOLD = 1e9  # |value| above this marks a node invalid on read


class FileFormatError(ValueError):
    """Malformed .flo or PFM payload."""


class UnsupportedFormatError(FileFormatError):
    """Recognized but unsupported format variant (e.g. color PFM)."""


def read_flo(data: bytes) -> FlowField:
    """Decode a .flo byte string: float32 magic, int32 width/height, (u,v) rows."""
    if len(data) < 4:
        raise FileFormatError(f"truncated .flo header at byte {len(data)}: magic missing")
    magic = np.frombuffer(data[:4], dtype="<f4")[0]
    if magic != np.float32(FLO_MAGIC):
        raise FileFormatError(f"bad .flo magic {float(magic)!r} at byte 0")
    if len(data) < 12:
        raise FileFormatError(f"truncated .flo header at byte {len(data)}: dimensions missing")
    width, height = struct.unpack("<ii", data[4:12])
    if width <= 0 or height <= 0:
        raise FileFormatError(f"bad .flo dimensions {width}x{height} at byte 4")
    expected = 12 + width * height * 8
    if len(data) != expected:
        raise FileFormatError(
            f".flo payload for {width}x{height} must end at byte {expected}, got {len(data)}"
        )
    raw = np.frombuffer(data[12:], dtype="<f4").reshape(height, width, 2).astype(float)
    valid = np.all(np.isfinite(raw) & (np.abs(raw) <= FLO_INVALID_THRESHOLD), axis=2)
    flow = np.where(valid[..., None], raw, 0.0)
    return FlowField(flow, valid)


def write_flo(field: FlowField) -> bytes:
    """Encode a flow field; invalid nodes are written as the FLO_INVALID sentinel."""
    h, w = field.shape
    arr = field.flow.astype("<f4")
    arr[~field.valid] = FLO_INVALID
    header = np.float32(FLO_MAGIC).tobytes() + struct.pack("<ii", w, h)
    return header + arr.tobytes()


def _split_pfm_header(data: bytes) -> tuple[list[bytes], int]:
    lines = []
    start = 0
    for _ in range(3):
        end = data.find(b"\n", start)
        if end < 0:
            raise FileFormatError(f"truncated PFM header at byte {len(data)}")
        lines.append(data[start:end])
        start = end + 1
    return lines, start


def read_pfm(data: bytes) -> DepthMap:
    """Decode a grayscale PFM: 'Pf', dimensions, scale, then bottom-to-top rows.

    Non-positive or non-finite values become invalid nodes.
    """
    lines, payload_start = _split_pfm_header(data)
    ident, dims, scale_line = lines
    if ident == b"PF":
        raise UnsupportedFormatError("color PFM ('PF') is not supported; expected 'Pf'")
    if ident != b"Pf":
        raise FileFormatError(f"bad PFM identifier {ident!r} at byte 0")
    parts = dims.split()
    if len(parts) != 2:
        raise FileFormatError(f"bad PFM dimensions line {dims!r}")
    try:
        width, height = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise FileFormatError(f"bad PFM dimensions line {dims!r}") from exc
    if width <= 0 or height <= 0:
        raise FileFormatError(f"bad PFM dimensions {width}x{height}")
    try:
        scale = float(scale_line)
    except ValueError as exc:
        raise FileFormatError(f"bad PFM scale line {scale_line!r}") from exc
    if scale == 0:
        raise FileFormatError("PFM scale must be nonzero")
    expected = payload_start + width * height * 4
    if len(data) != expected:
        raise FileFormatError(
            f"PFM payload for {width}x{height} must end at byte {expected}, got {len(data)}"
        )
    dtype = "<f4" if scale < 0 else ">f4"
    rows = np.frombuffer(data[payload_start:], dtype=dtype).reshape(height, width)
    depth = np.flipud(rows).astype(float)
    valid = np.isfinite(depth) & (depth > 0)
    return DepthMap(np.where(valid, depth, 0.0), valid)


def write_pfm(dmap: DepthMap) -> bytes:
    """Encode a depth map as little-endian grayscale PFM; invalid nodes become 0."""
    h, w = dmap.shape
    arr = dmap.depth.astype("<f4")
    arr[~dmap.valid] = 0.0
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.flipud(arr).tobytes()


def _node_pixels(grid: FeatureGrid, k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    u, v = grid.pixel_coords(k)
    iu = np.clip(np.rint(u).astype(int), 0, k.width - 1)
    iv = np.clip(np.rint(v).astype(int), 0, k.height - 1)
    return iu, iv


def flow_to_grid(field: FlowField, grid: FeatureGrid, k: Intrinsics) -> FlowField:
    """Downsample a full-resolution flow field to the feature grid (nearest pixel)."""
    if field.shape == (grid.grid_h, grid.grid_w):
        return field
    if field.shape != (k.height, k.width):
        raise ValueError(
            f"flow shape {field.shape} matches neither the grid nor the image size"
        )
    iu, iv = _node_pixels(grid, k)
    return FlowField(field.flow[iv, iu], field.valid[iv, iu])


def depth_to_grid(dmap: DepthMap, grid: FeatureGrid, k: Intrinsics) -> DepthMap:
    """Downsample a full-resolution depth map to the feature grid (nearest pixel)."""
    if dmap.shape == (grid.grid_h, grid.grid_w):
        return dmap
    if dmap.shape != (k.height, k.width):
        raise ValueError(
            f"depth shape {dmap.shape} matches neither the grid nor the image size"
        )
    iu, iv = _node_pixels(grid, k)
    return DepthMap(dmap.depth[iv, iu], dmap.valid[iv, iu])
