"""Visitation-frequency cost map: a 3D histogram of synthetic pattern traffic.

Cell values are log-compressed visit counts normalized to [0, 1]; looking up a
joint position returns the mean cell value over agents, with off-grid
positions contributing 0.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .core import AgentState
from .reference import ReferencePath

DEFAULT_CELL_SIZE = (0.25, 0.25, 0.05)

_MAGIC = b"SCMP"
_VERSION = 1


@dataclass
class CostMap:
    """Dense 3D grid of visitation scores in [0, 1]."""

    origin: np.ndarray  # (3,) low corner, km
    cell_size: np.ndarray  # (3,) km
    values: np.ndarray  # (nx, ny, nz)
    max_count: int | None = None  # busiest-cell raw count; build metadata only

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.cell_size = np.asarray(self.cell_size, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("values must be a 3D grid")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("cell values must lie in [0, 1]")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    def value_at(self, position: np.ndarray) -> float:
        """Cell value at a 3D position; 0 outside the grid."""
        idx = np.floor((np.asarray(position, dtype=float) - self.origin) / self.cell_size).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.values.shape):
            return 0.0
        return float(self.values[idx[0], idx[1], idx[2]])

    def save(self, path: str) -> None:
        """Write the documented binary layout (see docs/formats.md)."""
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<H", _VERSION))
            f.write(struct.pack("<3I", *self.values.shape))
            f.write(struct.pack("<3d", *self.origin))
            f.write(struct.pack("<3d", *self.cell_size))
            f.write(self.values.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path: str) -> "CostMap":
        with open(path, "rb") as f:
            if f.read(4) != _MAGIC:
                raise ValueError("not a cost map file (bad magic)")
            (version,) = struct.unpack("<H", f.read(2))
            if version != _VERSION:
                raise ValueError(f"unsupported cost map version {version}")
            dims = struct.unpack("<3I", f.read(12))
            origin = np.array(struct.unpack("<3d", f.read(24)))
            cell = np.array(struct.unpack("<3d", f.read(24)))
            n = dims[0] * dims[1] * dims[2]
            values = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(dims).copy()
        return cls(origin, cell, values)

    def to_json(self) -> str:
        """Lossless JSON export for debugging."""
        return json.dumps({
            "version": _VERSION,
            "origin": self.origin.tolist(),
            "cell_size": self.cell_size.tolist(),
            "dims": list(self.values.shape),
            "values": self.values.ravel(order="C").tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "CostMap":
        doc = json.loads(text)
        values = np.array(doc["values"], dtype=float).reshape(doc["dims"])
        return cls(np.array(doc["origin"]), np.array(doc["cell_size"]), values)


def _dense_polyline(path: ReferencePath, step: float) -> np.ndarray:
    """Resample the polyline at fixed arc-length steps (endpoints included)."""
    pts = [path.waypoints[0]]
    for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        n = max(int(np.ceil(length / step)), 1)
        for k in range(1, n + 1):
            pts.append(a + seg * (k / n))
    return np.array(pts)


def build_costmap(
    paths: list[ReferencePath],
    samples_per_path: int = 1000,
    noise_sigma: float = 0.15,
    seed: int = 0,
    cell_size: tuple[float, float, float] = DEFAULT_CELL_SIZE,
    sample_step: float = 0.1,
    padding: float = 1.0,
) -> CostMap:
    """Histogram synthetic traffic around the reference library into a cost map.

    Each path contributes samples_per_path noisy copies of its densely sampled
    polyline; counts are log-compressed and normalized so the busiest cell is
    1. Each path draws from an independent seeded stream, so adding paths
    never perturbs the counts of existing ones.
    """
    if not paths:
        raise ValueError("cannot build a cost map from an empty path library")
    cell = np.asarray(cell_size, dtype=float)

    all_wp = np.vstack([p.waypoints for p in paths])
    lo = all_wp.min(axis=0) - padding
    hi = all_wp.max(axis=0) + padding
    lo[2] = max(lo[2], 0.0) - 1e-9  # keep ground-level samples inside the first layer
    dims = np.maximum(np.ceil((hi - lo) / cell).astype(int), 1)
    edges = [lo[i] + cell[i] * np.arange(dims[i] + 1) for i in range(3)]

    counts = np.zeros(dims, dtype=np.int64)
    for path_idx, path in enumerate(paths):
        base = _dense_polyline(path, sample_step)
        rng = np.random.default_rng([seed, path_idx])
        noise = rng.normal(0.0, noise_sigma, size=(samples_per_path, base.shape[0], 3))
        pts = (base[None, :, :] + noise).reshape(-1, 3)
        h, _ = np.histogramdd(pts, bins=edges)
        counts += h.astype(np.int64)

    max_count = int(counts.max())
    if max_count == 0:
        values = np.zeros(dims)
    else:
        values = np.log1p(counts) / np.log1p(max_count)
    return CostMap(lo, cell, values, max_count=max_count)


def joint_value(cmap: CostMap, states: list[AgentState]) -> float:
    """Mean cell value over the agents' positions, in [0, 1]."""
    if not states:
        raise ValueError("joint_value needs at least one agent state")
    return float(np.mean([cmap.value_at(s.position) for s in states]))
