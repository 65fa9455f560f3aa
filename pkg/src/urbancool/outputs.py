"""Byte-stable writers: legacy ASCII VTK, metrics JSON and report figures."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
FILL_VALUE = -9999.0
_FMT = "{:.6e}".format


class OutputError(ValueError):
    pass


def _fmt_values(values) -> str:
    a = np.asarray(values, dtype=float).ravel()
    a = np.where(np.isfinite(a), a, FILL_VALUE)
    return "\n".join(_FMT(v) for v in a.tolist())


def _write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
    return path


@dataclass
class FieldGrid:
    origin: tuple[float, float, float]
    spacing: tuple[float, float]
    nx: int
    ny: int
    scalars: dict = field(default_factory=dict)   # name -> (ny, nx)
    vectors: dict = field(default_factory=dict)   # name -> ((ny, nx) u, (ny, nx) v)

    def __post_init__(self):
        names = list(self.scalars) + list(self.vectors)
        if len(set(names)) != len(names):
            raise OutputError("array names must be unique")
        n = self.nx * self.ny
        for name, a in self.scalars.items():
            if np.size(a) != n:
                raise OutputError(f"{name}: expected {n} values, got {np.size(a)}")
        for name, (u, v) in self.vectors.items():
            if np.size(u) != n or np.size(v) != n:
                raise OutputError(f"{name}: expected {n} vectors")

    @classmethod
    def from_grid(cls, grid, z: float = 0.0, **scalars) -> "FieldGrid":
        """Point data located at the cell centres of a Grid2D."""
        ox = grid.origin[0] + 0.5 * grid.cell_size
        oy = grid.origin[1] + 0.5 * grid.cell_size
        return cls((ox, oy, z), (grid.cell_size, grid.cell_size), grid.nx, grid.ny, dict(scalars))


def write_vtk_structured(grid: FieldGrid, path, title: str = "urbancool field") -> Path:
    """STRUCTURED_POINTS, nz = 1; non-finite values are written as FILL_VALUE."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {grid.nx} {grid.ny} 1",
             "ORIGIN " + " ".join(_FMT(v) for v in grid.origin),
             f"SPACING {_FMT(grid.spacing[0])} {_FMT(grid.spacing[1])} {_FMT(1.0)}",
             f"POINT_DATA {grid.nx * grid.ny}"]
    for name, a in grid.scalars.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt_values(a)]
    for name, (u, v) in grid.vectors.items():
        uv = np.column_stack([np.ravel(u), np.ravel(v), np.zeros(np.size(u))])
        uv = np.where(np.isfinite(uv), uv, FILL_VALUE)
        lines += [f"VECTORS {name} double", "\n".join(" ".join(_FMT(c) for c in row) for row in uv.tolist())]
    return _write_text(path, "\n".join(lines) + "\n")


def weld(corners: np.ndarray, decimals: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Shared points and (n, 3) connectivity for a triangle soup."""
    pts = np.round(np.asarray(corners, dtype=float).reshape(-1, 3), decimals) + 0.0
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    return uniq, inv.reshape(-1, 3)


def write_vtk_polydata(corners, cell_arrays: dict, path, title: str = "urbancool surfaces",
                       int_arrays: dict | None = None) -> Path:
    """POLYDATA triangles with per-face CELL_DATA (floats and optional integer arrays)."""
    corners = np.asarray(corners, dtype=float)
    n = len(corners)
    int_arrays = int_arrays or {}
    for name, a in list(cell_arrays.items()) + list(int_arrays.items()):
        if np.size(a) != n:
            raise OutputError(f"{name}: expected {n} values (one per triangle), got {np.size(a)}")
    pts, tri = weld(corners)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA",
             f"POINTS {len(pts)} double",
             "\n".join(" ".join(_FMT(c) for c in p) for p in pts.tolist()),
             f"POLYGONS {n} {4 * n}",
             "\n".join(f"3 {a} {b} {c}" for a, b, c in tri.tolist()),
             f"CELL_DATA {n}"]
    for name, a in cell_arrays.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt_values(a)]
    for name, a in int_arrays.items():
        lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default",
                  "\n".join(str(int(v)) for v in np.ravel(a).tolist())]
    return _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# JSON


def _clean(obj, digits: int = 6):
    """Round floats and replace non-finite values with None for stable JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, digits) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return round(x, digits) + 0.0 if math.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def write_json(obj, path) -> Path:
    return _write_text(path, dumps_json(obj))


def write_metrics(metrics: dict, path) -> Path:
    if "schema_version" not in metrics:
        metrics = {"schema_version": SCHEMA_VERSION, **metrics}
    return write_json(metrics, path)


# ---------------------------------------------------------------------------
# figures


def _savefig(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    return path


def plot_pet_map(grid, pet2d, hour: int, hotspots, path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 5))
    x0, y0, x1, y1 = grid.extents
    im = ax.imshow(np.ma.masked_invalid(pet2d), origin="lower", extent=(x0, x1, y0, y1), cmap="inferno")
    fig.colorbar(im, ax=ax, label="PET (C)")
    for h in hotspots:
        if h.hour == hour:
            ax.plot(h.x, h.y, "c+", markersize=10)
    ax.set_title(f"Pedestrian PET, hour {hour}")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    try:
        return _savefig(fig, path)
    finally:
        plt.close(fig)


def plot_eui(ids, before, path, after=None) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(ids) + 2), 4))
    x = np.arange(len(ids))
    width = 0.4 if after is not None else 0.8
    ax.bar(x - (width / 2 if after is not None else 0), before, width, label="baseline")
    if after is not None:
        ax.bar(x + width / 2, after, width, label="mitigated")
        ax.legend()
    ax.set_xticks(x, ids, rotation=60, ha="right")
    ax.set_ylabel("EUI (kWh/m2 envelope)")
    fig.tight_layout()
    try:
        return _savefig(fig, path)
    finally:
        plt.close(fig)
