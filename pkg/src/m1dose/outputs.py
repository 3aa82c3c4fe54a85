"""Output writers: delimited dose tables, VTK legacy fields, matplotlib figures.

All numeric text output uses %.17g so that files are byte-stable and round-trip
exactly for a given build.  Figures are rendered headlessly to files through the
Agg canvas with no global pyplot state.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import StructuredGrid, _axis_lumped

_FMT = "%.17g"


def _fmt(v: float) -> str:
    return _FMT % v


def write_table_csv(path, columns: dict[str, np.ndarray]) -> Path:
    """Comma-separated table with a header row and %.17g numerals."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    n = arrays[0].shape[0]
    if any(a.shape != (n,) for a in arrays):
        raise ValueError("all columns must be 1D arrays of equal length")
    lines = [",".join(names)]
    for k in range(n):
        lines.append(",".join(_fmt(a[k]) for a in arrays))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_dose_csv_1d(path, x: np.ndarray, dose: np.ndarray,
                      reference: np.ndarray | None = None) -> Path:
    """1D depth-dose table; error columns are included when a reference exists.

    rel_error is abs_error / |reference| where the reference is nonzero, else 0.
    """
    if reference is None:
        return write_table_csv(path, {"x": x, "dose": dose})
    abs_err = np.abs(dose - reference)
    rel_err = np.divide(abs_err, np.abs(reference),
                        out=np.zeros_like(abs_err), where=reference != 0.0)
    return write_table_csv(path, {"x": x, "dose": dose, "reference": reference,
                                  "abs_error": abs_err, "rel_error": rel_err})


def write_reference_csv(path, x: np.ndarray, dose: np.ndarray) -> Path:
    return write_table_csv(path, {"x_cm": x, "dose_MeV_per_g": dose})


def write_vtk(path, grid: StructuredGrid, fields: dict[str, np.ndarray],
              title: str = "m1dose fields") -> Path:
    """Legacy ASCII VTK STRUCTURED_POINTS file with POINT_DATA scalars.

    Node ordering already matches VTK convention (x varies fastest).  2D grids
    are written with one z-plane and unit z-spacing.
    """
    if grid.dim not in (2, 3):
        raise ValueError("VTK output is for 2D/3D grids")
    path = Path(path)
    shape = list(grid.shape) + [1] * (3 - grid.dim)
    origin = list(grid.lows) + [0.0] * (3 - grid.dim)
    spacing = list(grid.h) + [1.0] * (3 - grid.dim)
    n = grid.n_nodes
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS %d %d %d" % tuple(shape),
        "ORIGIN " + " ".join(_fmt(v) for v in origin),
        "SPACING " + " ".join(_fmt(v) for v in spacing),
        "POINT_DATA %d" % n,
    ]
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (n,):
            raise ValueError(f"field {name!r} must have one value per node")
        lines.append(f"SCALARS {name} double")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in values)
    path.write_text("\n".join(lines) + "\n")
    return path


def plane_integrated_dose(dose: np.ndarray, grid: StructuredGrid, axis: int = 0):
    """Dose integrated over the planes transverse to `axis` with lumped weights.

    Returns (coords_along_axis, integrated_values).
    """
    if grid.dim < 2:
        raise ValueError("plane integration needs dim >= 2")
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} invalid for dim={grid.dim}")
    arr = np.asarray(dose, dtype=float).reshape(grid.shape[::-1])  # axes (slow..fast)
    # transverse lumped area weights
    weights = np.ones(())
    trans_axes = [a for a in range(grid.dim) if a != axis]
    w_parts = {a: _axis_lumped(grid.shape[a], grid.h[a]) for a in trans_axes}
    arr_axis = grid.dim - 1 - axis  # position of `axis` in the reshaped array
    moved = np.moveaxis(arr, arr_axis, 0)  # (n_axis, ...) remaining axes slow..fast
    rem_axes = [a for a in reversed(range(grid.dim)) if a != axis]
    weights = np.ones([grid.shape[a] for a in rem_axes])
    for pos, a in enumerate(rem_axes):
        shape = [1] * len(rem_axes)
        shape[pos] = grid.shape[a]
        weights = weights * w_parts[a].reshape(shape)
    integrated = np.einsum("k...,...->k", moved, weights)
    return grid.axis_coords(axis), integrated


def save_dose_figure_1d(path, x: np.ndarray, dose: np.ndarray,
                        reference: np.ndarray | None = None,
                        ylabel: str = "dose [MeV/g]", title: str = "") -> Path:
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    fig = Figure(figsize=(7.0, 4.4))
    FigureCanvasAgg(fig)
    ax = fig.subplots()
    ax.plot(x, dose, lw=1.6, label="numerical")
    if reference is not None:
        ax.plot(x, reference, "k--", lw=1.2, label="reference")
    ax.set_xlabel("depth [cm]")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    return Path(path)


def save_slice_figure(path, grid: StructuredGrid, values: np.ndarray,
                      slice_axis: int, slice_position: float | None,
                      label: str = "dose [MeV/g]", title: str = "") -> Path:
    """Heat map of a nodal field: the full field in 2D, a plane slice in 3D."""
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    if grid.dim == 2:
        plane = np.asarray(values).reshape(grid.shape[::-1])  # (ny, nx)
        axes = (0, 1)
    elif grid.dim == 3:
        coords = grid.axis_coords(slice_axis)
        pos = coords[len(coords) // 2] if slice_position is None else slice_position
        k = int(np.argmin(np.abs(coords - pos)))
        arr = np.asarray(values).reshape(grid.shape[::-1])  # (nz, ny, nx)
        arr_axis = grid.dim - 1 - slice_axis
        plane = np.take(arr, k, axis=arr_axis)
        axes = tuple(a for a in range(grid.dim) if a != slice_axis)[:2]
    else:
        raise ValueError("slice figures are for 2D/3D grids")

    ax_h, ax_v = axes[0], axes[1]
    extent = [grid.lows[ax_h], grid.highs[ax_h], grid.lows[ax_v], grid.highs[ax_v]]
    fig = Figure(figsize=(6.4, 5.2))
    FigureCanvasAgg(fig)
    ax = fig.subplots()
    im = ax.imshow(plane, origin="lower", extent=extent, aspect="equal", cmap="inferno")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel(f"{'xyz'[ax_h]} [cm]")
    ax.set_ylabel(f"{'xyz'[ax_v]} [cm]")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    return Path(path)
