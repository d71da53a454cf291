"""Plain-text and graymap serialization for images, sinograms and solver state.

Floats are written with ``repr`` so every value round-trips exactly. Images
are stored as ``ny`` rows of ``nx`` values with row 0 at the bottom of the
domain (the in-memory layout); graymaps are flipped so they display upright.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import Grid, Image, ProjectionGeometry, Sinogram


def _fmt(x) -> str:
    return repr(float(x))


def write_matrix_csv(path, values) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in values:
            w.writerow(_fmt(v) for v in row)


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.array(rows)


def write_image_csv(path, image: Image) -> None:
    write_matrix_csv(path, image.as_array())


def read_image_csv(path, extent=(0.0, 1.0, 0.0, 1.0)) -> Image:
    arr = read_matrix_csv(path)
    ny, nx = arr.shape
    return Image(Grid(nx, ny, tuple(extent)), arr.ravel())


def write_pgm(path, values, shape=None) -> None:
    """16-bit binary graymap linearly scaled from ``[min, max]`` to ``[0, 65535]``."""
    arr = np.asarray(values, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    if arr.ndim != 2:
        raise ValueError("graymap needs a 2-D array or an explicit shape")
    lo, hi = float(arr.min()), float(arr.max())
    scaled = np.zeros_like(arr) if hi == lo else (arr - lo) / (hi - lo)
    data = np.round(scaled[::-1] * 65535).astype(">u2")
    ny, nx = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm` up to the lost scaling (values in [0, 65535])."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary graymap")
    nx, ny, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(parts[4], dtype=dtype, count=nx * ny)
    return data.reshape(ny, nx)[::-1].astype(float)


def write_sinogram_csv(path, sino: Sinogram, grid: Grid | None = None) -> None:
    """Sinogram rows (one per angle) preceded by a ``#``-comment header."""
    geo = sino.geometry
    extent = geo.detector_extent if geo.detector_extent is not None or grid is None else geo.span(grid)
    with open(path, "w", newline="") as fh:
        fh.write("# angles=" + ";".join(_fmt(a) for a in geo.angles) + "\n")
        fh.write(f"# detectors={geo.detectors}\n")
        fh.write("# detector_extent=" + ("auto" if extent is None else _fmt(extent)) + "\n")
        fh.write(f"# kernel={geo.kernel.value}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in sino.as_array():
            w.writerow(_fmt(v) for v in row)


def read_sinogram_csv(path) -> Sinogram:
    header = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
    try:
        angles = tuple(float(a) for a in header["angles"].split(";"))
        detectors = int(header["detectors"])
        kernel = header["kernel"]
    except KeyError as exc:
        raise ValueError(f"{path}: sinogram header lacks {exc}") from None
    ext = header.get("detector_extent", "auto")
    geo = ProjectionGeometry(angles, detectors, None if ext == "auto" else float(ext), kernel)
    values = read_matrix_csv(path)
    if values.shape != (len(angles), detectors):
        raise ValueError(f"{path}: data shape {values.shape} disagrees with header")
    return Sinogram(geo, values.ravel())


def write_triplets_csv(path, W) -> None:
    rows, cols, vals = W.triplets()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row", "col", "weight"))
        for r, c, v in zip(rows, cols, vals):
            w.writerow((int(r), int(c), _fmt(v)))


def write_nodes_csv(path, nodes, alpha) -> None:
    nodes = np.asarray(nodes, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if len(nodes) != len(alpha):
        raise ValueError("one weight per node is required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "y", "alpha"))
        for (x, y), a in zip(nodes, alpha):
            w.writerow((_fmt(x), _fmt(y), _fmt(a)))


def read_nodes_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    nodes = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    alpha = np.array([float(r["alpha"]) for r in rows])
    return nodes, alpha


def write_records_csv(path, rows, fields) -> None:
    """Write dict rows with a fixed column order; floats use ``repr``, ``None`` is blank."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            out = []
            for k in fields:
                v = row[k]
                if v is None:
                    out.append("")
                elif isinstance(v, (bool, np.bool_)):
                    out.append(int(v))
                elif isinstance(v, (int, np.integer)):
                    out.append(int(v))
                else:
                    out.append(_fmt(v))
            w.writerow(out)


def read_records_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
