"""Uniform-grid fields, free-space Biot-Savart velocity, differences and interpolation.

Nodes are cell centres: x_i = c - L + (i + 1/2) h with h = 2L/n, so the node
set is symmetric under x -> 2c - x and the centre itself is a cell corner.
``values[i, j]`` holds the sample at (x1_i, x2_j).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import _kernels as K


class SupportError(ValueError):
    """Vorticity reaches the outer margin of the grid."""


@dataclass(frozen=True)
class Grid2D:
    half_width: float = 48.0
    n: int = 1024
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def origin(self) -> tuple:
        """Coordinates of node (0, 0)."""
        h = self.h
        return (self.center[0] - self.half_width + 0.5 * h,
                self.center[1] - self.half_width + 0.5 * h)

    def axes(self):
        x0, y0 = self.origin
        k = np.arange(self.n) * self.h
        return x0 + k, y0 + k

    def mesh(self):
        x1, x2 = self.axes()
        return np.meshgrid(x1, x2, indexing="ij")

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        c = np.asarray(self.center)
        return np.all(np.abs(p - c) <= self.half_width, axis=-1)

    def node(self, i: int, j: int) -> np.ndarray:
        x0, y0 = self.origin
        return np.array([x0 + i * self.h, y0 + j * self.h])

    def to_dict(self) -> dict:
        return {"half_width": self.half_width, "n": self.n, "center": list(self.center)}


@dataclass
class ScalarField:
    grid: Grid2D
    values: np.ndarray
    even: bool = False

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def symmetry_defect(self) -> float:
        """max |f(x) - f(-x)| over nodes (reflection through the grid centre)."""
        return float(np.max(np.abs(self.values - self.values[::-1, ::-1])))

    def __call__(self, points):
        return sample(self, points)

    def scaled(self, a: float) -> "ScalarField":
        return ScalarField(self.grid, a * self.values, self.even)


@dataclass
class VectorField:
    grid: Grid2D
    values: np.ndarray
    odd: bool = False

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n, 2):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")

    def sup(self) -> float:
        return float(np.max(np.hypot(self.values[..., 0], self.values[..., 1])))

    def symmetry_defect(self) -> float:
        """max |u(x) + u(-x)| over nodes."""
        return float(np.max(np.abs(self.values + self.values[::-1, ::-1])))

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., k])

    def __call__(self, points):
        return sample(self, points)


# --------------------------------------------------------------------------
# Biot-Savart
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class GreenTable:
    """Spectra of the discrete velocity kernel on the doubled (2n x 2n) grid."""

    n: int
    h: float
    k1_hat: np.ndarray = field(repr=False)
    k2_hat: np.ndarray = field(repr=False)


def _kernel_tables(n: int, h: float):
    p = K.potential_table(n, h, K.MOMENTS)
    c = 1.0 / (12.0 * h)
    # rows/cols of p cover offsets -n-2 .. n+1; the stencils need k +- 2

    def shift(a, b):
        return p[2 + a:2 * n + 2 + a, 2 + b:2 * n + 2 + b]

    k1 = -(shift(0, -2) - 8 * shift(0, -1) + 8 * shift(0, 1) - shift(0, 2)) * c
    k2 = (shift(-2, 0) - 8 * shift(-1, 0) + 8 * shift(1, 0) - shift(2, 0)) * c
    # offsets -n..n-1 to wrap order
    return np.fft.ifftshift(k1), np.fft.ifftshift(k2)


@lru_cache(maxsize=4)
def _cached_table(n: int, h: float) -> GreenTable:
    k1, k2 = _kernel_tables(n, h)
    t1 = sfft.rfft2(k1)
    t2 = sfft.rfft2(k2)
    t1.flags.writeable = False
    t2.flags.writeable = False
    return GreenTable(n, h, t1, t2)


def green_table(grid: Grid2D) -> GreenTable:
    return _cached_table(grid.n, grid.h)


def kernel_matrix(grid: Grid2D):
    """Real-space discrete velocity kernel in wrap order (for inspection and tests)."""
    return _kernel_tables(grid.n, grid.h)


def biot_savart_fft(w: ScalarField, *, table: GreenTable | None = None,
                    margin: int = 4, workers: int | None = None) -> VectorField:
    """Velocity of compactly supported vorticity by zero-padded FFT convolution.

    Values in the outer ``margin`` cells must be below 1e-12 of max|w|; the
    convolution itself is exact for any support inside the grid.
    """
    grid = w.grid
    n = grid.n
    v = w.values
    if margin > 0:
        edge = np.concatenate([v[:margin].ravel(), v[-margin:].ravel(),
                               v[:, :margin].ravel(), v[:, -margin:].ravel()])
        if np.any(np.abs(edge) > 1e-12 * np.max(np.abs(v))):
            raise SupportError("vorticity touches the grid margin; enlarge the domain")
    table = table or green_table(grid)
    if table.n != n or not math.isclose(table.h, grid.h):
        raise ValueError("Green table does not match the grid")
    spec = sfft.rfft2(v, s=(2 * n, 2 * n), workers=workers)
    u1 = sfft.irfft2(spec * table.k1_hat, s=(2 * n, 2 * n), workers=workers)[:n, :n]
    u2 = sfft.irfft2(spec * table.k2_hat, s=(2 * n, 2 * n), workers=workers)[:n, :n]
    return VectorField(grid, np.stack([u1, u2], axis=-1), odd=w.even)


def active_cells(w: ScalarField, rel_threshold: float = 0.0):
    """Coordinates and weights of cells with |w| above rel_threshold * max|w|."""
    v = w.values
    cut = rel_threshold * np.max(np.abs(v)) if rel_threshold > 0 else 0.0
    idx = np.nonzero(np.abs(v) > cut)
    x1, x2 = w.grid.axes()
    return x1[idx[0]], x2[idx[1]], v[idx]


def biot_savart_direct(w: ScalarField, points, rel_threshold: float = 0.0) -> np.ndarray:
    """Velocity at arbitrary points by direct summation over all active cells.

    Each cell contributes the exact potential of a uniform square, so the
    singular self-cell needs no special treatment.  Returns shape (m, 2).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sx, sy, wts = active_cells(w, rel_threshold)
    if wts.size == 0:
        return np.zeros((pts.shape[0], 2))
    return K.direct_sum(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
                        sx, sy, wts, w.grid.h, K.MOMENTS)


# --------------------------------------------------------------------------
# differences and interpolation
# --------------------------------------------------------------------------
def _diff_axis(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[2:-2] = (a[:-4] - 8 * a[1:-3] + 8 * a[3:-1] - a[4:]) / (12 * h)
    # fourth-order one-sided closures
    out[0] = (-25 * a[0] + 48 * a[1] - 36 * a[2] + 16 * a[3] - 3 * a[4]) / (12 * h)
    out[1] = (-3 * a[0] - 10 * a[1] + 18 * a[2] - 6 * a[3] + a[4]) / (12 * h)
    out[-1] = (25 * a[-1] - 48 * a[-2] + 36 * a[-3] - 16 * a[-4] + 3 * a[-5]) / (12 * h)
    out[-2] = (3 * a[-1] + 10 * a[-2] - 18 * a[-3] + 6 * a[-4] - a[-5]) / (12 * h)
    return np.moveaxis(out, 0, axis)


def gradient(f: ScalarField) -> VectorField:
    h = f.grid.h
    return VectorField(f.grid, np.stack([_diff_axis(f.values, h, 0),
                                         _diff_axis(f.values, h, 1)], axis=-1))


def velocity_gradient(u: VectorField) -> np.ndarray:
    """Array J[..., i, j] = d u_i / d x_j at the nodes."""
    h = u.grid.h
    out = np.empty(u.values.shape[:2] + (2, 2))
    for i in range(2):
        for j in range(2):
            out[..., i, j] = _diff_axis(u.values[..., i], h, j)
    return out


def divergence(u: VectorField) -> np.ndarray:
    h = u.grid.h
    return _diff_axis(u.values[..., 0], h, 0) + _diff_axis(u.values[..., 1], h, 1)


def sample(f, points):
    """Tensor cubic interpolation of a ScalarField or VectorField at points.

    Exact on cubic polynomials.  A single point returns a scalar (or 2-vector).
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    grid = f.grid
    if not np.all(grid.contains(pts)):
        raise ValueError("sample point outside the grid domain")
    x0, y0 = grid.origin
    px = np.ascontiguousarray(pts[:, 0])
    py = np.ascontiguousarray(pts[:, 1])
    if isinstance(f, VectorField):
        out = np.stack([K.interp_points(np.ascontiguousarray(f.values[..., k]), x0, y0, grid.h, px, py)
                        for k in range(2)], axis=-1)
    else:
        out = K.interp_points(f.values, x0, y0, grid.h, px, py)
    return out[0] if single else out


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------
_HEADER = np.dtype([("n", "<i8"), ("L", "<f8"), ("cx", "<f8"), ("cy", "<f8")])


def save_field(f, path) -> Path:
    """Flat little-endian binary (n, L, cx, cy, then row-major values) plus a JSON sidecar."""
    path = Path(path)
    grid = f.grid
    head = np.array([(grid.n, grid.half_width, grid.center[0], grid.center[1])], dtype=_HEADER)
    with open(path, "wb") as fh:
        fh.write(head.tobytes())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    vector = isinstance(f, VectorField)
    meta = {
        "kind": "vector" if vector else "scalar",
        "components": 2 if vector else 1,
        "layout": "row-major, values[i, j] at (x1_i, x2_j), component fastest",
        "grid": grid.to_dict(),
        "symmetry": ("odd" if f.odd else None) if vector else ("even" if f.even else None),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))
    return path


def load_field(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = path.read_bytes()
    head = np.frombuffer(raw[:_HEADER.itemsize], dtype=_HEADER)[0]
    grid = Grid2D(float(head["L"]), int(head["n"]), (float(head["cx"]), float(head["cy"])))
    data = np.frombuffer(raw[_HEADER.itemsize:], dtype="<f8").astype(float)
    if meta["components"] == 2:
        return VectorField(grid, data.reshape(grid.n, grid.n, 2), odd=meta["symmetry"] == "odd")
    return ScalarField(grid, data.reshape(grid.n, grid.n), even=meta["symmetry"] == "even")


def export_slice_csv(f, path, axis: int = 1, coordinate: float = 0.0) -> Path:
    """Write the grid line nearest x_axis = coordinate as CSV (position, value...)."""
    grid = f.grid
    axes = grid.axes()
    k = int(np.argmin(np.abs(axes[axis] - coordinate)))
    line = f.values[:, k] if axis == 1 else f.values[k, :]
    pos = axes[1 - axis]
    line = line.reshape(grid.n, -1)
    cols = ["x1" if axis == 1 else "x2"] + (["u1", "u2"] if line.shape[1] == 2 else ["value"])
    np.savetxt(path, np.column_stack([pos, line]), delimiter=",", header=",".join(cols),
               comments="", fmt="%.17g")
    return Path(path)
