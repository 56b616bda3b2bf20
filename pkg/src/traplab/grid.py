"""Spatial discretization: cubic grids, grid functions, quadrature, convolution.

Conventions used throughout the package:

* Grids are cubes [-R, R]^dim with the same node count and spacing on every
  axis.  Node i on an axis sits at -R + i*h, h = 2R/(n-1).
* Grid functions store node values in a dim-dimensional array, row-major
  over axes in increasing coordinate order (axis 0 varies slowest).
* All integrals use the tensor-product trapezoid rule.
* Densities are node-value arrays (not cell averages); a point mass is
  mass / (node quadrature weight) on a single node, so its trapezoid
  integral is exactly the mass.
"""

from __future__ import annotations

import csv
import functools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve as _sp_convolve

from .errors import (
    GridMismatch,
    InvalidDimension,
    InvalidResolution,
    KernelTooWide,
    NonFiniteValue,
)

ROLES = ("density", "potential", "tilt", "field")

# Mass this close to 1 is treated as already normalized, which makes
# normalize(normalize(f)) bit-identical to normalize(f).
_NORMALIZED_EPS = 1e-14


@dataclass(frozen=True)
class GridSpec:
    """Cubic grid on [-half_width, half_width]^dim."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidDimension(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (self.half_width > 0):
            raise InvalidResolution(f"half_width must be > 0, got {self.half_width}")
        if self.points_per_axis < 8:
            raise InvalidResolution(
                f"points_per_axis must be >= 8, got {self.points_per_axis}"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def node_count(self) -> int:
        return self.points_per_axis**self.dim

    def axis_coords(self) -> np.ndarray:
        return _axis_coords(self)

    def meshgrid(self) -> list:
        """Coordinate arrays of shape `self.shape`, one per axis."""
        x = self.axis_coords()
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def nodes(self) -> np.ndarray:
        """All node coordinates as an (node_count, dim) array, row-major."""
        mesh = self.meshgrid()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def quad_weights(self) -> np.ndarray:
        return _quad_weights(self)

    def origin_index(self) -> tuple:
        """Index of the node at the origin; requires odd points_per_axis."""
        if self.points_per_axis % 2 == 0:
            raise InvalidResolution(
                "grid has no origin node (points_per_axis is even); "
                "use an odd node count for centered operations"
            )
        return ((self.points_per_axis - 1) // 2,) * self.dim

    def nearest_index(self, x) -> tuple:
        """Index tuple of the node nearest to point x (clipped to the box)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint((x + self.half_width) / self.spacing).astype(int)
        idx = np.clip(idx, 0, self.points_per_axis - 1)
        return tuple(int(i) for i in idx)


@functools.lru_cache(maxsize=None)
def _axis_coords(spec: GridSpec) -> np.ndarray:
    x = np.linspace(-spec.half_width, spec.half_width, spec.points_per_axis)
    x.setflags(write=False)
    return x


@functools.lru_cache(maxsize=None)
def _quad_weights(spec: GridSpec) -> np.ndarray:
    """Tensor-product trapezoid weights, shape `spec.shape`."""
    w1 = np.full(spec.points_per_axis, spec.spacing)
    w1[0] *= 0.5
    w1[-1] *= 0.5
    w = w1
    for _ in range(spec.dim - 1):
        w = np.multiply.outer(w, w1)
    w.setflags(write=False)
    return w


def make_grid(dim: int, half_width: float, points_per_axis: int) -> GridSpec:
    """Build a cubic grid; see GridSpec for the validation rules."""
    return GridSpec(dim=dim, half_width=float(half_width), points_per_axis=int(points_per_axis))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real-valued function sampled on the nodes of a GridSpec.

    Values may be +inf only for role='potential' (hard walls); densities
    and tilts must be finite everywhere.
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    role: str = "field"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridMismatch(
                f"values shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if self.role in ("density", "tilt") and not np.all(np.isfinite(vals)):
            raise NonFiniteValue(f"role={self.role} requires finite values everywhere")
        if np.any(np.isnan(vals)):
            raise NonFiniteValue("values contain NaN")
        if not vals.flags.writeable:
            object.__setattr__(self, "values", vals)
        else:
            vals = vals.copy()
            vals.setflags(write=False)
            object.__setattr__(self, "values", vals)

    def with_values(self, values, role=None) -> "GridFunction":
        return GridFunction(self.grid, values, self.role if role is None else role)


class DensityField(GridFunction):
    """Nonnegative grid function used as a probability density.

    Tiny negative values (>= -1e-12, numerical noise) are clamped to 0;
    anything more negative is rejected.
    """

    def __init__(self, grid: GridSpec, values):
        vals = np.asarray(values, dtype=float)
        if np.any(vals < -1e-12):
            raise NonFiniteValue(
                f"density has negative values down to {vals.min():.3e}"
            )
        vals = np.where(vals < 0.0, 0.0, vals)
        super().__init__(grid=grid, values=vals, role="density")


def quadrature(f: GridFunction) -> float:
    """Trapezoid-rule integral of f over the grid box."""
    if not np.all(np.isfinite(f.values)):
        raise NonFiniteValue("quadrature requires finite values on all nodes")
    return float(np.sum(f.grid.quad_weights() * f.values))


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """<f, g> = integral of f*g over the box (trapezoid rule)."""
    if f.grid != g.grid:
        raise GridMismatch("inner_product requires both functions on the same grid")
    vals = f.values * g.values
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("inner_product requires a finite integrand")
    return float(np.sum(f.grid.quad_weights() * vals))


def lp_distance(f: GridFunction, g: GridFunction, p: float = 1.0) -> float:
    """||f - g||_p under the grid quadrature."""
    if f.grid != g.grid:
        raise GridMismatch("lp_distance requires both functions on the same grid")
    diff = np.abs(f.values - g.values) ** p
    return float(np.sum(f.grid.quad_weights() * diff)) ** (1.0 / p)


def normalize(f: GridFunction) -> DensityField:
    """Rescale f to unit trapezoid mass.  Idempotent bit-for-bit."""
    mass = quadrature(f)
    if not mass > 0:
        raise NonFiniteValue(f"cannot normalize a function of mass {mass}")
    if abs(mass - 1.0) <= _NORMALIZED_EPS:
        return DensityField(f.grid, f.values)
    return DensityField(f.grid, f.values / mass)


def point_mass(grid: GridSpec, x, mass: float = 1.0) -> DensityField:
    """Density with all mass on the node nearest x.

    The node value is mass / (node quadrature weight), so the trapezoid
    integral equals `mass` exactly even on a boundary node.
    """
    vals = np.zeros(grid.shape)
    idx = grid.nearest_index(x)
    vals[idx] = mass / grid.quad_weights()[idx]
    return DensityField(grid, vals)


def convolve(f: GridFunction, kernel: GridFunction, method: str = "auto") -> GridFunction:
    """Discrete convolution (f * kernel)(x_m) = h^dim * sum_a f[a] K[m-a].

    The kernel is a grid function on the same grid; its node at offset r*h
    from the origin node supplies K[r].  The output carries the quadrature
    weights of the integral convolution, so convolving with a unit-mass
    kernel preserves mass (up to the 'same'-window truncation, which is
    negligible when both supports stay away from the box boundary).

    method: 'direct' (summation), 'fft' (spectral), or 'auto' (scipy picks;
    both paths agree to ~1e-12 on shipped kernel sizes).
    """
    if f.grid != kernel.grid:
        raise GridMismatch("convolve requires f and kernel on the same grid")
    grid = f.grid
    # Exact centering of the kernel at the origin needs an origin node.
    grid.origin_index()
    edge = _support_touches_boundary(kernel.values)
    if edge:
        raise KernelTooWide(
            "kernel support touches the grid boundary; enlarge the box or "
            "shrink the kernel"
        )
    if method == "auto":
        out = _sp_convolve(f.values, kernel.values, mode="same")
    elif method in ("direct", "fft"):
        out = _sp_convolve(f.values, kernel.values, mode="same", method=method)
    else:
        raise ValueError(f"unknown convolve method {method!r}")
    out = out * (grid.spacing**grid.dim)
    return GridFunction(grid, out, role="field")


def _support_touches_boundary(values: np.ndarray) -> bool:
    for axis in range(values.ndim):
        first = np.take(values, 0, axis=axis)
        last = np.take(values, -1, axis=axis)
        if np.any(first != 0.0) or np.any(last != 0.0):
            return True
    return False


def reflect(f: GridFunction) -> GridFunction:
    """f(-x) on the same (origin-symmetric) grid."""
    vals = f.values
    for axis in range(f.grid.dim):
        vals = np.flip(vals, axis=axis)
    return GridFunction(f.grid, vals, role=f.role)


# -------------------------------------------------------------- serialization

def to_csv(f: GridFunction, path) -> None:
    """Flat CSV dump: one row per node, coordinates then value.

    Rows are emitted row-major over axes in increasing coordinate order
    (axis 0 slowest), matching the in-memory layout.
    """
    nodes = f.grid.nodes()
    flat = f.values.ravel()
    header = [f"x{k + 1}" for k in range(f.grid.dim)] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for coords, v in zip(nodes, flat):
            writer.writerow([repr(float(c)) for c in coords] + [repr(float(v))])


def to_json_dict(f: GridFunction) -> dict:
    """JSON-safe dict with the grid spec and the flat row-major value list."""
    return {
        "grid": {
            "dim": f.grid.dim,
            "half_width": f.grid.half_width,
            "points_per_axis": f.grid.points_per_axis,
        },
        "role": f.role,
        "layout": "row-major over axes in increasing coordinate order",
        "values": [float(v) for v in f.values.ravel()],
    }


def to_json(f: GridFunction, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_dict(f), fh)


def from_json_dict(d: dict) -> GridFunction:
    grid = GridSpec(
        dim=int(d["grid"]["dim"]),
        half_width=float(d["grid"]["half_width"]),
        points_per_axis=int(d["grid"]["points_per_axis"]),
    )
    vals = np.asarray(d["values"], dtype=float).reshape(grid.shape)
    role = d.get("role", "field")
    if role == "density":
        return DensityField(grid, vals)
    return GridFunction(grid, vals, role=role)


def from_json(path) -> GridFunction:
    with open(path) as fh:
        return from_json_dict(json.load(fh))


def gaussian_density(grid: GridSpec, center, sigma: float) -> DensityField:
    """Normalized isotropic Gaussian bump sampled on the grid."""
    mesh = grid.meshgrid()
    center = np.atleast_1d(np.asarray(center, dtype=float))
    r2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
    vals = np.exp(-r2 / (2.0 * sigma**2))
    return normalize(GridFunction(grid, vals, role="field"))


def uniform_box_density(grid: GridSpec, half_width: float) -> DensityField:
    """Normalized indicator of the sub-box [-half_width, half_width]^dim."""
    if half_width > grid.half_width:
        raise InvalidResolution("uniform box extends beyond the grid")
    mesh = grid.meshgrid()
    inside = np.ones(grid.shape, dtype=bool)
    for m in mesh:
        inside &= np.abs(m) <= half_width + 1e-12
    return normalize(GridFunction(grid, inside.astype(float), role="field"))
