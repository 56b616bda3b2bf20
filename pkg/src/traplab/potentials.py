"""Parametric trap and pair-interaction families with closed-form integrals.

Traps W >= 0 confine the motions; the box family uses an exact +inf marker
outside its wall so hard-wall logic stays exact downstream.  Pair
interactions v >= 0 are radial; both shipped families have closed-form
space integrals, so the interaction strength

    alpha(v) = (1/(8*pi)) * integral of v(|x|) over R^d

(the first Born approximation) is available analytically, with a radial
quadrature fallback for cross-checking.

The N-dependent rescaling replaces v by v_N(r) = N^(dim-1) * v(N*r); the
substitution y = N*x shows the integral of N^dim * v(N|x|) equals the
integral of v, so the Born integral is scale-invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NegativeRadius, UnsupportedDimension
from .grid import GridFunction, GridSpec

TRAP_FAMILIES = ("harmonic", "quartic", "box")
PAIR_FAMILIES = ("gaussian", "ball")


@dataclass(frozen=True)
class TrapSpec:
    """Trap potential W.

    harmonic: W(x) = strength * |x|^2
    quartic:  W(x) = strength * |x|^4
    box:      W = 0 on the open box of half-width `radius`, +inf outside
    Strength 0 is allowed (useful as the free case in tests).
    """

    family: str
    strength: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        if self.family not in TRAP_FAMILIES:
            raise ValueError(f"unknown trap family {self.family!r}")
        if self.family in ("harmonic", "quartic") and self.strength < 0:
            raise ValueError("trap strength must be >= 0")
        if self.family == "box" and not self.radius > 0:
            raise ValueError("box trap radius must be > 0")

    @property
    def is_hard_wall(self) -> bool:
        return self.family == "box"


@dataclass(frozen=True)
class PairSpec:
    """Radial pair interaction v.

    gaussian: v(r) = strength * exp(-(r/sigma)^2)
    ball:     v(r) = strength for r < radius, else 0
    Strength 0 is allowed (turns the interaction off for tests).
    """

    family: str
    strength: float
    dim: int
    sigma: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        if self.family not in PAIR_FAMILIES:
            raise ValueError(f"unknown pair family {self.family!r}")
        if self.strength < 0:
            raise ValueError("pair strength must be >= 0 (repulsive interactions only)")
        if self.family == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian pair sigma must be > 0")
        if self.family == "ball" and not self.radius > 0:
            raise ValueError("ball pair radius must be > 0")

    @property
    def range_hint(self) -> float:
        """Radius beyond which v is zero or negligible."""
        if self.family == "ball":
            return self.radius
        return 6.0 * self.sigma


@dataclass(frozen=True)
class RescaledPair:
    """v_N(r) = N^(dim-1) * v(N*r) for the dilute large-N limit."""

    base: PairSpec
    N: int
    dim: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.dim != self.base.dim:
            raise UnsupportedDimension(
                f"RescaledPair dim {self.dim} != base dim {self.base.dim}"
            )

    @property
    def range_hint(self) -> float:
        return self.base.range_hint / self.N


def eval_trap(spec: TrapSpec, x):
    """W(x); x is a point of shape (dim,) or an array (..., dim).

    Returns a scalar or an array matching the leading shape; +inf marks
    the outside of a box trap.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        r2 = float(np.sum(x * x))
        if spec.family == "harmonic":
            return spec.strength * r2
        if spec.family == "quartic":
            return spec.strength * r2 * r2
        inside = bool(np.all(np.abs(x) < spec.radius))
        return 0.0 if inside else math.inf
    r2 = np.sum(x * x, axis=-1)
    if spec.family == "harmonic":
        return spec.strength * r2
    if spec.family == "quartic":
        return spec.strength * r2 * r2
    inside = np.all(np.abs(x) < spec.radius, axis=-1)
    return np.where(inside, 0.0, np.inf)


def eval_pair(spec, r):
    """v(r) for a PairSpec or RescaledPair; r >= 0 scalar or array."""
    if isinstance(spec, RescaledPair):
        scale = float(spec.N) ** (spec.dim - 1)
        return scale * eval_pair(spec.base, np.asarray(r, dtype=float) * spec.N)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise NegativeRadius("pair interactions are defined for r >= 0")
    if spec.family == "gaussian":
        out = spec.strength * np.exp(-((r / spec.sigma) ** 2))
    else:
        out = np.where(r < spec.radius, spec.strength, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def _sphere_area(dim: int) -> float:
    # surface area of the unit sphere in R^dim
    if dim == 2:
        return 2.0 * math.pi
    if dim == 3:
        return 4.0 * math.pi
    raise UnsupportedDimension(f"Born integral supports dim in {{2,3}}, got {dim}")


def alpha_of_v(spec: PairSpec) -> float:
    """alpha(v) = (1/(8*pi)) * integral_{R^d} v(|x|) dx, closed form."""
    d = spec.dim
    if d not in (2, 3):
        raise UnsupportedDimension(f"alpha_of_v needs dim in {{2,3}}, got {d}")
    if spec.family == "ball":
        if d == 2:
            vol = math.pi * spec.radius**2
        else:
            vol = 4.0 * math.pi * spec.radius**3 / 3.0
        integral = spec.strength * vol
    else:
        # integral of exp(-(r/sigma)^2) over R^d is (pi * sigma^2)^(d/2)
        integral = spec.strength * (math.pi * spec.sigma**2) ** (d / 2.0)
    return integral / (8.0 * math.pi)


def alpha_of_v_quadrature(spec: PairSpec) -> float:
    """Radial-quadrature fallback for alpha_of_v; agrees within 1e-6 relative."""
    d = spec.dim
    area = _sphere_area(d)
    upper = max(spec.range_hint * 2.0, 1.0)
    val, _ = quad(lambda r: eval_pair(spec, r) * r ** (d - 1), 0.0, upper, limit=200)
    return area * val / (8.0 * math.pi)


def rescale_pair(spec: PairSpec, N: int) -> RescaledPair:
    return RescaledPair(base=spec, N=int(N), dim=spec.dim)


def rescaled_born_integral_quadrature(spec: RescaledPair) -> float:
    """Integral of N^dim * v_base(N|x|) over R^d, by radial quadrature.

    Equals 8*pi*alpha_of_v(base) exactly by substitution; exposed so tests
    can confirm the scaling leaves the Born integral invariant.
    """
    d = spec.dim
    area = _sphere_area(d)
    upper = max(2.0 * spec.base.range_hint / spec.N, 1e-3)
    n = float(spec.N)

    def integrand(r):
        return n**d * eval_pair(spec.base, n * r) * r ** (d - 1)

    val, _ = quad(integrand, 0.0, upper, limit=400)
    return area * val


def trap_on_grid(spec: TrapSpec, grid: GridSpec) -> GridFunction:
    """W sampled on the grid nodes (role='potential'; may contain +inf)."""
    nodes = grid.nodes()
    vals = eval_trap(spec, nodes).reshape(grid.shape)
    return GridFunction(grid, vals, role="potential")


def pair_kernel_on_grid(spec, grid: GridSpec) -> GridFunction:
    """v(|x|) sampled on the grid, truncated to vanish on the boundary layer.

    Used as a convolution kernel for the Hartree mean field; the shipped
    families decay fast enough that zeroing the outermost layer changes
    integrals at below-tolerance level.
    """
    nodes = grid.nodes()
    r = np.linalg.norm(nodes, axis=-1)
    vals = eval_pair(spec, r).reshape(grid.shape)
    for axis in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[axis] = 0
        vals[tuple(sl)] = 0.0
        sl[axis] = -1
        vals[tuple(sl)] = 0.0
    return GridFunction(grid, vals, role="field")
