"""Sampling of independent Brownian motions and their occupation measures.

Generator convention: the motions are paired with the Schroedinger-type
operator -Laplacian + W through the exponential weight, so the positive
semigroup is exp(t*Laplacian) and increments over a step dt have variance
2*dt per coordinate.  This is the convention every module downstream
relies on (PDE solver, harmonic-oscillator oracles, heat-kernel checks).

Reproducibility: path (i) of replica (r) draws from an independent stream
seeded deterministically by the triple (seed, r, i), so any subset of
replicas can be regenerated bit-exactly and replicas may be generated in
parallel in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IndexOutOfRange,
    InfeasibleTrap,
    InvalidTimeStep,
    UnsupportedInitialDistribution,
)
from .grid import DensityField, GridFunction, GridSpec, gaussian_density, point_mass, uniform_box_density
from .potentials import TrapSpec

INIT_KINDS = ("point", "gaussian", "uniform_box")


@dataclass(frozen=True)
class InitialDistribution:
    """Starting distribution of every motion.

    point:       all paths start at `center`.
    gaussian:    isotropic normal, mean `center`, per-coordinate std `sigma`.
    uniform_box: uniform on [-half_width, half_width]^dim.
    """

    kind: str
    center: tuple = (0.0,)
    sigma: float = 1.0
    half_width: float = 1.0

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise UnsupportedInitialDistribution(f"unknown initial distribution {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise UnsupportedInitialDistribution("gaussian init needs sigma > 0")
        if self.kind == "uniform_box" and not self.half_width > 0:
            raise UnsupportedInitialDistribution("uniform_box init needs half_width > 0")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def center_array(self, dim: int) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        if c.size == 1 and dim > 1:
            c = np.full(dim, float(c[0]))
        if c.size != dim:
            raise UnsupportedInitialDistribution(
                f"initial distribution center has {c.size} coordinates, expected {dim}"
            )
        return c

    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        c = self.center_array(dim)
        if self.kind == "point":
            return c.copy()
        if self.kind == "gaussian":
            return c + self.sigma * rng.standard_normal(dim)
        return rng.uniform(-self.half_width, self.half_width, size=dim)

    def density_on_grid(self, grid: GridSpec) -> DensityField:
        c = self.center_array(grid.dim)
        if self.kind == "point":
            return point_mass(grid, c)
        if self.kind == "gaussian":
            return gaussian_density(grid, c, self.sigma)
        return uniform_box_density(grid, self.half_width)


def validate_support(init: InitialDistribution, trap: TrapSpec, dim: int) -> None:
    """Reject starting distributions that put mass outside {W < inf}."""
    if not trap.is_hard_wall:
        return
    c = init.center_array(dim)
    if init.kind == "point":
        extent = 0.0
    elif init.kind == "uniform_box":
        extent = init.half_width
    else:
        raise InfeasibleTrap(
            "gaussian initial distributions have unbounded support and cannot "
            "be combined with a box trap"
        )
    if np.any(np.abs(c) + extent >= trap.radius):
        raise InfeasibleTrap(
            "initial distribution support must lie strictly inside the box trap"
        )


@dataclass(frozen=True)
class PathEnsemble:
    """N discretized Brownian paths on the time grid [0, beta].

    The requested dt is rounded so the steps tile [0, beta] exactly
    (dt_effective = beta / steps); `time_weights` are the trapezoid weights
    on that lattice and sum to beta, which keeps occupation masses and
    time-integrated energies exact.
    """

    N: int
    beta: float
    dt: float
    steps: int
    dim: int
    positions: np.ndarray = field(repr=False)
    seed: int
    replica_id: int
    init: InitialDistribution

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        expected = (self.N, self.steps + 1, self.dim)
        if pos.shape != expected:
            raise IndexOutOfRange(f"positions shape {pos.shape}, expected {expected}")
        if pos.flags.writeable:
            pos = pos.copy()
            pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def time_weights(self) -> np.ndarray:
        w = np.full(self.steps + 1, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class OccupationMeasure:
    """Normalised occupation measure of one path, binned on a grid."""

    density: DensityField
    path_index: int
    seed: int
    replica_id: int
    clipped_nodes: int


def _path_rng(seed: int, replica_id: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica_id), int(path_index)]))


def effective_steps(beta: float, dt: float) -> int:
    steps = int(round(beta / dt))
    return max(steps, 1)


def sample_paths(
    N: int,
    beta: float,
    dt: float,
    init: InitialDistribution,
    dim: int,
    seed: int,
    replica_id: int = 0,
) -> PathEnsemble:
    """Euler scheme X_{k+1} = X_k + sqrt(2*dt) * xi_k, xi_k standard normal.

    Requires dt <= beta/16 so path functionals resolve the time axis.
    """
    if N < 1:
        raise InvalidTimeStep(f"N must be >= 1, got {N}")
    if not (dt > 0) or dt > beta / 16.0 + 1e-15:
        raise InvalidTimeStep(f"need 0 < dt <= beta/16, got dt={dt} beta={beta}")
    steps = effective_steps(beta, dt)
    dt_eff = beta / steps
    positions = np.empty((N, steps + 1, dim))
    scale = np.sqrt(2.0 * dt_eff)
    for i in range(N):
        rng = _path_rng(seed, replica_id, i)
        positions[i, 0] = init.sample(rng, dim)
        increments = scale * rng.standard_normal((steps, dim))
        np.cumsum(increments, axis=0, out=increments)
        positions[i, 1:] = positions[i, 0] + increments
    return PathEnsemble(
        N=N,
        beta=float(beta),
        dt=dt_eff,
        steps=steps,
        dim=dim,
        positions=positions,
        seed=int(seed),
        replica_id=int(replica_id),
        init=init,
    )


def bin_indices(grid: GridSpec, points: np.ndarray):
    """Nearest-node flat indices for points of shape (..., dim).

    Points outside the box are clipped to the nearest boundary node; the
    second return value counts clipped points.
    """
    n = grid.points_per_axis
    raw = np.rint((points + grid.half_width) / grid.spacing).astype(np.int64)
    clipped = int(np.count_nonzero((raw < 0) | (raw > n - 1)))
    idx = np.clip(raw, 0, n - 1)
    flat = idx[..., 0]
    for axis in range(1, grid.dim):
        flat = flat * n + idx[..., axis]
    return flat, clipped


def eval_on_paths(f: GridFunction, positions: np.ndarray) -> np.ndarray:
    """f at the node nearest each position; shape (..., dim) -> (...).

    Nearest-node evaluation matches the occupation-measure binning, so
    beta * <f, occupation_measure> equals the discrete time integral of
    f along the path identically.
    """
    flat, _ = bin_indices(f.grid, positions)
    return f.values.ravel()[flat]


def occupation_measure(ensemble: PathEnsemble, path_index: int, grid: GridSpec) -> OccupationMeasure:
    """Time-trapezoid deposition of one path into grid cells; total mass 1.

    Each time node k deposits weight w_k / beta into the node nearest
    X_k, divided by that node's quadrature weight (h^dim in the interior)
    so the trapezoid integral of the density is exactly 1.
    """
    if not (0 <= path_index < ensemble.N):
        raise IndexOutOfRange(f"path index {path_index} out of range [0, {ensemble.N})")
    flat, clipped = bin_indices(grid, ensemble.positions[path_index])
    w = ensemble.time_weights() / ensemble.beta
    vals = np.zeros(grid.node_count)
    np.add.at(vals, flat, w)
    vals = vals.reshape(grid.shape) / grid.quad_weights()
    return OccupationMeasure(
        density=DensityField(grid, vals),
        path_index=path_index,
        seed=ensemble.seed,
        replica_id=ensemble.replica_id,
        clipped_nodes=clipped,
    )


def mean_occupation(ensemble: PathEnsemble, grid: GridSpec) -> DensityField:
    """Arithmetic mean of the N normalised occupation measures."""
    flat, _ = bin_indices(grid, ensemble.positions)
    w = ensemble.time_weights() / (ensemble.beta * ensemble.N)
    weights = np.broadcast_to(w, flat.shape)
    vals = np.zeros(grid.node_count)
    np.add.at(vals, flat.ravel(), weights.ravel())
    vals = vals.reshape(grid.shape) / grid.quad_weights()
    return DensityField(grid, vals)


def clip_fraction(ensemble: PathEnsemble, grid: GridSpec) -> float:
    """Fraction of path time nodes that fall outside the grid box."""
    _, clipped = bin_indices(grid, ensemble.positions)
    return clipped / float(ensemble.N * (ensemble.steps + 1))


def paths_to_csv(ensemble: PathEnsemble, path) -> None:
    """Optional flat dump: replica, path, step, then one column per coordinate."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["replica", "path", "step"] + [f"x{k + 1}" for k in range(ensemble.dim)]
        )
        for i in range(ensemble.N):
            for k in range(ensemble.steps + 1):
                writer.writerow(
                    [ensemble.replica_id, i, k]
                    + [repr(float(c)) for c in ensemble.positions[i, k]]
                )
