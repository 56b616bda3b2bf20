"""Trap and pair Hamiltonians of a path ensemble, and intersection local times.

The pair Hamiltonian couples whole paths through a double time integral,

    K = sum_{i<j} (1/beta) * int_0^beta int_0^beta v(|X^i_s - X^j_t|) ds dt,

discretized with the ensemble's trapezoid weights on both time axes.  The
N-rescaled variant multiplies by N^dim * v(N * r) / N and approximates the
mutual intersection local time of the paths at the origin; that object is
never evaluated pointwise here (it only exists in the continuum) but is
reached through mollified occupation measures:

    L^{ij} * kappa_eps * kappa_eps (0) = < mu^i * kappa_eps , mu^j * kappa_eps >.

Grid-side convention making that identity exact in floating point: the
intersection histogram bins at the *index difference* of the two binned
paths, so "the cell of X - Y" is defined as the difference of the cells of
X and of Y.  Both computation orders then agree to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IndexOutOfRange,
    MollifierUnderResolved,
    UnsupportedDimension,
)
from .grid import (
    DensityField,
    GridFunction,
    GridSpec,
    convolve,
    inner_product,
    normalize,
    quadrature,
    reflect,
)
from .paths import PathEnsemble, bin_indices, occupation_measure
from .potentials import PairSpec, RescaledPair, TrapSpec, eval_pair, eval_trap


@dataclass(frozen=True)
class Mollifier:
    """Smooth unit-mass bump of width eps on a grid.

    Profile kappa(x) proportional to exp(-1 / (1 - |x/eps|^2)) inside the
    ball |x| < eps, zero outside; normalized to quadrature mass 1.
    """

    epsilon: float
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.flags.writeable:
            vals = vals.copy()
            vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def as_grid_function(self) -> GridFunction:
        return GridFunction(self.grid, self.values, role="field")

    @property
    def sup_norm(self) -> float:
        return float(np.max(self.values))


def make_mollifier(epsilon: float, grid: GridSpec) -> Mollifier:
    if epsilon < 2.0 * grid.spacing:
        raise MollifierUnderResolved(
            f"mollifier width {epsilon} under-resolved: need eps >= 2*h = {2 * grid.spacing}"
        )
    if epsilon >= grid.half_width:
        raise MollifierUnderResolved("mollifier must be supported inside the grid box")
    mesh = grid.meshgrid()
    r2 = sum(m**2 for m in mesh) / epsilon**2
    vals = np.zeros(grid.shape)
    inside = r2 < 1.0
    vals[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    density = normalize(GridFunction(grid, vals, role="field"))
    return Mollifier(epsilon=float(epsilon), grid=grid, values=density.values)


@dataclass(frozen=True)
class IltField:
    """Histogram density of the difference process of a path pair."""

    density: DensityField
    path_i: int
    path_j: int
    seed: int
    replica_id: int
    clipped_nodes: int


def trap_energy(ensemble: PathEnsemble, trap: TrapSpec) -> float:
    """H = sum_i sum_k w_k * W(X^i_k); +inf once any path hits a hard wall."""
    w = ensemble.time_weights()
    vals = eval_trap(trap, ensemble.positions)  # (N, steps+1)
    if np.any(np.isinf(vals)):
        return float("inf")
    return float(np.sum(vals @ w))


def _pair_double_sum(ensemble: PathEnsemble, i: int, j: int, v_of_r) -> float:
    """(1/beta) * sum_{k,l} w_k w_l v(|X^i_k - X^j_l|), fixed index order."""
    w = ensemble.time_weights()
    diff = ensemble.positions[i][:, None, :] - ensemble.positions[j][None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    vals = v_of_r(r)
    return float(w @ vals @ w) / ensemble.beta


def pair_energy(ensemble: PathEnsemble, v) -> float:
    """K = sum_{i<j} (1/beta) * double trapezoid of v(|X^i_s - X^j_t|).

    Accepts a PairSpec or a RescaledPair.
    """
    if ensemble.N < 2:
        raise IndexOutOfRange("pair energy needs at least two paths")
    total = 0.0
    for i in range(ensemble.N):
        for j in range(i + 1, ensemble.N):
            total += _pair_double_sum(ensemble, i, j, lambda r: eval_pair(v, r))
    return total


def scaled_pair_energy(ensemble: PathEnsemble, v: PairSpec) -> float:
    """K^(N) = (1/N) sum_{i<j} (1/beta) double trapezoid of N^dim v(N|...|).

    Identical to pair_energy under the rescaled interaction v_N, since
    N^dim * v(N r) = N * v_N(r).
    """
    if ensemble.dim not in (2, 3):
        raise UnsupportedDimension(
            "the rescaled interaction targets intersection local times, "
            "which exist only in dimensions 2 and 3"
        )
    if ensemble.N < 2:
        raise IndexOutOfRange("pair energy needs at least two paths")
    n = float(ensemble.N)
    scale = n**ensemble.dim

    def v_scaled(r):
        return scale * eval_pair(v, r * n)

    total = 0.0
    for i in range(ensemble.N):
        for j in range(i + 1, ensemble.N):
            total += _pair_double_sum(ensemble, i, j, v_scaled)
    return total / n


def ilt_grid(ensemble: PathEnsemble, i: int, j: int, grid: GridSpec) -> IltField:
    """Intersection-local-time histogram of paths (i, j) on the grid.

    Deposits w_k * w_l / beta^2 at the index difference of the binned
    positions (see module docstring); total mass 1.  Differences falling
    outside the box land on the nearest boundary node and are counted.
    """
    if ensemble.dim not in (2, 3):
        raise UnsupportedDimension("intersection local times need dim in {2, 3}")
    if i == j:
        raise IndexOutOfRange("intersection local time needs two distinct paths")
    for k in (i, j):
        if not (0 <= k < ensemble.N):
            raise IndexOutOfRange(f"path index {k} out of range [0, {ensemble.N})")
    n = grid.points_per_axis
    origin = (n - 1) // 2
    if n % 2 == 0:
        raise IndexOutOfRange("intersection histograms need an origin node (odd points_per_axis)")
    raw_i = np.rint((ensemble.positions[i] + grid.half_width) / grid.spacing).astype(np.int64)
    raw_j = np.rint((ensemble.positions[j] + grid.half_width) / grid.spacing).astype(np.int64)
    raw_i = np.clip(raw_i, 0, n - 1)
    raw_j = np.clip(raw_j, 0, n - 1)
    diff = raw_i[:, None, :] - raw_j[None, :, :] + origin  # (T, T, dim)
    clipped = int(np.count_nonzero((diff < 0) | (diff > n - 1)))
    diff = np.clip(diff, 0, n - 1)
    flat = diff[..., 0]
    for axis in range(1, grid.dim):
        flat = flat * n + diff[..., axis]
    w = ensemble.time_weights() / ensemble.beta
    pair_w = np.multiply.outer(w, w)
    vals = np.zeros(grid.node_count)
    np.add.at(vals, flat.ravel(), pair_w.ravel())
    vals = vals.reshape(grid.shape) / grid.quad_weights()
    return IltField(
        density=DensityField(grid, vals),
        path_i=i,
        path_j=j,
        seed=ensemble.seed,
        replica_id=ensemble.replica_id,
        clipped_nodes=clipped,
    )


def mollified_ilt_zero(
    ensemble: PathEnsemble, i: int, j: int, epsilon: float, grid: GridSpec
) -> float:
    """< mu^i * kappa_eps , mu^j * kappa_eps > on the grid.

    The diagonal i == j is allowed (used only to exercise the sup-norm
    bound by the mollifier; it never enters the pair Hamiltonian).
    """
    if ensemble.dim not in (2, 3):
        raise UnsupportedDimension("mollified intersection local times need dim in {2, 3}")
    moll = make_mollifier(epsilon, grid)
    kappa = moll.as_grid_function()
    mu_i = occupation_measure(ensemble, i, grid).density
    mu_j = mu_i if j == i else occupation_measure(ensemble, j, grid).density
    smooth_i = convolve(mu_i, kappa)
    smooth_j = smooth_i if j == i else convolve(mu_j, kappa)
    return inner_product(smooth_i, smooth_j)


def mollified_ilt_zero_via_histogram(
    ensemble: PathEnsemble, i: int, j: int, epsilon: float, grid: GridSpec
) -> float:
    """Same quantity with the convolution order swapped:
    < ilt_grid , (kappa_eps * kappa_eps)(-x) >."""
    moll = make_mollifier(epsilon, grid)
    kappa = moll.as_grid_function()
    kk = convolve(kappa, kappa)
    ilt = ilt_grid(ensemble, i, j, grid)
    return inner_product(ilt.density, reflect(kk))


def heuristic_bridge_report(ensemble: PathEnsemble, v: PairSpec, grid: GridSpec) -> dict:
    """Diagnostic comparing K^(N) with its intersection-histogram form.

    Rewrites the rescaled pair energy as
        N * beta * integral of v(x) * (1/N^2) sum_{i<j} L^{ij}(x/N) dx,
    evaluated with the binned histograms.  At scale 1/N the histogram is
    under-resolved for large N, so this is reported, never asserted.
    """
    direct = scaled_pair_energy(ensemble, v)
    n = float(ensemble.N)
    nodes = grid.nodes()
    # v(N * z) at histogram nodes z, times N^dim, pre-tabulated once
    vvals = (n**ensemble.dim) * eval_pair(v, np.linalg.norm(nodes, axis=-1) * n)
    histo_total = 0.0
    moll_like = vvals.reshape(grid.shape)
    weights = grid.quad_weights()
    for i in range(ensemble.N):
        for j in range(i + 1, ensemble.N):
            ilt = ilt_grid(ensemble, i, j, grid)
            histo_total += float(np.sum(weights * ilt.density.values * moll_like))
    histogram = ensemble.beta * histo_total / n
    rel = abs(histogram - direct) / max(abs(direct), 1e-300)
    return {
        "direct": direct,
        "histogram": histogram,
        "relative_discrepancy": rel,
        "grid_spacing": grid.spacing,
        "interaction_range": v.range_hint / n,
    }
