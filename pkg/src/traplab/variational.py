"""Solvers for the three variational formulas of the model.

* solve_chi_otimes: minimize  J_beta(rho) + <W - f, rho> + 4*pi*alpha*int rho^2
  over probability densities, by entropic mirror descent on the simplex.
  The subgradient of J_beta at rho is the maximizing tilt returned by the
  dual ascent, so each outer step costs one inner rate-function solve
  (warm-started from the previous tilt).  chi(0) is the minimum of the
  full rate functional.

* solve_gp: minimize  ||grad phi||^2 + <W, phi^2> + 4*pi*alpha*||phi||_4^4
  over unit-L2 fields by normalized imaginary-time gradient flow with a
  central-difference Laplacian and Dirichlet walls; step halving enforces
  a monotone energy trace.

* solve_hartree: the ground product-state energy per particle,
  (1/N) * inf over N unit orbitals of
      sum_i [ ||grad h_i||^2 + <W, h_i^2> ] + sum_{i<j} <h_i^2, v * h_j^2>,
  by cyclic self-consistent orbital updates (each one a gradient-flow
  ground-state solve in the frozen mean field of the others).  Coordinate
  descent makes the total energy nonincreasing across sweeps.  Minimizer
  tuples need not be unique; restarts are reported and the best kept.

All three objectives are reported with their energy decompositions, and
the reported value is always the objective evaluated at the returned
minimizer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedObjective, InvalidResolution
from .feynman_kac import default_dt_pde, floor_tilt, tilted_occupation
from .grid import (
    DensityField,
    GridFunction,
    GridSpec,
    convolve,
    inner_product,
    normalize,
    quadrature,
)
from .paths import InitialDistribution, validate_support
from .potentials import PairSpec, RescaledPair, TrapSpec, pair_kernel_on_grid, trap_on_grid
from .rate_function import evaluate_J

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class VarOptions:
    """Iteration controls shared by the variational solvers."""

    max_iter: int = 80
    tol: float = 1e-6
    step0: float = 1.0
    inner_tol: float = 1e-3
    inner_max_iter: int = 40
    flow_max_iter: int = 5000
    flow_tol: float = 1e-11
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("max_iter", "tol", "step0", "inner_tol", "inner_max_iter",
                     "flow_max_iter", "flow_tol", "restarts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"VarOptions.{name} must be positive")


@dataclass(frozen=True)
class VariationalResult:
    value: float
    minimizer: DensityField = field(repr=False)
    residual: float
    iterations: int
    diagnostics: dict = field(repr=False)
    converged: bool = True
    orbitals: list | None = field(default=None, repr=False)


# ------------------------------------------------------------------ GP flow

def _laplacian(vals: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(vals)
    inv_h2 = 1.0 / (h * h)
    for axis in range(vals.ndim):
        lo = [slice(None)] * vals.ndim
        hi = [slice(None)] * vals.ndim
        mid = [slice(None)] * vals.ndim
        lo[axis] = slice(0, -2)
        mid[axis] = slice(1, -1)
        hi[axis] = slice(2, None)
        out[tuple(mid)] += (
            vals[tuple(lo)] - 2.0 * vals[tuple(mid)] + vals[tuple(hi)]
        ) * inv_h2
    return out


def _zero_outside(vals: np.ndarray, mask_inf: np.ndarray) -> None:
    vals[mask_inf] = 0.0
    for axis in range(vals.ndim):
        sl = [slice(None)] * vals.ndim
        sl[axis] = 0
        vals[tuple(sl)] = 0.0
        sl[axis] = -1
        vals[tuple(sl)] = 0.0


def _l2_normalize(grid: GridSpec, vals: np.ndarray) -> np.ndarray:
    norm2 = float(np.sum(grid.quad_weights() * vals * vals))
    if not norm2 > 0:
        raise DivergedObjective("field collapsed to zero during the flow")
    return vals / np.sqrt(norm2)


def _gp_energy(grid: GridSpec, vals, w_finite, alpha: float):
    weights = grid.quad_weights()
    kin = float(np.sum(weights * vals * (-_laplacian(vals, grid.spacing))))
    trap = float(np.sum(weights * w_finite * vals * vals))
    quart = FOUR_PI * alpha * float(np.sum(weights * vals**4))
    return kin + trap + quart, {"kinetic": kin, "trap": trap, "quartic": quart}


def _initial_field(grid: GridSpec, trap: TrapSpec, rng=None) -> np.ndarray:
    mesh = grid.meshgrid()
    r2 = sum(m * m for m in mesh)
    if trap.family == "harmonic" and trap.strength > 0:
        a = np.sqrt(trap.strength)
        vals = np.exp(-0.5 * a * r2)
    elif trap.family == "quartic" and trap.strength > 0:
        vals = np.exp(-0.5 * r2)
    else:
        scale = trap.radius if trap.family == "box" else grid.half_width
        vals = np.exp(-0.5 * r2 / max(scale, 1.0) ** 2)
    if rng is not None:
        bumps = rng.normal(0.0, 0.2, size=vals.shape)
        # keep perturbations smooth-ish and positive overall
        vals = vals * (1.0 + 0.3 * np.tanh(bumps))
        vals = np.abs(vals) + 1e-9
    return vals


def _ground_state_flow(
    grid: GridSpec,
    potential: np.ndarray,
    alpha: float,
    phi0: np.ndarray,
    opts: VarOptions,
):
    """Normalized gradient flow for -Lap + potential + 8*pi*alpha*phi^2.

    Returns (phi, energy, components, iterations, energies); the energy
    trace is monotonically nonincreasing by step-halving.
    """
    mask_inf = ~np.isfinite(potential)
    w_finite = np.where(mask_inf, 0.0, potential)
    h = grid.spacing
    phi = phi0.copy()
    _zero_outside(phi, mask_inf)
    phi = _l2_normalize(grid, phi)
    tau_stab = h * h / (2.0 * 2.0 * grid.dim)
    w_max = float(np.max(w_finite)) if w_finite.size else 0.0
    tau = min(tau_stab, 0.25 / max(w_max, 1.0))
    tau_max = tau
    energy, comps = _gp_energy(grid, phi, w_finite, alpha)
    energies = [energy]
    iterations = 0
    for iterations in range(1, opts.flow_max_iter + 1):
        grad = -_laplacian(phi, h) + w_finite * phi + (2.0 * FOUR_PI * alpha) * phi**3
        accepted = False
        while tau > 1e-18:
            cand = phi - tau * grad
            _zero_outside(cand, mask_inf)
            cand = _l2_normalize(grid, cand)
            cand_energy, cand_comps = _gp_energy(grid, cand, w_finite, alpha)
            if cand_energy <= energy + 1e-13 * max(1.0, abs(energy)):
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            break
        decrease = energy - cand_energy
        phi, energy, comps = cand, cand_energy, cand_comps
        energies.append(energy)
        tau = min(tau * 1.1, tau_max)
        if 0 <= decrease < opts.flow_tol * max(1.0, abs(energy)):
            break
    if not np.isfinite(energy):
        raise DivergedObjective(f"flow energy diverged to {energy}")
    return phi, energy, comps, iterations, energies


def solve_gp(
    W: TrapSpec,
    alpha: float,
    grid: GridSpec,
    opts: VarOptions = VarOptions(),
) -> VariationalResult:
    """Ground state of the kinetic + trap + quartic energy on the unit sphere."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    potential = trap_on_grid(W, grid).values
    rng = np.random.default_rng(opts.seed)
    best = None
    restart_values = []
    for restart in range(opts.restarts):
        phi0 = _initial_field(grid, W, rng if restart > 0 else None)
        phi, energy, comps, iters, energies = _ground_state_flow(
            grid, potential, alpha, phi0, opts
        )
        restart_values.append(energy)
        if best is None or energy < best[1]:
            best = (phi, energy, comps, iters, energies)
    phi, energy, comps, iters, energies = best
    residual = abs(energies[-1] - energies[-2]) if len(energies) > 1 else 0.0
    return VariationalResult(
        value=energy,
        minimizer=DensityField(grid, phi * phi),
        residual=residual,
        iterations=iters,
        diagnostics={
            "components": comps,
            "energy_trace": energies,
            "restart_values": restart_values,
        },
        converged=iters < opts.flow_max_iter,
    )


# ------------------------------------------------------- chi by mirror descent

def _chi_objective_terms(grid, rho, drive_vals, alpha, j_value):
    weights = grid.quad_weights()
    drive = float(np.sum(weights * np.where(np.isfinite(drive_vals), drive_vals, 0.0) * rho.values))
    quart = FOUR_PI * alpha * float(np.sum(weights * rho.values**2))
    return j_value + drive + quart, {"rate": j_value, "drive": drive, "quartic": quart}


def solve_chi_otimes(
    f: GridFunction,
    W: TrapSpec,
    alpha: float,
    beta: float,
    init: InitialDistribution,
    grid: GridSpec,
    opts: VarOptions = VarOptions(),
    dt_pde: float | None = None,
    start_density: DensityField | None = None,
    start_tilt_values: np.ndarray | None = None,
) -> VariationalResult:
    """Minimize J_beta(rho) + <W - f, rho> + 4*pi*alpha*int rho^2 on the simplex.

    Entropic mirror descent rho <- normalize(rho * exp(-eta * g)) with the
    subgradient g = f*_rho + W - f + 8*pi*alpha*rho; backtracking on eta
    keeps the recorded objective sequence nonincreasing.  The objective is
    convex, so the best evaluated iterate certifies the value.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    validate_support(init, W, grid.dim)
    w_vals = trap_on_grid(W, grid).values
    drive_vals = w_vals - f.values  # may be +inf outside a hard wall
    weights = grid.quad_weights()
    rng = np.random.default_rng(opts.seed)

    # The alpha = 0 problem is solved exactly by the occupation density of
    # the tilt f - W (duality collapses there), so that density is the
    # natural starting point for every alpha.  A caller-provided start
    # (e.g. the minimizer of a nearby tilt, as in the directional
    # derivative check) takes precedence.
    if start_density is not None:
        start_tilt = (
            np.asarray(start_tilt_values, dtype=float)
            if start_tilt_values is not None
            else floor_tilt(-drive_vals)
        )
        rho_star0 = start_density
    else:
        start_tilt = floor_tilt(-drive_vals)
        rho_star0 = tilted_occupation(
            GridFunction(grid, start_tilt, role="tilt"), beta, init, grid,
            dt_pde if dt_pde is not None else default_dt_pde(grid),
        )

    best_global = None
    restart_values = []
    for restart in range(opts.restarts):
        start = rho_star0.values
        if restart > 0:
            start = start * np.exp(rng.normal(0.0, 0.5, size=start.shape))
        if not np.any(start > 0):
            raise DivergedObjective("hard wall leaves no admissible density")
        rho = rho_star0 if restart == 0 and start_density is not None else normalize(
            GridFunction(grid, start, role="field")
        )

        def evaluate(density, warm):
            jres = evaluate_J(
                density, beta, init, grid,
                tol=opts.inner_tol, max_iter=opts.inner_max_iter,
                f0=warm, dt_pde=dt_pde,
            )
            val, comps = _chi_objective_terms(grid, density, drive_vals, alpha, jres.value)
            if not np.isfinite(val):
                raise DivergedObjective(f"objective became {val}")
            return val, comps, jres

        value, comps, jres = evaluate(rho, start_tilt)
        best = (value, rho, comps, jres)
        history = [value]
        eta = opts.step0
        small_steps = 0
        iterations = 0
        for iterations in range(1, opts.max_iter + 1):
            g = jres.maximizer.values + drive_vals \
                + (2.0 * FOUR_PI * alpha) * rho.values
            accepted = False
            while eta > 1e-10:
                expo = -eta * g
                expo = expo - np.max(expo[np.isfinite(expo)])
                cand_vals = rho.values * np.exp(expo)
                if not np.any(cand_vals > 0):
                    eta *= 0.5
                    continue
                cand = normalize(GridFunction(grid, cand_vals, role="field"))
                cand_value, cand_comps, cand_jres = evaluate(cand, jres.maximizer.values)
                if cand_value <= value + 1e-12 * max(1.0, abs(value)):
                    accepted = True
                    break
                eta *= 0.5
            if not accepted:
                break
            decrease = value - cand_value
            rho, value, comps, jres = cand, cand_value, cand_comps, cand_jres
            history.append(value)
            if value < best[0]:
                best = (value, rho, comps, jres)
            eta = min(eta * 1.5, 100.0)
            if decrease < opts.tol * max(1.0, abs(value)):
                small_steps += 1
                if small_steps >= 2:
                    break
            else:
                small_steps = 0
        value, rho, comps, jres = best
        restart_values.append(value)
        if best_global is None or value < best_global[0]:
            best_global = (value, rho, comps, jres, history, iterations)

    value, rho, comps, jres, history, iterations = best_global
    residual = abs(history[-1] - history[-2]) if len(history) > 1 else 0.0
    return VariationalResult(
        value=value,
        minimizer=rho,
        residual=residual,
        iterations=iterations,
        diagnostics={
            "components": comps,
            "objective_trace": history,
            "restart_values": restart_values,
            "inner_gap": jres.gap,
            "inner_iterations": jres.iterations,
            "inner_maximizer": jres.maximizer.values,
        },
        converged=iterations < opts.max_iter,
    )


def gateaux_check(
    f: GridFunction,
    g: GridFunction,
    W: TrapSpec,
    alpha: float,
    beta: float,
    init: InitialDistribution,
    grid: GridSpec,
    opts: VarOptions = VarOptions(),
    t_list=(1e-1, 1e-2),
    dt_pde: float | None = None,
) -> dict:
    """Directional-derivative check of chi at f along g.

    With this module's sign convention (the drive is W - f), the derivative
    of chi(f + t*g) at t=0 is -<g, phi_f^2>, phi_f^2 the minimizer at f.
    Reports D(t) = (chi(f + t*g) - chi(f)) / t and |D(t) + <g, phi_f^2>|
    per t; the errors should shrink as t does.
    """
    t_list = list(t_list)
    if any(t <= 0 for t in t_list) or any(
        t_list[k] <= t_list[k + 1] for k in range(len(t_list) - 1)
    ):
        raise ValueError("t_list must be positive and strictly decreasing")
    base = solve_chi_otimes(f, W, alpha, beta, init, grid, opts, dt_pde=dt_pde)
    predicted = inner_product(g, base.minimizer)
    # Tilted solves restart from the base minimizer and its inner tilt, so
    # the inner rate-function evaluations are shared between both sides of
    # the difference quotient and their errors cancel instead of being
    # amplified by 1/t.
    warm_rho = base.minimizer
    warm_tilt = base.diagnostics["inner_maximizer"]
    rows = []
    for t in t_list:
        tilted = GridFunction(grid, f.values + t * g.values, role="tilt")
        res_t = solve_chi_otimes(
            tilted, W, alpha, beta, init, grid, opts, dt_pde=dt_pde,
            start_density=warm_rho, start_tilt_values=warm_tilt,
        )
        D = (res_t.value - base.value) / t
        rows.append({"t": t, "difference_quotient": D, "error": abs(D + predicted)})
    errors = [r["error"] for r in rows]
    return {
        "predicted_derivative": -predicted,
        "rows": rows,
        "monotone_decreasing": all(
            errors[k + 1] <= errors[k] for k in range(len(errors) - 1)
        ),
        "chi_at_f": base.value,
    }


# ----------------------------------------------------------------- Hartree

def _resolution_check(v, grid: GridSpec) -> None:
    if isinstance(v, RescaledPair):
        core = v.base.radius if v.base.family == "ball" else v.base.sigma
        required = core / (2.0 * v.N)
        if grid.spacing > required:
            raise InvalidResolution(
                f"grid spacing {grid.spacing:.4g} cannot resolve the rescaled "
                f"interaction range; need h <= {required:.4g}"
            )


def solve_hartree(
    N: int,
    W: TrapSpec,
    v,
    grid: GridSpec,
    opts: VarOptions = VarOptions(),
) -> VariationalResult:
    """Ground product-state energy per particle with N coupled orbitals.

    v may be a PairSpec or a RescaledPair; with one orbital the pair sum is
    empty and the result equals solve_gp with alpha = 0.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if isinstance(v, RescaledPair) and grid.dim not in (2, 3):
        raise InvalidResolution("rescaled interactions need dim in {2, 3}")
    _resolution_check(v, grid)
    potential = trap_on_grid(W, grid).values
    kernel = pair_kernel_on_grid(v, grid) if N > 1 else None
    weights = grid.quad_weights()
    rng = np.random.default_rng(opts.seed)

    def orbital_density(phi):
        return DensityField(grid, phi * phi)

    def mean_field(conv_list, skip):
        total = np.zeros(grid.shape)
        for j, c in enumerate(conv_list):
            if j != skip:
                total += c
        return total

    best_global = None
    restart_values = []
    for restart in range(opts.restarts):
        phi0 = _initial_field(grid, W, rng if restart > 0 else None)
        orbitals = []
        for i in range(N):
            p = phi0 if restart == 0 else _initial_field(grid, W, rng)
            mask = ~np.isfinite(potential)
            p = p.copy()
            _zero_outside(p, mask)
            orbitals.append(_l2_normalize(grid, p))

        conv = [None] * N
        if kernel is not None:
            for i in range(N):
                conv[i] = convolve(orbital_density(orbitals[i]), kernel).values

        def total_energy():
            kin_trap = 0.0
            for i in range(N):
                e, _ = _gp_energy(grid, orbitals[i], np.where(np.isfinite(potential), potential, 0.0), 0.0)
                kin_trap += e
            inter = 0.0
            for i in range(N):
                for j in range(i + 1, N):
                    inter += float(np.sum(weights * orbitals[i] ** 2 * conv[j]))
            return kin_trap + inter

        if kernel is None:
            phi, energy, comps, iters, energies = _ground_state_flow(
                grid, potential, 0.0, orbitals[0], opts
            )
            orbitals = [phi]
            sweep_energies = energies
            converged = iters < opts.flow_max_iter
            sweeps = iters
            interaction = 0.0
            kinetic = comps["kinetic"]
            trap_term = comps["trap"]
            total = energy
        else:
            sweep_energies = [total_energy()]
            converged = False
            sweeps = 0
            for sweeps in range(1, opts.max_iter + 1):
                for i in range(N):
                    U = mean_field(conv, i)
                    phi, _, _, _, _ = _ground_state_flow(
                        grid, potential + U, 0.0, orbitals[i], opts
                    )
                    orbitals[i] = phi
                    conv[i] = convolve(orbital_density(phi), kernel).values
                sweep_energies.append(total_energy())
                if abs(sweep_energies[-2] - sweep_energies[-1]) < opts.tol * max(
                    1.0, abs(sweep_energies[-1])
                ):
                    converged = True
                    break
            total = sweep_energies[-1]
            kinetic = sum(
                float(np.sum(weights * orbitals[i] * (-_laplacian(orbitals[i], grid.spacing))))
                for i in range(N)
            )
            trap_term = sum(
                float(np.sum(weights * np.where(np.isfinite(potential), potential, 0.0)
                             * orbitals[i] ** 2))
                for i in range(N)
            )
            interaction = total - kinetic - trap_term

        restart_values.append(total / N)
        if best_global is None or total / N < best_global[0]:
            best_global = (
                total / N, list(orbitals), sweep_energies, sweeps, converged,
                {"kinetic": kinetic / N, "trap": trap_term / N, "interaction": interaction / N},
            )

    value, orbitals, sweep_energies, sweeps, converged, comps = best_global
    if not converged:
        warnings.warn(
            f"Hartree sweeps did not converge within {opts.max_iter} sweeps; "
            "returning the last iterate",
            RuntimeWarning,
        )
    mean_density = np.mean([o * o for o in orbitals], axis=0)
    residual = (
        abs(sweep_energies[-1] - sweep_energies[-2]) if len(sweep_energies) > 1 else 0.0
    )
    return VariationalResult(
        value=value,
        minimizer=DensityField(grid, mean_density),
        residual=residual,
        iterations=sweeps,
        diagnostics={
            "components": comps,
            "sweep_energies": sweep_energies,
            "restart_values": restart_values,
        },
        converged=converged,
        orbitals=[DensityField(grid, o * o) for o in orbitals],
    )
