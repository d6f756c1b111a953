"""Steady and transient conduction solves on an assembled system.

Steady state solves A T = q + b_bc with preconditioned conjugate gradient.
The preconditioner is Jacobi by default and switches to an algebraic
multigrid V-cycle (pyamg smoothed aggregation) above a size threshold, where
plain Jacobi iteration counts become impractical; both paths are
deterministic. Transient evolution uses backward Euler,

    (C/dt + A) T^{n+1} = (C/dt) T^n + q^{n+1} + b_bc,

each step solved to the steady tolerance with the previous step as the warm
start. Temperatures are absolute Kelvin throughout.

Every steady solve is audited for global energy balance (sources plus net
boundary inflow ~ 0) and automatically retried at tighter tolerance when the
audit fails, so the balance bound is a postcondition, not a hope.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SolverError
from .mesh import SparseSystem, VoxelGrid, rasterize_power
from .stack import PowerAssignment

# Above this many unknowns the Jacobi-CG iteration count is no longer
# acceptable on desk hardware and we precondition with AMG instead.
AMG_THRESHOLD = 120_000

ENERGY_REL_TOL = 1e-6     # steady balance: defect <= tol * total power
ENERGY_ABS_FLOOR = 1e-12  # W
STEP_BALANCE_TOL = 1e-5   # transient per-step relative balance


@dataclass
class PcgResult:
    x: np.ndarray
    iterations: int
    residuals: list[float]  # relative residual history
    converged: bool


@dataclass(frozen=True)
class TemperatureField:
    """Per-cell temperatures (K) over the active cells of a grid."""

    values: np.ndarray
    grid: VoxelGrid

    @property
    def fidelity(self) -> str:
        return self.grid.fidelity

    @property
    def stack_name(self) -> str:
        return self.grid.stack.name

    def to_dense(self, fill: float = np.nan) -> np.ndarray:
        out = np.full(self.grid.active.shape, fill)
        out[self.grid.active] = self.values
        return out


@dataclass
class SolveReport:
    iterations: int
    residual: float
    wall_time_s: float
    energy_defect_w: float
    tol_used: float = 0.0


@dataclass
class TransientResult:
    frames: list[TemperatureField]
    times: np.ndarray
    waveform: object = None


def pcg(A: sp.csr_matrix, C_shift: np.ndarray | None, rhs: np.ndarray,
        tol: float = 1e-8, max_iter: int | None = None,
        M=None, x0: np.ndarray | None = None) -> PcgResult:
    """Preconditioned conjugate gradient for SPD systems.

    C_shift, if given, adds a diagonal to A implicitly (transient steps reuse
    the steady matrix this way). M is a preconditioner approximating the
    inverse operator (callable or a diagonal vector to divide by); None
    means Jacobi.

    The iteration runs on the symmetrically diagonal-scaled system
    S A S (S = diag(diagonal)^-1/2): mathematically the Jacobi-preconditioned
    iteration, but carrying out the arithmetic on a balanced matrix keeps
    floating-point error from capping the attainable residual on meshes with
    large cell aspect ratios or conductivity contrast. Convergence is decided
    against the unscaled true residual ||rhs - A x|| / ||rhs||, which is also
    the final entry of the (otherwise scaled-space) residual history.
    """
    n = A.shape[0]
    if max_iter is None:
        max_iter = min(n, max(20, int(10 * np.sqrt(n))))

    diag = A.diagonal() if C_shift is None else A.diagonal() + C_shift
    if np.any(diag <= 0):
        raise SolverError("nonpositive diagonal: system is not SPD")

    b_norm = float(np.linalg.norm(rhs))
    if b_norm == 0.0:
        return PcgResult(np.zeros(n), 0, [0.0], True)

    s = 1.0 / np.sqrt(diag)
    shift2 = None if C_shift is None else C_shift * s * s

    def matvec_scaled(v):
        out = s * (A @ (s * v))
        if shift2 is not None:
            out += shift2 * v
        return out

    def true_rel_residual(x_hat):
        x = s * x_hat
        r = rhs - A @ x
        if C_shift is not None:
            r -= C_shift * x
        return float(np.linalg.norm(r)) / b_norm

    # wrap a caller preconditioner (approximating A^-1) into scaled space
    if M is None:
        apply_m = None                       # scaled diagonal is identity
    elif callable(M):
        apply_m = lambda r: (1.0 / s) * M((1.0 / s) * r)
    else:
        inv = 1.0 / (np.asarray(M) * s * s)
        apply_m = lambda r: inv * r

    b_hat = s * rhs
    bh_norm = float(np.linalg.norm(b_hat))
    x_hat = (np.zeros(n) if x0 is None
             else np.asarray(x0, dtype=float) / s)
    r = b_hat - matvec_scaled(x_hat)
    residuals = [float(np.linalg.norm(r)) / bh_norm]
    trigger = tol
    if residuals[0] <= trigger:
        true_rel = true_rel_residual(x_hat)
        residuals[-1] = true_rel
        if true_rel <= tol:
            return PcgResult(s * x_hat, 0, residuals, True)
        trigger *= 0.3

    z = apply_m(r) if apply_m else r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    for it in range(1, max_iter + 1):
        Ap = matvec_scaled(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError(
                f"CG breakdown at iteration {it}: p^T A p = {pAp:g} <= 0, "
                "matrix is not positive definite"
            )
        alpha = rz / pAp
        x_hat += alpha * p
        r -= alpha * Ap
        rel = float(np.linalg.norm(r)) / bh_norm
        residuals.append(rel)
        if rel <= trigger:
            # recurrence residual drifts; only the unscaled true residual
            # of the original system decides convergence
            true_rel = true_rel_residual(x_hat)
            residuals[-1] = true_rel
            if true_rel <= tol:
                return PcgResult(s * x_hat, it, residuals, True)
            trigger *= 0.3
        z = apply_m(r) if apply_m else r
        rz_new = float(r @ z)
        if rz_new == 0.0 or not np.isfinite(rz_new) or rz == 0.0:
            break  # scaled residual hit exact zero; no further progress
        p = z + (rz_new / rz) * p
        rz = rz_new
    return PcgResult(s * x_hat, it, residuals, False)


def make_preconditioner(system: SparseSystem, method: str = "auto",
                        C_shift: np.ndarray | None = None):
    """Preconditioner callable for a system (None = use pcg's Jacobi).

    "auto" picks AMG for large systems, Jacobi otherwise. The AMG hierarchy
    is built once per system and cached on it.
    """
    if method == "jacobi":
        return None
    if method == "amg" or (method == "auto" and system.n >= AMG_THRESHOLD):
        if C_shift is not None:
            # shifted diagonal changes the operator; do not reuse the cache
            import pyamg
            ml = pyamg.smoothed_aggregation_solver(
                system.A + sp.diags(C_shift), max_coarse=500)
            return ml.aspreconditioner(cycle="V")
        ml = getattr(system, "_amg", None)
        if ml is None:
            import pyamg
            ml = pyamg.smoothed_aggregation_solver(system.A, max_coarse=500)
            system._amg = ml
        return ml.aspreconditioner(cycle="V")
    if method not in ("auto", "jacobi", "amg"):
        raise SolverError(f"unknown solver method {method!r}")
    return None


def _as_q_rows(system: SparseSystem, q) -> np.ndarray:
    """Accept a per-row W vector or a (nz, ny, nx) density field in W/m^3."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 3:
        return system.gather_q(q)
    if q.shape != (system.n,):
        raise SolverError(
            f"q has shape {q.shape}, want ({system.n},) or the grid shape"
        )
    return q


def energy_balance(system: SparseSystem, t: np.ndarray,
                   q_rows: np.ndarray) -> tuple[float, float, float]:
    """(defect, total_power, boundary_inflow), all in W.

    defect = |total source + net boundary inflow|; zero for the exact
    solution because interior conductances cancel in the column sums.
    """
    p_total = float(q_rows.sum())
    bound_in = system.boundary_inflow(t)
    return abs(p_total + bound_in), p_total, bound_in


def solve_steady(system: SparseSystem, q, tol: float = 1e-8,
                 max_iter: int | None = None, method: str = "auto",
                 x0: np.ndarray | None = None
                 ) -> tuple[TemperatureField, SolveReport]:
    """Solve A T = q + b_bc.

    q is a per-row source vector (W) or a density field (W/m^3). On success
    the global energy balance holds to 1e-6 of total power (1e-12 W floor);
    the solve is retried at tighter tolerance if the first pass misses it.
    """
    q_rows = _as_q_rows(system, q)
    rhs = q_rows + system.b_bc
    M = make_preconditioner(system, method)
    if x0 is None:
        x0 = np.full(system.n, system.grid.stack.ambient)

    t0 = time.perf_counter()
    iters = 0
    cur_tol = tol
    for attempt in range(3):
        res = pcg(system.A, None, rhs, tol=cur_tol, max_iter=max_iter, M=M,
                  x0=x0)
        iters += res.iterations
        if not res.converged:
            tail = ", ".join(f"{r:.2e}" for r in res.residuals[-5:])
            raise SolverError(
                f"steady solve did not converge in {res.iterations} "
                f"iterations (relative residual tail: {tail})"
            )
        defect, p_total, _ = energy_balance(system, res.x, q_rows)
        bound = max(ENERGY_REL_TOL * abs(p_total), ENERGY_ABS_FLOOR)
        if defect <= bound:
            break
        x0 = res.x  # tighten and continue from here
        cur_tol *= 1e-2
    else:
        raise SolverError(
            f"energy balance defect {defect:.3e} W exceeds bound "
            f"{bound:.3e} W even at tolerance {cur_tol:.1e}"
        )
    wall = time.perf_counter() - t0
    field = TemperatureField(values=res.x, grid=system.grid)
    report = SolveReport(iterations=iters, residual=res.residuals[-1],
                         wall_time_s=wall, energy_defect_w=defect,
                         tol_used=cur_tol)
    return field, report


def default_dt(system: SparseSystem) -> float:
    """Default transient step: a tenth of the fastest layer lumped time.

    Per layer tau ~ c_v * thickness / h with the largest convective film
    coefficient (or the equivalent conductive one for Dirichlet faces).
    """
    stack = system.grid.stack
    h_refs = []
    for bc in (stack.bc_top, stack.bc_bottom):
        if bc.kind == "convective":
            h_refs.append(bc.h)
        elif bc.kind == "dirichlet":
            top = stack.layers[-1]
            h_refs.append(top.bulk_material.k / max(top.thickness, 1e-9))
    h = max(h_refs) if h_refs else 1000.0
    tau_min = min(l.bulk_material.cv * l.thickness / h for l in stack.layers)
    return tau_min / 10.0


def solve_transient(system: SparseSystem, waveform, t_end: float,
                    dt: float | None = None,
                    T0: np.ndarray | float | None = None,
                    tol: float = 1e-8, store_times=None,
                    ) -> tuple[TransientResult, SolveReport]:
    """Backward-Euler transient solve under a piecewise-constant waveform.

    waveform is a PowerWaveform (segments rasterized once each), a constant
    PowerAssignment, or a constant per-row q vector / density field. T0 is a
    scalar or per-row field, default ambient-uniform. Frames are recorded at
    every step unless store_times selects a subset (snapped to step ends;
    t = 0 is always frame 0).
    """
    if dt is None:
        dt = default_dt(system)
    if dt <= 0:
        raise SolverError(f"dt must be positive, got {dt}")
    n_steps = int(np.ceil(t_end / dt - 1e-12))

    stack = system.grid.stack
    # normalize waveform to (t_starts, per-segment q rows)
    seg_starts: np.ndarray
    if hasattr(waveform, "segments"):
        seg_starts = np.array([t for t, _ in waveform.segments])
        seg_q = [system.gather_q(
            rasterize_power(system.grid, stack, a))
            for _, a in waveform.segments]
        if seg_starts[0] != 0.0 or np.any(np.diff(seg_starts) <= 0):
            raise SolverError("waveform segment starts must increase from 0")
    elif isinstance(waveform, PowerAssignment):
        seg_starts = np.zeros(1)
        seg_q = [system.gather_q(rasterize_power(system.grid, stack, waveform))]
    else:
        seg_starts = np.zeros(1)
        seg_q = [_as_q_rows(system, waveform)]

    if T0 is None:
        T = np.full(system.n, stack.ambient)
    elif np.ndim(T0) == 0:
        T = np.full(system.n, float(T0))
    else:
        T = np.asarray(T0, dtype=float).copy()

    c_over_dt = system.C / dt
    M = make_preconditioner(system, "auto", C_shift=c_over_dt) \
        if system.n >= AMG_THRESHOLD else None

    record_steps = set(range(n_steps + 1))
    if store_times is not None:
        record_steps = {0} | {
            min(n_steps, max(1, int(round(t / dt)))) for t in store_times
        }

    frames = [TemperatureField(values=T.copy(), grid=system.grid)]
    times = [0.0]
    total_iters = 0
    worst_defect = 0.0
    t0_wall = time.perf_counter()
    for step in range(1, n_steps + 1):
        t_new = min(step * dt, t_end)
        seg = int(np.searchsorted(seg_starts, t_new, side="right") - 1)
        q_rows = seg_q[seg]
        rhs = c_over_dt * T + q_rows + system.b_bc

        cur_tol = tol
        for attempt in range(3):
            res = pcg(system.A, c_over_dt, rhs, tol=cur_tol, M=M, x0=T)
            if not res.converged:
                raise SolverError(
                    f"transient step {step} (t={t_new:g}s) did not converge; "
                    f"last residual {res.residuals[-1]:.2e}"
                )
            # balance: storage = input + boundary inflow
            storage = float(np.sum(c_over_dt * (res.x - T)))
            p_total = float(q_rows.sum())
            bound_in = system.boundary_inflow(res.x)
            scale = max(abs(p_total), abs(bound_in), abs(storage), 1e-12)
            defect_rel = abs(storage - p_total - bound_in) / scale
            if defect_rel <= STEP_BALANCE_TOL:
                break
            cur_tol *= 1e-2
        else:
            raise SolverError(
                f"transient step {step}: energy defect {defect_rel:.2e} "
                f"exceeds {STEP_BALANCE_TOL:g} at tolerance {cur_tol:.1e}"
            )
        worst_defect = max(worst_defect, defect_rel)
        total_iters += res.iterations
        T = res.x
        if step in record_steps:
            frames.append(TemperatureField(values=T.copy(), grid=system.grid))
            times.append(t_new)

    wall = time.perf_counter() - t0_wall
    report = SolveReport(iterations=total_iters, residual=res.residuals[-1],
                         wall_time_s=wall, energy_defect_w=worst_defect,
                         tol_used=tol)
    return TransientResult(frames=frames, times=np.asarray(times),
                           waveform=waveform), report
