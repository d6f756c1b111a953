"""Acceptance battery: one test per headline claim, one printed verdict each.

Every test prints a single [PASS]/[FAIL] line (outside pytest's capture, so
it is always visible in the run log) with the measured numbers next to the
threshold it is held to, then asserts.

The first run on a fresh checkout solves the full-resolution unit-response
basis for the industrial case (~10 minutes single-core); the basis is cached
under the repo-local cache directory, so later runs finish in seconds.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

AMBIENT = 293.15


def announce(capfd, name: str, ok: bool, detail: str) -> None:
    with capfd.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. analytic solver oracles


def test_analytic_solver_oracles(capfd):
    from thermkit.materials import get_material
    from thermkit.mesh import assemble, build_lf_mesh
    from thermkit.solver import solve_steady, solve_transient
    from thermkit.stack import (BoundaryCondition, CoreRegion, Layer,
                                PackageStack)

    si, ox, cu = (get_material(n) for n in ("silicon", "oxide", "copper"))

    # (a) uniformly heated slab, fixed base, insulated top: parabolic profile
    L, P = 1e-3, 0.1
    slab = PackageStack(
        name="slab", layers=(Layer("die", L, 1e-3, 1e-3, si),),
        bc_top=BoundaryCondition.adiabatic(),
        bc_bottom=BoundaryCondition.dirichlet(t=AMBIENT),
        power_range=(0.0, 1.0))
    grid = build_lf_mesh(slab, cells_per_mm=1.0, z_cells=64)
    system = assemble(grid)
    q_vol = P / (L * 1e-6)
    field, _ = solve_steady(system, np.full_like(grid.cv, q_vol), tol=1e-10)
    z = 0.5 * (grid.z_edges[:-1] + grid.z_edges[1:])
    exact = AMBIENT + (q_vol / si.k) * (L * z - z ** 2 / 2.0)
    rise = (q_vol / si.k) * L ** 2 / 2.0
    err_parabola = float(np.max(np.abs(field.values - exact)) / rise)

    # (b) series conduction through two slabs against the exact resistance
    h, t_hot = 2000.0, 353.15
    series = PackageStack(
        name="series",
        layers=(Layer("a", 0.5e-3, 1e-3, 1e-3, si),
                Layer("b", 0.5e-3, 1e-3, 1e-3, ox)),
        bc_top=BoundaryCondition.convective(h=h, t_inf=t_hot),
        bc_bottom=BoundaryCondition.dirichlet(t=AMBIENT),
        power_range=(0.0, 1.0))
    grid = build_lf_mesh(series, cells_per_mm=1.0, z_cells=4)
    system = assemble(grid)
    field, _ = solve_steady(system, np.zeros_like(grid.cv), tol=1e-12)
    r_area = 0.5e-3 / si.k + 0.5e-3 / ox.k + 1.0 / h
    flux = (t_hot - AMBIENT) / r_area
    z = 0.5 * (grid.z_edges[:-1] + grid.z_edges[1:])
    exact = np.where(z < 0.5e-3, AMBIENT + flux * z / si.k,
                     AMBIENT + flux * (0.5e-3 / si.k + (z - 0.5e-3) / ox.k))
    err_series = float(np.max(np.abs(field.values - exact))
                       / (exact.max() - AMBIENT))

    # (c) lumped convective step response at small Biot number
    Lc, hc, Pc = 0.5e-3, 3000.0, 0.05
    biot = hc * Lc / cu.k
    lumped = PackageStack(
        name="lump",
        layers=(Layer("blk", Lc, 1e-3, 1e-3, cu, power_regions=(
            CoreRegion(id="blk:c00", rect=(0, 0, 1e-3, 1e-3)),)),),
        bc_top=BoundaryCondition.convective(h=hc, t_inf=AMBIENT),
        bc_bottom=BoundaryCondition.adiabatic(),
        power_range=(0.0, 1.0))
    grid = build_lf_mesh(lumped, cells_per_mm=1.0, z_cells=4)
    system = assemble(grid)
    tau = cu.cv * Lc / hc
    result, _ = solve_transient(system, np.full_like(grid.cv, Pc / (Lc * 1e-6)),
                                t_end=2 * tau, dt=tau / 100.0, tol=1e-10)
    rise_inf = Pc / (hc * 1e-6)
    vols = grid.cell_volumes()[grid.active]
    err_lumped = max(
        abs(float(np.average(f.values, weights=vols))
            - (AMBIENT + rise_inf * (1.0 - math.exp(-t / tau)))) / rise_inf
        for t, f in zip(result.times, result.frames))

    ok = err_parabola < 1e-3 and err_series < 1e-3 and err_lumped < 1e-2
    announce(capfd, "analytic solver oracles", ok,
             f"parabola {err_parabola:.2e} (<1e-3), series {err_series:.2e} "
             f"(<1e-3), lumped step {err_lumped:.2e} (<1e-2, Bi={biot:.4f})")


# ---------------------------------------------------------------------------
# 2. conservation and maximum principle


def test_conservation_and_minimum_temperature(capfd):
    from thermkit.bench import build_mesh, make_case, sample_power
    from thermkit.mesh import assemble, rasterize_power
    from thermkit.solver import solve_steady
    from thermkit.validate import tsv_unit_cell, unit_cell_profile
    from thermkit.stack import PowerAssignment

    battery = []
    for case, fidelity, seed in (("ind8c", "low", 0), ("ind32c", "low", 3),
                                 ("hs-like-8c", "low", 1),
                                 ("hs-like-4c", "high", 2)):
        stack = make_case(case)
        grid = build_mesh(stack, fidelity)
        battery.append((case, stack, grid, sample_power(stack, seed), 1e-8))
    cell = tsv_unit_cell()
    # micron-scale cells put the float64 residual-evaluation floor near 1e-8;
    # accuracy is still enforced by the energy-balance postcondition
    battery.append(("tsv-cell", cell,
                    build_mesh(cell, "high", unit_cell_profile(cell)),
                    PowerAssignment(powers={"heater": 2e-3}, seed=0), 1e-7))

    worst_defect_ratio = 0.0
    worst_min_margin = math.inf
    for name, stack, grid, assignment, tol in battery:
        system = assemble(grid)
        q = system.gather_q(rasterize_power(grid, stack, assignment))
        field, report = solve_steady(system, q, tol=tol)
        p_total = sum(assignment.powers.values())
        worst_defect_ratio = max(worst_defect_ratio,
                                 report.energy_defect_w / p_total)
        worst_min_margin = min(worst_min_margin,
                               float(field.values.min()) - AMBIENT)

    ok = worst_defect_ratio <= 1e-6 and worst_min_margin >= -1e-9
    announce(capfd, "conservation and minimum temperature", ok,
             f"{len(battery)} steady solves: worst defect "
             f"{worst_defect_ratio:.2e} of input power (<=1e-6), "
             f"min(T - t_inf) {worst_min_margin:+.2e} K (>=-1e-9)")


# ---------------------------------------------------------------------------
# 3. homogenization collapse identities and property battery


def test_mixing_rule_identities_and_properties(capfd):
    from thermkit.emt import VolumeFractions, k_inclusion, k_lateral, k_vertical

    rng = np.random.default_rng(12345)
    n = 1000
    k_a = rng.uniform(1e-2, 1e4, n)
    k_b = rng.uniform(1e-2, 1e4, n)
    f = rng.uniform(0.0, 1.0, n)

    t0 = time.perf_counter()
    # collapse identities: ratio-of-equal-terms cases are bitwise exact,
    # the opposite ends algebraically reduce to a*b/b and land within ulps
    exact_zero = (np.all(k_lateral(k_a, k_b, np.zeros(n)) == k_b)
                  and np.all(k_inclusion(k_a, k_b, np.zeros(n)) == k_b))
    ulp_one = max(
        float(np.max(np.abs(k_lateral(k_a, k_b, np.ones(n)) / k_a - 1.0))),
        float(np.max(np.abs(k_inclusion(k_a, k_b, np.ones(n)) / k_a - 1.0))))

    # bounds: every rule stays inside its constituent range
    lo, hi = np.minimum(k_a, k_b), np.maximum(k_a, k_b)
    k_lat = k_lateral(k_a, k_b, f)
    k_incl = k_inclusion(k_a, k_b, f)
    fr = VolumeFractions(f_core=0.3 * f, f_shell=0.2 * f,
                         f_matrix=1.0 - 0.5 * f)
    k_vert = k_vertical(fr, k_a, k_b, k_b)
    in_bounds = all(
        np.all(v >= lo * (1 - 1e-12)) and np.all(v <= hi * (1 + 1e-12))
        for v in (k_lat, k_incl, k_vert))

    # monotonicity in the inclusion fraction, direction set by the contrast
    f2 = np.clip(f + 0.05, 0.0, 1.0)
    diff = (k_lateral(k_a, k_b, f2) - k_lat) * np.sign(k_a - k_b)
    monotone = bool(np.all(diff >= -1e-12 * hi))
    elapsed = time.perf_counter() - t0

    ok = (exact_zero and ulp_one < 1e-14 and in_bounds and monotone
          and elapsed < 1.0)
    announce(capfd, "mixing-rule identities and properties", ok,
             f"zero-fraction collapse exact={exact_zero}, full-fraction "
             f"within {ulp_one:.1e} (<1e-14), bounds+monotonicity on "
             f"{n} random inputs in {elapsed * 1e3:.0f} ms (<1 s)")


# ---------------------------------------------------------------------------
# 4. fraction sweep


def test_fraction_sweep_accuracy_envelope(capfd):
    from thermkit.validate import fraction_sweep, sweep_errors_monotone

    points = fraction_sweep()
    by_f = {p.fraction: p.max_rel_err for p in points
            if math.isfinite(p.max_rel_err)}
    low = max(err for frac, err in by_f.items() if frac <= 0.20)
    at_half = by_f[0.5]
    monotone = sweep_errors_monotone(points)

    ok = low < 0.01 and at_half < 0.05
    detail = ", ".join(f"f={f:.3f}:{100 * e:.3f}%"
                       for f, e in sorted(by_f.items()))
    announce(capfd, "via-fraction sweep", ok,
             f"{detail}; max {100 * low:.3f}% for f<=20% (<1%), "
             f"{100 * at_half:.3f}% at 50% (<5%), "
             f"monotone beyond 10%: {monotone}")


# ---------------------------------------------------------------------------
# 5. transient step response


def test_step_response_accuracy(capfd):
    from thermkit.validate import transient_step_check

    result = transient_step_check()  # 0.2 W across the array, 0-1.5 s
    ok = result.max_rel_err <= 0.02
    announce(capfd, "transient step response", ok,
             f"max rise-normalized probe error "
             f"{100 * result.max_rel_err:.3f}% (<=2%), final rise "
             f"{result.final_rise:.3f} K")


# ---------------------------------------------------------------------------
# 6. cost comparison


def test_cost_comparison_ind8c(capfd):
    from thermkit.validate import cost_comparison

    r = cost_comparison("ind8c")
    ok = (r.element_ratio >= 100.0 and r.speedup >= 10.0
          and r.steady_rel_err <= 0.02)
    announce(capfd, "cost comparison (ind8c)", ok,
             f"elements {r.hf_cells}/{r.lf_cells} = {r.element_ratio:.1f}x "
             f"(>=100x), wall {r.hf_wall_s:.1f}s/{r.lf_wall_s:.4f}s = "
             f"{r.speedup:.0f}x (>=10x), steady error "
             f"{100 * r.steady_rel_err:.3f}% (<=2%)")


# ---------------------------------------------------------------------------
# 7. dataset pipeline


def test_dataset_pipeline_ind8c(capfd, tmp_path):
    from thermkit.bench import make_case
    from thermkit.dataset import generate, load_manifest, read_record
    from thermkit.errors import FormatError
    from thermkit.metrics import evaluate
    from thermkit.tensorio import read_tensor

    stack = make_case("ind8c")
    kwargs = dict(mode="steady", n_train_hf=30, n_train_lf=90,
                  n_val=0, n_test=0, base_seed=0)
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    generate(stack, dir_a, **kwargs)
    generate(stack, dir_b, **kwargs)

    files = sorted(p.relative_to(dir_a) for p in dir_a.rglob("*")
                   if p.is_file())
    n_records = len([f for f in files if f.name.endswith(".temp.tfm")])
    identical = all((dir_a / f).read_bytes() == (dir_b / f).read_bytes()
                    for f in files)

    manifest = load_manifest(dir_a)
    counts = manifest["counts"]["train"]
    ratio_ok = (counts["high"], counts["low"]) == (30, 90)

    # round-trip: records read back finite with the declared shapes
    rec = read_record(dir_a, "train", "high", 2)
    shape_ok = (rec.temp.shape == (64, 64) and rec.power.shape == (2, 64, 64)
                and rec.pvec.shape == (8,))

    # corruption: a flipped byte and a truncation must both be rejected
    victim = dir_a / "train" / "low_00000040.temp.tfm"
    blob = bytearray(victim.read_bytes())
    blob[4] ^= 0xFF  # inside the magic
    victim.write_bytes(bytes(blob))
    try:
        read_tensor(victim)
        corrupt_ok = False
    except FormatError:
        corrupt_ok = True
    victim.write_bytes(bytes(blob[:-10]))
    try:
        read_tensor(victim)
        corrupt_ok = False
    except FormatError:
        pass

    # metric fixtures: hand-computed values
    r = evaluate(np.array([301.0, 398.0]), np.array([300.0, 400.0]))
    fixtures_ok = (abs(r.rmse - math.sqrt(2.5)) < 1e-12
                   and r.mean_abs == 1.5 and r.max_abs == 2.0
                   and abs(r.mape_pct - 100 * (1 / 300 + 2 / 400) / 2) < 1e-12
                   and abs(r.pape_pct - 0.5) < 1e-12)

    ok = (n_records == 120 and identical and ratio_ok and shape_ok
          and corrupt_ok and fixtures_ok)
    announce(capfd, "dataset pipeline (ind8c, 120 samples)", ok,
             f"records={n_records} (30 HF + 90 LF train), "
             f"byte-identical regen={identical}, round-trip={shape_ok}, "
             f"corruption rejected={corrupt_ok}, "
             f"metric fixtures={fixtures_ok}")


# ---------------------------------------------------------------------------
# 8. improvement-ratio convention


def test_improvement_ratio_convention(capfd):
    from thermkit.metrics import MetricReport, improvement_ratio

    def rep(mean_abs, max_abs):
        return MetricReport(rmse=mean_abs, mape_pct=0, pape_pct=0,
                            mean_abs=mean_abs, max_abs=max_abs, n_samples=1)

    r = improvement_ratio(rep(0.028, 0.023), rep(0.062, 0.158))
    ok = abs(r.delta_mean - 2.21) <= 0.01 and abs(r.delta_max - 6.87) <= 0.01
    announce(capfd, "improvement-ratio convention", ok,
             f"0.062/0.028 -> {r.delta_mean:.4f} (2.21 +/- 0.01), "
             f"0.158/0.023 -> {r.delta_max:.4f} (6.87 +/- 0.01)")
