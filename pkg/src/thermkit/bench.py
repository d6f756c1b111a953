"""Benchmark case constructors, power samplers, and resolution profiles.

Random draws use SplitMix64, a tiny published 64-bit generator, so any
consumer in any language can reproduce an assignment from the seed alone:
the k-th core in sorted-id order takes the k-th output of the stream seeded
with the record seed, mapped to [0, 1) by (x >> 11) * 2^-53. A waveform with
S segments consumes S * n_cores consecutive outputs of the same stream,
segment by segment.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import GeometryError
from .materials import get_material
from .stack import (BoundaryCondition, CoreRegion, InterconnectArray, Layer,
                    PackageStack, PowerAssignment, PowerWaveform, mm,
                    require_valid)

CASE_NAMES = ("ind8c", "ind32c", "hs-like-1c", "hs-like-4c", "hs-like-8c")

_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 (Steele et al. 2014): state += 0x9E3779B97F4A7C15 per draw,
    output = avalanche mix of the new state. Reference constants."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53


def _partition_regions(prefix: str, x0: float, y0: float, w: float, h: float,
                       nx: int, ny: int) -> tuple[CoreRegion, ...]:
    """nx x ny uniform-grid cores over a footprint, ids zero-padded row-major."""
    regions = []
    k = 0
    for j in range(ny):
        for i in range(nx):
            rect = (x0 + w * i / nx, y0 + h * j / ny,
                    x0 + w * (i + 1) / nx, y0 + h * (j + 1) / ny)
            regions.append(CoreRegion(id=f"{prefix}:c{k:02d}", rect=rect))
            k += 1
    return tuple(regions)


def _industrial_stack(name: str, cores_per_side: int) -> PackageStack:
    """Six-layer stacked-die package: substrate, C4, base die, bottom core
    layer, microbump, top core layer (bottom-up). Dimensions in mm."""
    cu = get_material("copper")
    si = get_material("silicon")
    ox = get_material("oxide")
    sol = get_material("solder")
    uf = get_material("underfill")
    sub = get_material("substrate")

    tsv = InterconnectArray(kind="tsv", pitch=mm(0.1), count_x=10, count_y=10,
                            r_core=mm(0.02), t_shell=mm(0.01),
                            core_material=cu, shell_material=ox,
                            matrix_material=si)
    ubump = InterconnectArray(kind="microbump", pitch=mm(0.1), count_x=10,
                              count_y=10, r_core=mm(0.02), t_shell=0.0,
                              core_material=sol, shell_material=sol,
                              matrix_material=uf)
    c4 = InterconnectArray(kind="c4", pitch=mm(0.5), count_x=2, count_y=2,
                           r_core=mm(0.05), t_shell=0.0,
                           core_material=sol, shell_material=sol,
                           matrix_material=uf)

    die_w = mm(1.0)
    die_x0 = (mm(10.0) - die_w) / 2.0  # dies centered on the substrate

    def cores(layer_name: str) -> tuple[CoreRegion, ...]:
        return _partition_regions(layer_name, die_x0, die_x0, die_w, die_w,
                                  cores_per_side, cores_per_side)

    layers = (
        Layer("substrate", mm(1.0), mm(10.0), mm(10.0), sub),
        Layer("c4", mm(0.1), die_w, die_w, uf, array=c4),
        Layer("base_die", mm(0.2), die_w, die_w, si, array=tsv),
        Layer("bottom_core", mm(0.2), die_w, die_w, si, array=tsv,
              power_regions=cores("bottom_core")),
        Layer("ubump", mm(0.04), die_w, die_w, uf, array=ubump),
        Layer("top_core", mm(0.2), die_w, die_w, si,
              power_regions=cores("top_core")),
    )
    stack = PackageStack(
        name=name,
        layers=layers,
        # flip-chip cooling: a lidded heat sink above the top die carries
        # the flux; the board side is treated as adiabatic
        bc_top=BoundaryCondition.convective(h=5000.0, t_inf=293.15),
        bc_bottom=BoundaryCondition.adiabatic(),
        ambient=293.15,
        power_range=(0.0, 0.04),
    )
    require_valid(stack)
    return stack


def _hs_like_stack(name: str, nx: int, ny: int) -> PackageStack:
    """Single silicon die with a uniform-grid floorplan, cooled from the top."""
    si = get_material("silicon")
    die = mm(10.0)
    layers = (
        Layer("die", mm(0.5), die, die, si,
              power_regions=_partition_regions("die", 0.0, 0.0, die, die,
                                               nx, ny)),
    )
    stack = PackageStack(
        name=name,
        layers=layers,
        bc_top=BoundaryCondition.convective(h=1000.0, t_inf=293.15),
        bc_bottom=BoundaryCondition.adiabatic(),
        ambient=293.15,
        power_range=(0.0, 1.0),
    )
    require_valid(stack)
    return stack


def make_case(name: str) -> PackageStack:
    """Construct a named benchmark stack.

    ind8c / ind32c: the six-layer industrial package with 2 active layers
    partitioned 2x2 / 4x4 (8 / 32 cores). hs-like-{1,4,8}c: single-die
    stand-ins with 1 / 4 / 8 uniform-grid cores.
    """
    if name == "ind8c":
        return _industrial_stack(name, 2)
    if name == "ind32c":
        return _industrial_stack(name, 4)
    if name == "hs-like-1c":
        return _hs_like_stack(name, 1, 1)
    if name == "hs-like-4c":
        return _hs_like_stack(name, 2, 2)
    if name == "hs-like-8c":
        return _hs_like_stack(name, 4, 2)
    raise GeometryError(f"unknown case {name!r} (known: {', '.join(CASE_NAMES)})")


def sample_power(stack: PackageStack, seed: int) -> PowerAssignment:
    """Draw i.i.d. uniform per-core powers over the stack's sampling range.

    Core k in sorted-id order takes the k-th SplitMix64(seed) output.
    """
    lo, hi = stack.power_range
    rng = SplitMix64(seed)
    powers = {cid: lo + (hi - lo) * rng.next_float()
              for cid in sorted(stack.core_ids())}
    return PowerAssignment(powers=powers, seed=seed)


def sample_waveform(stack: PackageStack, seed: int, n_segments: int,
                    t_end: float) -> PowerWaveform:
    """Equal-length piecewise-constant schedule with fresh draws per segment."""
    if n_segments < 1:
        raise GeometryError(f"n_segments must be >= 1, got {n_segments}")
    if t_end <= 0:
        raise GeometryError(f"t_end must be positive, got {t_end}")
    lo, hi = stack.power_range
    rng = SplitMix64(seed)
    ids = sorted(stack.core_ids())
    segments = []
    for k in range(n_segments):
        powers = {cid: lo + (hi - lo) * rng.next_float() for cid in ids}
        segments.append((t_end * k / n_segments,
                         PowerAssignment(powers=powers, seed=seed)))
    return PowerWaveform(segments=tuple(segments))


@dataclass(frozen=True)
class MeshProfile:
    """In-plane resolutions (cells/mm) and per-layer z-slab counts for the
    two fidelities of one stack. z_cells None = thickness-scaled default,
    shared by both fidelities so z discretization cancels in comparisons."""

    hf_cells_per_mm: float
    lf_cells_per_mm: float
    z_cells: tuple[int, ...] | None = None


def desk_profile(stack: PackageStack) -> MeshProfile:
    """Default desk-scale resolutions for the benchmark cases.

    For the industrial cases the HF in-plane spacing 0.01 mm is the coarsest
    that resolves the 0.02 mm TSV/microbump radii with >= 2 cells; 0.125 mm
    for LF keeps the element ratio >= 100x with margin.
    """
    if any(l.array is not None for l in stack.layers):
        return MeshProfile(hf_cells_per_mm=100.0, lf_cells_per_mm=8.0)
    return MeshProfile(hf_cells_per_mm=8.0, lf_cells_per_mm=2.0)


def build_mesh(stack: PackageStack, fidelity: str,
               profile: MeshProfile | None = None):
    """Build the HF or LF mesh of a stack at a profile (default desk-scale)."""
    from .mesh import build_hf_mesh, build_lf_mesh

    profile = profile or desk_profile(stack)
    if fidelity == "high":
        return build_hf_mesh(stack, profile.hf_cells_per_mm, profile.z_cells)
    if fidelity == "low":
        return build_lf_mesh(stack, profile.lf_cells_per_mm, profile.z_cells)
    raise GeometryError(f"fidelity must be 'high' or 'low', got {fidelity!r}")
