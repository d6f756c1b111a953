"""Stacked-package geometry model.

A PackageStack is an ordered bottom-to-top list of layers. Each layer has a
rectangular footprint centered on the stack axis; the global frame is
[0, W] x [0, D] where W, D are the largest footprint extents, so a 1 x 1 mm
die on a 10 x 10 mm substrate spans [4.5, 5.5] mm. All lengths are stored in
meters; constructors taking millimeter inputs convert via `mm()` exactly once.

Interconnect arrays (TSV, microbump, C4) are uniform-pitch grids of coaxial
cylinders centered in the layer footprint, running the full layer thickness.
Power regions are planar rectangles (global frame coordinates) on active
layers; power deposits uniformly over the region volume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import FormatError, GeometryError
from .materials import DEFAULT_MATERIALS, MATERIAL_TABLE_VERSION, Material

STACK_FORMAT = "thermkit-stack"
STACK_VERSION = 1

ARRAY_KINDS = ("tsv", "microbump", "c4")
BC_KINDS = ("adiabatic", "convective", "dirichlet")


def mm(value_mm: float) -> float:
    """Millimeters to meters. The single conversion point for all geometry."""
    return value_mm * 1e-3


def to_mm(value_m: float) -> float:
    """Meters back to millimeters; bit-exact inverse of mm() for its outputs."""
    return value_m / 1e-3


@dataclass(frozen=True)
class BoundaryCondition:
    """Top/bottom face boundary condition (lateral walls are always adiabatic).

    kind   one of "adiabatic", "convective", "dirichlet"
    h      film coefficient, W/(m^2 K), convective only
    t_inf  ambient temperature, K, convective only
    t      fixed face temperature, K, dirichlet only
    """

    kind: str
    h: float = 0.0
    t_inf: float = 0.0
    t: float = 0.0

    @staticmethod
    def adiabatic() -> "BoundaryCondition":
        return BoundaryCondition("adiabatic")

    @staticmethod
    def convective(h: float, t_inf: float) -> "BoundaryCondition":
        return BoundaryCondition("convective", h=h, t_inf=t_inf)

    @staticmethod
    def dirichlet(t: float) -> "BoundaryCondition":
        return BoundaryCondition("dirichlet", t=t)


@dataclass(frozen=True)
class InterconnectArray:
    """Uniform grid of coaxial-cylinder interconnects.

    r_core is the conducting core radius (copper for TSVs, solder for bumps);
    t_shell the liner thickness (zero for bare bumps), so the inclusion radius
    is r_core + t_shell. Cylinder centers form a count_x x count_y grid at
    `pitch`, centered in the layer footprint.
    """

    kind: str
    pitch: float
    count_x: int
    count_y: int
    r_core: float
    t_shell: float
    core_material: Material
    shell_material: Material
    matrix_material: Material

    @property
    def r_shell(self) -> float:
        return self.r_core + self.t_shell

    def centers(self, x0: float, y0: float, extent_x: float, extent_y: float):
        """Cylinder center coordinates for a footprint anchored at (x0, y0)."""
        cx = x0 + extent_x / 2.0
        cy = y0 + extent_y / 2.0
        xs = [cx + (i - (self.count_x - 1) / 2.0) * self.pitch for i in range(self.count_x)]
        ys = [cy + (j - (self.count_y - 1) / 2.0) * self.pitch for j in range(self.count_y)]
        return xs, ys


@dataclass(frozen=True)
class CoreRegion:
    """Planar power region on an active layer; rect in global-frame meters."""

    id: str
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.rect
        return (x1 - x0) * (y1 - y0)


@dataclass(frozen=True)
class Layer:
    name: str
    thickness: float
    extent_x: float
    extent_y: float
    bulk_material: Material
    array: InterconnectArray | None = None
    power_regions: tuple[CoreRegion, ...] = ()


@dataclass(frozen=True)
class PackageStack:
    """Bottom-to-top layer stack with top/bottom boundary conditions.

    power_range is the per-core sampling interval (W) used when powers are
    drawn randomly for this stack.
    """

    name: str
    layers: tuple[Layer, ...]
    bc_top: BoundaryCondition
    bc_bottom: BoundaryCondition
    ambient: float = 293.15
    power_range: tuple[float, float] = (0.0, 0.04)

    @property
    def frame_x(self) -> float:
        return max(l.extent_x for l in self.layers)

    @property
    def frame_y(self) -> float:
        return max(l.extent_y for l in self.layers)

    def layer_origin(self, layer: Layer) -> tuple[float, float]:
        """Lower-left corner of the layer footprint in the global frame."""
        return ((self.frame_x - layer.extent_x) / 2.0,
                (self.frame_y - layer.extent_y) / 2.0)

    def layer_z0(self, index: int) -> float:
        return sum(l.thickness for l in self.layers[:index])

    @property
    def total_thickness(self) -> float:
        return sum(l.thickness for l in self.layers)

    def cores(self) -> list[tuple[int, Layer, CoreRegion]]:
        """All power regions as (layer_index, layer, region), bottom-up order."""
        out = []
        for i, layer in enumerate(self.layers):
            for region in layer.power_regions:
                out.append((i, layer, region))
        return out

    def core_ids(self) -> list[str]:
        return [r.id for _, _, r in self.cores()]


def _rects_overlap(a, b) -> bool:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


def validate_stack(stack: PackageStack) -> list[str]:
    """Check all geometry invariants; return violations (empty list = valid).

    Violations are data, not exceptions: each entry names the layer and the
    broken rule. Idempotent and side-effect free.
    """
    v: list[str] = []
    tol = 1e-12
    if len(stack.layers) == 0:
        return ["stack: must contain at least one layer"]
    if stack.bc_top.kind == "adiabatic" and stack.bc_bottom.kind == "adiabatic":
        v.append("stack: all boundaries adiabatic, singular steady problem")
    for bc, where in ((stack.bc_top, "bc_top"), (stack.bc_bottom, "bc_bottom")):
        if bc.kind not in BC_KINDS:
            v.append(f"stack: {where} has unknown kind {bc.kind!r}")
        if bc.kind == "convective" and not bc.h > 0:
            v.append(f"stack: {where} convective h must be > 0 (got {bc.h})")

    seen_ids: set[str] = set()
    for layer in stack.layers:
        where = f"layer {layer.name!r}"
        if not layer.thickness > 0:
            v.append(f"{where}: thickness must be > 0 (got {layer.thickness})")
        if not (layer.extent_x > 0 and layer.extent_y > 0):
            v.append(f"{where}: extents must be > 0")
        arr = layer.array
        if arr is not None:
            if arr.kind not in ARRAY_KINDS:
                v.append(f"{where}: unknown array kind {arr.kind!r}")
            if arr.count_x < 1 or arr.count_y < 1:
                v.append(f"{where}: array counts must be >= 1")
            if not (arr.r_core > 0 and arr.t_shell >= 0 and arr.pitch > 0):
                v.append(f"{where}: array radii and pitch must be positive")
            elif not arr.r_core + arr.t_shell < arr.pitch / 2.0:
                v.append(
                    f"{where}: overlapping cylinders, r_core + t_shell = "
                    f"{arr.r_core + arr.t_shell:g} must be < pitch/2 = {arr.pitch / 2.0:g}"
                )
            if arr.count_x * arr.pitch > layer.extent_x + tol or \
               arr.count_y * arr.pitch > layer.extent_y + tol:
                v.append(f"{where}: array (count * pitch) exceeds layer footprint")

        x0, y0 = stack.layer_origin(layer)
        fx1, fy1 = x0 + layer.extent_x, y0 + layer.extent_y
        regions = layer.power_regions
        for region in regions:
            rid = region.id
            rx0, ry0, rx1, ry1 = region.rect
            if not (rx0 < rx1 and ry0 < ry1):
                v.append(f"{where}: region {rid!r} rect is degenerate")
                continue
            if rid in seen_ids:
                v.append(f"{where}: duplicate core id {rid!r}")
            seen_ids.add(rid)
            if rx0 < x0 - tol or ry0 < y0 - tol or rx1 > fx1 + tol or ry1 > fy1 + tol:
                v.append(f"{where}: region {rid!r} lies outside the layer footprint")
        for i in range(len(regions)):
            for j in range(i + 1, len(regions)):
                if _rects_overlap(regions[i].rect, regions[j].rect):
                    v.append(
                        f"{where}: regions {regions[i].id!r} and "
                        f"{regions[j].id!r} overlap"
                    )
    return v


def require_valid(stack: PackageStack) -> None:
    """Raise GeometryError listing all violations, if any."""
    violations = validate_stack(stack)
    if violations:
        raise GeometryError("invalid stack:\n  " + "\n  ".join(violations))


@dataclass(frozen=True)
class PowerAssignment:
    """Per-core power draw in watts, with the seed it was drawn from (if any)."""

    powers: dict[str, float]
    seed: int | None = None

    def __getitem__(self, core_id: str) -> float:
        return self.powers[core_id]


@dataclass(frozen=True)
class PowerWaveform:
    """Piecewise-constant power schedule: (t_start, assignment) segments.

    Segment k holds on [t_k, t_{k+1}); starts must increase strictly from 0.
    """

    segments: tuple[tuple[float, PowerAssignment], ...]

    def __post_init__(self):
        starts = [t for t, _ in self.segments]
        if not starts or starts[0] != 0.0 or any(
                b <= a for a, b in zip(starts, starts[1:])):
            raise GeometryError(
                "waveform segment starts must increase strictly from 0"
            )

    def at(self, t: float) -> PowerAssignment:
        idx = 0
        for i, (t_start, _) in enumerate(self.segments):
            if t_start <= t:
                idx = i
        return self.segments[idx][1]


def stack_total_power(stack: PackageStack, assignment: PowerAssignment) -> float:
    """Total dissipated power in watts.

    The assignment must cover every core of the stack; an id the stack does
    not know is an error as well.
    """
    ids = stack.core_ids()
    for cid in ids:
        if cid not in assignment.powers:
            raise GeometryError(f"assignment missing power for core {cid!r}")
    for cid in assignment.powers:
        if cid not in ids:
            raise GeometryError(f"assignment names unknown core {cid!r}")
    return float(sum(assignment.powers[cid] for cid in ids))


# ---------------------------------------------------------------------------
# JSON schema (version 1)
#
# {
#   "format": "thermkit-stack", "version": 1, "unit": "mm" | "m",
#   "name": ..., "ambient": K, "power_range": [lo, hi] (W),
#   "bc_top": {"kind": "convective", "h": ..., "t_inf": ...},
#   "bc_bottom": {...},
#   "materials": {"silicon": {"k":..., "rho":..., "cp":...}, ...},
#   "layers": [{"name":..., "thickness":..., "extent_x":..., "extent_y":...,
#               "bulk_material": "silicon",
#               "array": null | {"kind":..., "pitch":..., "count_x":...,
#                                "count_y":..., "r_core":..., "t_shell":...,
#                                "core_material":..., "shell_material":...,
#                                "matrix_material":...},
#               "power_regions": [{"id":..., "rect":[x0,y0,x1,y1]}]}]
# }
#
# Lengths are in the declared unit; rects are global-frame coordinates.
# ---------------------------------------------------------------------------


def _bc_to_json(bc: BoundaryCondition) -> dict:
    d = {"kind": bc.kind}
    if bc.kind == "convective":
        d.update(h=bc.h, t_inf=bc.t_inf)
    elif bc.kind == "dirichlet":
        d.update(t=bc.t)
    return d


def _bc_from_json(d: dict) -> BoundaryCondition:
    kind = d.get("kind")
    if kind == "adiabatic":
        return BoundaryCondition.adiabatic()
    if kind == "convective":
        return BoundaryCondition.convective(float(d["h"]), float(d["t_inf"]))
    if kind == "dirichlet":
        return BoundaryCondition.dirichlet(float(d["t"]))
    raise FormatError(f"unknown boundary kind {kind!r}")


def stack_to_json(stack: PackageStack, unit: str = "m") -> dict:
    """Serialize a stack to the documented JSON schema."""
    if unit not in ("m", "mm"):
        raise FormatError(f"unit must be 'm' or 'mm', got {unit!r}")
    conv = (lambda x: x) if unit == "m" else to_mm

    materials: dict[str, dict] = {}

    def register(m: Material) -> str:
        materials[m.name] = {"k": m.k, "rho": m.rho, "cp": m.cp}
        return m.name

    layers = []
    for layer in stack.layers:
        arr = None
        if layer.array is not None:
            a = layer.array
            arr = {
                "kind": a.kind,
                "pitch": conv(a.pitch),
                "count_x": a.count_x,
                "count_y": a.count_y,
                "r_core": conv(a.r_core),
                "t_shell": conv(a.t_shell),
                "core_material": register(a.core_material),
                "shell_material": register(a.shell_material),
                "matrix_material": register(a.matrix_material),
            }
        layers.append({
            "name": layer.name,
            "thickness": conv(layer.thickness),
            "extent_x": conv(layer.extent_x),
            "extent_y": conv(layer.extent_y),
            "bulk_material": register(layer.bulk_material),
            "array": arr,
            "power_regions": [
                {"id": r.id, "rect": [conv(c) for c in r.rect]}
                for r in layer.power_regions
            ],
        })
    return {
        "format": STACK_FORMAT,
        "version": STACK_VERSION,
        "material_table_version": MATERIAL_TABLE_VERSION,
        "unit": unit,
        "name": stack.name,
        "ambient": stack.ambient,
        "power_range": list(stack.power_range),
        "bc_top": _bc_to_json(stack.bc_top),
        "bc_bottom": _bc_to_json(stack.bc_bottom),
        "materials": materials,
        "layers": layers,
    }


def stack_from_json(doc: dict) -> PackageStack:
    """Deserialize a stack from the documented JSON schema."""
    if doc.get("format") != STACK_FORMAT:
        raise FormatError(f"not a {STACK_FORMAT} document")
    if doc.get("version") != STACK_VERSION:
        raise FormatError(f"unsupported stack schema version {doc.get('version')!r}")
    unit = doc.get("unit", "m")
    if unit not in ("m", "mm"):
        raise FormatError(f"unknown unit {unit!r}")
    conv = (lambda x: float(x)) if unit == "m" else (lambda x: mm(float(x)))

    try:
        materials = {
            name: Material(name, k=float(m["k"]), rho=float(m["rho"]), cp=float(m["cp"]))
            for name, m in doc.get("materials", {}).items()
        }

        def lookup(name: str) -> Material:
            if name in materials:
                return materials[name]
            if name in DEFAULT_MATERIALS:
                return DEFAULT_MATERIALS[name]
            raise FormatError(f"stack references unknown material {name!r}")

        layers = []
        for ld in doc["layers"]:
            arr = None
            if ld.get("array"):
                ad = ld["array"]
                arr = InterconnectArray(
                    kind=ad["kind"],
                    pitch=conv(ad["pitch"]),
                    count_x=int(ad["count_x"]),
                    count_y=int(ad["count_y"]),
                    r_core=conv(ad["r_core"]),
                    t_shell=conv(ad["t_shell"]),
                    core_material=lookup(ad["core_material"]),
                    shell_material=lookup(ad["shell_material"]),
                    matrix_material=lookup(ad["matrix_material"]),
                )
            regions = tuple(
                CoreRegion(id=str(rd["id"]), rect=tuple(conv(c) for c in rd["rect"]))
                for rd in ld.get("power_regions", [])
            )
            layers.append(Layer(
                name=ld["name"],
                thickness=conv(ld["thickness"]),
                extent_x=conv(ld["extent_x"]),
                extent_y=conv(ld["extent_y"]),
                bulk_material=lookup(ld["bulk_material"]),
                array=arr,
                power_regions=regions,
            ))
        pr = doc.get("power_range", [0.0, 0.04])
        return PackageStack(
            name=doc.get("name", "unnamed"),
            layers=tuple(layers),
            bc_top=_bc_from_json(doc["bc_top"]),
            bc_bottom=_bc_from_json(doc["bc_bottom"]),
            ambient=float(doc.get("ambient", 293.15)),
            power_range=(float(pr[0]), float(pr[1])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed stack document: {exc!r}") from exc


def save_stack(stack: PackageStack, path: str | Path, unit: str = "m") -> None:
    Path(path).write_text(json.dumps(stack_to_json(stack, unit=unit), indent=2) + "\n")


def load_stack(path: str | Path) -> PackageStack:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read stack JSON {p}: {exc}") from exc
    return stack_from_json(doc)
