"""Voxelization and finite-volume assembly.

Both fidelities share the same structured axis-aligned grid machinery:
uniform in-plane spacing, per-layer z-slabs (a slab never straddles a layer
interface). The high-fidelity build resolves interconnect cylinders by 3x3
in-plane subsampling of each cell; the low-fidelity build replaces
array-bearing layers with their homogenized equivalent properties.

Cells whose center lies outside their layer's footprint (e.g. beside a die
that is narrower than the substrate) are void: they carry no unknown.
Horizontal faces exposed to void get the top/bottom boundary condition of the
stack; lateral faces to void are adiabatic like the outer walls.

The assembled system is the standard 7-point conductance form: face
conductance A_face / (d1/(2 k1) + d2/(2 k2)) from the axis-aligned k of the
two neighbors, Robin faces adding h*A_face to the diagonal and
h*A_face*t_inf to the boundary vector, Dirichlet faces eliminated
symmetrically through the half-cell conductance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .emt import homogenize_layer
from .errors import MeshError, SolverError
from .stack import BoundaryCondition, Layer, PackageStack, PowerAssignment

EDGE_TOL = 1e-9  # m; layer edges must land on grid lines within this

# 3x3 subsample offsets within a cell, as fractions of the cell size
_SUB = np.array([-1.0 / 3.0, 0.0, 1.0 / 3.0])


@dataclass
class VoxelGrid:
    """Structured voxel grid for one stack at one fidelity.

    Arrays are indexed [iz, iy, ix] (z outermost). Material fields are only
    meaningful where `active`; void cells hold zeros and carry no unknown.
    `q` is the volumetric source density in W/m^3 and is the one field
    rasterize_power rewrites; everything else is fixed after build.
    """

    fidelity: str               # "high" | "low"
    stack: PackageStack
    nx: int
    ny: int
    dx: float
    dy: float
    z_edges: np.ndarray         # (nz+1,)
    dz: np.ndarray              # (nz,)
    slab_layer: np.ndarray      # (nz,) layer index of each slab
    active: np.ndarray          # (nz, ny, nx) bool
    kx: np.ndarray              # (nz, ny, nx) W/(m K)
    ky: np.ndarray
    kz: np.ndarray
    cv: np.ndarray              # (nz, ny, nx) J/(m^3 K)
    q: np.ndarray = field(default=None)  # (nz, ny, nx) W/m^3

    def __post_init__(self):
        if self.q is None:
            self.q = np.zeros_like(self.cv)

    @property
    def nz(self) -> int:
        return len(self.dz)

    @property
    def n_cells(self) -> int:
        """Number of active cells (= unknowns of the assembled system)."""
        return int(self.active.sum())

    @property
    def x_edges(self) -> np.ndarray:
        return self.stack.frame_x * np.arange(self.nx + 1) / self.nx

    @property
    def y_edges(self) -> np.ndarray:
        return self.stack.frame_y * np.arange(self.ny + 1) / self.ny

    def cell_volumes(self) -> np.ndarray:
        """(nz, ny, nx) cell volumes in m^3 (void cells included)."""
        return np.broadcast_to(
            (self.dz * self.dx * self.dy)[:, None, None],
            self.active.shape,
        )

    def layer_slabs(self, layer_index: int) -> np.ndarray:
        return np.nonzero(self.slab_layer == layer_index)[0]

    def stats(self) -> dict:
        per_layer = {}
        for i, layer in enumerate(self.stack.layers):
            slabs = self.layer_slabs(i)
            per_layer[layer.name] = {
                "z_slabs": int(len(slabs)),
                "active_cells": int(self.active[slabs].sum()),
            }
        return {
            "fidelity": self.fidelity,
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "dx_mm": self.dx / 1e-3,
            "cells_total_grid": int(self.active.size),
            "cells_active": self.n_cells,
            "layers": per_layer,
        }


def _plan_inplane(stack: PackageStack, cells_per_mm: float) -> tuple[int, int, float, float]:
    if not cells_per_mm > 0:
        raise MeshError(f"cells_per_mm must be positive, got {cells_per_mm}")
    target = 1e-3 / cells_per_mm
    nx = max(1, int(round(stack.frame_x / target)))
    ny = max(1, int(round(stack.frame_y / target)))
    dx = stack.frame_x / nx
    dy = stack.frame_y / ny
    return nx, ny, dx, dy


def default_z_cells(thickness: float) -> int:
    """Default slabs per layer: 1 for thin layers, 2 for thick ones."""
    return max(1, min(2, int(round(thickness / 0.45e-3))))


def _plan_z(stack: PackageStack, z_cells) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_layers = len(stack.layers)
    if z_cells is None:
        counts = [default_z_cells(l.thickness) for l in stack.layers]
    elif isinstance(z_cells, int):
        counts = [z_cells] * n_layers
    else:
        counts = [int(c) for c in z_cells]
        if len(counts) != n_layers:
            raise MeshError(
                f"z_cells has {len(counts)} entries for {n_layers} layers"
            )
    if any(c < 1 for c in counts):
        raise MeshError("every layer needs at least one z-slab")

    edges = [0.0]
    slab_layer = []
    for i, (layer, c) in enumerate(zip(stack.layers, counts)):
        z0 = edges[-1]
        for j in range(1, c + 1):
            edges.append(z0 + layer.thickness * j / c)
        slab_layer.extend([i] * c)
    z_edges = np.asarray(edges)
    return z_edges, np.diff(z_edges), np.asarray(slab_layer, dtype=np.int64)


def _check_alignment(stack: PackageStack, dx: float, dy: float) -> None:
    """Every footprint edge must land on a grid line, else void boundaries
    would cut through cells and the voxel volume would not match the stack."""
    for layer in stack.layers:
        x0, y0 = stack.layer_origin(layer)
        for name, coord, d in (("x0", x0, dx), ("x1", x0 + layer.extent_x, dx),
                               ("y0", y0, dy), ("y1", y0 + layer.extent_y, dy)):
            if abs(coord - round(coord / d) * d) > EDGE_TOL:
                raise MeshError(
                    f"layer {layer.name!r} edge {name}={coord:g} m does not "
                    f"align with the grid spacing {d:g} m; choose a "
                    "resolution that divides the layer offsets"
                )


def _inplane_span(origin: float, extent: float, d: float, n: int) -> tuple[int, int]:
    """Half-open cell-index range covering [origin, origin+extent]."""
    i0 = int(round(origin / d))
    i1 = int(round((origin + extent) / d))
    return max(0, i0), min(n, i1)


def _fill_layer_bulk(k, cv, slabs, sl, layer: Layer):
    k[slabs, sl[0]:sl[1], sl[2]:sl[3]] = layer.bulk_material.k
    cv[slabs, sl[0]:sl[1], sl[2]:sl[3]] = layer.bulk_material.cv


def _subsample_array_layer(grid_x, grid_y, layer: Layer, origin):
    """Per-cell (k, cv) by 3x3 subsampling of cylinder membership.

    grid_x, grid_y are the cell-center coordinates covering the layer
    footprint. Returns (ny_l, nx_l) arrays. The nearest cylinder center is
    separable in x and y because the array is a uniform grid.
    """
    arr = layer.array
    x0, y0 = origin
    cxs, cys = arr.centers(x0, y0, layer.extent_x, layer.extent_y)
    first_cx, first_cy = cxs[0], cys[0]
    bbox_x0, bbox_x1 = first_cx - arr.pitch / 2, cxs[-1] + arr.pitch / 2
    bbox_y0, bbox_y1 = first_cy - arr.pitch / 2, cys[-1] + arr.pitch / 2

    k_core, k_shell, k_matrix = (arr.core_material.k, arr.shell_material.k,
                                 arr.matrix_material.k)
    cv_core, cv_shell, cv_matrix = (arr.core_material.cv, arr.shell_material.cv,
                                    arr.matrix_material.cv)
    k_bulk, cv_bulk = layer.bulk_material.k, layer.bulk_material.cv
    r_core2, r_shell2 = arr.r_core ** 2, arr.r_shell ** 2

    dxc = grid_x[1] - grid_x[0] if len(grid_x) > 1 else layer.extent_x
    dyc = grid_y[1] - grid_y[0] if len(grid_y) > 1 else layer.extent_y

    k_acc = np.zeros((len(grid_y), len(grid_x)))
    cv_acc = np.zeros_like(k_acc)
    for oy in _SUB * dyc:
        py = grid_y + oy
        jy = np.clip(np.round((py - first_cy) / arr.pitch), 0, arr.count_y - 1)
        ddy = py - (first_cy + jy * arr.pitch)
        in_y = (py >= bbox_y0) & (py <= bbox_y1)
        for ox in _SUB * dxc:
            px = grid_x + ox
            jx = np.clip(np.round((px - first_cx) / arr.pitch), 0, arr.count_x - 1)
            ddx = px - (first_cx + jx * arr.pitch)
            in_x = (px >= bbox_x0) & (px <= bbox_x1)
            r2 = ddy[:, None] ** 2 + ddx[None, :] ** 2
            in_bbox = in_y[:, None] & in_x[None, :]
            k_s = np.where(r2 <= r_core2, k_core,
                           np.where(r2 <= r_shell2, k_shell, k_matrix))
            cv_s = np.where(r2 <= r_core2, cv_core,
                            np.where(r2 <= r_shell2, cv_shell, cv_matrix))
            k_acc += np.where(in_bbox, k_s, k_bulk)
            cv_acc += np.where(in_bbox, cv_s, cv_bulk)
    return k_acc / 9.0, cv_acc / 9.0


def _build(stack: PackageStack, cells_per_mm: float, z_cells, fidelity: str) -> VoxelGrid:
    nx, ny, dx, dy = _plan_inplane(stack, cells_per_mm)
    _check_alignment(stack, dx, dy)
    z_edges, dz, slab_layer = _plan_z(stack, z_cells)
    nz = len(dz)

    active = np.zeros((nz, ny, nx), dtype=bool)
    kx = np.zeros((nz, ny, nx))
    cv = np.zeros((nz, ny, nx))
    ky = kz = None  # filled below; HF aliases kx for isotropic voxels

    anisotropic = fidelity == "low" and any(l.array for l in stack.layers)
    if anisotropic:
        ky = np.zeros((nz, ny, nx))
        kz = np.zeros((nz, ny, nx))

    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dy

    for i, layer in enumerate(stack.layers):
        origin = stack.layer_origin(layer)
        ix0, ix1 = _inplane_span(origin[0], layer.extent_x, dx, nx)
        iy0, iy1 = _inplane_span(origin[1], layer.extent_y, dy, ny)
        slabs = np.nonzero(slab_layer == i)[0]
        sl = (iy0, iy1, ix0, ix1)
        active[slabs, iy0:iy1, ix0:ix1] = True

        if layer.array is None:
            _fill_layer_bulk(kx, cv, slabs, sl, layer)
            if anisotropic:
                ky[slabs, iy0:iy1, ix0:ix1] = layer.bulk_material.k
                kz[slabs, iy0:iy1, ix0:ix1] = layer.bulk_material.k
        elif fidelity == "high":
            arr = layer.array
            if arr.r_core / dx < 2.0 - 1e-9:
                raise MeshError(
                    f"layer {layer.name!r} {arr.kind} array under-resolved: "
                    f"r_core={arr.r_core:g} m spans {arr.r_core / dx:.2f} "
                    "cells, need >= 2"
                )
            k_cell, cv_cell = _subsample_array_layer(
                xc[ix0:ix1], yc[iy0:iy1], layer, origin)
            kx[slabs, iy0:iy1, ix0:ix1] = k_cell
            cv[slabs, iy0:iy1, ix0:ix1] = cv_cell
        else:
            eq = homogenize_layer(layer)
            arr = layer.array
            cxs, cys = arr.centers(origin[0], origin[1],
                                   layer.extent_x, layer.extent_y)
            in_x = (xc[ix0:ix1] >= cxs[0] - arr.pitch / 2) & \
                   (xc[ix0:ix1] <= cxs[-1] + arr.pitch / 2)
            in_y = (yc[iy0:iy1] >= cys[0] - arr.pitch / 2) & \
                   (yc[iy0:iy1] <= cys[-1] + arr.pitch / 2)
            in_bbox = in_y[:, None] & in_x[None, :]
            bm = layer.bulk_material
            kx[slabs, iy0:iy1, ix0:ix1] = np.where(in_bbox, eq.k_x, bm.k)
            ky[slabs, iy0:iy1, ix0:ix1] = np.where(in_bbox, eq.k_y, bm.k)
            kz[slabs, iy0:iy1, ix0:ix1] = np.where(in_bbox, eq.k_z, bm.k)
            cv[slabs, iy0:iy1, ix0:ix1] = np.where(in_bbox, eq.c_v, bm.cv)

    if not anisotropic:
        ky = kz = kx

    grid = VoxelGrid(fidelity=fidelity, stack=stack, nx=nx, ny=ny, dx=dx, dy=dy,
                     z_edges=z_edges, dz=dz, slab_layer=slab_layer,
                     active=active, kx=kx, ky=ky, kz=kz, cv=cv)
    _check_volume(grid)
    return grid


def _check_volume(grid: VoxelGrid) -> None:
    vol = float((grid.active * grid.cell_volumes()).sum())
    want = sum(l.extent_x * l.extent_y * l.thickness for l in grid.stack.layers)
    if abs(vol - want) > 1e-9 * want:
        raise MeshError(
            f"voxel volume {vol:g} m^3 does not match stack volume {want:g} m^3"
        )


def build_hf_mesh(stack: PackageStack, cells_per_mm: float,
                  z_cells=None) -> VoxelGrid:
    """High-fidelity grid with interconnect cylinders resolved.

    cells_per_mm is the in-plane resolution; z_cells is slabs per layer
    (scalar, per-layer sequence, or None for the thickness-scaled default).
    Requires at least 2 cells across the smallest array core radius.
    """
    return _build(stack, cells_per_mm, z_cells, "high")


def build_lf_mesh(stack: PackageStack, cells_per_mm: float = 8.0,
                  z_cells=None) -> VoxelGrid:
    """Low-fidelity grid with array layers homogenized."""
    return _build(stack, cells_per_mm, z_cells, "low")


def rasterize_power(grid: VoxelGrid, stack: PackageStack,
                    assignment: PowerAssignment) -> np.ndarray:
    """Rewrite grid.q with the volumetric source field for an assignment.

    Each core's power spreads uniformly over its region volume (full layer
    thickness); cells partially covered get the overlapped share. Returns the
    q array (also stored on the grid). Total injected power matches the
    assignment to float accuracy.
    """
    for cid in assignment.powers:
        if cid not in stack.core_ids():
            raise MeshError(f"assignment names unknown core {cid!r}")
    q = np.zeros_like(grid.cv)
    x_edges, y_edges = grid.x_edges, grid.y_edges
    for li, layer, region in stack.cores():
        if region.id not in assignment.powers:
            raise MeshError(f"assignment missing power for core {region.id!r}")
        p = assignment.powers[region.id]
        x0, y0, x1, y1 = region.rect
        wx = np.clip(np.minimum(x_edges[1:], x1) - np.maximum(x_edges[:-1], x0),
                     0.0, None)
        wy = np.clip(np.minimum(y_edges[1:], y1) - np.maximum(y_edges[:-1], y0),
                     0.0, None)
        overlap = wy[:, None] * wx[None, :]           # m^2 per cell
        total_area = overlap.sum()
        if total_area <= 0.0:
            raise MeshError(f"core {region.id!r} intersects zero voxels")
        density = p / (total_area * layer.thickness)  # W/m^3, uniform
        slabs = grid.layer_slabs(li)
        cell_area = grid.dx * grid.dy
        frac = overlap / cell_area                    # covered fraction of cell
        for s in slabs:
            q[s] += density * frac
    grid.q = q
    return q


@dataclass
class SparseSystem:
    """Assembled conductance/capacitance system over the active cells.

    A        SPD conductance matrix, W/K (CSR)
    b_bc     boundary source vector, W
    C        diagonal capacitance, J/K (c_v * cell volume)
    row_of   (nz, ny, nx) voxel -> row map, -1 for void
    volumes  per-row cell volume, m^3
    bnd_rows / bnd_g / bnd_t  flattened boundary-face bookkeeping:
             conductance g (W/K) to an external reference temperature t (K),
             so the boundary inflow for a field T is sum(g * (t - T[rows])).
    """

    A: sp.csr_matrix
    b_bc: np.ndarray
    C: np.ndarray
    row_of: np.ndarray
    volumes: np.ndarray
    grid: VoxelGrid
    bnd_rows: np.ndarray
    bnd_g: np.ndarray
    bnd_t: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def gather_q(self, q_density: np.ndarray) -> np.ndarray:
        """Per-row source in W from a (nz, ny, nx) density field."""
        return (q_density * self.grid.cell_volumes())[self.grid.active]

    def boundary_inflow(self, t: np.ndarray) -> float:
        """Net heat flow from the boundaries into the domain, W."""
        return float(np.sum(self.bnd_g * (self.bnd_t - t[self.bnd_rows])))


def _face_pairs(active, row3d, k, axis, dist_a, dist_b, area):
    """Rows, cols, conductances for faces between active cells along axis.

    dist_a/dist_b/area may be scalars or arrays broadcastable to the
    pair-slice shape (e.g. per-slab values shaped (nz, 1, 1)).
    """
    sl_a = [slice(None)] * 3
    sl_b = [slice(None)] * 3
    sl_a[axis] = slice(None, -1)
    sl_b[axis] = slice(1, None)
    sl_a, sl_b = tuple(sl_a), tuple(sl_b)
    both = active[sl_a] & active[sl_b]
    shape = both.shape
    ka, kb = k[sl_a][both], k[sl_b][both]
    da = np.broadcast_to(dist_a, shape)[both]
    db = np.broadcast_to(dist_b, shape)[both]
    ar = np.broadcast_to(area, shape)[both]
    g = ar / (da / (2.0 * ka) + db / (2.0 * kb))
    return row3d[sl_a][both], row3d[sl_b][both], g


def assemble(grid: VoxelGrid,
             bc_top: BoundaryCondition | None = None,
             bc_bottom: BoundaryCondition | None = None) -> SparseSystem:
    """Assemble the 7-point finite-volume system over active cells.

    Boundary conditions default to the stack's. Raises if the steady problem
    would be singular (no convective or fixed-temperature face anywhere).
    """
    stack = grid.stack
    bc_top = bc_top or stack.bc_top
    bc_bottom = bc_bottom or stack.bc_bottom

    active = grid.active
    n = int(active.sum())
    if n == 0:
        raise MeshError("grid has no active cells")
    row3d = np.full(active.shape, -1, dtype=np.int64)
    row3d[active] = np.arange(n)

    rows_list, cols_list, vals_list = [], [], []
    diag = np.zeros(n)

    def add_faces(ra, rb, g):
        rows_list.append(ra)
        cols_list.append(rb)
        vals_list.append(-g)
        rows_list.append(rb)
        cols_list.append(ra)
        vals_list.append(-g)
        diag_add = np.bincount(ra, weights=g, minlength=n)
        diag_add += np.bincount(rb, weights=g, minlength=n)
        return diag_add

    dz_col = grid.dz[:, None, None]
    ra, rb, g = _face_pairs(active, row3d, grid.kx, 2, grid.dx, grid.dx,
                            grid.dy * dz_col)
    diag += add_faces(ra, rb, g)
    ra, rb, g = _face_pairs(active, row3d, grid.ky, 1, grid.dy, grid.dy,
                            grid.dx * dz_col)
    diag += add_faces(ra, rb, g)
    ra, rb, g = _face_pairs(active, row3d, grid.kz, 0, dz_col[:-1], dz_col[1:],
                            grid.dx * grid.dy)
    diag += add_faces(ra, rb, g)

    # Exposed horizontal faces: domain top/bottom plus steps onto void.
    b_bc = np.zeros(n)
    bnd_rows, bnd_g, bnd_t = [], [], []
    above = np.zeros_like(active)
    above[:-1] = active[1:]
    below = np.zeros_like(active)
    below[1:] = active[:-1]
    face_area = grid.dx * grid.dy
    dz3 = np.broadcast_to(grid.dz[:, None, None], active.shape)

    for bc, exposed in ((bc_top, active & ~above), (bc_bottom, active & ~below)):
        if bc.kind == "adiabatic":
            continue
        rows_b = row3d[exposed]
        if bc.kind == "convective":
            # film resistance in series with the half-cell conduction path,
            # so the coupling is exact for piecewise-linear profiles (and
            # consistent with the Dirichlet limit h -> infinity below)
            g_b = face_area / (1.0 / bc.h
                               + dz3[exposed] / (2.0 * grid.kz[exposed]))
            t_ref = bc.t_inf
        elif bc.kind == "dirichlet":
            g_b = 2.0 * grid.kz[exposed] * face_area / dz3[exposed]
            t_ref = bc.t
        else:
            raise MeshError(f"unknown boundary kind {bc.kind!r}")
        np.add.at(diag, rows_b, g_b)
        np.add.at(b_bc, rows_b, g_b * t_ref)
        bnd_rows.append(rows_b)
        bnd_g.append(g_b)
        bnd_t.append(np.full(rows_b.shape, t_ref))

    if not bnd_rows:
        raise SolverError(
            "all boundaries adiabatic: steady conductance system is singular"
        )

    rows_list.append(np.arange(n))
    cols_list.append(np.arange(n))
    vals_list.append(diag)
    A = sp.csr_matrix(
        (np.concatenate(vals_list),
         (np.concatenate(rows_list).astype(np.int32),
          np.concatenate(cols_list).astype(np.int32))),
        shape=(n, n),
    )
    volumes = grid.cell_volumes()[active]
    C = grid.cv[active] * volumes
    return SparseSystem(
        A=A, b_bc=b_bc, C=C, row_of=row3d, volumes=volumes, grid=grid,
        bnd_rows=np.concatenate(bnd_rows),
        bnd_g=np.concatenate(bnd_g),
        bnd_t=np.concatenate(bnd_t),
    )
