"""Mixed-fidelity dataset generation and the on-disk record format.

A dataset directory holds one subdirectory per split (train/val/test) of
binary tensor files (see tensorio) plus a manifest.json written last as the
completion marker. Each record is a set of tensors sharing the prefix
"<fidelity>_<seed>.":

    steady:    power (L, H, W) W/m^2 per active layer, pvec (n_cores,) W,
               temp (H, W) K
    transient: power (F, L, H, W), pvec (F, n_cores), temp (F, H, W),
               times (F,) s

The export grid is fixed per dataset: H x W cells over the observation
layer's footprint. Temperatures are the cell-centered values of the topmost
z-slab of that layer, area-averaged onto the export grid. Power maps are
rasterized analytically from the core rectangles, so matched-seed LF and HF
records carry bit-identical power maps.

Steady generation exploits that the solve is affine in the per-core powers:
one boundary-only solve plus one 1 W single-core solve per core yield
export-grid basis fields, and every sample is the affine combination with
its drawn powers (equal to a direct solve up to solver tolerance, with the
energy defect still bounded by 1e-6 of total power). The basis is cached on
disk keyed by a content hash of everything that determines it; the dataset
bytes do not depend on the cache state because the solver is deterministic.
Transient records are solved directly.

Splits occupy contiguous seed ranges: val, test (both HF-only), train HF,
train LF, starting at the base seed. Normalization statistics come from the
training split only, computed from the float32 on-disk data consumers see.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bench import MeshProfile, build_mesh, desk_profile, sample_power, \
    sample_waveform
from .errors import FormatError
from .mesh import assemble, rasterize_power
from .solver import solve_steady, solve_transient
from .stack import PackageStack, PowerAssignment, stack_to_json
from .tensorio import read_tensor, write_tensor

DATASET_FORMAT = "thermkit-dataset"
DATASET_VERSION = 1
SPLITS = ("train", "val", "test")
FIDELITIES = ("high", "low")


def default_cache_dir() -> Path:
    env = os.environ.get("THERMKIT_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "thermkit"


# ---------------------------------------------------------------------------
# export grid


@dataclass(frozen=True)
class ExportSpec:
    """Fixed export grid over the observation layer's footprint."""

    height: int
    width: int
    bbox: tuple[float, float, float, float]  # x0, y0, x1, y1 in m
    plane_layer: str

    @staticmethod
    def for_stack(stack: PackageStack, height: int = 64,
                  width: int = 64) -> "ExportSpec":
        """Default: grid over the footprint of the topmost powered layer."""
        active = [l for l in stack.layers if l.power_regions]
        if not active:
            raise FormatError(f"stack {stack.name!r} has no powered layers")
        top = active[-1]
        x0, y0 = stack.layer_origin(top)
        return ExportSpec(height=height, width=width,
                          bbox=(x0, y0, x0 + top.extent_x, y0 + top.extent_y),
                          plane_layer=top.name)

    def x_edges(self) -> np.ndarray:
        x0, _, x1, _ = self.bbox
        return x0 + (x1 - x0) * np.arange(self.width + 1) / self.width

    def y_edges(self) -> np.ndarray:
        _, y0, _, y1 = self.bbox
        return y0 + (y1 - y0) * np.arange(self.height + 1) / self.height

    def cell_area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return ((x1 - x0) / self.width) * ((y1 - y0) / self.height)

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "bbox_m": list(self.bbox),
            "plane_layer": self.plane_layer,
            "plane": "topmost z-slab of plane_layer, area-averaged",
        }

    @staticmethod
    def from_json(obj: dict) -> "ExportSpec":
        return ExportSpec(height=int(obj["height"]), width=int(obj["width"]),
                          bbox=tuple(float(v) for v in obj["bbox_m"]),
                          plane_layer=obj["plane_layer"])


def overlap_lengths(dst_edges: np.ndarray,
                     src_edges: np.ndarray) -> np.ndarray:
    """(n_dst, n_src) overlap lengths between two 1D cell partitions."""
    lo = np.maximum(dst_edges[:-1, None], src_edges[None, :-1])
    hi = np.minimum(dst_edges[1:, None], src_edges[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def downsample_field(field: np.ndarray, src_x_edges: np.ndarray,
                     src_y_edges: np.ndarray, export: ExportSpec
                     ) -> np.ndarray:
    """Area-weighted average of a (ny, nx) field onto the export grid.

    NaN source cells (voids outside a footprint) carry no weight, so a cell
    edge that lands epsilon-off a grid line cannot poison the average.
    """
    wx = overlap_lengths(export.x_edges(), src_x_edges)
    wy = overlap_lengths(export.y_edges(), src_y_edges)
    valid = np.isfinite(field)
    num = wy @ np.where(valid, field, 0.0) @ wx.T
    den = wy @ valid.astype(float) @ wx.T
    if np.any(den < 0.5 * export.cell_area()):
        raise FormatError(
            "export grid is not covered by the source field; check that the "
            "export bbox lies inside the observation layer footprint"
        )
    return num / den


def observation_slab(grid, export: ExportSpec) -> int:
    """Index of the topmost z-slab of the observation layer."""
    for i, layer in enumerate(grid.stack.layers):
        if layer.name == export.plane_layer:
            return int(grid.layer_slabs(i)[-1])
    raise FormatError(
        f"observation layer {export.plane_layer!r} not in stack "
        f"{grid.stack.name!r}"
    )


def export_temperature(values: np.ndarray, grid,
                       export: ExportSpec) -> np.ndarray:
    """(H, W) export-grid temperatures from per-row field values."""
    iz = observation_slab(grid, export)
    # rows are numbered in C order over active cells, so the slab's rows are
    # the contiguous range starting after all active cells below it
    offset = int(grid.active[:iz].sum())
    count = int(grid.active[iz].sum())
    slab = np.full((grid.ny, grid.nx), np.nan)
    slab[grid.active[iz]] = values[offset:offset + count]
    return downsample_field(slab, grid.x_edges, grid.y_edges, export)


def rasterize_power_map(stack: PackageStack, export: ExportSpec,
                        assignment: PowerAssignment) -> np.ndarray:
    """(L, H, W) power-density map in W/m^2, one channel per powered layer.

    Analytic area overlap of core rectangles with export cells; conserves
    each layer's total power up to float rounding and involves no mesh, so
    matched-seed records agree bit-for-bit across fidelities.
    """
    xe, ye = export.x_edges(), export.y_edges()
    cell_area = export.cell_area()
    channels = []
    for layer in stack.layers:
        if not layer.power_regions:
            continue
        m = np.zeros((export.height, export.width))
        for region in layer.power_regions:
            p = assignment.powers[region.id]
            x0, y0, x1, y1 = region.rect
            wx = np.clip(np.minimum(xe[1:], x1) - np.maximum(xe[:-1], x0),
                         0.0, None)
            wy = np.clip(np.minimum(ye[1:], y1) - np.maximum(ye[:-1], y0),
                         0.0, None)
            m += (p / region.area) * np.outer(wy, wx) / cell_area
        channels.append(m)
    return np.stack(channels)


def power_channel_names(stack: PackageStack) -> list[str]:
    return [f"power:{l.name}" for l in stack.layers if l.power_regions]


# ---------------------------------------------------------------------------
# records


@dataclass
class SampleRecord:
    """One sample: inputs (power map + raw vector) and target temperatures."""

    split: str
    fidelity: str
    seed: int
    power: np.ndarray            # (L, H, W) or (F, L, H, W) float32, W/m^2
    pvec: np.ndarray             # (n_cores,) or (F, n_cores) float32, W
    temp: np.ndarray             # (H, W) or (F, H, W) float32, K
    times: np.ndarray | None = None  # (F,) float32, s; transient only

    @property
    def prefix(self) -> str:
        return record_prefix(self.fidelity, self.seed)


def record_prefix(fidelity: str, seed: int) -> str:
    if fidelity not in FIDELITIES:
        raise FormatError(f"unknown fidelity {fidelity!r}")
    return f"{fidelity}_{seed:08d}"


def record_paths(root, split: str, fidelity: str, seed: int
                 ) -> dict[str, Path]:
    base = Path(root) / split
    prefix = record_prefix(fidelity, seed)
    return {name: base / f"{prefix}.{name}.tfm"
            for name in ("power", "pvec", "temp", "times")}


def write_record(root, rec: SampleRecord) -> None:
    paths = record_paths(root, rec.split, rec.fidelity, rec.seed)
    paths["power"].parent.mkdir(parents=True, exist_ok=True)
    write_tensor(paths["power"], rec.power)
    write_tensor(paths["pvec"], rec.pvec)
    write_tensor(paths["temp"], rec.temp)
    if rec.times is not None:
        write_tensor(paths["times"], rec.times)


def read_record(root, split: str, fidelity: str, seed: int) -> SampleRecord:
    paths = record_paths(root, split, fidelity, seed)
    for name in ("power", "pvec", "temp"):
        if not paths[name].exists():
            raise FormatError(f"missing tensor file {paths[name]}")
    times = read_tensor(paths["times"]) if paths["times"].exists() else None
    rec = SampleRecord(
        split=split, fidelity=fidelity, seed=seed,
        power=read_tensor(paths["power"]),
        pvec=read_tensor(paths["pvec"]),
        temp=read_tensor(paths["temp"]),
        times=times,
    )
    for name in ("power", "pvec", "temp"):
        arr = getattr(rec, name)
        if not np.all(np.isfinite(arr)):
            raise FormatError(
                f"non-finite values in tensor {paths[name]}"
            )
    return rec


def list_records(root, split: str) -> list[tuple[str, int]]:
    """Sorted (fidelity, seed) pairs present in a split directory."""
    base = Path(root) / split
    found = set()
    if base.is_dir():
        for p in base.glob("*.temp.tfm"):
            fidelity, _, seed = p.name[: -len(".temp.tfm")].partition("_")
            if fidelity in FIDELITIES and seed.isdigit():
                found.add((fidelity, int(seed)))
    return sorted(found)


# ---------------------------------------------------------------------------
# normalization statistics


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean/std computed from the training split only."""

    channels: dict[str, tuple[float, float]]

    def normalize(self, name: str, x: np.ndarray) -> np.ndarray:
        mean, std = self._get(name)
        return (np.asarray(x) - mean) / std

    def denormalize(self, name: str, x: np.ndarray) -> np.ndarray:
        mean, std = self._get(name)
        return np.asarray(x) * std + mean

    def _get(self, name: str) -> tuple[float, float]:
        if name not in self.channels:
            raise FormatError(f"unknown normalization channel {name!r}")
        return self.channels[name]

    def to_json(self) -> dict:
        return {k: {"mean": m, "std": s}
                for k, (m, s) in sorted(self.channels.items())}

    @staticmethod
    def from_json(obj: dict) -> "NormStats":
        return NormStats(channels={
            k: (float(v["mean"]), float(v["std"])) for k, v in obj.items()
        })


def compute_norm_stats(records: list[SampleRecord],
                       channel_names: list[str]) -> NormStats:
    """Population mean/std per power channel and for temperature.

    A zero-spread channel is an error: it cannot be standardized and always
    indicates a degenerate corpus (e.g. every sample drew the same power).
    """
    if not records:
        raise FormatError("cannot compute statistics of an empty record list")
    channels: dict[str, tuple[float, float]] = {}
    for i, name in enumerate(channel_names):
        vals = np.concatenate(
            [np.asarray(r.power, dtype=np.float64)[..., i, :, :].ravel()
             for r in records])
        channels[name] = (float(vals.mean()), float(vals.std()))
    temps = np.concatenate(
        [np.asarray(r.temp, dtype=np.float64).ravel() for r in records])
    channels["temperature"] = (float(temps.mean()), float(temps.std()))
    for name, (_, std) in channels.items():
        if std == 0.0:
            raise FormatError(
                f"channel {name!r} has zero spread over the training split; "
                "refusing to produce a degenerate normalization"
            )
    return NormStats(channels=channels)


# ---------------------------------------------------------------------------
# steady superposition basis


@dataclass(frozen=True)
class ExportBasis:
    """Export-grid affine basis of the steady solve for one mesh.

    temp(P) = t0 + sum_i P[i] * units[i] for per-core powers P in the sorted
    core-id order; t0 is the zero-power (boundary-only) field.
    """

    core_ids: tuple[str, ...]
    t0: np.ndarray               # (H, W) float64
    units: np.ndarray            # (n_cores, H, W) float64

    def combine(self, powers: np.ndarray) -> np.ndarray:
        return self.t0 + np.tensordot(np.asarray(powers, dtype=np.float64),
                                      self.units, axes=1)


def _basis_fingerprint(stack: PackageStack, fidelity: str,
                       profile: MeshProfile, export: ExportSpec,
                       tol: float) -> str:
    payload = {
        "basis_version": 1,
        "stack": stack_to_json(stack),
        "fidelity": fidelity,
        "profile": {
            "hf_cells_per_mm": profile.hf_cells_per_mm,
            "lf_cells_per_mm": profile.lf_cells_per_mm,
            "z_cells": profile.z_cells,
        },
        "export": export.to_json(),
        "tol": tol,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


def steady_export_basis(stack: PackageStack, fidelity: str,
                        profile: MeshProfile | None = None,
                        export: ExportSpec | None = None,
                        tol: float = 1e-8, use_cache: bool = True,
                        ) -> ExportBasis:
    """Solve (or load) the per-core unit-response basis on the export grid.

    One boundary-only solve plus one audited 1 W solve per core; by linearity
    the 1 W field minus the boundary-only field is the unit response. Cached
    to disk because the basis depends only on (stack, mesh, export, tol) and
    the solver is deterministic, so a cache hit reproduces identical bytes.
    """
    profile = profile or desk_profile(stack)
    export = export or ExportSpec.for_stack(stack)
    core_ids = tuple(stack.core_ids())
    if not core_ids:
        raise FormatError(f"stack {stack.name!r} has no cores to excite")

    cache_path = None
    if use_cache:
        key = _basis_fingerprint(stack, fidelity, profile, export, tol)
        cache_path = default_cache_dir() / f"basis-{key}.npz"
        if cache_path.exists():
            with np.load(cache_path, allow_pickle=False) as data:
                return ExportBasis(
                    core_ids=tuple(str(c) for c in data["core_ids"]),
                    t0=data["t0"], units=data["units"],
                )

    grid = build_mesh(stack, fidelity, profile)
    system = assemble(grid)
    field0, _ = solve_steady(system, np.zeros(system.n), tol=tol)
    t0 = export_temperature(field0.values, grid, export)

    units = np.empty((len(core_ids), export.height, export.width))
    for i, cid in enumerate(core_ids):
        one_hot = PowerAssignment(
            powers={c: (1.0 if c == cid else 0.0) for c in core_ids},
            seed=0,
        )
        q_rows = system.gather_q(rasterize_power(grid, stack, one_hot))
        field_i, _ = solve_steady(system, q_rows, tol=tol, x0=field0.values)
        units[i] = export_temperature(field_i.values, grid, export) - t0

    basis = ExportBasis(core_ids=core_ids, t0=t0, units=units)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_path.with_suffix(".tmp.npz")
        np.savez(tmp, core_ids=np.array(core_ids), t0=t0, units=units)
        os.replace(tmp, cache_path)
    return basis


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class TransientSpec:
    """Schedule shared by every transient record of a dataset."""

    t_end: float
    dt: float
    n_segments: int
    frame_times: tuple[float, ...]

    @staticmethod
    def default(t_end: float = 5.0, n_frames: int = 5,
                n_segments: int = 4) -> "TransientSpec":
        dt = t_end / 50.0
        frames = tuple(t_end * (k + 1) / n_frames for k in range(n_frames))
        return TransientSpec(t_end=t_end, dt=dt, n_segments=n_segments,
                             frame_times=frames)

    def to_json(self) -> dict:
        return {"t_end": self.t_end, "dt": self.dt,
                "n_segments": self.n_segments,
                "frame_times": list(self.frame_times)}

    @staticmethod
    def from_json(obj: dict) -> "TransientSpec":
        return TransientSpec(
            t_end=float(obj["t_end"]), dt=float(obj["dt"]),
            n_segments=int(obj["n_segments"]),
            frame_times=tuple(float(t) for t in obj["frame_times"]),
        )


def plan_splits(n_train_hf: int, n_train_lf: int, n_val: int, n_test: int,
                base_seed: int) -> list[tuple[str, str, int]]:
    """Contiguous seed layout: val, test (HF-only), train HF, train LF."""
    for name, n in (("n_train_hf", n_train_hf), ("n_train_lf", n_train_lf),
                    ("n_val", n_val), ("n_test", n_test)):
        if n < 0:
            raise FormatError(f"{name} must be >= 0, got {n}")
    plan = []
    seed = base_seed
    for split, fidelity, count in (
        ("val", "high", n_val),
        ("test", "high", n_test),
        ("train", "high", n_train_hf),
        ("train", "low", n_train_lf),
    ):
        plan.extend((split, fidelity, seed + k) for k in range(count))
        seed += count
    return plan


def _steady_record(stack: PackageStack, export: ExportSpec,
                   basis: ExportBasis, split: str, fidelity: str,
                   seed: int) -> SampleRecord:
    assignment = sample_power(stack, seed)
    powers = np.array([assignment.powers[c] for c in basis.core_ids])
    return SampleRecord(
        split=split, fidelity=fidelity, seed=seed,
        power=rasterize_power_map(stack, export, assignment)
        .astype(np.float32),
        pvec=powers.astype(np.float32),
        temp=basis.combine(powers).astype(np.float32),
    )


def _transient_record(stack: PackageStack, export: ExportSpec, system,
                      spec: TransientSpec, split: str, fidelity: str,
                      seed: int) -> SampleRecord:
    waveform = sample_waveform(stack, seed, spec.n_segments, spec.t_end)
    result, _ = solve_transient(system, waveform, t_end=spec.t_end,
                                dt=spec.dt, store_times=spec.frame_times)
    # frame 0 is the initial condition; records carry the requested frames
    frames = result.frames[1:]
    times = np.asarray(result.times[1:])
    if len(frames) != len(spec.frame_times):
        raise FormatError(
            f"frame times {spec.frame_times} collapsed onto "
            f"{len(frames)} distinct steps of dt={spec.dt:g}"
        )
    grid = system.grid
    temp = np.stack([export_temperature(f.values, grid, export)
                     for f in frames])
    seg_starts = np.array([t for t, _ in waveform.segments])
    seg_maps = [rasterize_power_map(stack, export, a)
                for _, a in waveform.segments]
    core_ids = stack.core_ids()
    seg_pvecs = [np.array([a.powers[c] for c in core_ids])
                 for _, a in waveform.segments]
    seg_of = np.searchsorted(seg_starts, times, side="right") - 1
    return SampleRecord(
        split=split, fidelity=fidelity, seed=seed,
        power=np.stack([seg_maps[s] for s in seg_of]).astype(np.float32),
        pvec=np.stack([seg_pvecs[s] for s in seg_of]).astype(np.float32),
        temp=temp.astype(np.float32),
        times=times.astype(np.float32),
    )


def generate(stack: PackageStack, out_dir, *, mode: str = "steady",
             n_train_hf: int = 30, n_train_lf: int = 90, n_val: int = 10,
             n_test: int = 10, base_seed: int = 0,
             profile: MeshProfile | None = None,
             export: ExportSpec | None = None,
             transient: TransientSpec | None = None,
             tol: float = 1e-8, use_cache: bool = True) -> dict:
    """Generate a dataset directory; returns the manifest dict.

    Fully deterministic in its arguments: seeds fix the sampled powers, the
    solver is deterministic, and the manifest is canonical JSON, so repeated
    runs produce byte-identical directories.
    """
    if mode not in ("steady", "transient"):
        raise FormatError(f"mode must be 'steady' or 'transient', got {mode!r}")
    out_dir = Path(out_dir)
    profile = profile or desk_profile(stack)
    export = export or ExportSpec.for_stack(stack)
    if mode == "transient" and transient is None:
        transient = TransientSpec.default()
    plan = plan_splits(n_train_hf, n_train_lf, n_val, n_test, base_seed)
    if not plan:
        raise FormatError("dataset plan is empty; request at least one sample")
    fidelities = sorted({f for _, f, _ in plan})

    records_by_fidelity: dict[str, list[tuple[str, int]]] = {
        f: [(s, seed) for s, fid, seed in plan if fid == f]
        for f in fidelities
    }
    for fidelity in fidelities:
        if mode == "steady":
            basis = steady_export_basis(stack, fidelity, profile, export,
                                        tol=tol, use_cache=use_cache)
            for split, seed in records_by_fidelity[fidelity]:
                write_record(out_dir, _steady_record(
                    stack, export, basis, split, fidelity, seed))
        else:
            grid = build_mesh(stack, fidelity, profile)
            system = assemble(grid)
            for split, seed in records_by_fidelity[fidelity]:
                write_record(out_dir, _transient_record(
                    stack, export, system, transient, split, fidelity, seed))

    # verify every record reads back cleanly before declaring completion
    train_records = []
    n_frames = len(transient.frame_times) if transient else None
    temp_shape = ((n_frames, export.height, export.width) if transient
                  else (export.height, export.width))
    for split, fidelity, seed in plan:
        rec = read_record(out_dir, split, fidelity, seed)
        if rec.temp.shape != temp_shape:
            raise FormatError(
                f"record {rec.prefix} has temp shape {rec.temp.shape}, "
                f"expected {temp_shape}"
            )
        if split == "train":
            train_records.append(rec)

    channel_names = power_channel_names(stack)
    stats = compute_norm_stats(train_records, channel_names) \
        if train_records else None

    counts = {s: {f: 0 for f in FIDELITIES} for s in SPLITS}
    seed_ranges: dict[str, dict[str, list[int]]] = {}
    for split, fidelity, seed in plan:
        counts[split][fidelity] += 1
        rng = seed_ranges.setdefault(split, {}).setdefault(
            fidelity, [seed, seed])
        rng[0] = min(rng[0], seed)
        rng[1] = max(rng[1], seed)

    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "case": stack.name,
        "mode": mode,
        "export": export.to_json(),
        "core_ids": list(stack.core_ids()),
        "power_channels": channel_names,
        "counts": counts,
        "seed_ranges": seed_ranges,
        "base_seed": base_seed,
        "profile": {
            "hf_cells_per_mm": profile.hf_cells_per_mm,
            "lf_cells_per_mm": profile.lf_cells_per_mm,
            "z_cells": profile.z_cells,
        },
        "solver_tol": tol,
        "transient": transient.to_json() if transient else None,
        "norm_stats": stats.to_json() if stats else None,
    }
    write_manifest(out_dir / "manifest.json", manifest)
    return manifest


def write_manifest(path, manifest: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    tmp = path.with_suffix(".tmp")
    tmp.write_text(blob)
    os.replace(tmp, path)


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(
            f"no manifest at {path}; the dataset is absent or was "
            "interrupted before completion"
        ) from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(
            f"{path} is not a dataset manifest (format="
            f"{manifest.get('format')!r})"
        )
    if manifest.get("version") != DATASET_VERSION:
        raise FormatError(
            f"unsupported dataset version {manifest.get('version')!r} "
            f"(supported: {DATASET_VERSION})"
        )
    return manifest
