"""Independent reader/writer for the thermkit dataset on-disk format.

Implemented directly from ``docs/dataset_format.md`` (the on-disk contract:
tensor container, record naming, manifest keys) rather than by importing
thermkit, so this package only depends on the published format. The writer
exists for emitting prediction trees that ``thermkit metrics`` can consume.
"""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"THERMFM1"
MAX_NDIM = 8
DATASET_FORMAT = "thermkit-dataset"
SPLITS = ("train", "val", "test")
FIDELITIES = ("high", "low")

_RECORD_RE = re.compile(r"^(high|low)_(\d{8})\.temp\.tfm$")


# ---------------------------------------------------------------------------
# tensor container


def read_tensor(path: str | Path) -> np.ndarray:
    """Read one float32 tensor: magic, u32 ndim, u64 dims, LE payload."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read tensor file {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 4 or blob[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a {MAGIC.decode()} tensor file")
    (ndim,) = struct.unpack_from("<I", blob, len(MAGIC))
    if not 1 <= ndim <= MAX_NDIM:
        raise DataError(f"{path}: implausible dim count {ndim}")
    head = len(MAGIC) + 4 + 8 * ndim
    if len(blob) < head:
        raise DataError(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{ndim}Q", blob, len(MAGIC) + 4)
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) != head + 4 * count:
        raise DataError(
            f"{path}: payload is {len(blob) - head} bytes, expected "
            f"{4 * count} for shape {tuple(dims)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=head, count=count)
    return data.reshape(dims).copy()


def write_tensor(path: str | Path, data: np.ndarray) -> None:
    """Write one tensor atomically in the same container format."""
    path = Path(path)
    arr = np.ascontiguousarray(data, dtype="<f4")
    if not 1 <= arr.ndim <= MAX_NDIM:
        raise DataError(f"tensor rank {arr.ndim} outside 1..{MAX_NDIM}")
    blob = (MAGIC + struct.pack("<I", arr.ndim)
            + b"".join(struct.pack("<Q", s) for s in arr.shape)
            + arr.tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormStats:
    """Per-channel standardization constants, taken from a dataset manifest.

    The manifest computes them from the training split only; consumers must
    not fold validation or test values into these.
    """

    channels: dict[str, tuple[float, float]]

    @staticmethod
    def from_manifest(manifest: dict) -> "NormStats":
        raw = manifest.get("norm_stats")
        if not raw:
            raise DataError("manifest carries no norm_stats")
        return NormStats(channels={
            name: (float(v["mean"]), float(v["std"])) for name, v in raw.items()
        })

    def normalize(self, name: str, x: np.ndarray) -> np.ndarray:
        mean, std = self._get(name)
        return (np.asarray(x, dtype=np.float32) - mean) / std

    def denormalize(self, name: str, x: np.ndarray) -> np.ndarray:
        mean, std = self._get(name)
        return np.asarray(x, dtype=np.float32) * std + mean

    def _get(self, name: str) -> tuple[float, float]:
        if name not in self.channels:
            raise DataError(f"unknown normalization channel {name!r}")
        mean, std = self.channels[name]
        if not std > 0:
            raise DataError(f"channel {name!r} has nonpositive std {std}")
        return mean, std

    def to_json(self) -> dict:
        return {k: {"mean": m, "std": s}
                for k, (m, s) in sorted(self.channels.items())}


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class RecordId:
    split: str
    fidelity: str
    seed: int

    @property
    def prefix(self) -> str:
        return f"{self.fidelity}_{self.seed:08d}"


@dataclass
class Sample:
    """One loaded record: power map, raw power vector, temperature target."""

    rid: RecordId
    power: np.ndarray            # (C, H, W) or (F, C, H, W)
    pvec: np.ndarray             # (n_cores,)
    temp: np.ndarray             # (H, W) or (F, H, W)
    times: np.ndarray | None = None


@dataclass
class Dataset:
    """A thermkit dataset directory with its manifest."""

    root: Path
    manifest: dict = field(repr=False)

    @staticmethod
    def open(root: str | Path) -> "Dataset":
        root = Path(root)
        path = root / "manifest.json"
        if not path.exists():
            raise DataError(
                f"no manifest at {path}; dataset absent or incomplete")
        manifest = json.loads(path.read_text())
        if manifest.get("format") != DATASET_FORMAT:
            raise DataError(f"{path} is not a {DATASET_FORMAT} manifest")
        return Dataset(root=root, manifest=manifest)

    @property
    def power_channels(self) -> list[str]:
        return list(self.manifest["power_channels"])

    @property
    def export_shape(self) -> tuple[int, int]:
        exp = self.manifest["export"]
        return int(exp["height"]), int(exp["width"])

    def norm_stats(self) -> NormStats:
        return NormStats.from_manifest(self.manifest)

    def record_ids(self, split: str, fidelity: str | None = None
                   ) -> list[RecordId]:
        """Records present on disk for a split, sorted by (fidelity, seed)."""
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        out = []
        base = self.root / split
        if base.is_dir():
            for name in os.listdir(base):
                m = _RECORD_RE.match(name)
                if m and (fidelity is None or m.group(1) == fidelity):
                    out.append(RecordId(split, m.group(1), int(m.group(2))))
        return sorted(out, key=lambda r: (r.fidelity, r.seed))

    def load(self, rid: RecordId) -> Sample:
        base = self.root / rid.split
        power = read_tensor(base / f"{rid.prefix}.power.tfm")
        pvec = read_tensor(base / f"{rid.prefix}.pvec.tfm")
        temp = read_tensor(base / f"{rid.prefix}.temp.tfm")
        times_path = base / f"{rid.prefix}.times.tfm"
        times = read_tensor(times_path) if times_path.exists() else None
        h, w = self.export_shape
        if temp.shape[-2:] != (h, w) or power.shape[-2:] != (h, w):
            raise DataError(
                f"{rid.prefix}: tensor grids {temp.shape[-2:]} / "
                f"{power.shape[-2:]} disagree with manifest export ({h}, {w})"
            )
        return Sample(rid=rid, power=power, pvec=pvec, temp=temp, times=times)

    def load_split(self, split: str, fidelity: str | None = None,
                   limit: int | None = None) -> list[Sample]:
        ids = self.record_ids(split, fidelity)
        if limit is not None:
            if limit > len(ids):
                raise DataError(
                    f"asked for {limit} {fidelity or 'any'}-fidelity "
                    f"{split} records, only {len(ids)} exist"
                )
            ids = ids[:limit]
        return [self.load(r) for r in ids]


def write_prediction_tree(root: str | Path, preds: dict[str, np.ndarray]
                          ) -> Path:
    """Write `{relpath_prefix: field}` as a `.temp.tfm` tree.

    The layout mirrors a dataset split directory, so the tree can be diffed
    against truth with ``thermkit metrics``.
    """
    root = Path(root)
    for prefix, arr in preds.items():
        path = root / f"{prefix}.temp.tfm"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_tensor(path, np.asarray(arr, dtype=np.float32))
    return root
