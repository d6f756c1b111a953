"""Corpus generation through the thermkit command line.

Two corpora back the training harness:

- case datasets (``generate_case_dataset``): the benchmark packages, solved
  at both fidelities by ``thermkit dataset``;
- a diffusion pretraining corpus (``generate_diffusion_corpus``): many small
  randomized two-layer stacks (log-uniform conductivities, random
  rectangular sources, randomized film cooling), each turned into a few
  low-fidelity samples. Every problem is a conservative diffusion solve, so
  a backbone pretrained across them sees the operator family the package
  tasks live in, without seeing any package geometry.

The solver is only ever reached through the ``thermkit`` CLI and its
published dataset format; per-stack physics parameters are recorded in a
corpus index (this package's own sidecar) together with corpus-level channel
statistics used to standardize the pretraining inputs.
"""

from __future__ import annotations

import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np

from .errors import DataError
from .records import Dataset

INDEX_NAME = "corpus_index.json"
DIFFUSION_CHANNELS = ("power:die", "logk:base", "logk:die", "logh")


def thermkit_command() -> list[str]:
    """The CLI entry point (console script, falling back to `-m`)."""
    exe = shutil.which("thermkit")
    if exe:
        return [exe]
    return [sys.executable, "-m", "thermkit.cli"]


def run_thermkit(args: list[str]) -> str:
    cmd = thermkit_command() + [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout).strip().splitlines()[-6:]
        raise DataError(
            f"thermkit {' '.join(args[:2])}... failed "
            f"(exit {proc.returncode}): " + " | ".join(tail))
    return proc.stdout


def generate_case_dataset(out_dir: str | Path, case: str, *,
                          n_high: int, n_low: int, n_val: int, n_test: int,
                          height: int, width: int, seed: int = 0,
                          mode: str = "steady") -> Dataset:
    """Generate (deterministically) a benchmark-case dataset and open it."""
    out_dir = Path(out_dir)
    run_thermkit([
        "dataset", "--case", case, "--out", out_dir, "--mode", mode,
        "--n-high", n_high, "--n-low", n_low, "--n-val", n_val,
        "--n-test", n_test, "--height", height, "--width", width,
        "--seed", seed,
    ])
    return Dataset.open(out_dir)


# ---------------------------------------------------------------------------
# diffusion pretraining corpus


def _random_stack_doc(rng: np.random.Generator, idx: int) -> dict:
    """One randomized two-layer stack in the thermkit stack JSON schema."""
    ext = float(rng.integers(6, 11))          # mm, aligned at >= 1 cell/mm
    k_base, k_die = np.exp(rng.uniform(math.log(0.5), math.log(400.0), 2))
    h = float(np.exp(rng.uniform(math.log(800.0), math.log(20000.0))))
    t_base = float(rng.uniform(0.4, 1.2))     # mm
    t_die = float(rng.uniform(0.3, 0.9))

    regions = []
    for r in range(int(rng.integers(1, 4))):
        w = float(rng.uniform(1.0, 0.6 * ext))
        hgt = float(rng.uniform(1.0, 0.6 * ext))
        x0 = float(rng.uniform(0.0, ext - w))
        y0 = float(rng.uniform(0.0, ext - hgt))
        regions.append({"id": f"src:r{r}",
                        "rect": [x0, y0, x0 + w, y0 + hgt]})

    def mat(k):
        return {"k": float(k), "rho": 2330.0,
                "cp": float(rng.uniform(500.0, 1000.0))}

    return {
        "format": "thermkit-stack", "version": 1, "unit": "mm",
        "name": f"diff-{idx:03d}",
        "ambient": 293.15,
        "power_range": [0.0, 1.5],
        "bc_top": {"kind": "adiabatic"},
        "bc_bottom": {"kind": "convective", "h": h, "t_inf": 293.15},
        "materials": {"mat_base": mat(k_base), "mat_die": mat(k_die)},
        "layers": [
            {"name": "base", "thickness": t_base, "extent_x": ext,
             "extent_y": ext, "bulk_material": "mat_base", "array": None,
             "power_regions": []},
            {"name": "die", "thickness": t_die, "extent_x": ext,
             "extent_y": ext, "bulk_material": "mat_die", "array": None,
             "power_regions": regions},
        ],
    }


def generate_diffusion_corpus(root: str | Path, *, n_stacks: int = 25,
                              samples_per_stack: int = 12, seed: int = 0,
                              height: int = 32, width: int = 32,
                              lf_cells_per_mm: float = 4.0) -> dict:
    """Generate the pretraining corpus; returns (and writes) its index."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    entries = []
    for i in range(n_stacks):
        doc = _random_stack_doc(rng, i)
        stack_path = root / f"stack_{i:03d}.json"
        stack_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        ds_dir = root / f"d{i:03d}"
        run_thermkit([
            "dataset", "--case", stack_path, "--out", ds_dir,
            "--mode", "steady", "--n-high", 0,
            "--n-low", samples_per_stack, "--n-val", 0, "--n-test", 0,
            "--height", height, "--width", width,
            "--lf-cells-per-mm", lf_cells_per_mm,
            "--seed", seed + 100_000 * (i + 1),
        ])
        entries.append({
            "dir": ds_dir.name,
            "stack": stack_path.name,
            "logk": {"base": math.log(doc["materials"]["mat_base"]["k"]),
                     "die": math.log(doc["materials"]["mat_die"]["k"])},
            "logh": math.log(doc["bc_bottom"]["h"]),
            "n_samples": samples_per_stack,
        })

    index = {
        "format": "mf-train-diffusion-corpus",
        "version": 1,
        "seed": seed,
        "input_channels": list(DIFFUSION_CHANNELS),
        "stacks": entries,
        "channel_stats": _corpus_stats(root, entries),
    }
    (root / INDEX_NAME).write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n")
    return index


def _corpus_stats(root: Path, entries: list[dict]) -> dict:
    """Corpus-level standardization constants (training data only: the whole
    corpus is training data for pretraining; held-out splitting happens
    downstream by stack index)."""
    powers, temps = [], []
    logk_b, logk_d, logh = [], [], []
    for e in entries:
        ds = Dataset.open(root / e["dir"])
        for s in ds.load_split("train"):
            powers.append(np.asarray(s.power, dtype=np.float64).ravel())
            temps.append(np.asarray(s.temp, dtype=np.float64).ravel())
            logk_b.append(e["logk"]["base"])
            logk_d.append(e["logk"]["die"])
            logh.append(e["logh"])
    pv = np.concatenate(powers)
    tv = np.concatenate(temps)

    def ms(v):
        v = np.asarray(v, dtype=np.float64)
        std = float(v.std())
        if std == 0.0:
            raise DataError("degenerate corpus: a channel has zero spread")
        return {"mean": float(v.mean()), "std": std}

    return {"power:die": ms(pv), "temperature": ms(tv),
            "logk:base": ms(logk_b), "logk:die": ms(logk_d),
            "logh": ms(logh)}


def load_diffusion_corpus(root: str | Path
                          ) -> tuple[np.ndarray, np.ndarray, dict]:
    """Load the corpus as model-ready arrays.

    Returns (X, Y, index): X is (N, 4, H, W) with channels
    ``DIFFUSION_CHANNELS`` (standardized; the physics scalars enter as
    constant maps), Y is (N, 1, H, W) standardized temperature.
    """
    root = Path(root)
    index_path = root / INDEX_NAME
    if not index_path.exists():
        raise DataError(f"no corpus index at {index_path}")
    index = json.loads(index_path.read_text())
    stats = index["channel_stats"]

    def norm(name, v):
        return (np.asarray(v, dtype=np.float32)
                - stats[name]["mean"]) / stats[name]["std"]

    xs, ys = [], []
    for e in index["stacks"]:
        ds = Dataset.open(root / e["dir"])
        h, w = ds.export_shape
        consts = [np.full((h, w), norm("logk:base", e["logk"]["base"]),
                          dtype=np.float32),
                  np.full((h, w), norm("logk:die", e["logk"]["die"]),
                          dtype=np.float32),
                  np.full((h, w), norm("logh", e["logh"]), dtype=np.float32)]
        for s in ds.load_split("train"):
            xs.append(np.stack([norm("power:die", s.power[0])] + consts))
            ys.append(norm("temperature", s.temp)[None])
    return np.stack(xs), np.stack(ys), index
