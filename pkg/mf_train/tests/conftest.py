"""Shared fixtures: tiny corpora generated through the thermkit CLI.

The solver basis cache is pointed at the repo-local directory (shared with
the simulator's own test suite), so the expensive unit-response solves
behind the benchmark-case datasets are paid once per machine, not per run.
All dataset directories below regenerate from seeds byte-identically, so a
session temp dir costs only seconds once the cache is warm.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

_CACHE = Path(__file__).resolve().parent.parent.parent / ".thermkit-cache"


def pytest_configure(config):
    _CACHE.mkdir(exist_ok=True)
    os.environ.setdefault("THERMKIT_CACHE_DIR", str(_CACHE))


@pytest.fixture(scope="session")
def data_root(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("mfdata")


@pytest.fixture(scope="session")
def tiny_case_ds(data_root):
    """Small flat-package dataset: 3 HF + 4 LF train, 1 val, 2 test, 16x16."""
    from mf_train.corpus import generate_case_dataset

    return generate_case_dataset(
        data_root / "tiny", "hs-like-1c", n_high=3, n_low=4, n_val=1,
        n_test=2, height=16, width=16, seed=0)


@pytest.fixture(scope="session")
def tiny_transient_ds(data_root):
    """Transient counterpart of the tiny dataset (joint-frame loading)."""
    from mf_train.corpus import run_thermkit
    from mf_train.records import Dataset

    out = data_root / "tiny-transient"
    run_thermkit(["dataset", "--case", "hs-like-1c", "--out", out,
                  "--mode", "transient", "--n-high", 2, "--n-low", 2,
                  "--n-val", 0, "--n-test", 1, "--height", 16, "--width", 16,
                  "--seed", 0])
    return Dataset.open(out)


@pytest.fixture(scope="session")
def small_corpus(data_root):
    """Small diffusion corpus: 4 stacks x 5 samples at 24x24."""
    from mf_train.corpus import generate_diffusion_corpus

    root = data_root / "diff-small"
    generate_diffusion_corpus(root, n_stacks=4, samples_per_stack=5, seed=11,
                              height=24, width=24)
    return root
