"""Shared fixtures.

The steady-basis cache is pointed at a repo-local directory so test runs are
hermetic with respect to the user's ~/.cache and so repeated runs reuse the
expensive high-fidelity factorizations (the first full run pays for them).
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

_CACHE = Path(__file__).resolve().parent.parent / ".thermkit-cache"


def pytest_configure(config):
    _CACHE.mkdir(exist_ok=True)
    os.environ["THERMKIT_CACHE_DIR"] = str(_CACHE)


@pytest.fixture()
def tiny_stack():
    """Single-core 2 x 2 mm silicon die; meshes to a handful of cells."""
    from thermkit.materials import get_material
    from thermkit.stack import (BoundaryCondition, CoreRegion, Layer,
                                PackageStack, require_valid)

    core = CoreRegion(id="die:c00", rect=(0.0, 0.0, 2e-3, 2e-3))
    stack = PackageStack(
        name="tiny",
        layers=(Layer("die", 0.5e-3, 2e-3, 2e-3, get_material("silicon"),
                      power_regions=(core,)),),
        bc_top=BoundaryCondition.convective(h=1000.0, t_inf=293.15),
        bc_bottom=BoundaryCondition.adiabatic(),
        ambient=293.15,
        power_range=(0.0, 1.0),
    )
    require_valid(stack)
    return stack
