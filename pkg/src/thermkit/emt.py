"""Effective-medium homogenization of interconnect-array layers.

A layer threaded by a uniform array of coaxial cylinders (copper TSV with an
oxide liner, or a bare solder bump in underfill) is replaced by a uniform
anisotropic layer. Vertically the cylinders act in parallel with the matrix,
so k_z is the volume-weighted arithmetic mean. Laterally each coated cylinder
is first reduced to an equivalent homogeneous inclusion and the composite is
then evaluated with the two-dimensional Maxwell-Eucken model. Heat capacity
mixes linearly by volume.

All functions accept scalars or numpy arrays (elementwise) in float64.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .stack import InterconnectArray, Layer

# Tested envelope for the lateral model; beyond this the regular-array and
# scale-separation assumptions degrade and we warn.
EMT_FRACTION_ENVELOPE = 0.5


@dataclass(frozen=True)
class VolumeFractions:
    """Unit-cell volume fractions of core, shell, and matrix (sum to 1)."""

    f_core: float
    f_shell: float
    f_matrix: float

    @property
    def f_inclusion(self) -> float:
        return self.f_core + self.f_shell


@dataclass(frozen=True)
class EquivalentLayer:
    """Homogenized anisotropic layer properties (k_x = k_y by construction)."""

    k_x: float
    k_y: float
    k_z: float
    c_v: float


def volume_fractions(array: InterconnectArray) -> VolumeFractions:
    """Fractions over the square pitch x pitch unit cell."""
    cell = array.pitch ** 2
    r_core, r_shell = array.r_core, array.r_shell
    f_core = np.pi * r_core ** 2 / cell
    f_shell = np.pi * (r_shell ** 2 - r_core ** 2) / cell
    f_matrix = 1.0 - f_core - f_shell
    for name, f in (("f_core", f_core), ("f_shell", f_shell), ("f_matrix", f_matrix)):
        if not (-1e-12 <= f <= 1.0 + 1e-12):
            raise GeometryError(
                f"{name} = {f:.6g} outside [0, 1]; array geometry inconsistent "
                f"(r_core={r_core:g}, r_shell={r_shell:g}, pitch={array.pitch:g})"
            )
    # 1e-12 slack: a fraction engineered to land exactly on the envelope
    # should not warn over the last ulp of pi*r^2/pitch^2
    if f_core + f_shell > EMT_FRACTION_ENVELOPE + 1e-12:
        warnings.warn(
            f"inclusion fraction {f_core + f_shell:.3f} exceeds the tested "
            f"envelope {EMT_FRACTION_ENVELOPE}; homogenization error grows "
            "for dense arrays",
            stacklevel=2,
        )
    return VolumeFractions(float(f_core), float(f_shell), float(f_matrix))


def k_vertical(f: VolumeFractions, k_core, k_shell, k_matrix):
    """Parallel (arithmetic) mixing rule along the cylinder axis."""
    return f.f_core * k_core + f.f_shell * k_shell + f.f_matrix * k_matrix


def k_inclusion(k_core, k_shell, v_core):
    """Equivalent conductivity of a coated cylinder, core fraction v_core.

    v_core = (r_core / r_shell)^2. Collapses to k_shell at v_core = 0 and to
    k_core at v_core = 1.
    """
    # grouped as (1 +/- v) * k so both endpoint collapses evaluate without
    # cancellation: at v = 0 num equals den bitwise, at v = 1 the vanishing
    # term is an exact zero rather than a rounded difference
    num = (1.0 + v_core) * k_core + (1.0 - v_core) * k_shell
    den = (1.0 - v_core) * k_core + (1.0 + v_core) * k_shell
    if np.any(den <= 0):
        raise GeometryError(
            f"k_inclusion denominator nonpositive (k_core={k_core}, "
            f"k_shell={k_shell}, v_core={v_core})"
        )
    return k_shell * (num / den)


def k_lateral(k_inc, k_matrix, f_inclusion):
    """Two-dimensional Maxwell-Eucken model for transverse conduction."""
    num = (1.0 + f_inclusion) * k_inc + (1.0 - f_inclusion) * k_matrix
    den = (1.0 - f_inclusion) * k_inc + (1.0 + f_inclusion) * k_matrix
    if np.any(den <= 0):
        raise GeometryError(
            f"k_lateral denominator nonpositive (k_inc={k_inc}, "
            f"k_matrix={k_matrix}, f_inclusion={f_inclusion})"
        )
    return k_matrix * (num / den)


def cv_effective(f: VolumeFractions, cv_core, cv_shell, cv_matrix):
    """Volume-averaged heat capacity."""
    return f.f_core * cv_core + f.f_shell * cv_shell + f.f_matrix * cv_matrix


def homogenize_layer(layer: Layer) -> EquivalentLayer:
    """Equivalent anisotropic properties for an array-bearing layer.

    Bump layers (t_shell = 0) reduce the inclusion step to the bare core
    conductivity via the exact v_core = 1 collapse.
    """
    arr = layer.array
    if arr is None:
        raise GeometryError(f"layer {layer.name!r} has no interconnect array")
    f = volume_fractions(arr)
    k_core = arr.core_material.k
    k_shell = arr.shell_material.k
    k_matrix = arr.matrix_material.k

    kz = k_vertical(f, k_core, k_shell, k_matrix)
    if arr.t_shell == 0.0:
        k_inc = k_core
    else:
        v_core = (arr.r_core / arr.r_shell) ** 2
        k_inc = k_inclusion(k_core, k_shell, v_core)
    kxy = k_lateral(k_inc, k_matrix, f.f_inclusion)
    cv = cv_effective(f, arr.core_material.cv, arr.shell_material.cv,
                      arr.matrix_material.cv)
    return EquivalentLayer(k_x=float(kxy), k_y=float(kxy), k_z=float(kz),
                           c_v=float(cv))
