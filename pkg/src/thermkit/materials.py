"""Material property table.

Only two properties enter the heat equation: the thermal conductivity k and
the volumetric heat capacity cv = rho*cp. Density and specific heat are kept
as separate fields because inputs are usually quoted that way, but downstream
code must use the exact product `cv`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import GeometryError


@dataclass(frozen=True)
class Material:
    """Isotropic bulk material.

    k      thermal conductivity, W/(m K)
    rho    density, kg/m^3
    cp     specific heat, J/(kg K)
    cv     volumetric heat capacity rho*cp, J/(m^3 K), derived
    """

    name: str
    k: float
    rho: float
    cp: float
    cv: float = field(init=False)

    def __post_init__(self):
        if not (self.k > 0 and self.rho > 0 and self.cp > 0):
            raise GeometryError(
                f"material {self.name!r}: k, rho, cp must all be positive "
                f"(got k={self.k}, rho={self.rho}, cp={self.cp})"
            )
        object.__setattr__(self, "cv", self.rho * self.cp)


# Versioned default table (v1). rho/cp splits are chosen so the product cv
# is exact in binary; only cv enters the physics.
DEFAULT_MATERIALS: dict[str, Material] = {
    m.name: m
    for m in [
        Material("copper", k=400.0, rho=8625.0, cp=400.0),      # cv 3.45e6
        Material("silicon", k=130.0, rho=2500.0, cp=652.0),     # cv 1.63e6
        Material("oxide", k=1.4, rho=2000.0, cp=815.0),         # cv 1.63e6
        Material("solder", k=50.0, rho=6760.0, cp=250.0),       # cv 1.69e6
        Material("underfill", k=2.0, rho=1700.0, cp=1000.0),    # cv 1.70e6; filler-loaded
        Material("substrate", k=0.8, rho=2000.0, cp=800.0),     # cv 1.60e6
    ]
}

MATERIAL_TABLE_VERSION = 1


def get_material(name: str) -> Material:
    """Look up a default material by name."""
    try:
        return DEFAULT_MATERIALS[name]
    except KeyError:
        known = ", ".join(sorted(DEFAULT_MATERIALS))
        raise GeometryError(f"unknown material {name!r} (known: {known})") from None
