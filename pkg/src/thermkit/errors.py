"""Exception hierarchy for thermkit.

Everything raised on purpose derives from ThermkitError so the CLI can map
domain failures to a single exit code.
"""


class ThermkitError(Exception):
    """Base class for all thermkit domain errors."""


class GeometryError(ThermkitError):
    """Invalid stack geometry, materials, or power regions."""


class MeshError(ThermkitError):
    """Mesh construction or rasterization failure."""


class SolverError(ThermkitError):
    """Linear solve failure: non-convergence, breakdown, singular system."""


class FormatError(ThermkitError):
    """Malformed or corrupt on-disk artifact (tensor file, manifest, JSON)."""


class MetricsError(ThermkitError):
    """Invalid metric inputs: shape mismatch, nonpositive truth values."""
