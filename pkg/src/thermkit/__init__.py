"""Multi-fidelity thermal simulation toolkit for stacked die packages.

Build a package stack from layers with via/bump arrays, homogenize the
arrays into equivalent anisotropic layers, mesh at resolved (high) or
homogenized (low) fidelity, solve steady or transient conduction with
energy-balance postconditions, and generate mixed-fidelity training
datasets in a portable binary format.
"""

from .bench import CASE_NAMES, MeshProfile, SplitMix64, build_mesh, \
    desk_profile, make_case, sample_power, sample_waveform
from .dataset import ExportSpec, NormStats, SampleRecord, TransientSpec, \
    compute_norm_stats, default_cache_dir, export_temperature, generate, \
    load_manifest, power_channel_names, rasterize_power_map, read_record, \
    steady_export_basis, write_record
from .emt import EquivalentLayer, VolumeFractions, cv_effective, \
    homogenize_layer, k_inclusion, k_lateral, k_vertical, volume_fractions
from .errors import FormatError, GeometryError, MeshError, MetricsError, \
    SolverError, ThermkitError
from .materials import DEFAULT_MATERIALS, Material, get_material
from .mesh import SparseSystem, VoxelGrid, assemble, build_hf_mesh, \
    build_lf_mesh, rasterize_power
from .metrics import ImprovementRatio, MetricReport, SampleMetrics, \
    evaluate, improvement_ratio
from .solver import PcgResult, SolveReport, TemperatureField, \
    TransientResult, pcg, solve_steady, solve_transient
from .stack import BoundaryCondition, CoreRegion, InterconnectArray, Layer, \
    PackageStack, PowerAssignment, PowerWaveform, load_stack, mm, \
    require_valid, save_stack, stack_from_json, stack_to_json, to_mm, \
    validate_stack
from .tensorio import read_tensor, write_tensor
from .validate import CostReport, StepCheckResult, SweepPoint, \
    cost_comparison, fraction_sweep, sweep_errors_monotone, \
    transient_step_check, tsv_unit_cell, unit_cell_profile

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition", "CASE_NAMES", "CoreRegion", "CostReport",
    "DEFAULT_MATERIALS", "EquivalentLayer", "ExportSpec", "FormatError",
    "GeometryError", "ImprovementRatio", "InterconnectArray", "Layer",
    "Material", "MeshError", "MeshProfile", "MetricReport", "MetricsError",
    "NormStats", "PackageStack", "PcgResult", "PowerAssignment",
    "PowerWaveform", "SampleMetrics", "SampleRecord", "SolveReport",
    "SolverError", "SparseSystem", "SplitMix64", "StepCheckResult",
    "SweepPoint", "TemperatureField", "ThermkitError", "TransientResult",
    "TransientSpec", "VolumeFractions", "VoxelGrid", "assemble",
    "build_hf_mesh", "build_lf_mesh", "build_mesh", "compute_norm_stats",
    "cost_comparison", "cv_effective", "default_cache_dir", "desk_profile",
    "evaluate", "export_temperature", "fraction_sweep", "generate",
    "get_material", "homogenize_layer", "improvement_ratio", "k_inclusion",
    "k_lateral", "k_vertical", "load_manifest", "load_stack", "make_case",
    "mm", "pcg", "power_channel_names", "rasterize_power",
    "rasterize_power_map", "read_record", "read_tensor", "require_valid",
    "sample_power", "sample_waveform", "save_stack", "solve_steady",
    "solve_transient", "stack_from_json", "stack_to_json",
    "steady_export_basis", "sweep_errors_monotone", "to_mm",
    "transient_step_check", "tsv_unit_cell", "unit_cell_profile",
    "validate_stack", "volume_fractions", "write_record", "write_tensor",
]
