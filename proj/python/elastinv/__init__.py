"""Elastic coefficient reconstruction from internal displacement data."""

from ._elastinv import (
    ConfigError,
    InvalidArgument,
    SolverError,
    Mesh,
    build_mesh,
    build_tv,
    canonical,
    make_isotropic,
    make_dataset,
    assemble_system,
    phantom_ids,
    rasterize,
    rel_l2_error,
    run_experiment,
    smallest_singular_pairs,
    solve,
)

__all__ = [
    "ConfigError",
    "InvalidArgument",
    "SolverError",
    "Mesh",
    "build_mesh",
    "build_tv",
    "canonical",
    "make_isotropic",
    "make_dataset",
    "assemble_system",
    "phantom_ids",
    "rasterize",
    "rel_l2_error",
    "run_experiment",
    "smallest_singular_pairs",
    "solve",
]
