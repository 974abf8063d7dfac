"""Divergence-free vector potentials, zero-trace decompositions and boundary trace
compatibility on uniform N-dimensional grids."""

from .grid_fields import (
    AntisymField,
    GridSpec,
    NormSpec,
    ScalarField,
    VectorField,
    discrete_norm,
    read_field,
    sample,
    sample_vector,
    write_field,
)

__version__ = "0.1.0"
