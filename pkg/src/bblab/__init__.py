"""Exact desk-scale computations for bilinear Bogolyubov structure over F_p^n."""

from .errors import (
    AmbientMismatch,
    BBLabError,
    CapExceeded,
    NoCertifiedSubspace,
    ParseError,
    PartitionError,
    PreconditionError,
    TheoremViolation,
)
from .gfspace import AffineDualMap, AffineSubspace, FieldParams, Subspace
from .setcalc import DenseSet, ProductSet, phi_h, phi_pipeline, phi_v, two_a_minus_two_a

__version__ = "0.1.0"

__all__ = [
    "AffineDualMap",
    "AffineSubspace",
    "AmbientMismatch",
    "BBLabError",
    "CapExceeded",
    "DenseSet",
    "FieldParams",
    "NoCertifiedSubspace",
    "ParseError",
    "PartitionError",
    "PreconditionError",
    "ProductSet",
    "Subspace",
    "TheoremViolation",
    "phi_h",
    "phi_pipeline",
    "phi_v",
    "two_a_minus_two_a",
]
