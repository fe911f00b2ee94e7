"""Log-Sobolev certificates for O(n), Ising and SK spin systems."""

__version__ = "0.1.0"

from .coupling import (
    CouplingMatrix,
    LsiCertificate,
    SpectrumSummary,
    build_coupling,
    certify_lsi,
    certify_spectral_gap,
    lsi_constant,
    load_coupling,
    mean_field_bound_check,
    spectrum,
)
from .singlespin import SingleSpinModel, TiltedMoments, single_spin_lsi_default, tilted_moments, variance_bound_check

__all__ = [
    "CouplingMatrix",
    "LsiCertificate",
    "SpectrumSummary",
    "build_coupling",
    "certify_lsi",
    "certify_spectral_gap",
    "lsi_constant",
    "load_coupling",
    "mean_field_bound_check",
    "spectrum",
    "SingleSpinModel",
    "TiltedMoments",
    "single_spin_lsi_default",
    "tilted_moments",
    "variance_bound_check",
]
