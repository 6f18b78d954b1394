"""Anisotropic Littlewood-Paley analysis, regularity structures and paraproducts on periodic grids."""
from .grading import (
    HomogeneitySet,
    ModelSpace,
    ScalingVector,
    StructureElement,
    aniso_norm,
    gamma_apply,
    index_set_below,
    index_set_boundary,
    multiindex_weight,
    sector_norm,
)
from .lpanalysis import (
    DyadicPartition,
    GridField,
    GridSpec,
    build_partition,
    check_spectral_annulus,
    kernel_moment,
    lp_block,
    lp_low,
    spectral_derivative,
)
from .models import (
    ModelInstance,
    ModelledField,
    SeparableKernel,
    check_model,
    make_synthetic_field,
    pam_model,
    pam_modelled,
    poly_lift,
    poly_model,
)
from .norms import NormReport, PairSampler, besov_norm, bgamma_norm, dgamma_norm, holder_norm, taylor_poly, taylor_remainder
from .paraproducts import (
    ParaproductTermLog,
    ResidualCurve,
    bony_para,
    residual_curve,
    sharp_remainder,
    structure_para,
    structure_residual,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "HomogeneitySet",
    "ModelSpace",
    "ScalingVector",
    "StructureElement",
    "aniso_norm",
    "gamma_apply",
    "index_set_below",
    "index_set_boundary",
    "multiindex_weight",
    "sector_norm",
    "DyadicPartition",
    "GridField",
    "GridSpec",
    "build_partition",
    "check_spectral_annulus",
    "kernel_moment",
    "lp_block",
    "lp_low",
    "spectral_derivative",
    "ModelInstance",
    "ModelledField",
    "SeparableKernel",
    "check_model",
    "make_synthetic_field",
    "pam_model",
    "pam_modelled",
    "poly_lift",
    "poly_model",
    "ParaproductTermLog",
    "ResidualCurve",
    "bony_para",
    "residual_curve",
    "sharp_remainder",
    "structure_para",
    "structure_residual",
    "NormReport",
    "PairSampler",
    "besov_norm",
    "bgamma_norm",
    "dgamma_norm",
    "holder_norm",
    "taylor_poly",
    "taylor_remainder",
    "BACKEND",
    "__version__",
]
