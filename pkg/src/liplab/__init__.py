"""Certified smooth cylindrical approximation of Lipschitz functions on finite-dimensional normed spaces."""
from .lipschitz import (
    FiniteSampleFunction,
    ScalarField,
    asymptotic_slope,
    lip_on_set,
    mcshane_extend,
    plateau_extend,
)
from .map_operator import (
    BoundedSeq,
    MapOperator,
    apply,
    net_amplification_certificate,
    partition_for_diameter,
)
from .mollify import mollify, slope_bullet_check, smoothed_gradient
from .normed_space import NormedSpace, dual_sphere_net, embed
from .pipeline import ApproxCertificate, CompactExhaustion, CylinderFunction, Pipeline, run_pipeline
from .sobolev_bv import (
    EnergyReport,
    WeightedMeasure,
    bv_density_check,
    lp_strong_density_check,
    sobolev_density_check,
)

__version__ = "0.1.0"

__all__ = [
    "NormedSpace",
    "dual_sphere_net",
    "embed",
    "ScalarField",
    "FiniteSampleFunction",
    "lip_on_set",
    "asymptotic_slope",
    "mcshane_extend",
    "plateau_extend",
    "BoundedSeq",
    "MapOperator",
    "partition_for_diameter",
    "apply",
    "net_amplification_certificate",
    "mollify",
    "smoothed_gradient",
    "slope_bullet_check",
    "CylinderFunction",
    "CompactExhaustion",
    "ApproxCertificate",
    "Pipeline",
    "run_pipeline",
    "WeightedMeasure",
    "EnergyReport",
    "sobolev_density_check",
    "bv_density_check",
    "lp_strong_density_check",
]
