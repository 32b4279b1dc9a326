"""Simulation and exact/statistical verification of multi-layer interacting particle systems."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .config import ConfigError, parse_config
from .coupling import (
    CoupledPair,
    CouplingReport,
    CouplingSchedule,
    SpanDeficient,
    SpreadReport,
    couple_internal,
    couple_irw_configs,
    couple_irw_pair,
    couple_rtp,
    couple_sep,
    couple_sip,
    coupling_experiment,
    spread_estimator,
)
from .duality import DualityReport, duality_value, mc_deterministic_duality_check, mc_duality_check, single_site_weight
from .engine import (
    AbsorbingState,
    Configuration,
    DualConfiguration,
    RngStream,
    enumerate_transitions,
    simulate,
    simulate_dual,
    single_particle_kernel,
    step,
)
from .exactcheck import (
    SectorSpace,
    build_generator,
    exact_dtransform_constancy,
    exact_generator_duality_residual,
    exact_ladder_consistency,
    exact_stationarity_residual,
)
from .lattice import Lattice, Site
from .measures import ProductMeasure, exact_dtransform_site, mc_invariance_check, mixing_estimator, sample_configuration, site_pmf, theta
from .models import LayerKinetics, ModelError, ModelSpec, nearest_neighbour_pi

__all__ = [
    "__version__",
    "BACKEND",
    "ConfigError",
    "parse_config",
    "CoupledPair",
    "CouplingReport",
    "CouplingSchedule",
    "SpanDeficient",
    "SpreadReport",
    "couple_internal",
    "couple_irw_configs",
    "couple_irw_pair",
    "couple_rtp",
    "couple_sep",
    "couple_sip",
    "coupling_experiment",
    "spread_estimator",
    "DualityReport",
    "duality_value",
    "mc_deterministic_duality_check",
    "mc_duality_check",
    "single_site_weight",
    "AbsorbingState",
    "Configuration",
    "DualConfiguration",
    "RngStream",
    "enumerate_transitions",
    "simulate",
    "simulate_dual",
    "single_particle_kernel",
    "step",
    "SectorSpace",
    "build_generator",
    "exact_dtransform_constancy",
    "exact_generator_duality_residual",
    "exact_ladder_consistency",
    "exact_stationarity_residual",
    "Lattice",
    "Site",
    "ProductMeasure",
    "exact_dtransform_site",
    "mc_invariance_check",
    "mixing_estimator",
    "sample_configuration",
    "site_pmf",
    "theta",
    "LayerKinetics",
    "ModelError",
    "ModelSpec",
    "nearest_neighbour_pi",
]
