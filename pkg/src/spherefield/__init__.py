"""
Isotropic Gaussian random fields on the sphere.

Spectra and covariances, harmonic synthesis, occupation measures and local
times, grid level sets with box-counting dimension, and capacity and hitting
diagnostics.
"""
from .capacity import (CapMeasure, DiscreteMeasure, EnergyResult, HittingTable, PointMass,
                       capacity_estimate, energy, hitting_probability_mc, integrability_test,
                       phi_kernel)
from .covariance import (CovarianceModel, conditional_variance, covariance, rho_alpha,
                         slnd_ratio, variogram)
from .geometry import (Cap, EquiangularGrid, PointSet, PolarCapGrid, SpherePoint,
                       VoronoiHierarchy, build_voronoi_hierarchy, covering_number,
                       geodesic_distance)
from .harmonics import addition_theorem_check, legendre_p, legendre_table, spherical_harmonic
from .kernels import BACKEND
from .level_set import (DimensionFit, LevelSetEstimate, box_dimension, default_tolerance,
                        extract_level_set, phi_premeasure)
from .local_time import (GaugeFunction, LocalTimeEstimate, local_time_estimate,
                         occupation_measure, phi, upper_density_profile, w)
from .spectrum import (PowerSpectrum, condition_a_spectrum, example1_spectrum,
                       example2_power_spectrum, normalize, predicted_dimension)
from .synthesis import (FieldSample, HarmonicCoefficients, band_split, evaluate_field,
                        sample_coefficients, vector_field)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Cap", "CapMeasure", "CovarianceModel", "DimensionFit", "DiscreteMeasure", "EnergyResult",
    "EquiangularGrid", "FieldSample", "GaugeFunction", "HarmonicCoefficients", "HittingTable",
    "LevelSetEstimate", "LocalTimeEstimate", "PointMass", "PointSet", "PolarCapGrid",
    "PowerSpectrum", "SpherePoint", "VoronoiHierarchy",
    "addition_theorem_check", "band_split", "box_dimension", "build_voronoi_hierarchy",
    "capacity_estimate", "condition_a_spectrum", "conditional_variance", "covariance",
    "covering_number", "default_tolerance", "energy", "evaluate_field", "example1_spectrum",
    "example2_power_spectrum", "extract_level_set", "geodesic_distance",
    "hitting_probability_mc", "integrability_test", "legendre_p", "legendre_table",
    "local_time_estimate", "normalize", "occupation_measure", "phi", "phi_kernel",
    "phi_premeasure", "predicted_dimension", "rho_alpha", "sample_coefficients", "slnd_ratio",
    "spherical_harmonic", "upper_density_profile", "variogram", "vector_field", "w",
]
