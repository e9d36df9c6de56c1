"""Virtual transverse-tension testing of fibre composite microstructures.

Generates random fibre packings, solves plane-strain elastic-plastic
virtual tensile tests on them, and exports a labelled image dataset with
trend validation tooling.
"""

__version__ = "0.1.0"

from .analysis import pearson_r, trend_report, voigt_reuss_bounds
from .fesolve import (
    FIBRE_PHASE,
    MATRIX_PHASE,
    DofSystem,
    FieldState,
    GaussPointState,
    MaterialModel,
    Mesh,
    NonConvergenceError,
    build_mesh,
    elastic_tangent,
    return_map,
    solve_increment,
)
from .microgen import (
    FibreSpec,
    JammingError,
    Microstructure,
    PhaseImage,
    RadiiDistribution,
    place_fibres,
    rasterize,
    sample_radii,
    volume_fraction,
)
from .pipeline import PipelineConfig, derive_seed, generate_dataset, load_config
from .virtest import (
    NotYieldedError,
    StressStrainCurve,
    TensileTestConfig,
    TestResult,
    apply_boundary_conditions,
    extract_proof_stress,
    extract_youngs_modulus,
    run_tensile_test,
)

__all__ = [
    "__version__",
    "FibreSpec", "Microstructure", "RadiiDistribution", "PhaseImage",
    "sample_radii", "place_fibres", "volume_fraction", "rasterize", "JammingError",
    "MaterialModel", "Mesh", "GaussPointState", "DofSystem", "FieldState",
    "build_mesh", "elastic_tangent", "return_map", "solve_increment",
    "MATRIX_PHASE", "FIBRE_PHASE", "NonConvergenceError",
    "TensileTestConfig", "StressStrainCurve", "TestResult",
    "apply_boundary_conditions", "run_tensile_test",
    "extract_youngs_modulus", "extract_proof_stress", "NotYieldedError",
    "pearson_r", "voigt_reuss_bounds", "trend_report",
    "PipelineConfig", "derive_seed", "generate_dataset", "load_config",
]
