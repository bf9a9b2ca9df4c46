"""Hyperspectral unmixing toolkit.

Decomposes mixed-pixel observation cubes into endmember signatures and
abundance fractions with a multilayer sparse NMF pipeline, plus the
building blocks around it: VCA extraction, fully constrained least
squares abundances, angular error metrics and a synthetic scene
generator for end-to-end evaluation.
"""

__version__ = "0.1.0"

from .model import NoiseSpec, add_noise, mix, validate_abundances
from .nmf_core import (
    CostDivergedError,
    CostTrace,
    LayerFitConfig,
    SparsityWeights,
    cost,
    estimate_sparsity_weight,
    fit_layer,
    half_norm,
    update_basis,
    update_coeffs,
)
from .fcls import ActiveSetError, FclsConfig, fcls_image, fcls_pixel, kkt_residual
from .vca import VcaResult, init_from_vca, vca
from .mlnmf import MlnmfConfig, UnmixResult, collapse_layers, unmix
from .metrics import EvalReport, aad, evaluate, match_endmembers, rms_aad, rms_sad, sad
from .synthgen import (
    SceneSpec,
    SpectralLibrary,
    SyntheticScene,
    generate_scene,
    load_library,
    sample_library,
    save_library,
)

__all__ = [
    "NoiseSpec",
    "add_noise",
    "mix",
    "validate_abundances",
    "CostDivergedError",
    "CostTrace",
    "LayerFitConfig",
    "SparsityWeights",
    "cost",
    "estimate_sparsity_weight",
    "fit_layer",
    "half_norm",
    "update_basis",
    "update_coeffs",
    "ActiveSetError",
    "FclsConfig",
    "fcls_image",
    "fcls_pixel",
    "kkt_residual",
    "VcaResult",
    "init_from_vca",
    "vca",
    "MlnmfConfig",
    "UnmixResult",
    "collapse_layers",
    "unmix",
    "EvalReport",
    "aad",
    "evaluate",
    "match_endmembers",
    "rms_aad",
    "rms_sad",
    "sad",
    "SceneSpec",
    "SpectralLibrary",
    "SyntheticScene",
    "generate_scene",
    "load_library",
    "sample_library",
    "save_library",
]
