"""Multilayer sparse NMF unmixing pipeline.

Layer 1 factorizes the observation matrix into a signature basis and
abundance coefficients; each further layer refactorizes the previous
coefficient matrix with a square basis.  The collapsed signature matrix
is the ordered product of the per-layer bases, and an optional final
constrained least squares solve restores exact simplex abundances
against the collapsed signatures.
"""

from dataclasses import dataclass, field

import numpy as np

from .fcls import FclsConfig, fcls_image
from .model import require_observations
from .nmf_core import (
    CostDivergedError,
    LayerFitConfig,
    SparsityWeights,
    estimate_sparsity_weight,
    fit_layer,
)
from .vca import init_from_vca

INIT_MODES = ("vca", "random")

# Default split of the data-driven sparsity estimate between the two
# penalties: the coefficient factor gets the estimate, the basis a tenth.
BASIS_WEIGHT_SCALE = 0.1


@dataclass(frozen=True)
class MlnmfConfig:
    """Tunables of the full multilayer decomposition.

    ``weights=None`` resolves both penalties from the data via
    :func:`hsunmix.nmf_core.estimate_sparsity_weight`.
    """

    layer_count: int = 3
    weights: SparsityWeights | None = None
    layer_fit: LayerFitConfig = field(default_factory=LayerFitConfig)
    init_mode: str = "vca"
    final_fcls: bool = True
    fcls: FclsConfig = field(default_factory=FclsConfig)

    def __post_init__(self):
        if self.layer_count < 1:
            raise ValueError(f"layer_count must be >= 1, got {self.layer_count}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")


@dataclass(frozen=True)
class UnmixResult:
    """Factors and diagnostics of one unmixing run.

    ``endmembers`` equals the ordered product of ``layer_factors``;
    ``weights`` records the sparsity penalties actually used (resolved
    from the data when the config left them unset).
    """

    endmembers: np.ndarray
    abundances: np.ndarray
    layer_factors: tuple
    traces: tuple
    weights: SparsityWeights


def collapse_layers(layer_factors):
    """Left-to-right product of the per-layer basis factors."""
    factors = [np.asarray(f, dtype=float) for f in layer_factors]
    if not factors:
        raise ValueError("layer_factors must be nonempty")
    for k, f in enumerate(factors):
        if f.ndim != 2:
            raise ValueError(f"layer factor {k} must be 2-D, got shape {f.shape}")
        if k and factors[k - 1].shape[1] != f.shape[0]:
            raise ValueError(
                f"shape chain broken between factors {k - 1} and {k}: "
                f"{factors[k - 1].shape} then {f.shape}"
            )
    product = factors[0]
    for f in factors[1:]:
        product = product @ f
    return product


def resolve_weights(observations, cfg):
    """The sparsity weights an unmix run will use for a given input."""
    if cfg.weights is not None:
        return cfg.weights
    estimate = estimate_sparsity_weight(observations)
    return SparsityWeights(basis=BASIS_WEIGHT_SCALE * estimate, coeffs=estimate)


def _random_init(x, count, rng, floor):
    bands = x.shape[0]
    pixels = x.shape[1]
    scale = np.sqrt(x.mean() / count) if x.mean() > 0 else 1.0
    basis = np.maximum(scale * rng.random((bands, count)), floor)
    coeffs = np.maximum(scale * rng.random((count, pixels)), floor)
    return basis, coeffs


def unmix(observations, endmember_count, cfg=None):
    """Run the multilayer decomposition on an observation matrix.

    Layer fits are seeded and deterministic; failures propagate as
    CostDivergedError with the layer index attached.
    """
    cfg = cfg if cfg is not None else MlnmfConfig()
    x = require_observations(observations)
    count = int(endmember_count)
    if count < 1 or count > min(x.shape):
        raise ValueError(
            f"endmember_count must be in [1, min(L, N)] = [1, {min(x.shape)}], got {count}"
        )
    weights = resolve_weights(x, cfg)
    floor = cfg.layer_fit.epsilon_floor
    rng = np.random.default_rng(cfg.layer_fit.seed)

    if cfg.init_mode == "vca":
        basis0, coeffs0 = init_from_vca(x, count, cfg.layer_fit.seed, floor, cfg.fcls)
    else:
        basis0, coeffs0 = _random_init(x, count, rng, floor)

    factors = []
    traces = []
    target = x
    coeffs = coeffs0
    for layer in range(cfg.layer_count):
        try:
            basis, coeffs, trace = fit_layer(target, basis0, coeffs0, weights, cfg.layer_fit)
        except CostDivergedError as err:
            err.layer = layer
            raise
        factors.append(basis)
        traces.append(trace)
        if layer + 1 < cfg.layer_count:
            # Start the next layer at a near-no-op refactorization of the
            # coefficients so the cascade cannot degrade the incumbent fit.
            target = coeffs
            basis0 = np.maximum(np.eye(count) + 0.01 * rng.random((count, count)), floor)
            coeffs0 = coeffs

    endmembers = collapse_layers(factors)
    if cfg.final_fcls:
        abundances = fcls_image(endmembers, x, cfg.fcls)
    else:
        abundances = coeffs
    return UnmixResult(endmembers, abundances, tuple(factors), tuple(traces), weights)
