"""Sparse NMF objective and the multiplicative update engine.

One layer of the pipeline factorizes a nonnegative target X into a
basis B and coefficients C by alternating multiplicative updates on

    cost(X, B, C) = ||X - B C||_F^2 + w_b * half_norm(B) + w_c * half_norm(C)

where half_norm is the sparsity-promoting sum of elementwise square
roots.  An optional sum-to-one pressure on the coefficient columns is
applied by augmenting X and B with a constant row during the C update;
the objective monitored by :func:`fit_layer` then includes the implied
quadratic penalty so the recorded trace is the quantity the iteration
actually descends.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import require_observations


@dataclass(frozen=True)
class SparsityWeights:
    """Nonnegative penalty weights on the two factors of a layer fit."""

    basis: float = 0.0
    coeffs: float = 0.0

    def __post_init__(self):
        for name, value in (("basis", self.basis), ("coeffs", self.coeffs)):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} weight must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class LayerFitConfig:
    """Tunables of a single layer fit.

    ``asc_delta`` is the weight of the constant augmentation row that
    pulls coefficient columns toward sum one; ``None`` disables it.
    ``epsilon_floor`` clamps factor entries away from zero so the
    sparsity term stays differentiable.
    """

    max_iters: int = 300
    rel_tol: float = 1e-6
    epsilon_floor: float = 1e-9
    asc_delta: float | None = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ValueError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if not self.epsilon_floor > 0:
            raise ValueError(f"epsilon_floor must be > 0, got {self.epsilon_floor}")
        if self.asc_delta is not None and not self.asc_delta > 0:
            raise ValueError(f"asc_delta must be > 0 or None, got {self.asc_delta}")


@dataclass(frozen=True)
class CostTrace:
    """Objective values per iteration; values[0] is the starting point."""

    values: tuple
    converged_at: int | None = None


class CostDivergedError(RuntimeError):
    """The layer objective became non-finite during iteration."""

    def __init__(self, iteration, value):
        super().__init__(f"objective became non-finite at iteration {iteration}: {value}")
        self.iteration = iteration
        self.value = value


def half_norm(matrix):
    """Sum of elementwise square roots of a nonnegative matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.size and float(m.min()) < 0:
        raise ValueError("half_norm requires nonnegative entries")
    return float(np.sum(np.sqrt(m)))


def _check_factor_shapes(x, basis, coeffs):
    if basis.ndim != 2 or coeffs.ndim != 2:
        raise ValueError("factors must be 2-D matrices")
    if basis.shape[0] != x.shape[0] or coeffs.shape[1] != x.shape[1] or basis.shape[1] != coeffs.shape[0]:
        raise ValueError(
            f"factor shapes do not conform: target {x.shape}, "
            f"basis {basis.shape}, coeffs {coeffs.shape}"
        )


def cost(x, basis, coeffs, weights=None):
    """Squared reconstruction error plus weighted half-norm penalties."""
    weights = weights if weights is not None else SparsityWeights()
    x = np.asarray(x, dtype=float)
    b = np.asarray(basis, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    _check_factor_shapes(x, b, c)
    resid = x - b @ c
    # Overflow to inf is legitimate here; fit_layer turns it into a
    # CostDivergedError instead of a warning.
    with np.errstate(over="ignore"):
        value = float(np.sum(resid * resid))
    if weights.basis > 0:
        value += weights.basis * half_norm(b)
    if weights.coeffs > 0:
        value += weights.coeffs * half_norm(c)
    return value


def _asc_penalty(coeffs, delta):
    resid = 1.0 - coeffs.sum(axis=0)
    return float(delta * delta * np.dot(resid, resid))


def layer_objective(x, basis, coeffs, weights, cfg):
    """Objective tracked during a layer fit: ``cost`` plus the quadratic
    sum-to-one penalty implied by the augmentation row (zero when the
    augmentation is disabled)."""
    value = cost(x, basis, coeffs, weights)
    if cfg.asc_delta is not None:
        value += _asc_penalty(np.asarray(coeffs, dtype=float), cfg.asc_delta)
    return value


def update_basis(x, basis, coeffs, weight=0.0, cfg=None):
    """One multiplicative step on the basis factor.

    B <- B * (X C^T) / (B C C^T + (weight/4) * B^(-1/2)), with every
    denominator and output entry floored at ``cfg.epsilon_floor``.  The
    quarter coefficient on the penalty term is the largest for which
    each step provably never increases :func:`cost`; a half coefficient
    corresponds to a doubled penalty weight and can overshoot.
    """
    cfg = cfg if cfg is not None else LayerFitConfig()
    if weight < 0:
        raise ValueError(f"weight must be >= 0, got {weight}")
    x = np.asarray(x, dtype=float)
    b = np.asarray(basis, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    _check_factor_shapes(x, b, c)
    floor = cfg.epsilon_floor
    b = np.maximum(b, floor)
    numer = x @ c.T
    denom = b @ (c @ c.T)
    if weight > 0:
        denom = denom + (weight / 4.0) / np.sqrt(b)
    return np.maximum(b * numer / np.maximum(denom, floor), floor)


def update_coeffs(x, basis, coeffs, weight=0.0, cfg=None):
    """One multiplicative step on the coefficient factor.

    C <- C * (B^T X) / (B^T B C + (weight/4) * C^(-1/2)), with the same
    flooring and penalty coefficient as :func:`update_basis`.  When
    ``cfg.asc_delta`` is set, X and B are first augmented with a
    constant row of that value, which pulls the coefficient columns
    toward sum one.
    """
    cfg = cfg if cfg is not None else LayerFitConfig()
    if weight < 0:
        raise ValueError(f"weight must be >= 0, got {weight}")
    x = np.asarray(x, dtype=float)
    b = np.asarray(basis, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    _check_factor_shapes(x, b, c)
    if cfg.asc_delta is not None:
        delta = cfg.asc_delta
        x = np.vstack([x, np.full((1, x.shape[1]), delta)])
        b = np.vstack([b, np.full((1, b.shape[1]), delta)])
    floor = cfg.epsilon_floor
    c = np.maximum(c, floor)
    numer = b.T @ x
    denom = (b.T @ b) @ c
    if weight > 0:
        denom = denom + (weight / 4.0) / np.sqrt(c)
    return np.maximum(c * numer / np.maximum(denom, floor), floor)


def fit_layer(x, basis0, coeffs0, weights=None, cfg=None):
    """Alternate basis/coefficient updates until the objective stalls.

    Convergence is declared when the relative drop of the monitored
    objective over a 10-iteration window (clipped at the start of the
    run) falls below ``cfg.rel_tol``, or at ``cfg.max_iters``.  Returns
    ``(basis, coeffs, trace)`` where the trace holds the objective at
    every iterate, starting value included.

    Raises CostDivergedError (carrying the iteration index) if the
    objective ever becomes non-finite.
    """
    weights = weights if weights is not None else SparsityWeights()
    cfg = cfg if cfg is not None else LayerFitConfig()
    x = require_observations(x, "target")
    floor = cfg.epsilon_floor
    b = np.maximum(np.asarray(basis0, dtype=float), floor)
    c = np.maximum(np.asarray(coeffs0, dtype=float), floor)
    _check_factor_shapes(x, b, c)

    values = [layer_objective(x, b, c, weights, cfg)]
    if not math.isfinite(values[0]):
        raise CostDivergedError(0, values[0])
    converged_at = None
    for iteration in range(1, cfg.max_iters + 1):
        b = update_basis(x, b, c, weights.basis, cfg)
        c = update_coeffs(x, b, c, weights.coeffs, cfg)
        value = layer_objective(x, b, c, weights, cfg)
        if not math.isfinite(value):
            raise CostDivergedError(iteration, value)
        values.append(value)
        reference = values[max(0, iteration - 10)]
        if reference <= 0.0 or (reference - value) / reference < cfg.rel_tol:
            converged_at = iteration
            break
    return b, c, CostTrace(tuple(values), converged_at)


def estimate_sparsity_weight(x):
    """Data-driven penalty weight from the mean per-band sparseness.

    Each band row contributes (sqrt(N) - l1/l2) / (sqrt(N) - 1); the
    contributions are summed and scaled by 1/sqrt(L).  Returns 0 for a
    single-pixel input, where the measure is undefined.
    """
    x = require_observations(x)
    bands, pixels = x.shape
    if pixels < 2:
        return 0.0
    l1 = x.sum(axis=1)
    l2 = np.sqrt(np.sum(x * x, axis=1))
    keep = l2 > 0
    root_n = math.sqrt(pixels)
    sparseness = (root_n - l1[keep] / l2[keep]) / (root_n - 1.0)
    return float(np.sum(sparseness) / math.sqrt(bands))
