"""Linear mixing model: forward mixing, noise injection, abundance checks.

Matrix conventions used throughout the package: observation cubes are
L x N (bands by pixels), endmember signatures are L x P, abundance
fractions are P x N with each pixel column living on the probability
simplex.
"""

import math
from dataclasses import dataclass

import numpy as np


def _as_float_matrix(values, name):
    m = np.asarray(values, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {m.shape}")
    return m


def require_observations(values, name="observations"):
    """Validate and return an L x N observation matrix (finite, >= 0)."""
    x = _as_float_matrix(values, name)
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"{name} must be nonempty, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite entries")
    if (x < 0).any():
        raise ValueError(f"{name} contains negative entries")
    return x


def require_endmembers(values, name="endmembers"):
    """Validate and return an L x P signature matrix.

    All entries must be finite and nonnegative; an all-zero signature
    column is rejected as degenerate.
    """
    a = require_observations(values, name)
    zero_cols = np.flatnonzero(a.sum(axis=0) == 0.0)
    if zero_cols.size:
        raise ValueError(f"{name} has all-zero signature column(s) {zero_cols.tolist()}")
    return a


@dataclass(frozen=True)
class NoiseSpec:
    """White Gaussian measurement noise pinned to a target SNR.

    ``snr_db`` is the whole-image ratio of mean signal power to noise
    variance, in decibels; ``math.inf`` disables noise entirely.  The
    same (input, spec) pair always yields the same realization.
    """

    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"snr_db must be finite or +inf, got {self.snr_db}")


def mix(endmembers, abundances):
    """Noiseless forward model: the matrix product endmembers @ abundances.

    Raises ValueError naming both shapes when the inner dimensions
    disagree.
    """
    a = require_endmembers(endmembers)
    s = _as_float_matrix(abundances, "abundances")
    if (s < 0).any():
        raise ValueError("abundances contains negative entries")
    if a.shape[1] != s.shape[0]:
        raise ValueError(
            f"inner dimensions disagree: endmembers {a.shape} vs abundances {s.shape}"
        )
    return a @ s


def add_noise(observations, spec):
    """Add zero-mean white Gaussian noise at the SNR requested by ``spec``.

    The noise variance solves 10*log10(mean(X**2) / var) = snr_db, with
    the mean taken over every entry of the clean input.  Entries driven
    negative are clamped to zero so the result remains a valid
    observation matrix.  ``snr_db = inf`` returns the input unchanged.
    """
    x = require_observations(observations)
    if spec.snr_db == math.inf:
        return x.copy()
    signal_power = float(np.mean(x * x))
    sigma = math.sqrt(signal_power / 10.0 ** (spec.snr_db / 10.0))
    rng = np.random.default_rng(spec.seed)
    noisy = x + sigma * rng.standard_normal(x.shape)
    return np.maximum(noisy, 0.0)


@dataclass(frozen=True)
class AbundanceReport:
    """Outcome of a simplex check on an abundance matrix."""

    negative_count: int
    max_colsum_deviation: float
    tol: float

    @property
    def passed(self):
        return self.negative_count == 0 and self.max_colsum_deviation <= self.tol


def validate_abundances(abundances, tol=1e-6):
    """Report negative entries and the worst |column sum - 1|.

    Passes iff there are no negative entries and every column sums to
    one within ``tol``.
    """
    s = _as_float_matrix(abundances, "abundances")
    if s.size == 0:
        raise ValueError("abundances must be nonempty")
    negatives = int(np.count_nonzero(s < 0))
    deviation = float(np.max(np.abs(s.sum(axis=0) - 1.0)))
    return AbundanceReport(negatives, deviation, float(tol))
