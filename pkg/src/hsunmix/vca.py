"""Vertex component analysis: extreme-pixel endmember extraction.

The data cloud is projected to a low-dimensional subspace (an SVD
projection of the raw data when the estimated SNR is high, otherwise a
mean-removed projection lifted with a constant row), and endmembers are
picked one at a time as the pixel most extreme along a random direction
orthogonal to everything selected so far.  Selected signatures are the
actual data columns, per the pure-pixel assumption.
"""

import math
from dataclasses import dataclass

import numpy as np

from .fcls import fcls_image
from .model import require_observations


@dataclass(frozen=True)
class VcaResult:
    """Endmembers selected by VCA.

    ``endmembers`` columns are copies of the input columns listed in
    ``pixel_indices``; ``projection_rank`` is the dimension of the
    subspace used for selection.
    """

    endmembers: np.ndarray
    pixel_indices: tuple
    projection_rank: int


def estimate_snr_db(observations, mean_spectrum, projected):
    """SNR estimate from the energy split between a p-dimensional
    projection of the mean-removed data and its complement."""
    x = np.asarray(observations, dtype=float)
    bands, pixels = x.shape
    p = projected.shape[0]
    power_total = float(np.sum(x * x)) / pixels
    power_proj = float(np.sum(projected * projected)) / pixels + float(
        np.sum(mean_spectrum * mean_spectrum)
    )
    numer = power_proj - (p / bands) * power_total
    denom = power_total - power_proj
    if denom <= 0.0:
        return math.inf
    if numer <= 0.0:
        return -math.inf
    return 10.0 * math.log10(numer / denom)


def _principal_directions(scatter, count):
    u, _, _ = np.linalg.svd(scatter, hermitian=True)
    return u[:, :count]


def vca(observations, endmember_count, seed=0):
    """Select ``endmember_count`` endmembers as extreme pixels.

    Parameters
    ----------
    observations : (L, N) nonnegative matrix, nonconstant.
    endmember_count : number of endmembers, <= min(L, N) and <= rank.
    seed : seed for the random search directions; the result is
        deterministic given the seed.  Ties in the extreme-pixel search
        resolve to the lowest column index.
    """
    x = require_observations(observations)
    bands, pixels = x.shape
    p = int(endmember_count)
    if p < 1 or p > min(bands, pixels):
        raise ValueError(
            f"endmember_count must be in [1, min(L, N)] = [1, {min(bands, pixels)}], got {p}"
        )
    if np.linalg.matrix_rank(x) < p:
        raise ValueError(f"endmember_count {p} exceeds the data rank")

    mean_spectrum = x.mean(axis=1, keepdims=True)
    centered = x - mean_spectrum

    if p == 1:
        direction = _principal_directions(centered @ centered.T / pixels, 1)
        scores = np.abs(direction.T @ centered).ravel()
        index = int(np.argmax(scores))
        return VcaResult(x[:, [index]].copy(), (index,), 1)

    basis_p = _principal_directions(centered @ centered.T / pixels, p)
    projected = basis_p.T @ centered
    snr = estimate_snr_db(x, mean_spectrum, projected)
    snr_threshold = 15.0 + 10.0 * math.log10(p)

    if snr < snr_threshold:
        # Low SNR: keep the mean-removed projection to p-1 dimensions and
        # lift with a constant coordinate so the simplex stays bounded.
        rank = p - 1
        coords = projected[:rank, :]
        lift = math.sqrt(float(np.max(np.sum(coords * coords, axis=0))))
        y = np.vstack([coords, np.full((1, pixels), lift)])
    else:
        # High SNR: project the raw data and scale each pixel onto the
        # hyperplane of unit projection onto the mean direction.
        rank = p
        basis = _principal_directions(x @ x.T / pixels, rank)
        coords = basis.T @ x
        mean_coord = coords.mean(axis=1)
        scale = mean_coord @ coords
        scale = np.where(scale == 0.0, np.finfo(float).tiny, scale)
        y = coords / scale

    rng = np.random.default_rng(seed)
    selected = np.zeros((p, p))
    selected[-1, 0] = 1.0
    indices = []
    for i in range(p):
        for _ in range(100):
            w = rng.standard_normal(p)
            f = w - selected @ (np.linalg.pinv(selected) @ w)
            norm = float(np.linalg.norm(f))
            if norm > 1e-12:
                break
        else:
            raise ValueError("could not find a direction orthogonal to the selection")
        f /= norm
        scores = np.abs(f @ y)
        index = int(np.argmax(scores))
        if index in indices:
            raise ValueError("degenerate geometry: the same pixel was selected twice")
        indices.append(index)
        selected[:, i] = y[:, index]

    return VcaResult(x[:, indices].copy(), tuple(indices), rank)


def init_from_vca(observations, endmember_count, seed=0, epsilon_floor=1e-9, fcls_cfg=None):
    """Strictly positive starting factors for a layer fit.

    The basis is the VCA selection floored at ``epsilon_floor``; the
    coefficients are the constrained least squares abundances of the
    whole image against that basis, floored the same way.
    """
    result = vca(observations, endmember_count, seed)
    basis = np.maximum(result.endmembers, epsilon_floor)
    coeffs = np.maximum(fcls_image(basis, observations, fcls_cfg), epsilon_floor)
    return basis, coeffs
