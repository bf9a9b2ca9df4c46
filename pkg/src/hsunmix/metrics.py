"""Angular error metrics and endmember-to-reference matching."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


def sad(spectrum, estimate):
    """Spectral angle between two nonzero vectors, in radians.

    The arccos of the cosine similarity, evaluated in the stable
    two-argument arctangent form so the result is never NaN, stays in
    [0, pi], and is exactly zero for identical vectors.
    """
    u = np.asarray(spectrum, dtype=float).ravel()
    v = np.asarray(estimate, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError(f"vector lengths disagree: {u.shape[0]} vs {v.shape[0]}")
    norm_u = float(np.linalg.norm(u))
    norm_v = float(np.linalg.norm(v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("angle undefined for a zero vector")
    u = u / norm_u
    v = v / norm_v
    return 2.0 * math.atan2(float(np.linalg.norm(u - v)), float(np.linalg.norm(u + v)))


def aad(fractions, estimate):
    """Abundance angle: :func:`sad` applied to per-pixel fraction vectors."""
    return sad(fractions, estimate)


def _check_same_shape(reference, estimated, what):
    if reference.shape != estimated.shape:
        raise ValueError(
            f"{what} shapes disagree: reference {reference.shape} vs "
            f"estimated {estimated.shape}"
        )


def match_endmembers(reference, estimated):
    """Best pairing of estimated to reference signatures.

    Returns the permutation ``perm`` minimizing the total spectral angle
    over all assignments, with ``perm[j]`` the reference column matched
    to estimated column ``j``.
    """
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimated, dtype=float)
    _check_same_shape(ref, est, "endmember matrix")
    count = ref.shape[1]
    angles = np.empty((count, count))
    for i in range(count):
        for j in range(count):
            angles[i, j] = sad(ref[:, i], est[:, j])
    rows, cols = linear_sum_assignment(angles)
    perm = np.empty(count, dtype=int)
    perm[cols] = rows
    return perm.tolist()


def rms_sad(reference, estimated):
    """Root mean square spectral angle after optimal matching."""
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimated, dtype=float)
    perm = match_endmembers(ref, est)
    squares = [sad(ref[:, perm[j]], est[:, j]) ** 2 for j in range(est.shape[1])]
    return math.sqrt(sum(squares) / len(squares))


def rms_aad(reference, estimated, permutation):
    """Root mean square per-pixel abundance angle.

    ``permutation`` (estimated row -> reference row, as returned by
    :func:`match_endmembers`) is applied to the estimated rows before
    comparing pixel columns.  A zero abundance column raises, since the
    angle is undefined there.
    """
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimated, dtype=float)
    _check_same_shape(ref, est, "abundance matrix")
    aligned = np.empty_like(est)
    aligned[np.asarray(permutation, dtype=int)] = est
    angles = _pixel_angles(ref, aligned)
    return math.sqrt(float(np.mean(angles * angles)))


def _pixel_angles(reference, aligned):
    norms_ref = np.linalg.norm(reference, axis=0)
    norms_est = np.linalg.norm(aligned, axis=0)
    bad = np.flatnonzero((norms_ref == 0) | (norms_est == 0))
    if bad.size:
        raise ValueError(f"angle undefined for zero abundance column(s) {bad.tolist()}")
    u = reference / norms_ref
    v = aligned / norms_est
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=0), np.linalg.norm(u + v, axis=0))


@dataclass(frozen=True)
class EvalReport:
    """Summary of one estimate-vs-reference comparison.

    ``permutation[j]`` is the reference index matched to estimated
    column j; ``sad_per_endmember[i]`` is the angle for reference
    signature i.  Abundance fields are None when no abundances were
    supplied.  All angles are radians.
    """

    permutation: tuple
    sad_per_endmember: tuple
    rms_sad: float
    aad_mean: float | None = None
    aad_max: float | None = None
    rms_aad: float | None = None

    def as_dict(self):
        return {
            "permutation": list(self.permutation),
            "sad_per_endmember": list(self.sad_per_endmember),
            "rms_sad": self.rms_sad,
            "aad_mean": self.aad_mean,
            "aad_max": self.aad_max,
            "rms_aad": self.rms_aad,
        }


def evaluate(ref_endmembers, est_endmembers, ref_abundances=None, est_abundances=None):
    """Match the estimate to the reference and compute all metrics.

    The endmember matching permutation is reused for the abundance
    comparison so both evaluations stay consistent.
    """
    ref = np.asarray(ref_endmembers, dtype=float)
    est = np.asarray(est_endmembers, dtype=float)
    perm = match_endmembers(ref, est)
    count = est.shape[1]
    sads = [0.0] * count
    for j in range(count):
        sads[perm[j]] = sad(ref[:, perm[j]], est[:, j])
    rms_sad_value = math.sqrt(sum(a * a for a in sads) / count)

    aad_mean = aad_max = rms_aad_value = None
    if ref_abundances is not None and est_abundances is not None:
        ref_ab = np.asarray(ref_abundances, dtype=float)
        est_ab = np.asarray(est_abundances, dtype=float)
        _check_same_shape(ref_ab, est_ab, "abundance matrix")
        aligned = np.empty_like(est_ab)
        aligned[np.asarray(perm, dtype=int)] = est_ab
        angles = _pixel_angles(ref_ab, aligned)
        aad_mean = float(np.mean(angles))
        aad_max = float(np.max(angles))
        rms_aad_value = math.sqrt(float(np.mean(angles * angles)))

    return EvalReport(
        permutation=tuple(perm),
        sad_per_endmember=tuple(sads),
        rms_sad=rms_sad_value,
        aad_mean=aad_mean,
        aad_max=aad_max,
        rms_aad=rms_aad_value,
    )
