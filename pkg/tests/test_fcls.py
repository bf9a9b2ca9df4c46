import numpy as np
import pytest
from scipy.optimize import nnls as scipy_nnls

from hsunmix import ActiveSetError, FclsConfig, fcls_image, fcls_pixel, kkt_residual, mix
from hsunmix.fcls import resolve_delta

RAW = FclsConfig(renormalize=False)


def simplex_grid_3(step=1e-3):
    """Every point of the 3-simplex on a regular grid of the given step."""
    k = round(1.0 / step)
    a = np.concatenate([np.full(k + 1 - i, i) for i in range(k + 1)])
    b = np.concatenate([np.arange(k + 1 - i) for i in range(k + 1)])
    c = k - a - b
    return np.vstack([a, b, c]) * step


def grid_oracle(endmembers, spectrum, cfg, grid):
    """Brute-force minimizer of the augmented objective over the simplex grid."""
    delta = resolve_delta(endmembers, cfg)
    system = np.vstack([endmembers, np.full((1, endmembers.shape[1]), delta)])
    target = np.concatenate([spectrum, [delta]])
    resid = system @ grid - target[:, None]
    objectives = np.sum(resid * resid, axis=0)
    best = int(np.argmin(objectives))
    return grid[:, best], float(objectives[best])


def augmented_objective(endmembers, spectrum, s, cfg):
    delta = resolve_delta(endmembers, cfg)
    system = np.vstack([endmembers, np.full((1, endmembers.shape[1]), delta)])
    target = np.concatenate([spectrum, [delta]])
    resid = system @ s - target
    return float(resid @ resid)


def well_conditioned_instance(rng, bands=10, count=3):
    while True:
        a = rng.random((bands, count)) * 0.9 + 0.1
        if np.linalg.cond(a) < 50:
            return a


class TestFclsPixel:
    def test_pure_pixel_is_one_hot(self):
        rng = np.random.default_rng(0)
        a = well_conditioned_instance(rng, bands=12, count=4)
        for j in range(4):
            s = fcls_pixel(a, a[:, j])
            expected = np.zeros(4)
            expected[j] = 1.0
            assert np.max(np.abs(s - expected)) < 1e-8

    def test_two_member_mixture(self):
        rng = np.random.default_rng(1)
        a = well_conditioned_instance(rng, bands=10, count=3)
        x = 0.5 * a[:, 0] + 0.5 * a[:, 1]
        s = fcls_pixel(a, x)
        assert np.max(np.abs(s - [0.5, 0.5, 0.0])) < 1e-6

    def test_matches_simplex_grid_oracle(self):
        rng = np.random.default_rng(2)
        grid = simplex_grid_3()
        for _ in range(5):
            a = well_conditioned_instance(rng)
            s_true = rng.dirichlet(np.ones(3))
            x = np.maximum(a @ s_true + rng.normal(0.0, 0.01, size=10), 0.0)
            s_grid, grid_best = grid_oracle(a, x, RAW, grid)
            raw = fcls_pixel(a, x, RAW)
            assert augmented_objective(a, x, raw, RAW) <= grid_best + 1e-9
            snapped = fcls_pixel(a, x)
            assert np.max(np.abs(snapped - s_grid)) < 5e-3

    def test_matches_scipy_nnls(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = well_conditioned_instance(rng, bands=8, count=4)
            x = np.maximum(a @ rng.dirichlet(np.ones(4)) + rng.normal(0, 0.02, 8), 0.0)
            delta = resolve_delta(a, RAW)
            system = np.vstack([a, np.full((1, 4), delta)])
            target = np.concatenate([x, [delta]])
            reference, _ = scipy_nnls(system, target)
            assert np.max(np.abs(fcls_pixel(a, x, RAW) - reference)) < 1e-8

    def test_kkt_conditions_on_raw_solution(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a = well_conditioned_instance(rng, bands=15, count=5)
            x = np.maximum(a @ rng.dirichlet(np.ones(5)) + rng.normal(0, 0.02, 15), 0.0)
            s = fcls_pixel(a, x, RAW)
            assert kkt_residual(a, x, s, RAW) <= 1e-6

    def test_band_count_mismatch(self):
        a = np.array([[1.0, 0.1], [0.2, 1.0], [0.3, 0.3], [0.4, 0.2]])
        with pytest.raises(ValueError, match="band count"):
            fcls_pixel(a, np.ones(3))

    def test_negative_spectrum_rejected(self):
        a = np.eye(3)
        with pytest.raises(ValueError, match="negative"):
            fcls_pixel(a, [-0.1, 0.2, 0.3])

    def test_rank_deficient_rejected(self):
        a = np.ones((4, 2))
        with pytest.raises(ValueError, match="rank deficient"):
            fcls_pixel(a, np.ones(4))

    def test_more_signatures_than_bands_rejected(self):
        with pytest.raises(ValueError, match="underdetermined"):
            fcls_pixel(np.ones((2, 3)) + np.eye(2, 3), np.ones(2))

    def test_nonconvergence_carries_iterate(self):
        rng = np.random.default_rng(5)
        a = well_conditioned_instance(rng, bands=10, count=3)
        x = a @ rng.dirichlet(np.ones(3))
        with pytest.raises(ActiveSetError) as excinfo:
            fcls_pixel(a, x, FclsConfig(max_active_set_iters=1))
        assert excinfo.value.iterate is not None
        assert excinfo.value.iterate.shape == (3,)

    def test_far_from_simplex_warns_and_stays_raw(self):
        rng = np.random.default_rng(6)
        a = well_conditioned_instance(rng, bands=10, count=3)
        x = 10.0 * a[:, 0]
        with pytest.warns(UserWarning, match="raw solution"):
            s = fcls_pixel(a, x)
        assert abs(s.sum() - 1.0) > 0.05


class TestFclsImage:
    def test_noiseless_inversion(self):
        rng = np.random.default_rng(7)
        a = well_conditioned_instance(rng, bands=12, count=3)
        s_true = rng.dirichlet(np.ones(3), size=40).T
        recovered = fcls_image(a, mix(a, s_true))
        assert np.max(np.abs(recovered - s_true)) < 1e-6

    def test_pure_pixel_columns_are_one_hot(self):
        rng = np.random.default_rng(8)
        a = well_conditioned_instance(rng, bands=12, count=3)
        s_true = rng.dirichlet(np.ones(3), size=10).T
        s_true[:, :3] = np.eye(3)
        recovered = fcls_image(a, mix(a, s_true))
        assert np.max(np.abs(recovered[:, :3] - np.eye(3))) < 1e-8

    def test_output_validates_on_noisy_scene(self, small_scene):
        from hsunmix import validate_abundances

        abundances = fcls_image(small_scene.endmembers, small_scene.observations)
        report = validate_abundances(abundances, tol=1e-6)
        assert report.passed

    def test_mean_objective_beats_grid_oracle(self):
        rng = np.random.default_rng(9)
        grid = simplex_grid_3(step=2e-3)
        a = well_conditioned_instance(rng)
        s_true = rng.dirichlet(np.ones(3), size=100).T
        x = np.maximum(mix(a, s_true) + rng.normal(0, 0.02, (10, 100)), 0.0)
        raw = fcls_image(a, x, RAW)
        ours = np.mean([augmented_objective(a, x[:, j], raw[:, j], RAW) for j in range(100)])
        oracle = np.mean([grid_oracle(a, x[:, j], RAW, grid)[1] for j in range(100)])
        assert ours <= oracle + 1e-6

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(10)
        a = well_conditioned_instance(rng, bands=12, count=4)
        x = np.maximum(mix(a, rng.dirichlet(np.ones(4), size=20).T)
                       + rng.normal(0, 0.01, (12, 20)), 0.0)
        order = [2, 0, 3, 1]
        base = fcls_image(a, x)
        permuted = fcls_image(a[:, order], x)
        assert np.max(np.abs(permuted - base[order, :])) < 1e-10

    def test_pixel_error_carries_index(self):
        rng = np.random.default_rng(11)
        a = well_conditioned_instance(rng, bands=10, count=3)
        x = mix(a, rng.dirichlet(np.ones(3), size=4).T)
        with pytest.raises(ActiveSetError) as excinfo:
            fcls_image(a, x, FclsConfig(max_active_set_iters=1))
        assert excinfo.value.pixel == 0

    def test_auto_delta_scales_with_signatures(self):
        a = np.array([[0.2, 0.1], [0.1, 0.3]])
        assert resolve_delta(a, FclsConfig()) == pytest.approx(4.5)
        assert resolve_delta(a, FclsConfig(delta=2.0)) == 2.0
