import numpy as np
import pytest

from hsunmix import NoiseSpec, add_noise, cost, init_from_vca, mix, sad, vca
from hsunmix.metrics import match_endmembers


def vertex_scene(rng, bands=20, count=4, interior=60):
    """Noiseless columns: the simplex vertices plus interior mixtures."""
    vertices = rng.random((bands, count)) * 0.9 + 0.1
    weights = rng.dirichlet(np.ones(count) * 4.0, size=interior).T
    x = np.hstack([vertices, vertices @ weights])
    return x, vertices


class TestVca:
    def test_recovers_simplex_vertices(self):
        rng = np.random.default_rng(0)
        x, vertices = vertex_scene(rng)
        result = vca(x, 4, seed=1)
        assert sorted(result.pixel_indices) == [0, 1, 2, 3]
        assert np.array_equal(result.endmembers, x[:, list(result.pixel_indices)])

    def test_single_endmember_is_extreme_pixel(self):
        rng = np.random.default_rng(1)
        x = rng.random((8, 30)) + 0.1
        centered = x - x.mean(axis=1, keepdims=True)
        direction = np.linalg.svd(centered @ centered.T, hermitian=True)[0][:, 0]
        expected = int(np.argmax(np.abs(direction @ centered)))
        result = vca(x, 1, seed=0)
        assert result.pixel_indices == (expected,)
        assert result.projection_rank == 1

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(2)
        x, _ = vertex_scene(rng, count=3)
        first = vca(x, 3, seed=7)
        second = vca(x, 3, seed=7)
        assert first.pixel_indices == second.pixel_indices
        assert np.array_equal(first.endmembers, second.endmembers)

    def test_endmembers_are_data_columns(self, small_scene):
        result = vca(small_scene.observations, 6, seed=3)
        assert len(set(result.pixel_indices)) == 6
        for rank, index in enumerate(result.pixel_indices):
            assert np.array_equal(result.endmembers[:, rank],
                                  small_scene.observations[:, index])

    def test_pixel_permutation_relabels_indices(self):
        rng = np.random.default_rng(3)
        x, _ = vertex_scene(rng, count=3, interior=40)
        order = rng.permutation(x.shape[1])
        base = vca(x, 3, seed=5)
        shuffled = vca(x[:, order], 3, seed=5)
        base_cols = {tuple(x[:, i]) for i in base.pixel_indices}
        shuffled_cols = {tuple(x[:, order][:, i]) for i in shuffled.pixel_indices}
        assert base_cols == shuffled_cols

    def test_rank_gate(self):
        x = np.outer(np.ones(5), np.linspace(0.1, 1.0, 12))  # rank 1
        with pytest.raises(ValueError, match="rank"):
            vca(x, 2, seed=0)

    def test_count_gate(self):
        with pytest.raises(ValueError, match="endmember_count"):
            vca(np.ones((3, 5)) + np.eye(3, 5), 4, seed=0)

    def test_low_purity_scene_mean_sad(self, library):
        # 2% pure pixels, 40 dB: the selected pixels should stay close to
        # the true signatures on average across seeds.
        names = library.names[:3]
        a = np.column_stack([library.column(n) for n in names])
        angles = []
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            pixels = 2000
            s = rng.dirichlet(np.ones(3), size=pixels).T
            pure = rng.choice(pixels, size=int(0.02 * pixels), replace=False)
            s[:, pure] = np.eye(3)[:, rng.integers(0, 3, size=pure.size)]
            x = add_noise(mix(a, s), NoiseSpec(40.0, seed=seed))
            result = vca(x, 3, seed=seed)
            perm = match_endmembers(a, result.endmembers)
            angles.extend(
                sad(a[:, perm[j]], result.endmembers[:, j]) for j in range(3)
            )
        assert np.mean(angles) < 0.05


class TestInitFromVca:
    def test_strictly_positive_factors(self, small_scene):
        basis, coeffs = init_from_vca(small_scene.observations, 6, seed=0)
        assert basis.min() >= 1e-9
        assert coeffs.min() >= 1e-9

    def test_near_zero_cost_on_pure_scene(self):
        rng = np.random.default_rng(4)
        x, _ = vertex_scene(rng, bands=15, count=3, interior=50)
        basis, coeffs = init_from_vca(x, 3, seed=1)
        assert cost(x, basis, coeffs) < 1e-6 * float(np.sum(x * x))

    def test_reproducible_bitwise(self, small_scene):
        first = init_from_vca(small_scene.observations, 6, seed=9)
        second = init_from_vca(small_scene.observations, 6, seed=9)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])
