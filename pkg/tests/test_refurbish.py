import numpy as np
import numpy.testing as npt
import pytest

from robustlr.refurbish import pseudo_label, refurbish, sharpen, uniformity_reg


def _random_simplex(rng, shape):
    raw = rng.random(shape) + 1e-4
    return raw / raw.sum(axis=-1, keepdims=True)


def _one_hot(idx, c):
    out = np.zeros(c)
    out[idx] = 1.0
    return out


class TestSharpen:
    def test_temperature_one_is_identity(self):
        p = np.array([0.3, 0.7])
        npt.assert_array_equal(sharpen(p, 1.0), p)

    def test_half_temperature_squares_and_renormalizes(self):
        out = sharpen(np.array([0.8, 0.2]), 0.5)
        npt.assert_allclose(out, [0.64 / 0.68, 0.04 / 0.68], atol=1e-12)
        npt.assert_allclose(out, [0.9412, 0.0588], atol=1e-3)

    @pytest.mark.parametrize("c", [2, 5])
    @pytest.mark.parametrize("t", [0.25, 1.0, 3.0])
    def test_uniform_is_fixed_point(self, c, t):
        u = np.full(c, 1.0 / c)
        npt.assert_allclose(sharpen(u, t), u, atol=1e-12)

    def test_one_hot_is_fixed_point(self):
        e = _one_hot(2, 4)
        npt.assert_array_equal(sharpen(e, 0.5), e)

    def test_rank_preservation(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            p = _random_simplex(rng, 6)
            t = float(rng.uniform(0.1, 5.0))
            npt.assert_array_equal(np.argsort(sharpen(p, t)), np.argsort(p))

    def test_low_temperature_boosts_max_entry(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = _random_simplex(rng, 4)
            if np.isclose(p.max(), p).sum() > 1:
                continue
            assert sharpen(p, 0.5).max() > p.max()

    def test_output_in_simplex(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            out = sharpen(_random_simplex(rng, 5), float(rng.uniform(0.05, 4)))
            assert np.all(out >= 0)
            assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_invalid_temperature(self):
        with pytest.raises(ValueError):
            sharpen(np.array([0.5, 0.5]), 0.0)


class TestPseudoLabel:
    def test_agreeing_one_hots_are_fixed(self):
        e = _one_hot(1, 3)
        npt.assert_array_equal(pseudo_label(e, e, 0.5), e)

    def test_plain_average_at_t1(self):
        out = pseudo_label(np.array([0.6, 0.4]), np.array([0.2, 0.8]), 1.0)
        npt.assert_allclose(out, [0.4, 0.6], atol=1e-12)

    def test_average_then_sharpen(self):
        out = pseudo_label(np.array([0.6, 0.4]), np.array([0.2, 0.8]), 0.5)
        npt.assert_allclose(out, [0.16 / 0.52, 0.36 / 0.52], atol=1e-12)
        npt.assert_allclose(out, [0.3077, 0.6923], atol=1e-3)

    def test_symmetry_in_arguments(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = _random_simplex(rng, 4)
            b = _random_simplex(rng, 4)
            t = float(rng.uniform(0.2, 3))
            npt.assert_allclose(pseudo_label(a, b, t), pseudo_label(b, a, t), atol=1e-12)


class TestRefurbish:
    def test_w_one_returns_observed_exactly(self):
        obs = _one_hot(0, 3)
        pseudo = np.array([0.2, 0.5, 0.3])
        npt.assert_array_equal(refurbish(obs, pseudo, 1.0), obs)

    def test_w_zero_returns_pseudo_exactly(self):
        obs = _one_hot(1, 3)
        pseudo = np.array([0.2, 0.5, 0.3])
        npt.assert_array_equal(refurbish(obs, pseudo, 0.0), pseudo)

    def test_hand_computed_blend(self):
        out = refurbish(np.array([1.0, 0.0]), np.array([0.2, 0.8]), 0.7)
        npt.assert_allclose(out, [0.76, 0.24], atol=1e-12)

    def test_entrywise_betweenness(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            obs = _one_hot(int(rng.integers(4)), 4)
            pseudo = _random_simplex(rng, 4)
            w = float(rng.random())
            out = refurbish(obs, pseudo, w)
            lo = np.minimum(obs, pseudo) - 1e-12
            hi = np.maximum(obs, pseudo) + 1e-12
            assert np.all(out >= lo) and np.all(out <= hi)

    def test_batched_with_confidence_vector(self):
        obs = np.eye(3)
        pseudo = np.full((3, 3), 1.0 / 3)
        w = np.array([1.0, 0.0, 0.5])
        out = refurbish(obs, pseudo, w)
        npt.assert_array_equal(out[0], obs[0])
        npt.assert_array_equal(out[1], pseudo[1])
        npt.assert_allclose(out[2], [1 / 6, 1 / 6, 1 / 6 + 0.5], atol=1e-12)

    def test_out_of_range_confidence_rejected(self):
        with pytest.raises(ValueError):
            refurbish(_one_hot(0, 2), np.array([0.5, 0.5]), 1.5)
        with pytest.raises(ValueError):
            refurbish(_one_hot(0, 2), np.array([0.5, 0.5]), -0.1)

    def test_output_sums_exactly_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            out = refurbish(
                _one_hot(int(rng.integers(5)), 5), _random_simplex(rng, 5), float(rng.random())
            )
            assert out.sum() == pytest.approx(1.0, abs=1e-15)


class TestUniformityReg:
    def test_uniform_mean_gives_zero(self):
        assert uniformity_reg(np.full(4, 0.25)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_binary_case(self):
        expected = 0.5 * (np.log(0.5 / 0.9) + np.log(0.5 / 0.1))
        assert uniformity_reg(np.array([0.9, 0.1])) == pytest.approx(expected, abs=1e-12)
        assert uniformity_reg(np.array([0.9, 0.1])) == pytest.approx(0.5108, abs=1e-4)

    def test_grows_toward_vertex(self):
        u = np.full(3, 1.0 / 3)
        vertex = np.array([1.0, 0.0, 0.0])
        values = [
            uniformity_reg((1 - a) * u + a * vertex) for a in (0.0, 0.25, 0.5, 0.75, 0.99)
        ]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_non_negative(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            assert uniformity_reg(_random_simplex(rng, 6)) >= 0.0
