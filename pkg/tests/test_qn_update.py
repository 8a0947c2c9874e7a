import numpy as np
import pytest

from sketchqn import matcore, qn_update, sketch
from sketchqn.errors import RejectedSketch
from sketchqn.qn_update import bfgs_update, classic_bfgs_update


def random_spd(d, rng):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(0.5, 2.0, size=d)) @ q.T


def dense_update_oracle(b, h, s):
    """Direct evaluation of the update forming G = S (S'HS)^{-1} S' explicitly."""
    m = s.T @ h @ s
    g = s @ np.linalg.inv(m) @ s.T
    eye = np.eye(b.shape[0])
    return g + (eye - g @ h) @ b @ (eye - h @ g)


class TestBfgsUpdate:
    def test_inverse_hessian_is_fixed_point(self):
        rng = np.random.default_rng(0)
        h = random_spd(6, rng)
        h_inv = np.linalg.inv(h)
        for tau in (1, 3):
            s = rng.standard_normal((6, tau))
            out = bfgs_update(h_inv, s, h @ s)
            np.testing.assert_allclose(out, h_inv, atol=1e-10)

    def test_invertible_sketch_gives_newton_inverse(self):
        h = np.diag([2.0, 4.0])
        b = np.array([[5.0, 1.0], [1.0, 7.0]])
        out = bfgs_update(b, np.eye(2), h @ np.eye(2))
        np.testing.assert_allclose(out, np.diag([0.5, 0.25]), atol=1e-12)

    def test_single_coordinate_example(self):
        # frozen from the dense oracle below
        h = np.array([[2.0, 1.0], [1.0, 3.0]])
        b = np.eye(2)
        s = np.array([[1.0], [0.0]])
        expected = np.array([[0.75, -0.5], [-0.5, 1.0]])
        np.testing.assert_allclose(dense_update_oracle(b, h, s), expected, atol=1e-12)
        np.testing.assert_allclose(bfgs_update(b, s, h @ s), expected, atol=1e-12)

    def test_matches_dense_oracle_on_random_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            d = rng.integers(2, 9)
            tau = int(rng.integers(1, d + 1))
            h = random_spd(d, rng)
            b = matcore.symmetrize(rng.standard_normal((d, d)))
            s = rng.standard_normal((d, tau))
            out = bfgs_update(b, s, h @ s)
            np.testing.assert_allclose(out, dense_update_oracle(b, h, s), atol=1e-9)

    def test_sketched_secant_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            d = 12
            tau = int(rng.integers(1, 6))
            h = random_spd(d, rng)
            b = matcore.symmetrize(rng.standard_normal((d, d)))
            s = rng.standard_normal((d, tau))
            y = h @ s
            out = bfgs_update(b, s, y)
            assert np.linalg.norm(out @ y - s) <= 1e-9 * np.linalg.norm(s)

    def test_output_symmetric_and_pd_preserved(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            d = 8
            h = random_spd(d, rng)
            b = random_spd(d, rng)
            s = rng.standard_normal((d, int(rng.integers(1, 5))))
            out = bfgs_update(b, s, h @ s)
            np.testing.assert_allclose(out, out.T, atol=1e-12)
            np.linalg.cholesky(out)  # raises if update broke positive definiteness

    def test_projection_identity(self):
        # G H G = G: the sketch projector is idempotent in the H geometry
        rng = np.random.default_rng(4)
        for _ in range(20):
            d, tau = 7, 3
            h = random_spd(d, rng)
            s = rng.standard_normal((d, tau))
            g = s @ np.linalg.inv(s.T @ h @ s) @ s.T
            assert np.linalg.norm(g @ h @ g - g) <= 1e-9

    def test_rejects_indefinite_sketched_curvature(self):
        h = np.diag([1.0, -1.0])  # indefinite target
        s = np.array([[0.0], [1.0]])
        with pytest.raises(RejectedSketch):
            bfgs_update(np.eye(2), s, h @ s)

    def test_rejects_singular_sketched_curvature(self):
        s = np.array([[1.0], [0.0]])
        y = np.array([[0.0], [1.0]])  # S'Y = 0
        with pytest.raises(RejectedSketch):
            bfgs_update(np.eye(2), s, y)

    def test_per_draw_nonexpansive_in_weighted_norm(self):
        rng = np.random.default_rng(5)
        h = random_spd(10, rng)
        h_inv = np.linalg.inv(h)
        b = matcore.symmetrize(rng.standard_normal((10, 10)))
        pre = matcore.weighted_fro_norm(b - h_inv, h)
        spec = sketch.SketchSpec(kind="coord", tau=1)
        for _ in range(300):
            s = sketch.sample(spec, 10, rng)
            out = bfgs_update(b, s, h @ s)
            assert matcore.weighted_fro_norm(out - h_inv, h) <= pre * (1 + 1e-12)

    def test_constant_hessian_mean_contraction(self):
        # Monte Carlo mean of the one-step error against the enumerated rate
        rng = np.random.default_rng(6)
        d = 10
        h = random_spd(d, rng)
        h_inv = np.linalg.inv(h)
        b = h_inv + 0.3 * matcore.symmetrize(rng.standard_normal((d, d)))
        spec = sketch.SketchSpec(kind="coord", tau=1)
        sqrt_h = matcore.spd_sqrt(h)
        expected_z = np.zeros((d, d))
        for s, p in sketch.enumerate_outcomes(spec, d):
            z = sqrt_h @ s @ np.linalg.inv(s.T @ h @ s) @ s.T @ sqrt_h
            expected_z += p * z
        rho = matcore.sym_eig_min(expected_z)
        pre = matcore.weighted_fro_norm(b - h_inv, h) ** 2
        draws = 2000
        total = 0.0
        for _ in range(draws):
            s = sketch.sample(spec, d, rng)
            out = bfgs_update(b, s, h @ s)
            total += matcore.weighted_fro_norm(out - h_inv, h) ** 2
        assert total / draws <= (1 - rho) * pre * 1.1


class TestClassicBfgsUpdate:
    def test_consistent_identity_pair_is_fixed_point(self):
        e1 = np.array([1.0, 0.0])
        out, updated = classic_bfgs_update(np.eye(2), e1, e1)
        assert updated
        np.testing.assert_allclose(out, np.eye(2), atol=1e-12)

    def test_equals_sketched_update_when_y_is_hs(self):
        h = np.array([[2.0, 1.0], [1.0, 3.0]])
        s = np.array([1.0, 0.0])
        y = h @ s
        out, updated = classic_bfgs_update(np.eye(2), s, y)
        assert updated
        np.testing.assert_allclose(out, np.array([[0.75, -0.5], [-0.5, 1.0]]),
                                   atol=1e-12)

    def test_equivalence_on_random_spd_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            d = 6
            h = random_spd(d, rng)
            b = random_spd(d, rng)
            s = rng.standard_normal(d)
            y = h @ s
            classic, updated = classic_bfgs_update(b, s, y)
            assert updated
            sketched = bfgs_update(b, s[:, None], y[:, None])
            np.testing.assert_allclose(classic, sketched, atol=1e-9)

    def test_zero_curvature_skipped(self):
        s = np.array([1.0, 0.0])
        y = np.array([0.0, 1.0])  # y's = 0
        b = np.eye(2)
        out, updated = classic_bfgs_update(b, s, y)
        assert not updated
        np.testing.assert_array_equal(out, b)

    def test_negative_curvature_skipped(self):
        out, updated = classic_bfgs_update(np.eye(2), np.array([1.0, 0.0]),
                                           np.array([-1.0, 0.0]))
        assert not updated
