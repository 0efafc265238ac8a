import math
import unittest

import numpy as np
from scipy import fft as sfft

from model_core.module import (
    BesovIndex,
    Field,
    InvalidFieldError,
    ModelParams,
    PeriodicGrid,
    dealiased_evaluate,
    eval_h,
    eval_Q,
    helmholtz,
    helmholtz_inverse,
    inner_h1,
    norm_h_s,
    norm_lp,
    norm_w1inf,
    spectral_derivative,
    spectral_eval,
)

TWO_PI = 2.0 * math.pi


class TestMain(unittest.TestCase):

    def setUp(self):
        self.circle = PeriodicGrid(TWO_PI, 32)
        self.box = PeriodicGrid(40.0, 256)
        self.full = ModelParams(1.0, 3.0, 4.0, 2.0, 0.5)

    def gaussian(self, grid, amp=1.0):
        return Field.from_function(grid, lambda x: amp * np.exp(-x ** 2))

    def test_model_params(self):
        with self.assertRaises(ValueError):
            ModelParams(lambda_d=-0.1)
        with self.assertRaises(ValueError):
            ModelParams(alpha=math.inf)
        self.assertTrue(ModelParams().conservative)
        self.assertEqual(self.full.flux_degree, 4)
        self.assertEqual(ModelParams(beta=1.0).flux_degree, 3)
        self.assertEqual(ModelParams().flux_degree, 2)
        self.assertAlmostEqual(ModelParams().eta_ceiling, math.sqrt(2.0))
        self.assertAlmostEqual(self.full.kappa, 2.0)

    def test_presets(self):
        self.assertEqual(ModelParams.preset("ch").reduction(), "ch")
        self.assertEqual(ModelParams.preset("wdch").reduction(), "wdch")
        self.assertEqual(ModelParams.preset("dgh").reduction(), "dgh")
        self.assertEqual(ModelParams.preset("wdgh").reduction(), "wdgh")
        self.assertEqual(ModelParams.preset("full", 0.5), self.full)
        self.assertEqual(self.full.reduction(), "general")
        with self.assertRaises(ValueError):
            ModelParams.preset("kdv")

    def test_grid(self):
        grid = PeriodicGrid(80.0, 2048)
        self.assertAlmostEqual(grid.spacing, 80.0 / 2048)
        self.assertEqual(grid.nodes[0], -40.0)
        self.assertTrue(np.all(np.diff(grid.nodes) > 0))
        self.assertAlmostEqual(grid.nodes[-1] + grid.spacing, 40.0)
        with self.assertRaises(InvalidFieldError):
            PeriodicGrid(80.0, 1000)
        with self.assertRaises(InvalidFieldError):
            PeriodicGrid(80.0, 8)
        with self.assertRaises(InvalidFieldError):
            PeriodicGrid(0.0, 64)

    def test_field_rejects_non_finite(self):
        values = np.zeros(32)
        values[3] = np.nan
        with self.assertRaises(InvalidFieldError):
            Field(self.circle, values)
        with self.assertRaises(InvalidFieldError):
            Field(self.circle, np.zeros(31))

    def test_eval_h(self):
        zero = Field.zeros(self.circle)
        self.assertTrue(np.all(eval_h(zero, self.full).values == 0))
        one = zero.with_values(np.ones(32))
        np.testing.assert_allclose(eval_h(one, self.full).values, 5.0)
        c = zero.with_values(np.full(32, 0.7))
        self.assertTrue(np.all(eval_h(c, ModelParams()).values == 0))

    def test_helmholtz_inverse(self):
        x = self.circle.nodes
        f = Field(self.circle, np.cos(x))
        np.testing.assert_allclose(
            helmholtz_inverse(f).values, np.cos(x) / 2.0, atol=1e-14
        )
        ones = Field(self.circle, np.ones(32))
        np.testing.assert_allclose(helmholtz_inverse(ones).values, 1.0)

    def test_helmholtz_round_trip(self):
        rng = np.random.default_rng(7)
        f = Field(self.box, rng.normal(size=256))
        back = helmholtz(helmholtz_inverse(f)).values
        self.assertLess(
            np.max(np.abs(back - f.values)) / np.max(np.abs(f.values)), 1e-10
        )

    def test_spectral_derivative(self):
        x = self.circle.nodes
        u = Field(self.circle, np.sin(3 * x))
        np.testing.assert_allclose(
            spectral_derivative(u).values, 3 * np.cos(3 * x), atol=1e-12
        )
        np.testing.assert_allclose(
            spectral_derivative(u, 2).values, -9 * np.sin(3 * x), atol=1e-11
        )
        const = Field(self.circle, np.full(32, 2.5))
        np.testing.assert_allclose(
            spectral_derivative(const, 3).values, 0.0, atol=1e-14
        )
        grid = PeriodicGrid(80.0, 1024)
        g = self.gaussian(grid)
        exact = -2 * grid.nodes * np.exp(-grid.nodes ** 2)
        self.assertLess(
            np.max(np.abs(spectral_derivative(g).values - exact)), 1e-8
        )
        with self.assertRaises(ValueError):
            spectral_derivative(g, 0)

    def test_eval_Q_zero(self):
        zero = Field.zeros(self.box)
        self.assertTrue(np.all(eval_Q(zero, self.full).values == 0))

    def test_eval_Q_cosine(self):
        eps = 0.1
        x = self.circle.nodes
        u = Field(self.circle, eps * np.cos(x))
        k = 1.0
        expected = (
            eps ** 2 * k * (2 - k ** 2) * np.sin(2 * k * x)
            / (2 * (1 + 4 * k ** 2))
        )
        np.testing.assert_allclose(
            eval_Q(u, ModelParams()).values, expected, atol=1e-14
        )

    def test_eval_Q_parity(self):
        q = eval_Q(self.gaussian(self.box), self.full).values
        # node i mirrors node N - i about x = 0
        mirrored = q[1:][::-1]
        self.assertLess(np.max(np.abs(q[1:] + mirrored)), 1e-12)

    def test_eval_Q_quadratic(self):
        u = self.gaussian(self.box, 0.3)
        q1 = eval_Q(u, ModelParams()).values
        q2 = eval_Q(u.with_values(2 * u.values), ModelParams()).values
        np.testing.assert_allclose(q2, 4 * q1, rtol=1e-12, atol=1e-16)

    def test_dealiasing_drops_high_products(self):
        n = 64
        grid = PeriodicGrid(TWO_PI, n)
        u = Field(grid, np.cos(24 * grid.nodes))
        spec = dealiased_evaluate(lambda v: v ** 2, (u.spectrum(),), n, 2)
        values = sfft.irfft(spec, n=n)
        # cos^2 = (1 + cos 48x) / 2 and mode 48 lies outside the grid
        np.testing.assert_allclose(values, 0.5, atol=1e-14)

    def test_norm_h_s(self):
        u = Field(self.circle, np.sin(self.circle.nodes))
        self.assertAlmostEqual(norm_h_s(u, 1.0), math.sqrt(TWO_PI), 12)
        self.assertEqual(norm_h_s(Field.zeros(self.circle), 1.0), 0.0)
        g = self.gaussian(PeriodicGrid(80.0, 2048))
        # int e^(-2x^2) (1 + 4x^2) dx = sqrt(2 pi)
        self.assertLess(
            abs(norm_h_s(g, 1.0) ** 2 / math.sqrt(TWO_PI) - 1.0), 1e-8
        )
        self.assertAlmostEqual(norm_h_s(g, 1.0) ** 2, inner_h1(g, g), 10)

    def test_norm_lp(self):
        c = Field(self.circle, np.full(32, -2.0))
        for p in (1.0, 2.0, 3.0):
            self.assertAlmostEqual(
                norm_lp(c, p), 2.0 * TWO_PI ** (1.0 / p), 12
            )
        self.assertEqual(norm_lp(c, math.inf), 2.0)
        s = Field(self.circle, np.sin(self.circle.nodes))
        self.assertLessEqual(
            1.0 - norm_lp(s, math.inf), (math.pi / 32) ** 2 / 2
        )
        self.assertAlmostEqual(norm_lp(s, 2.0), math.sqrt(math.pi), 12)
        self.assertAlmostEqual(norm_w1inf(s), 2.0, 12)

    def test_spectral_eval(self):
        s = Field(self.circle, np.sin(self.circle.nodes))
        self.assertAlmostEqual(spectral_eval(s, 0.3), math.sin(0.3), 12)
        self.assertAlmostEqual(
            spectral_eval(s, 0.3, 1), math.cos(0.3), 12
        )
        points = np.array([-1.0, 0.25, 2.0])
        np.testing.assert_allclose(
            spectral_eval(s, points), np.sin(points), atol=1e-12
        )

    def test_besov_index(self):
        idx = BesovIndex.critical()
        self.assertEqual((idx.s, idx.p, idx.r), (1.5, 2.0, 1.0))
        self.assertEqual(BesovIndex(1.0, math.inf, 1.0).p_conjugate, 1.0)
        self.assertEqual(BesovIndex(1.0, 2.0, 1.0).p_conjugate, 2.0)
        with self.assertRaises(ValueError):
            BesovIndex(1.0, 0.5, 1.0)


if __name__ == '__main__':
    unittest.main()
