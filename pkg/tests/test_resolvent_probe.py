import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from beam_fem import StateVector, assemble, build_mesh, g_inner, g_norm, generalized_eigenvalues
from damping_model import DampingProfile
from decay_rate_calculator import gamma_closed
from lab_errors import FitError
from resolvent_probe import (
    ResolventSample,
    ShiftedSystem,
    apply_shifted_operator,
    compare_with_rate,
    default_lambda_window,
    dense_resolvent_norm,
    fit_gamma,
    gamma_summary,
    lambda_grid,
    mesh_consistency,
    resolvent_apply,
    resolvent_norm,
    start_vector,
    sweep,
    write_sweep_csv,
)

RUN_SLOW = os.getenv("BEAM_LAB_RUN_SLOW") == "1"


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    return StateVector(
        rng.standard_normal(n) + 1j * rng.standard_normal(n),
        rng.standard_normal(n) + 1j * rng.standard_normal(n),
    )


class TestResolventApply(unittest.TestCase):

    def setUp(self):
        self.sys = assemble(build_mesh(16, grading=1.1), DampingProfile(alpha=1.0, kappa=1.0))

    def test_zero_maps_to_zero(self):
        out = resolvent_apply(self.sys, 10.0, StateVector.zeros(self.sys.n_dof, dtype=complex))
        self.assertEqual(g_norm(self.sys, out), 0.0)

    def test_inverts_shifted_operator(self):
        f = random_state(self.sys.n_dof, 1)
        for lam in (0.0, 10.0, -7.5):
            U = resolvent_apply(self.sys, lam, f)
            back = apply_shifted_operator(self.sys, lam, U)
            gap = StateVector(back.u - f.u, back.v - f.v)
            self.assertLessEqual(g_norm(self.sys, gap), 1e-8 * g_norm(self.sys, f), f"lambda={lam}")

    def test_adjoint_is_g_adjoint(self):
        shifted = ShiftedSystem(self.sys, 12.0)
        x = random_state(self.sys.n_dof, 2)
        y = random_state(self.sys.n_dof, 3)
        lhs = g_inner(self.sys, shifted.apply(x), y)
        rhs = g_inner(self.sys, x, shifted.apply_adjoint(y))
        self.assertLessEqual(abs(lhs - rhs), 1e-9 * abs(lhs))


class TestResolventNorm(unittest.TestCase):

    def setUp(self):
        self.sys = assemble(build_mesh(8), DampingProfile(alpha=1.0, kappa=1.0))

    def test_matches_dense_norm(self):
        sample = resolvent_norm(self.sys, 3.0, tol=1e-9, max_iter=2000)
        self.assertTrue(sample.converged)
        dense = dense_resolvent_norm(self.sys, 3.0)
        self.assertAlmostEqual(sample.norm / dense, 1.0, delta=1e-6)

    def test_conjugate_symmetry(self):
        plus = dense_resolvent_norm(self.sys, 3.0)
        minus = dense_resolvent_norm(self.sys, -3.0)
        self.assertAlmostEqual(minus / plus, 1.0, delta=1e-10)

        forward = resolvent_norm(self.sys, 3.0, tol=1e-8, max_iter=2000)
        backward = resolvent_norm(self.sys, -3.0, tol=1e-8, max_iter=2000)
        self.assertAlmostEqual(backward.norm / forward.norm, 1.0, delta=1e-6)

    def test_continuous_at_zero(self):
        at_zero = dense_resolvent_norm(self.sys, 0.0)
        near_zero = dense_resolvent_norm(self.sys, 1e-6)
        self.assertTrue(np.isfinite(at_zero))
        self.assertAlmostEqual(near_zero / at_zero, 1.0, delta=1e-6)

    def test_undamped_resonance(self):
        sys0 = assemble(build_mesh(8), DampingProfile(alpha=1.0, kappa=0.0))
        values, _ = generalized_eigenvalues(sys0, 1)
        sample = resolvent_norm(sys0, float(np.sqrt(values[0])))
        self.assertTrue(not sample.converged or sample.norm > 1e6, sample)

    def test_deterministic_start(self):
        a = start_vector(self.sys, 7)
        b = start_vector(self.sys, 7)
        np.testing.assert_array_equal(a.u, b.u)
        self.assertAlmostEqual(g_norm(self.sys, a), 1.0, places=12)

    def test_tolerance_range(self):
        for tol in (0.0, 1e-3):
            with self.assertRaises(ValueError):
                resolvent_norm(self.sys, 1.0, tol=tol)


class TestSweep(unittest.TestCase):

    def setUp(self):
        self.sys = assemble(build_mesh(8), DampingProfile(alpha=1.0, kappa=1.0))
        self.grid = np.linspace(1.0, 4.0, 8)

    def test_parallel_matches_serial(self):
        serial = sweep(self.sys, self.grid, jobs=1)
        parallel = sweep(self.sys, self.grid, jobs=2)

        self.assertEqual([s.lam for s in serial], list(self.grid))
        self.assertTrue(all(s.converged for s in serial))
        for a, b in zip(serial, parallel):
            self.assertEqual(a.norm, b.norm)

    def test_grid_validation(self):
        with self.assertRaises(ValueError):
            sweep(self.sys, self.grid[:5])
        with self.assertRaises(ValueError):
            sweep(self.sys, self.grid[::-1])

    def test_sweep_csv(self):
        samples = sweep(self.sys, self.grid)
        with tempfile.TemporaryDirectory() as tmp:
            frame = pd.read_csv(write_sweep_csv(samples, os.path.join(tmp, "sweep.csv")))
        self.assertEqual(list(frame.columns), ["lambda", "norm", "iterations", "converged"])
        self.assertEqual(len(frame), 8)

    def test_mesh_refinement_settles(self):
        report = mesh_consistency(DampingProfile(alpha=1.0, kappa=1.0), 3.0, [8, 16, 32], tol=1e-8)
        self.assertEqual(len(report["differences"]), 2)
        self.assertLess(report["differences"][-1], report["differences"][0])
        self.assertAlmostEqual(report["norms"][-1] / report["norms"][0], 1.0, delta=1e-2)


def power_law_samples(exponent, converged=True):
    lams = np.logspace(2, 3.5, 10)
    return [ResolventSample(lam=l, norm=l ** exponent, iterations=5, converged=converged) for l in lams]


class TestFitGamma(unittest.TestCase):

    def test_power_law(self):
        fit = fit_gamma(power_law_samples(1.5))
        self.assertAlmostEqual(fit.gamma_num, 1.5, delta=1e-9)
        self.assertLess(fit.residual, 1e-9)
        self.assertEqual(fit.n_samples, 10)

    def test_constant_norm(self):
        self.assertAlmostEqual(fit_gamma(power_law_samples(0.0)).gamma_num, 0.0, delta=1e-9)

    def test_unconverged_samples_are_excluded(self):
        samples = power_law_samples(1.0)
        samples += [ResolventSample(lam=5e3, norm=1e9, iterations=500, converged=False)]
        fit = fit_gamma(samples)
        self.assertAlmostEqual(fit.gamma_num, 1.0, delta=1e-9)
        self.assertEqual(fit.n_samples, 10)

    def test_too_few_samples(self):
        with self.assertRaises(FitError):
            fit_gamma(power_law_samples(1.0)[:5])
        with self.assertRaises(FitError):
            fit_gamma(power_law_samples(1.0, converged=False))

    def test_jagged_window_is_flagged(self):
        samples = power_law_samples(1.0)
        for i, s in enumerate(samples):
            s.norm *= np.e if i % 2 else 1.0 / np.e
        fit = fit_gamma(samples)
        self.assertGreater(fit.residual, 0.2)
        self.assertTrue(fit.trend_flagged)
        self.assertFalse(fit_gamma(power_law_samples(1.0)).trend_flagged)


class TestCompareWithRate(unittest.TestCase):

    def test_matching_exponent(self):
        report = compare_with_rate(fit_gamma(power_law_samples(1.2)), 1.0)
        self.assertAlmostEqual(report["deviation"], 0.2, delta=1e-9)
        self.assertTrue(report["matches_closed_form"])
        self.assertTrue(report["below_closed_form_bound"])

    def test_decaying_norms_respect_bound(self):
        report = compare_with_rate(fit_gamma(power_law_samples(-0.55)), 1.0)
        self.assertFalse(report["matches_closed_form"])
        self.assertTrue(report["below_closed_form_bound"])

    def test_growth_beyond_bound(self):
        report = compare_with_rate(fit_gamma(power_law_samples(1.5)), 1.0)
        self.assertFalse(report["below_closed_form_bound"])
        self.assertFalse(report["matches_closed_form"])


class TestLambdaWindow(unittest.TestCase):

    def test_clipped_on_fine_mesh(self):
        lower, upper = default_lambda_window(512)
        self.assertEqual(lower, 1e2)
        self.assertAlmostEqual(upper, 51.2 ** 2)

    def test_coarse_mesh_keeps_window(self):
        self.assertEqual(default_lambda_window(64), (1e2, 10 ** 3.5))

    def test_grid_metadata(self):
        grid, meta = lambda_grid(1e2, 10 ** 3.5, 25, n_elements=512)
        self.assertEqual(len(grid), 25)
        self.assertTrue(meta["clipped_to_mesh"])
        self.assertAlmostEqual(grid[-1], 51.2 ** 2)
        self.assertTrue(np.all(np.diff(grid) > 0))

    def test_summary_keys(self):
        sys = assemble(build_mesh(8), DampingProfile(alpha=1.0))
        fit = fit_gamma(power_law_samples(1.0))
        grid, meta = lambda_grid(1.0, 4.0, 8)
        summary = gamma_summary(fit, sys, meta, seed=3)
        for key in ("gamma_num", "lambda_window", "residual", "grid", "mesh", "profile", "seed"):
            self.assertIn(key, summary)
        self.assertEqual(summary["mesh"]["n_dof"], sys.n_dof)


@unittest.skipUnless(RUN_SLOW, "set BEAM_LAB_RUN_SLOW=1 for the fine-mesh resolvent sweep")
class TestLinearDampingGrowth(unittest.TestCase):

    def setUp(self):
        self.profile = DampingProfile(alpha=1.0, kappa=1.0)

    def test_sweep_respects_closed_form_bound(self):
        sys = assemble(build_mesh(512, grading=1.02), self.profile)
        grid, meta = lambda_grid(1e2, 10 ** 3.5, 25, n_elements=512)
        samples = sweep(sys, grid, tol=1e-6, jobs=4)

        self.assertTrue(all(s.converged for s in samples))
        self.assertTrue(all(np.isfinite(s.norm) and s.norm > 0 for s in samples))

        fit = fit_gamma(samples)
        report = compare_with_rate(fit, gamma_closed(1.0))
        # growth on the axis samples stays below the closed-form exponent
        self.assertTrue(report["below_closed_form_bound"], report)
        self.assertEqual(report["trend_flagged"], fit.residual > 0.2)
        self.assertTrue(meta["clipped_to_mesh"])

    def test_norms_agree_between_meshes(self):
        for lam in (100.0, 250.0, 600.0):
            report = mesh_consistency(self.profile, lam, [256, 512], grading=1.02, tol=1e-6)
            coarse, fine = report["norms"]
            self.assertLessEqual(abs(coarse - fine) / fine, 0.05, report)


if __name__ == "__main__":
    unittest.main()
