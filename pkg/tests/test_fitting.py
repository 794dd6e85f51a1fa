"""Levenberg-Marquardt engine and fit pipelines.

Oracles: exact linear algebra for the linear fit, the known Rosenbrock
minimum, analytic least-squares covariance for sigma calibration, and
synthetic data with known ground truth for every pipeline.
"""

import math

import numpy as np
import pytest

import scanqed.fitting as fitting
from scanqed.coupling_map import GeometryParams, surrogate_grid, g_of_position
from scanqed.fitting import (
    FitResult,
    estimate_spectrum_init,
    fit_flux_scan,
    fit_gx,
    fit_gy,
    fit_spectrum,
    lm_minimize,
    numerical_jacobian,
)
from scanqed.jc_model import JcParams, SpectrumTrace, transmission

TRUTH = JcParams(nu_r=8.342, nu_q=8.339, g=0.020, kappa=0.014, t1=2.6, amp=57.0, bg=0.2)
FREQS = np.linspace(8.282, 8.402, 401)


def fig_s1a_trace(noise_frac=0.0, rng=None):
    tr = transmission(TRUTH, FREQS)
    if noise_frac:
        vals = tr.values * (1.0 + noise_frac * rng.standard_normal(len(tr)))
        tr = SpectrumTrace(FREQS, np.clip(vals, 0.0, None))
    return tr


class TestLmMinimize:
    def test_linear_model_exact(self):
        x = np.linspace(0.0, 5.0, 30)
        y = 2.5 * x - 1.25

        def residual(p):
            return p[0] * x + p[1] - y

        res = lm_minimize(residual, {"a": 1.0, "b": 0.0})
        assert res.converged
        assert res.params["a"] == pytest.approx(2.5, abs=1e-12)
        assert res.params["b"] == pytest.approx(-1.25, abs=1e-12)
        assert res.iterations <= 8

    def test_rosenbrock_valley(self):
        # residuals (1 - x, 10 (y - x^2)) with minimum at (1, 1)
        def residual(p):
            return np.array([1.0 - p[0], 10.0 * (p[1] - p[0] ** 2)])

        res = lm_minimize(residual, [-1.2, 1.0])
        assert res.converged
        assert res.params["p0"] == pytest.approx(1.0, abs=1e-8)
        assert res.params["p1"] == pytest.approx(1.0, abs=1e-8)

    def test_sigma_calibration_quadratic(self):
        # additive Gaussian noise with known sigma: reported parameter
        # sigmas must match both the analytic covariance and the Monte
        # Carlo scatter within 30%
        rng = np.random.default_rng(17)
        x = np.linspace(-1.0, 1.0, 60)
        design = np.column_stack([x**2, x, np.ones_like(x)])
        truth = np.array([1.7, -0.4, 0.9])
        sigma_noise = 0.05
        analytic = sigma_noise * np.sqrt(np.diag(np.linalg.inv(design.T @ design)))

        fitted = []
        reported = []
        for _ in range(200):
            y = design @ truth + sigma_noise * rng.standard_normal(x.size)

            def residual(p):
                return design @ p - y

            res = lm_minimize(residual, [0.5, 0.0, 0.0])
            assert res.converged
            fitted.append([res.params[f"p{i}"] for i in range(3)])
            reported.append([res.sigmas[f"p{i}"] for i in range(3)])
        emp = np.std(np.array(fitted), axis=0, ddof=1)
        rep = np.mean(np.array(reported), axis=0)
        assert np.all(np.abs(rep - analytic) / analytic < 0.3)
        assert np.all(np.abs(emp - rep) / rep < 0.3)

    def test_monotone_descent(self):
        rng = np.random.default_rng(4)
        tr = fig_s1a_trace(0.01, rng)
        res = fit_spectrum(tr, t1_fixed=2.6)
        hist = np.array(res.cost_history)
        assert np.all(np.diff(hist) <= 0)

    def test_iteration_cap(self):
        # a cap below the iterations the fit needs yields a flagged result
        vals = fig_s1a_trace().values

        def residual(p):
            nu_r, nu_q, g, kappa, amp, bg = p
            return fitting._model_values(nu_r, nu_q, g, kappa, 2.6, amp, bg, FREQS) - vals

        res = lm_minimize(residual, [8.34, 8.34, 0.015, 0.02, 40.0, 0.0], max_iter=3)
        assert not res.converged
        assert res.iterations == 3
        assert "cap" in res.message

    def test_bounds_clip(self):
        x = np.linspace(0.0, 1.0, 20)
        y = 3.0 * x

        def residual(p):
            return p[0] * x - y

        res = lm_minimize(residual, {"a": 1.0}, bounds={"a": (0.0, 2.0)})
        assert res.params["a"] == pytest.approx(2.0, abs=1e-9)
        with pytest.raises(ValueError, match="bounds"):
            lm_minimize(residual, {"a": 5.0}, bounds={"a": (0.0, 2.0)})

    def test_nonfinite_initial_rejected(self):
        def residual(p):
            return np.array([np.nan if p[0] < 0 else p[0]])

        with pytest.raises(ValueError, match="finite"):
            lm_minimize(residual, [-1.0])

    def test_jacobian_matches_central_difference(self):
        # forward-difference Jacobian vs central difference at 10x finer
        # step, elementwise within 1e-4 relative
        rng = np.random.default_rng(8)
        vals = fig_s1a_trace().values

        def residual(p):
            nu_r, nu_q, g, kappa, amp, bg = p
            return fitting._model_values(nu_r, nu_q, g, kappa, 2.6, amp, bg, FREQS) - vals

        for _ in range(5):
            p0 = np.array([
                8.342 + rng.uniform(-5e-3, 5e-3),
                8.339 + rng.uniform(-5e-3, 5e-3),
                rng.uniform(0.015, 0.03),
                rng.uniform(0.01, 0.02),
                rng.uniform(40, 70),
                rng.uniform(0.1, 0.5),
            ])
            jac = numerical_jacobian(residual, p0)
            central = np.empty_like(jac)
            for j in range(p0.size):
                h = 0.1 * 1.5e-8 * max(abs(p0[j]), 1.0)
                xp, xm = p0.copy(), p0.copy()
                xp[j] += h
                xm[j] -= h
                central[:, j] = (residual(xp) - residual(xm)) / (2 * h)
            # elementwise at 1e-4 relative; elements far below the column's
            # derivative scale are measured against that scale instead,
            # because the finer-step reference itself carries ~1e-5
            # relative noise there (verified by stepping h through the
            # convergence plateau)
            scale = np.maximum(np.abs(central), np.abs(central).max(axis=0))
            assert np.all(np.abs(jac - central) / scale < 1e-4)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(12)
        x = np.linspace(0.0, 2.0, 40)
        y = 1.3 * np.exp(-x) + 0.2 + 0.01 * rng.standard_normal(x.size)
        perm = rng.permutation(x.size)

        def make_residual(xs, ys):
            def residual(p):
                return p[0] * np.exp(-xs) + p[1] - ys
            return residual

        r1 = lm_minimize(make_residual(x, y), [1.0, 0.0])
        r2 = lm_minimize(make_residual(x[perm], y[perm]), [1.0, 0.0])
        for k in ("p0", "p1"):
            assert abs(r1.params[k] - r2.params[k]) < 1e-10


class TestFitSpectrum:
    def test_noiseless_round_trip(self):
        res = fit_spectrum(fig_s1a_trace(), t1_fixed=2.6)
        assert res.converged
        expected = {"nu_r": 8.342, "nu_q": 8.339, "g": 0.020, "kappa": 0.014,
                    "amp": 57.0, "bg": 0.2}
        for k, v in expected.items():
            assert abs(res.params[k] - v) / v < 1e-6

    def test_explicit_init_round_trip(self):
        init = JcParams(nu_r=8.35, nu_q=8.33, g=0.015, kappa=0.02, t1=2.6,
                        amp=40.0, bg=0.1)
        res = fit_spectrum(fig_s1a_trace(), init=init)
        assert res.converged
        assert res.params["g"] == pytest.approx(0.020, rel=1e-6)

    def test_one_percent_noise_scatter(self):
        rng = np.random.default_rng(42)
        gs = []
        for _ in range(50):
            res = fit_spectrum(fig_s1a_trace(0.01, rng), t1_fixed=2.6)
            assert res.converged
            gs.append(res.params["g"])
        gs = np.array(gs)
        # paper-scale recovery: well within +-0.3 MHz of the injected value
        assert abs(gs.mean() - 0.020) < 3e-4
        assert gs.std(ddof=1) < 5e-4

    def test_degenerate_single_peak_flagged(self):
        # no real splitting: the fitted g must be tiny and statistically
        # meaningless; its sigma blows up relative to a resolved fit
        rng = np.random.default_rng(1)
        p0 = JcParams(nu_r=8.342, nu_q=7.85, g=0.0, kappa=0.014, t1=2.6,
                      amp=57.0, bg=0.2)
        vals = transmission(p0, FREQS).values
        tr = SpectrumTrace(FREQS, np.clip(vals * (1 + 0.01 * rng.standard_normal(vals.size)), 0, None))
        res = fit_spectrum(tr, t1_fixed=2.6)
        healthy = fit_spectrum(fig_s1a_trace(0.01, rng), t1_fixed=2.6)
        assert res.params["g"] < p0.kappa / 20  # no resolvable splitting
        assert res.params["g"] <= 5 * res.sigmas["g"]  # consistent with zero
        assert res.sigmas["g"] > 10 * healthy.sigmas["g"]

    def test_narrow_trace_rejected(self):
        narrow = np.linspace(8.33, 8.35, 101)
        tr = transmission(TRUTH, narrow)
        init = JcParams(nu_r=8.342, nu_q=8.342, g=0.02, kappa=0.014, t1=2.6,
                        amp=57.0, bg=0.2)
        with pytest.raises(ValueError, match="span"):
            fit_spectrum(tr, init=init)

    def test_t1_required_without_init(self):
        with pytest.raises(ValueError, match="t1_fixed"):
            fit_spectrum(fig_s1a_trace())

    def test_init_heuristic_sensible(self):
        init = estimate_spectrum_init(fig_s1a_trace(), t1=2.6)
        assert init.nu_r == pytest.approx(8.3405, abs=0.002)
        assert init.g == pytest.approx(0.020, rel=0.3)
        assert init.kappa == pytest.approx(0.014, rel=1.0)
        assert init.amp == pytest.approx(17.0, rel=0.5)  # peak height, not A
        assert init.bg == pytest.approx(0.2, abs=0.3)


class TestFitFluxScan:
    def synth_scan(self, noise=0.01, seed=3, n=7):
        rng = np.random.default_rng(seed)
        out = []
        for i, det in enumerate(np.linspace(-0.03, 0.03, n)):
            p = JcParams(nu_r=8.342, nu_q=8.342 + det, g=0.0204, kappa=0.0128,
                         t1=2.6, amp=59.0, bg=0.3)
            vals = transmission(p, FREQS).values
            if noise:
                vals = np.clip(vals * (1 + noise * rng.standard_normal(vals.size)), 0, None)
            out.append((0.35 + 0.001 * i, SpectrumTrace(FREQS, vals)))
        return out

    def test_aggregates_recover_injection(self):
        scan = fit_flux_scan(self.synth_scan(), t1_fixed=2.6)
        assert scan.n_converged == 7
        assert abs(scan.means["g"] - 0.0204) <= max(scan.stds["g"], 1e-4)
        assert scan.means["amp"] == pytest.approx(59.0, rel=0.02)
        assert scan.means["nu_r"] == pytest.approx(8.342, abs=1e-4)

    def test_identical_traces_zero_std(self):
        tr = fig_s1a_trace()
        scan = fit_flux_scan([(0.1 * i, tr) for i in range(5)], t1_fixed=2.6)
        for key in ("amp", "bg", "g", "kappa", "nu_r"):
            assert scan.stds[key] == 0.0

    def test_divergent_trace_excluded(self, monkeypatch):
        real = fitting.fit_spectrum
        calls = {"n": 0}

        def flaky(trace, init=None, t1_fixed=None):
            calls["n"] += 1
            res = real(trace, init=init, t1_fixed=t1_fixed)
            if calls["n"] == 4:
                res.converged = False
            return res

        monkeypatch.setattr(fitting, "fit_spectrum", flaky)
        scan = fit_flux_scan(self.synth_scan(n=10), t1_fixed=2.6)
        assert scan.n_total == 10
        assert scan.n_converged == 9

    def test_too_few_traces_or_converged(self, monkeypatch):
        with pytest.raises(ValueError, match="at least 3"):
            fit_flux_scan(self.synth_scan(n=2), t1_fixed=2.6)

        def always_bad(trace, init=None, t1_fixed=None):
            return FitResult(params={"amp": 1.0, "bg": 0.0, "g": 0.0,
                                     "kappa": 1.0, "nu_r": 8.0, "nu_q": 8.0},
                             sigmas={}, residual_norm=1.0, iterations=1,
                             converged=False)

        monkeypatch.setattr(fitting, "fit_spectrum", always_bad)
        with pytest.raises(RuntimeError, match="converged"):
            fit_flux_scan(self.synth_scan(n=4), t1_fixed=2.6)


L_R = 7872.0


def gx_points(gmax=0.185, x0=930.0, n=5, spacing=600.0):
    dxs = np.arange(n) * spacing
    return [(float(dx), gmax * math.sin(math.pi * (dx + x0) / L_R)) for dx in dxs]


class TestFitGx:
    def test_noiseless_recovery(self):
        res = fit_gx(gx_points(), l_r=L_R)
        assert res.converged
        assert res.params["g_max"] == pytest.approx(0.185, abs=1e-8)
        assert res.params["x0"] == pytest.approx(930.0, abs=1e-8 * L_R)

    def test_two_percent_noise(self):
        rng = np.random.default_rng(0)
        errs = []
        for _ in range(9):
            noisy = [(dx, g * (1 + 0.02 * rng.standard_normal()))
                     for dx, g in gx_points()]
            res = fit_gx(noisy, l_r=L_R)
            errs.append(abs(res.params["g_max"] - 0.185) / 0.185)
        assert np.median(errs) < 0.03

    def test_extremum_unidentifiable_x0(self):
        # all points at the sine maximum with ~5e-6 relative jitter: x0
        # carries almost no curvature there. A well-posed geometry pins
        # x0 to ~0.01 um at this noise level; here the sigma comes out
        # four orders of magnitude worse.
        pts = [(0.0, 0.185), (0.0, 0.185001), (0.0, 0.184999)]
        res_ext = fit_gx(pts, l_r=L_R)
        assert res_ext.sigmas["x0"] > 100.0

    def test_needs_two_points(self):
        with pytest.raises(ValueError, match="at least 2"):
            fit_gx([(0.0, 0.1)], l_r=L_R)


GEOM = GeometryParams(l_r=L_R, nu_r=7.6)


@pytest.fixture(scope="module")
def grid():
    return surrogate_grid()


@pytest.fixture(scope="module")
def gy_data(grid):
    ys = np.arange(-120.0, 121.0, 20.0)
    gs = [g_of_position(3330.0, float(y), 11.0, grid, GEOM) for y in ys]
    return list(zip((float(y) for y in ys), gs))


class TestFitGy:
    def test_noiseless_self_consistency(self, grid, gy_data):
        res = fit_gy(gy_data, grid, GEOM, x=3330.0)
        assert res.converged
        assert res.params["z"] == pytest.approx(11.0, abs=0.02)
        # data generated exactly on the z = 11 grid plane: residual ~ 0
        assert res.residual_norm < 1e-4

    def test_two_percent_noise(self, grid, gy_data):
        rng = np.random.default_rng(6)
        errs = []
        for _ in range(5):
            noisy = [(y, g * (1 + 0.02 * rng.standard_normal())) for y, g in gy_data]
            res = fit_gy(noisy, grid, GEOM, x=3330.0)
            errs.append(abs(res.params["z"] - 11.0))
        assert np.median(errs) < 0.5

    def test_boundary_flagged(self, grid, gy_data):
        # inflate the couplings so the best height escapes below the grid
        inflated = [(y, 3.0 * g) for y, g in gy_data]
        res = fit_gy(inflated, grid, GEOM, x=3330.0)
        assert not res.converged
        assert "boundary" in res.message

    def test_misalignment_harness(self):
        # data from the 3-degree grid; refits against 2/3/4-degree grids
        # spread by well under 0.4 um and order the same way as the
        # measured heights (smaller fitted z for larger assumed tilt)
        geom = GEOM
        grids = {deg: surrogate_grid(tilt_deg=deg) for deg in (2.0, 3.0, 4.0)}
        ys = np.arange(-100.0, 101.0, 25.0)
        data = [(float(y), g_of_position(3330.0, float(y), 11.0, grids[3.0], geom))
                for y in ys]
        fitted = {deg: fit_gy(data, grids[deg], geom, x=3330.0).params["z"]
                  for deg in (2.0, 3.0, 4.0)}
        assert fitted[3.0] == pytest.approx(11.0, abs=0.02)
        assert fitted[2.0] >= fitted[3.0] >= fitted[4.0]
        assert max(fitted.values()) - min(fitted.values()) <= 0.4
