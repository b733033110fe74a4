import csv
import io
import json
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from polygonal.core import PolygonalParams, poly_sample
from polygonal.em import FitConfig, FitResult, fit_nested
from polygonal.selection import (
    DEFAULT_CONSTANTS,
    PenaltyConstants,
    c4,
    calibrate_kappa,
    dimension_jump,
    entropy_bound_concave,
    entropy_bound_mixture,
    j_concave,
    j_mixture,
    paper_delta_g,
    pen_shape,
    select_g,
    select_with_calibration,
    sigma_gamma,
    solve_delta_g,
)
from polygonal.validation import DomainError

mpmath.mp.dps = 40


def fake_fits(logliks):
    """FitResults carrying only the given log-likelihoods."""
    out = []
    for g, ll in enumerate(logliks, start=1):
        params = PolygonalParams(np.full(g, 1.0 / g), np.linspace(0.0, 1.0, g))
        out.append(FitResult(params, float(ll), (float(ll),), 1, True))
    return out


class TestConstants:
    def test_c4(self):
        assert c4(1) == pytest.approx(float(mpmath.log(2 * mpmath.pi * mpmath.e) / 2), abs=1e-14)
        assert c4(1) == pytest.approx(1.418939, abs=1e-6)
        assert c4(2) == pytest.approx(3.531024, abs=1e-6)
        assert all(c4(g + 1) > c4(g) for g in range(1, 100))
        with pytest.raises(DomainError):
            c4(0)

    def test_c5(self):
        ref = 4 / mpmath.power(3, mpmath.mpf(4) / 3) * mpmath.sqrt(mpmath.power(2, 0.25) + 1)
        assert DEFAULT_CONSTANTS.c5 == pytest.approx(float(ref), rel=1e-14)
        assert DEFAULT_CONSTANTS.c5 == pytest.approx(1.367860, abs=1e-6)

    def test_positive(self):
        with pytest.raises(DomainError):
            PenaltyConstants(c3=0.0)


class TestEntropyBounds:
    def test_concave(self):
        assert entropy_bound_concave(1.0) == pytest.approx(1.189207, abs=1e-6)
        assert entropy_bound_concave(0.25) == pytest.approx(2.378414, abs=1e-6)
        assert entropy_bound_concave(0.01) == pytest.approx(2 * entropy_bound_concave(0.04), rel=1e-15)
        with pytest.raises(DomainError):
            entropy_bound_concave(0.0)

    def test_mixture(self):
        assert entropy_bound_mixture(1, 3.0) == pytest.approx(3.608146, abs=1e-6)
        diff = entropy_bound_mixture(2, 0.7) - entropy_bound_mixture(1, 0.7)
        assert diff == pytest.approx((2**0.25 + 1) * math.sqrt(3 / 0.7) + c4(2) - c4(1), rel=1e-14)

    def test_mixture_g4(self):
        # 4 * (2^(1/4) + 1) * 10 + c4(4), evaluated independently
        ref = 4 * (mpmath.power(2, 0.25) + 1) * 10 + mpmath.log(4) + 2 * mpmath.log(2 * mpmath.pi * mpmath.e)
        assert entropy_bound_mixture(4, 0.03) == pytest.approx(float(ref), rel=1e-13)
        assert entropy_bound_mixture(4, 0.03) == pytest.approx(94.6300, abs=1e-3)


class TestJFunctions:
    def test_j_concave_examples(self):
        assert j_concave(1.0) == pytest.approx(2 ** (17 / 8) / 3, rel=1e-15)
        assert j_concave(1.0) == pytest.approx(1.454, abs=1e-3)
        assert j_concave(1e-6) > 1e-6
        with pytest.raises(DomainError):
            j_concave(1.5)

    @pytest.mark.parametrize("delta", [1e-4, 0.01, 0.3, 1.0])
    def test_j_concave_is_entropy_integral(self, delta):
        val, _ = integrate.quad(lambda e: math.sqrt(entropy_bound_concave(e)), 0, delta, epsabs=1e-14)
        assert val == pytest.approx(2 ** (17 / 8) / 3 * delta**0.75, abs=1e-8)

    def test_j_mixture_example(self):
        assert j_mixture(1.0, 1) == pytest.approx(2.559, abs=1e-3)

    def test_j_mixture_monotone(self):
        deltas = np.logspace(-8, 3, 400)
        for g in range(1, 6):
            vals = np.array([j_mixture(d, g) for d in deltas])
            assert (np.diff(vals) > 0).all()
            assert (np.diff(vals / deltas) <= 1e-15 * vals[1:] / deltas[1:]).all()
        assert all(j_mixture(0.3, g + 1) > j_mixture(0.3, g) for g in range(1, 20))

    def test_j_mixture_leading_constant_against_integral(self):
        """The entropy integral's leading term is 4 / 3^(3/4); the implemented one is 4 / 3^(4/3)."""
        g, delta = 2, 0.05
        lead_sq = g * (2**0.25 + 1)
        val, _ = integrate.quad(lambda e: math.sqrt(lead_sq * math.sqrt(3 / e)), 0, delta, epsabs=1e-15)
        from_integral = val / (math.sqrt(lead_sq) * delta**0.75)
        assert from_integral == pytest.approx(4 / 3**0.75, rel=1e-8)
        assert from_integral / (4 / 3 ** (4 / 3)) == pytest.approx(3 ** (7 / 12), rel=1e-8)


class TestDelta:
    @pytest.mark.parametrize("n", [100, 1000, 10_000])
    @pytest.mark.parametrize("g", range(1, 6))
    def test_residual(self, n, g):
        d = solve_delta_g(n, g)
        lhs = math.sqrt(n) * d * d
        assert abs(lhs - j_mixture(d, g)) <= 1e-10 * lhs

    def test_monotone_in_n_and_g(self):
        ns = [100, 300, 1000, 3000, 10_000]
        for g in range(1, 6):
            ds = [solve_delta_g(n, g) for n in ns]
            assert all(a > b for a, b in zip(ds, ds[1:]))
        for n in ns:
            ds = [solve_delta_g(n, g) for g in range(1, 6)]
            assert all(a < b for a, b in zip(ds, ds[1:]))

    def test_closed_form_value(self):
        c5 = 4 / mpmath.power(3, mpmath.mpf(4) / 3) * mpmath.sqrt(mpmath.power(2, 0.25) + 1)
        root_c4 = mpmath.sqrt(mpmath.log(2 * mpmath.pi * mpmath.e) / 2)
        ref = mpmath.power(c5 / (100 - root_c4) ** 3, mpmath.mpf(4) / 3)
        assert paper_delta_g(10_000, 1) == pytest.approx(float(ref), rel=1e-12)
        assert paper_delta_g(10_000, 1) == pytest.approx(1.5930e-8, rel=1e-4)

    def test_closed_form_precondition(self):
        with pytest.raises(DomainError):
            paper_delta_g(1, 2)

    def test_closed_form_differs_from_root(self):
        for n in (1000, 10_000):
            for g in (1, 3):
                closed = paper_delta_g(n, g)
                root = solve_delta_g(n, g)
                assert math.sqrt(n) * closed**2 != pytest.approx(j_mixture(closed, g), rel=1e-3)
                assert closed != pytest.approx(root, rel=1e-3)


class TestPenaltyShape:
    def test_linear_term(self):
        exact_first = solve_delta_g(300, 3) ** 2
        assert pen_shape(3, 300) - exact_first == pytest.approx(0.01, abs=1e-15)
        closed_first = (math.sqrt(3) / (math.sqrt(300) - math.sqrt(c4(3))) ** 3) ** (8 / 3)
        assert pen_shape(3, 300, mode="closed_form") == pytest.approx(closed_first + 0.01, rel=1e-14)

    @pytest.mark.parametrize("mode", ["solved", "closed_form"])
    def test_increasing_in_g(self, mode):
        for n in (100, 1000, 5000):
            vals = [pen_shape(g, n, mode=mode) for g in range(1, 8)]
            assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_large_n_limit_closed_form(self):
        n = 10**8
        for g in (1, 4):
            assert pen_shape(g, n, mode="closed_form") == pytest.approx(g / n, rel=1e-2)

    def test_large_n_limit_solved(self):
        # delta_g^2 decays like n^(-4/5): it vanishes, but more slowly than g / n
        for g in (1, 4):
            excess = [pen_shape(g, n) - g / n for n in (10**4, 10**6, 10**8)]
            assert all(a > b for a, b in zip(excess, excess[1:]))
            assert excess[-1] < 1e-5
        far = [solve_delta_g(n, g) ** 2 for n in (10**10, 10**12)]
        assert math.log(far[1] / far[0]) / math.log(100) == pytest.approx(-0.8, abs=0.02)

    def test_errors(self):
        with pytest.raises(DomainError):
            pen_shape(2, 3)
        with pytest.raises(DomainError):
            pen_shape(2, 100, mode="other")


class TestSigma:
    def test_identity(self):
        for gamma in range(1, 51):
            ref = sum(math.exp(-g) for g in range(1, gamma + 1))
            assert abs(sigma_gamma(gamma) - ref) <= 1e-14

    def test_values(self):
        assert sigma_gamma(1) == pytest.approx(0.367879, abs=1e-6)
        assert sigma_gamma(200) == pytest.approx(1 / (math.e - 1), abs=1e-14)
        with pytest.raises(DomainError):
            sigma_gamma(0)


class TestSelect:
    LL = [-10.0, 5.0, 7.0, 7.5, 7.6]

    def test_infinite_multiplier(self):
        assert select_g(fake_fits(self.LL), 1000, math.inf).chosen_g == 1

    def test_zero_multiplier(self):
        assert select_g(fake_fits(self.LL), 1000, 0.0).chosen_g == 5
        assert select_g(fake_fits([-1.0, 2.0, 2.0]), 1000, 0.0).chosen_g == 2

    def test_shift_invariance(self):
        for kappa in (0.01, 0.1, 1.0, 10.0):
            a = select_g(fake_fits(self.LL), 1000, kappa).chosen_g
            b = select_g(fake_fits(np.array(self.LL) + 1234.5), 1000, kappa).chosen_g
            assert a == b

    def test_criterion(self):
        res = select_g(fake_fits(self.LL), 1000, 0.5)
        pens = [pen_shape(g, 1000) for g in range(1, 6)]
        expected = -np.array(self.LL) / 1000 + 0.5 * np.array(pens)
        np.testing.assert_allclose(res.criterion, expected, rtol=1e-14)
        assert res.chosen_g == int(np.argmin(expected)) + 1

    def test_small_n_excludes_with_warning(self):
        with pytest.warns(UserWarning, match="g=3 excluded"):
            res = select_g(fake_fits([0.0, 1.0, 2.0]), 5, 0.0)
        assert res.chosen_g == 2

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            select_g([], 100, 1.0)
        with pytest.raises(DomainError):
            select_g(fake_fits(self.LL)[1:], 100, 1.0)
        with pytest.raises(DomainError):
            select_g(fake_fits(self.LL), 100, -1.0)

    def test_serialization(self):
        res = select_with_calibration(fake_fits(self.LL), 1000)
        data = json.loads(res.to_json())
        assert data["chosen_g"] == res.chosen_g
        assert data["kappa_prime"] == res.kappa_prime
        assert [m["g"] for m in data["models"]] == [1, 2, 3, 4, 5]
        assert set(data["models"][0]) >= {"loglik", "pen_shape", "crit"}
        rows = list(csv.DictReader(io.StringIO(res.path_csv())))
        assert len(rows) == 1000
        assert set(rows[0]) == {"kappa", "g_hat"}
        with pytest.raises(DomainError):
            select_g(fake_fits(self.LL), 1000, 1.0).path_csv()


class TestCalibration:
    @pytest.mark.parametrize("kappa0", [0.05, 1.0, 30.0])
    def test_recovers_constructed_multiplier(self, kappa0):
        n = 2000
        pens = np.array([pen_shape(g, n) for g in range(1, 6)])
        fits = fake_fits(n * (kappa0 / 2) * pens)
        kappa = calibrate_kappa(fits, n)
        assert 1.0 <= kappa / kappa0 <= 1.03

    def test_path_non_increasing(self):
        s = poly_sample(PolygonalParams([0.5, 0.5], [0.2, 0.8]), 800, seed=3)
        fits = fit_nested(s, 5, FitConfig(g=1, restarts=2, seed=1))
        grid, path, jump = dimension_jump(fits, s.n)
        assert (np.diff(path) <= 0).all()
        ll = [f.loglik for f in fits]
        assert path[0] == int(np.argmax(ll)) + 1 and path[-1] == 1
        assert grid[0] < jump < grid[-1]

    def test_no_jump(self):
        with pytest.raises(ArithmeticError):
            calibrate_kappa(fake_fits([1.0, 1.0, 1.0]), 500)

    def test_deterministic(self):
        fits = fake_fits([-10.0, 5.0, 7.0, 7.5, 7.6])
        assert calibrate_kappa(fits, 1000) == calibrate_kappa(fits, 1000)
