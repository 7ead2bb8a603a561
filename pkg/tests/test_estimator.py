import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shrinkcount import (
    CountDataset,
    DomainError,
    FamilyMismatch,
    FitRequest,
    ModelFamily,
    ModelParams,
    PenaltySpec,
    UnsupportedPenalty,
    closed_form_binomial,
    fit,
    fit_penalized,
    log_likelihood,
    mle_fit,
    regularization_path,
)
from shrinkcount.estimator import penalized_objective
from shrinkcount.penalties import NONE

from .helpers import random_dataset


def pen(name, kappa=None, family=None):
    return PenaltySpec.parse(name, family, kappa)


def single(x, N=40):
    return CountDataset.from_arrays([[x]], N)


def grid_minimizer(objective, step=1e-6):
    p = np.arange(1, round(1 / step)) * step
    return p[np.argmin(objective(p))]


class TestObjective:
    def test_lambda_zero_and_none(self):
        data = CountDataset.from_arrays([[1, 3], [0, 2]], 4)
        params = ModelParams(ModelFamily.BINOMIAL, [0.3, 0.4])
        nll = -log_likelihood(params, data)
        assert penalized_objective("binomial", pen("pen2"), 0.0, params, data) == nll
        assert penalized_objective("binomial", NONE, 7.0, params, data) == nll

    def test_hand_value(self):
        data = single(1, 2)
        params = ModelParams(ModelFamily.BINOMIAL, [0.5])
        value = penalized_objective("binomial", pen("pen1"), 2.0, params, data)
        assert value == pytest.approx(-math.log(0.5) + 1.0, abs=1e-12)
        assert round(value, 6) == 1.693147

    def test_negative_lambda(self):
        with pytest.raises(DomainError):
            FitRequest("binomial", pen("pen1"), -1.0, single(3))


class TestClosedForms:
    @pytest.mark.parametrize("name", ["pen1", "pen3", "pen4", "pen5"])
    def test_lambda_zero_is_mle(self, name):
        data = CountDataset.from_arrays([[3, 5], [0, 1]], 10)
        spec = pen(name, 0.3 if name == "pen5" else None)
        assert np.array_equal(closed_form_binomial(spec, data, 0.0), [0.4, 0.05])

    def test_pen3_grid_oracle(self):
        nll = lambda p: -(20 * np.log(p) + 20 * np.log1p(-p))
        oracle = grid_minimizer(lambda p: nll(p) + 40 * -np.log1p(-p))
        assert oracle == pytest.approx(0.25, abs=1e-6)
        assert closed_form_binomial(pen("pen3"), single(20), 40.0)[0] == pytest.approx(0.25, abs=1e-15)

    def test_pen1_grid_oracle(self):
        nll = lambda p: -(20 * np.log(p) + 20 * np.log1p(-p))
        oracle = grid_minimizer(lambda p: nll(p) + 40 * p)
        assert oracle == pytest.approx(1 - math.sqrt(0.5), abs=1e-6)
        assert closed_form_binomial(pen("pen1"), single(20), 40.0)[0] == pytest.approx(1 - math.sqrt(0.5), abs=1e-14)

    def test_pen4_dominated(self):
        assert closed_form_binomial(pen("pen4"), single(20), 25.0)[0] == 0.0
        # branches meet at lam = x
        assert closed_form_binomial(pen("pen4"), single(20), 20.0)[0] == 0.0
        assert closed_form_binomial(pen("pen4"), single(20), 20.0 - 1e-9)[0] == pytest.approx(0.0, abs=1e-9)

    def test_pen5_limit(self):
        assert closed_form_binomial(pen("pen5", 0.3), single(20), 1e9)[0] == pytest.approx(0.3, abs=1e-6)

    def test_unsupported(self):
        with pytest.raises(UnsupportedPenalty):
            closed_form_binomial(pen("pen2"), single(3), 1.0)

    def test_aggregation_matches_single_draw(self):
        many = CountDataset.from_arrays([[3, 9, 0, 4]], 10)
        one = CountDataset.from_arrays([[16]], 40)
        for name in ("pen1", "pen3", "pen4", "pen5"):
            spec = pen(name, 0.6 if name == "pen5" else None)
            assert closed_form_binomial(spec, many, 7.0)[0] == closed_form_binomial(spec, one, 7.0)[0]


class TestNumericalFits:
    @pytest.mark.parametrize("name", ["pen1", "pen3", "pen4", "pen5"])
    def test_agrees_with_closed_form(self, name):
        rng = np.random.default_rng(int(name[-1]))
        spec = pen(name, 0.25 if name == "pen5" else None)
        for _ in range(10):
            data = random_dataset(rng)
            for lam in (0.0, 0.5, 7.0, 80.0, 3000.0):
                got = fit_penalized(FitRequest("binomial", spec, lam, data)).params.p
                np.testing.assert_allclose(got, closed_form_binomial(spec, data, lam), atol=1e-6)

    def test_pen2_grid_oracle(self):
        nll = lambda p: -(20 * np.log(p) + 20 * np.log1p(-p))
        oracle = grid_minimizer(lambda p: nll(p) + 40 * p * p)
        got = fit("binomial", "pen2", 40.0, single(20)).params.p[0]
        assert abs(got - oracle) <= 1e-5
        # stationarity of the cubic: x/p - (N-x)/(1-p) - 2 lam p = 0
        assert 20 / got - 20 / (1 - got) - 80 * got == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("family", ["binomial", "zib", "betabin"])
    @pytest.mark.parametrize("name", ["pen1", "pen2", "pen3", "pen5", "mean-l2", "mean-q2", "full", "none"])
    def test_lambda_zero_is_mle(self, family, name):
        if name == "full" and family == "binomial":
            pytest.skip("full shrinkage is defined for zib and betabin only")
        data = random_dataset(np.random.default_rng(21), I=4, N=25, n=30, family=family)
        spec = pen(name, 0.5 if name == "pen5" else None, family)
        got = fit_penalized(FitRequest(family, spec, 0.0, data)).params.values
        np.testing.assert_allclose(got, mle_fit(family, data).values, atol=1e-6, rtol=1e-6)

    def test_zib_symmetric_variables(self):
        counts = [0, 0, 3, 1, 0, 5, 2, 0, 1, 4]
        data = CountDataset.from_arrays([counts, counts], 20)
        r = fit("zib", "mean-l2", 5.0, data)
        assert abs(r.params.pi[0] - r.params.pi[1]) <= 1e-6
        assert abs(r.params.gamma[0] - r.params.gamma[1]) <= 1e-6

    def test_reported_objective_is_exact(self):
        data = random_dataset(np.random.default_rng(5), I=3, N=15, n=20, family="betabin")
        r = fit("betabin", "full", 0.3, data)
        assert r.objective == pytest.approx(penalized_objective("betabin", pen("full", family="betabin"), 0.3, r.params, data), abs=1e-10)

    @pytest.mark.parametrize("family,name", [("zib", "full"), ("betabin", "mean-l2"), ("binomial", "mean-q2")])
    def test_objective_descent(self, family, name):
        data = random_dataset(np.random.default_rng(6), I=5, N=30, n=25, family=family)
        spec = pen(name, None, family)
        init = mle_fit(family, data)
        from shrinkcount.count_models import clamp

        init = ModelParams(init.family, clamp(init.family, np.asarray(init.values)))
        r = fit_penalized(FitRequest(family, spec, 2.0, data, init))
        assert r.objective <= penalized_objective(family, spec, 2.0, init, data) + 1e-12

    def test_pen4_numeric_only_binomial(self):
        data = CountDataset.from_arrays([[1, 2]], 10)
        with pytest.raises(UnsupportedPenalty):
            fit("zib", "pen4", 1.0, data)

    def test_family_mismatch(self):
        with pytest.raises(FamilyMismatch):
            fit_penalized(FitRequest("zib", PenaltySpec.parse("full", "betabin"), 1.0, single(3)))

    @given(seed=st.integers(0, 2**32 - 1))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        data = random_dataset(rng, I=4, N=20, n=12, family="betabin")
        order = rng.permutation(4)
        perm = CountDataset(tuple(data.variables[i] for i in order))
        a = fit("betabin", "mean-l2", 1.5, data).params.mean
        b = fit("betabin", "mean-l2", 1.5, perm).params.mean
        np.testing.assert_allclose(b, a[order], atol=1e-6)


class TestShrinkageProperties:
    @given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(["pen1", "pen2", "pen3", "pen4"]))
    def test_monotone_in_lambda(self, seed, name):
        data = random_dataset(np.random.default_rng(seed), I=3, n=5)
        grid = [0.0, 0.1, 1.0, 5.0, 20.0, 100.0]
        path = regularization_path("binomial", pen(name), grid, data)
        p = np.array([r.params.p for r in path])
        assert np.all(np.diff(p, axis=0) <= 1e-7)

    @given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.01, 1000), name=st.sampled_from(["pen1", "pen3"]))
    def test_strictly_inside(self, seed, lam, name):
        data = random_dataset(np.random.default_rng(seed), I=3, n=5)
        phat = mle_fit("binomial", data).p
        pt = closed_form_binomial(pen(name), data, lam)
        # pen1 keeps p = 1 when every trial succeeds and lam < n*N
        pos = (phat > 0) & ((phat < 1) if name == "pen1" else True)
        assert np.all(pt[pos] > 0) and np.all(pt[pos] < phat[pos])

    @given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.0, 1e4), kappa=st.floats(0.01, 0.99))
    def test_pen5_containment(self, seed, lam, kappa):
        data = random_dataset(np.random.default_rng(seed), I=4, n=6)
        phat = mle_fit("binomial", data).p
        got = fit("binomial", pen("pen5", kappa), lam, data).params.p
        lo, hi = np.minimum(phat, kappa), np.maximum(phat, kappa)
        assert np.all(got >= lo - 1e-7) and np.all(got <= hi + 1e-7)


class TestPath:
    def test_single_point_is_mle(self):
        data = random_dataset(np.random.default_rng(1), I=3)
        path = regularization_path("binomial", pen("pen2"), [0.0], data)
        assert len(path) == 1
        np.testing.assert_allclose(path[0].params.p, mle_fit("binomial", data).p, atol=1e-9)

    def test_pen3_path_closed_form(self):
        data = random_dataset(np.random.default_rng(2), I=6)
        grid = np.concatenate([[0.0], np.logspace(-2, 4, 30)])
        for r in regularization_path("binomial", pen("pen3"), grid, data):
            np.testing.assert_allclose(r.params.p, closed_form_binomial(pen("pen3"), data, r.lam), atol=1e-6)

    def test_mean_l2_spread_shrinks(self):
        data = random_dataset(np.random.default_rng(3), I=8, N=40, n=50)
        grid = np.concatenate([[0.0], np.logspace(-2, 4, 62)])
        path = regularization_path("binomial", pen("mean-l2"), grid, data, scale=float(np.mean(data.n)))
        spread = np.array([np.ptp(r.params.p) for r in path])
        assert np.all(np.diff(spread) <= 1e-9)
        assert spread[-1] < 0.05 * spread[0]

    def test_unsorted_grid(self):
        with pytest.raises(DomainError):
            regularization_path("binomial", pen("pen2"), [1.0, 0.0], single(3))
