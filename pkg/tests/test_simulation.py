import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from shrinkcount import ConfigError, DomainError, ModelFamily, ModelParams, PenaltySpec
from shrinkcount.simulation import (
    SHAPES,
    ShapeSpec,
    SimConfig,
    bundled_configs,
    expected_count_summary,
    generate_dataset,
    load_config,
    mse_ratio_study,
    parse_config_text,
    replicate_rng,
    run_replicate,
    sample_scaled_beta,
    sample_true_params,
    ssd,
)

SMALL_GRID = np.concatenate([[0.0], np.logspace(-2, 4, 9)])


def small_config(family="binomial", penalties=("mean-l2",), K=4, **kw):
    fam = ModelFamily.parse(family)
    secondary = {"binomial": None, "zib": ShapeSpec("bell", 0.2, 0.3), "betabin": ShapeSpec("bell", 2, 10)}[family]
    return SimConfig(
        family=fam, primary=ShapeSpec("bell", 0.05, 0.10), secondary=secondary,
        penalties=tuple(PenaltySpec.parse(p, fam) for p in penalties),
        I=4, N=20, n=20, K=K, V=5, master_seed=3, grid=SMALL_GRID, **kw,
    )


class TestScaledBeta:
    @pytest.mark.parametrize("shape", sorted(SHAPES))
    def test_inside_bounds(self, shape, rng):
        x = sample_scaled_beta(ShapeSpec(shape, 0.2, 0.45), 10_000, rng)
        assert np.all((x > 0.2) & (x < 0.45))

    def test_skew_mean(self, rng):
        spec = ShapeSpec("skew", 0.01, 0.05)
        x = sample_scaled_beta(spec, 1_000_000, rng)
        assert spec.mean() == pytest.approx(0.01 + 0.04 * 2 / 7, rel=1e-14)
        band = 3 * math.sqrt(spec.var() / x.size)
        assert abs(x.mean() - 0.021429) < band + 5e-7
        assert 40 * spec.mean() == pytest.approx(0.857, abs=5e-4)

    def test_flat_mean(self, rng):
        spec = ShapeSpec("flat", 0.30, 0.50)
        x = sample_scaled_beta(spec, 1_000_000, rng)
        assert abs(x.mean() - 0.40) < 3 * math.sqrt(spec.var() / x.size)
        assert 40 * spec.mean() == pytest.approx(16.0, abs=1e-12)

    def test_shape_table(self):
        assert SHAPES == {"skew": (2.0, 5.0), "flat": (1.25, 1.25), "bell": (10.0, 10.0)}

    @pytest.mark.parametrize("shape", sorted(SHAPES))
    def test_distribution_matches_beta(self, shape):
        rng = np.random.default_rng(5)
        spec = ShapeSpec(shape, 0.1, 0.3)
        u = (sample_scaled_beta(spec, 20_000, rng) - 0.1) / 0.2
        assert stats.kstest(u, stats.beta(*SHAPES[shape]).cdf).pvalue > 1e-3

    def test_bad_specs(self):
        with pytest.raises(DomainError):
            ShapeSpec("wide", 0.1, 0.2)
        with pytest.raises(DomainError):
            ShapeSpec("bell", 0.3, 0.2)


class TestGenerate:
    def test_binomial_zero(self, rng):
        d = generate_dataset("binomial", ModelParams(ModelFamily.BINOMIAL, np.zeros((3, 1))), 40, 50, rng)
        assert all(c == 0 for v in d.variables for c in v.counts)

    def test_zib_almost_all_inflated(self, rng):
        params = ModelParams(ModelFamily.ZIB, np.array([[0.5, 1 - 1e-9]] * 3))
        d = generate_dataset("zib", params, 40, 200, rng)
        assert all(c == 0 for v in d.variables for c in v.counts)

    def test_betabin_uniform(self):
        rng = np.random.default_rng(21)
        params = ModelParams(ModelFamily.BETABIN, np.array([[1.0, 1.0]]))
        d = generate_dataset("betabin", params, 10, 100_000, rng)
        pmf = np.bincount(d.variables[0].counts, minlength=11) / 100_000
        np.testing.assert_allclose(pmf, 1 / 11, atol=0.005)

    def test_zib_zero_rate(self):
        rng = np.random.default_rng(8)
        pi, gam, N = 0.1, 0.3, 12
        d = generate_dataset("zib", ModelParams(ModelFamily.ZIB, np.array([[pi, gam]])), N, 200_000, rng)
        zeros = np.mean(np.asarray(d.variables[0].counts) == 0)
        assert zeros == pytest.approx(gam + (1 - gam) * (1 - pi) ** N, abs=4e-3)

    def test_shapes(self, rng):
        d = generate_dataset("binomial", ModelParams(ModelFamily.BINOMIAL, np.full((4, 1), 0.3)), 40, 7, rng)
        assert d.I == 4 and list(d.n) == [7] * 4 and list(d.N) == [40] * 4


class TestTrueParams:
    def test_betabin_recovers_p_and_nu(self, rng):
        cfg = small_config("betabin")
        truth = sample_true_params(cfg, rng)
        a, b = truth.values[:, 0], truth.values[:, 1]
        p = a / (a + b)
        nu = (a + b + cfg.N) / (a + b + 1)
        assert np.all((p > 0.05) & (p < 0.10))
        assert np.all((nu > 2) & (nu < 10))

    def test_zib_p_bounds(self, rng):
        cfg = replace(small_config("zib"), zib_primary="p")
        truth = sample_true_params(cfg, rng)
        p = truth.mean
        assert np.all((p > 0.05) & (p < 0.10))
        assert np.all(truth.values[:, 0] > p)

    def test_zib_p_bounds_must_keep_pi_below_one(self):
        with pytest.raises(ConfigError, match="pi stays below 1"):
            replace(small_config("zib"), primary=ShapeSpec("bell", 0.5, 0.8), zib_primary="p")

    def test_zib_draws_pi_and_gamma(self, rng):
        truth = sample_true_params(small_config("zib"), rng)
        assert np.all((truth.values[:, 0] > 0.05) & (truth.values[:, 0] < 0.10))
        assert np.all((truth.values[:, 1] > 0.2) & (truth.values[:, 1] < 0.3))


class TestSSD:
    def test_identical(self):
        assert ssd([0.1, 0.5], [0.1, 0.5]) == 0.0

    def test_example(self):
        assert ssd([0.1, 0.2], [0.2, 0.2]) == pytest.approx(0.01, abs=1e-17)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            ssd([0.1], [0.1, 0.2])

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=20))
    def test_matches_resummation(self, pairs):
        a, b = zip(*pairs)
        assert ssd(a, b) == pytest.approx(math.fsum((x - y) ** 2 for x, y in pairs), rel=1e-12, abs=1e-300)

    @given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=30), st.integers(1, 20), st.integers(1, 500))
    def test_ratio_invariant_to_averaging(self, sq, I, K):
        # numerator and denominator scaled by 1/(I K) give the same ratio
        num, den = sum(sq[::2]), sum(sq[1::2])
        assert (num / (I * K)) / (den / (I * K)) == pytest.approx(num / den, rel=1e-12)


class TestExpectedSummary:
    @pytest.mark.parametrize("shape,a,b,expected", [
        ("skew", 0.01, 0.05, 0.857), ("flat", 0.01, 0.05, 1.200), ("skew", 0.01, 0.10, 1.429),
        ("flat", 0.01, 0.10, 2.200), ("skew", 0.30, 0.50, 14.286), ("flat", 0.30, 0.50, 16.000),
        ("skew", 0.08, 0.20, 4.571), ("bell", 0.08, 0.20, 5.600), ("skew", 0.31, 0.35, 12.857),
        ("bell", 0.31, 0.35, 13.200),
    ])
    def test_binomial_mean(self, shape, a, b, expected):
        cfg = SimConfig(ModelFamily.BINOMIAL, ShapeSpec(shape, a, b), penalties=(PenaltySpec.parse("pen2"),))
        assert round(expected_count_summary(cfg)[0], 3) == expected

    def test_zib_row_four(self):
        cfg = SimConfig(ModelFamily.ZIB, ShapeSpec("skew", 0.05, 0.06), ShapeSpec("skew", 0.2, 0.7),
                        penalties=(PenaltySpec.parse("pen2", "zib"),))
        assert round(expected_count_summary(cfg)[0], 3) == 1.389

    @pytest.mark.parametrize("family,zib_primary", [("binomial", "pi"), ("zib", "pi"), ("zib", "p"), ("betabin", "pi")])
    def test_matches_monte_carlo(self, family, zib_primary):
        cfg = replace(small_config(family), zib_primary=zib_primary)
        rng = np.random.default_rng(31)
        xs = []
        for _ in range(4000):
            truth = sample_true_params(cfg, rng)
            xs.append(np.asarray([v.counts for v in generate_dataset(family, truth, cfg.N, 5, rng).variables]))
        x = np.concatenate([a.ravel() for a in xs])
        ex, sd = expected_count_summary(cfg)
        assert x.mean() == pytest.approx(ex, rel=0.02)
        assert x.std() == pytest.approx(sd, rel=0.03)


class TestStudy:
    def test_none_only_gives_exact_ones(self):
        rep = mse_ratio_study(small_config(penalties=("none",), K=3), workers=1)
        assert rep.ratios["none"]["p"] == 1.0
        assert rep.ratios["mle"]["p"] == 1.0

    def test_none_only_zib_all_params(self):
        rep = mse_ratio_study(small_config("zib", penalties=("none",), K=2), workers=1)
        assert set(rep.params) == {"p", "pi", "gamma"}
        assert all(v == 1.0 for v in rep.ratios["none"].values())

    def test_mincv_row_present_with_several_penalties(self):
        rep = mse_ratio_study(small_config(penalties=("pen2", "mean-l2"), K=2), workers=1)
        assert rep.estimators == ["mle", "pen2", "mean-l2", "mincv"]
        best = min(rep.ratio("pen2"), rep.ratio("mean-l2"))
        assert rep.ratio("mincv") > 0 and best > 0
        assert sum(rep.mincv_choices.values()) == 2

    def test_independent_of_worker_count(self):
        cfg = small_config("zib", penalties=("pen2", "mean-l2"), K=4)
        serial = mse_ratio_study(cfg, workers=1)
        pooled = mse_ratio_study(cfg, workers=2)
        assert serial.ratios == pooled.ratios
        assert serial.lambda_opt == pooled.lambda_opt

    def test_env_var_caps_workers(self, monkeypatch):
        from shrinkcount.simulation import _worker_count

        monkeypatch.setenv("SHRINKCOUNT_THREADS", "3")
        assert _worker_count(None) == 3
        assert _worker_count(1) == 1

    def test_replicate_streams(self):
        a = replicate_rng(5, 2).random(3)
        assert np.array_equal(a, replicate_rng(5, 2).random(3))
        assert not np.array_equal(a, replicate_rng(5, 3).random(3))
        assert not np.array_equal(a, replicate_rng(6, 2).random(3))

    def test_replicate_failure_is_caught(self):
        cfg = replace(small_config(), V=5)
        bad = replace(cfg, grid=np.array([0.0, -1.0]))
        out = run_replicate(bad, 0)
        assert out["ok"] is False and "error" in out

    def test_exclusions_invalidate(self):
        from shrinkcount.simulation import MSEReport

        rep = MSEReport("x", ModelFamily.BINOMIAL, ["mle"], ["p"], {"mle": {"p": 1.0}}, 1.0, 1.0,
                        K=500, excluded=5, master_seed=0)
        assert not rep.valid
        assert replace(rep, excluded=4).valid


class TestConfig:
    TEXT = """
    # comment
    name = demo
    family = zib
    shape = bell
    a = 0.05
    b = 0.06
    a2 = 0.2
    b2 = 0.7
    penalties = pen2, mean-l2, full
    K = 50
    seed = 9
    """

    def test_parse(self):
        cfg = parse_config_text(self.TEXT)
        assert cfg.name == "demo" and cfg.family is ModelFamily.ZIB
        assert cfg.K == 50 and cfg.master_seed == 9
        assert (cfg.I, cfg.N, cfg.n, cfg.V) == (10, 40, 50, 10)
        assert [p.name for p in cfg.penalties] == ["pen2", "mean-l2", "full-zib"]
        assert cfg.zib_primary == "pi"
        assert parse_config_text(self.TEXT + "zib_primary = p\n").zib_primary == "p"
        assert cfg.grid.size == 63

    def test_all_errors_reported_together(self):
        text = "family = zib\nshape = wide\na = x\nbogus = 1\npenalties = pen9\nK = 0.5\n"
        with pytest.raises(ConfigError) as err:
            parse_config_text(text)
        msgs = " | ".join(err.value.problems)
        for fragment in ("unknown shape", "a = 'x'", "unknown key 'bogus'", "pen9", "K = '0.5'", "'b'"):
            assert fragment in msgs
        assert len(err.value.problems) >= 6

    def test_semantic_errors_together(self):
        text = "family = betabin\nshape = bell\na = 0.1\nb = 0.2\na2 = 0.5\nb2 = 50\npenalties = pen4\nV = 1\n"
        with pytest.raises(ConfigError) as err:
            parse_config_text(text)
        assert len(err.value.problems) >= 3

    def test_missing_secondary(self):
        with pytest.raises(ConfigError, match="secondary"):
            parse_config_text("family = zib\nshape = bell\na = 0.1\nb = 0.2\npenalties = pen2\n")

    def test_grid_file_relative(self, tmp_path):
        (tmp_path / "g.txt").write_text("0 1 10\n")
        (tmp_path / "c.cfg").write_text("family = binomial\nshape = flat\na = 0.1\nb = 0.2\npenalties = pen2\ngrid = g.txt\n")
        cfg = load_config(tmp_path / "c.cfg")
        assert cfg.name == "c"
        np.testing.assert_array_equal(cfg.grid, [0, 1, 10])

    def test_bundled_configs_parse(self):
        names = bundled_configs()
        assert "smoke" in names and "table2_row_bell_031_035" in names
        for n in names:
            cfg = load_config(n)
            assert cfg.K >= 1

    def test_unknown_bundled(self):
        with pytest.raises(ConfigError):
            load_config("no_such_config")
