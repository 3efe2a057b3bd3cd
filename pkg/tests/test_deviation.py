import numpy as np
import pytest
from scipy import stats

from nlwlab.deviation import (check_campaign_window, exceedance, fit_subgaussian, khinchin_samples,
                              khinchin_tail, lambda_grid, strichartz_tail_campaign, tail_from_samples, wilson)
from nlwlab.randomizer import DataPair, synthesize_data
from nlwlab.spectral import MixedNormSpec, SpectralField, UnitPartition, make_grid

G = make_grid(16, 2)
P = UnitPartition(G)
D = synthesize_data(0.75, 10.0, partition=P)


def test_exceedance_is_strict():
    assert list(exceedance([1, 2, 2, 3], [0.5, 2, 3])) == [4, 1, 0]


def test_wilson_known_values():
    lo, hi = wilson([0, 50], 100)
    assert lo[0] == 0.0 and hi[0] == pytest.approx(0.0370, abs=1e-4)
    assert (lo[1], hi[1]) == pytest.approx((0.4038, 0.5962), abs=1e-4)


def test_lambda_grid_geometric():
    x = np.random.default_rng(0).exponential(size=1000)
    lam = lambda_grid(x, points=8)
    assert lam[0] == pytest.approx(np.median(x))
    r = lam[1:] / lam[:-1]
    assert np.allclose(r, r[0])
    with pytest.raises(ValueError):
        lambda_grid(np.zeros(10))


def test_fit_exact_gaussian_tail():
    lam = np.linspace(0.5, 3, 8)
    C, c, r2 = fit_subgaussian(lam, 1.7 * np.exp(-0.3 * lam ** 2))
    assert (C, c, r2) == pytest.approx((1.7, 0.3, 1.0), rel=1e-12)
    with pytest.raises(ValueError):
        fit_subgaussian(lam[:2], [0.5, 0.1])


def test_tail_from_samples_rejects_grid():
    with pytest.raises(ValueError):
        tail_from_samples(np.ones(5), [2.0, 1.0], {})


def test_khinchin_gaussian_tail_matches_normal():
    c = np.random.default_rng(1).standard_normal(40)
    c /= np.linalg.norm(c)
    est = khinchin_tail(c, "gaussian", np.array([1.0, 2.0, 3.0]), 100_000, 5)
    exact = 2 * stats.norm.sf(est.lambdas)
    assert np.all((est.ci_lo <= exact) & (exact <= est.ci_hi))
    ratios = est.extra["moment_ratios"]
    assert max(ratios.values()) / min(ratios.values()) < 2.0
    assert est.c_fit > 0


def test_khinchin_needs_samples():
    with pytest.raises(ValueError):
        khinchin_tail(np.ones(3), "gaussian", [1.0], 100, 0)
    with pytest.raises(ValueError):
        khinchin_tail(np.zeros(3), "gaussian", [1.0], 100_000, 0)


@pytest.mark.parametrize("dist", ["gaussian", "rademacher", "uniform_compact"])
def test_khinchin_samples_second_moment(dist):
    c = np.linspace(1, 2, 30)
    x = khinchin_samples(c, dist, 40_000, 3)
    assert np.mean(x ** 2) == pytest.approx(np.sum(c ** 2), rel=0.03)


@pytest.mark.parametrize("spec,sw,hr", [
    (MixedNormSpec(4, 4, 1.2), 0.0, None),        # delta <= 1 + 1/q
    (MixedNormSpec(np.inf, 4, 1.0), 0.0, None),   # delta <= 1 in L^inf_t
    (MixedNormSpec(4, np.inf, 1.3), 0.0, None),   # L^inf_x without headroom
    (MixedNormSpec(4, 4, 1.3), 0.02, 0.01),       # weight above headroom
    (MixedNormSpec(4, 4, 1.3), -0.1, None),
])
def test_campaign_window_rejections(spec, sw, hr):
    with pytest.raises(ValueError):
        check_campaign_window(spec, sw, hr)


def test_campaign_window_headroom_vs_data():
    with pytest.raises(ValueError):
        check_campaign_window(MixedNormSpec(4, np.inf, 1.3), 0.0, 0.9, data_s=0.75)
    check_campaign_window(MixedNormSpec(4, np.inf, 1.3), 0.005, 0.01, data_s=0.75)


def test_campaign_deterministic_across_workers():
    spec = MixedNormSpec(4, 4, 1.3)
    a = strichartz_tail_campaign(D, "u", 0.0, spec, n_samples=120, seed=9, T_mc=2.0, dt_mc=0.1)
    b = strichartz_tail_campaign(D, "u", 0.0, spec, n_samples=120, seed=9, T_mc=2.0, dt_mc=0.1, workers=2)
    assert np.array_equal(a.extra["norms"], b.extra["norms"])
    assert np.array_equal(a.lambdas, b.lambdas)


def test_campaign_scaling_is_exact():
    spec = MixedNormSpec(4, 4, 1.3)
    kw = dict(n_samples=200, seed=4, T_mc=2.0, dt_mc=0.1)
    a = strichartz_tail_campaign(D, "u", 0.0, spec, **kw)
    b = strichartz_tail_campaign(D.scaled(2.0), "u", 0.0, spec, **kw)
    assert np.array_equal(2.0 * a.extra["norms"], b.extra["norms"])
    assert np.array_equal(a.counts, b.counts)
    assert b.c_fit == pytest.approx(a.c_fit / 4, rel=1e-12)


def test_campaign_zero_data():
    z = SpectralField.zeros(G)
    est = strichartz_tail_campaign(DataPair(z, z), "u", 0.0, MixedNormSpec(4, 4, 1.3), n_samples=10)
    assert np.all(est.p_hat == 0) and est.verdict == "fail"


def test_campaign_evolution_name():
    with pytest.raises(ValueError):
        strichartz_tail_campaign(D, "v", 0.0, MixedNormSpec(4, 4, 1.3), n_samples=10)


def test_utilde_campaign_runs():
    est = strichartz_tail_campaign(D, "utilde", 0.0, MixedNormSpec(np.inf, 4, 1.1), n_samples=100, seed=2,
                                   T_mc=1.0, dt_mc=0.1)
    assert np.all(np.isfinite(est.extra["norms"])) and est.report()["scope"]
    assert len(est.csv_rows()) == est.lambdas.size
