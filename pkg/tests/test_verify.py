import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from heatcal import verify as vf
from heatcal.emos_uni import GevLaw, NormalLaw, crps_ensemble, crps_gev, crps_normal


def test_energy_score_examples():
    assert vf.energy_score([[0.0, 0.0]], [3.0, 4.0]) == pytest.approx(5.0, abs=1e-15)
    assert vf.energy_score([[1.0, 2.0], [1.0, 2.0]], [1.0, 2.0]) == 0.0
    assert vf.energy_score([[0.0, 0.0], [2.0, 0.0]], [1.0, 0.0]) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        vf.energy_score([[0.0, 0.0]], [1.0, 2.0, 3.0])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-50, 50)), st.floats(-50, 50))
def test_energy_score_in_one_dimension_is_crps(x, y):
    es = vf.energy_score(x[:, None], np.array([y]))
    assert es == pytest.approx(float(crps_ensemble(x, y)), abs=1e-12)


def test_energy_score_blocked_pairs_match_direct_sum():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1200, 2))
    y = rng.normal(size=2)
    direct = np.linalg.norm(x - y, axis=1).mean() - np.linalg.norm(
        x[:, None] - x[None], axis=-1).sum() / (2 * 1200**2)
    assert vf.energy_score(x, y) == pytest.approx(direct, rel=1e-12)


def test_brier_examples():
    assert vf.brier_score(1.0, 1.0, 2.0) == 0.0
    assert vf.brier_score(0.3, 1.0, 2.0) == pytest.approx(0.49)
    assert vf.brier_score(0.3, 3.0, 2.0) == pytest.approx(0.09)
    with pytest.raises(ValueError):
        vf.brier_score(1.2, 0.0, 0.0)


def test_brier_integral_approximates_crps():
    law = NormalLaw(np.array(1.0), np.array(2.0))
    x = 0.3
    y = np.linspace(-15.0, 17.0, 2000)
    bs = vf.brier_score(np.clip(law.cdf(y), 0, 1), x, y)
    integral = integrate.trapezoid(bs, y)
    exact = float(crps_normal(law, x))
    assert abs(integral - exact) / exact < 0.01


def test_tw_crps_reduces_to_crps():
    law = NormalLaw(np.array(0.5), np.array(1.3))
    assert vf.tw_crps(law, 1.0, -1e6) == pytest.approx(float(crps_normal(law, 1.0)), abs=1e-6)
    members = np.array([1.0, 2.5, 4.0])
    assert vf.tw_crps(members, 3.0, -1e6) == pytest.approx(float(crps_ensemble(members, 3.0)), abs=1e-12)


def test_tw_crps_point_forecast_and_high_threshold():
    assert vf.tw_crps(np.array([4.0]), 1.5, 0.0) == pytest.approx(2.5)
    assert vf.tw_crps(np.array([1.5]), 4.0, -2.0) == pytest.approx(2.5)
    law = NormalLaw(np.array(0.0), np.array(1.0))
    assert vf.tw_crps(law, -1.0, 30.0) == pytest.approx(0.0, abs=1e-10)


def test_tw_crps_gev_law_finite():
    law = GevLaw(np.array(25.0), np.array(2.0), -0.2)
    full = vf.tw_crps(law, 26.0, -1e6)
    assert full == pytest.approx(float(crps_gev(law, 26.0)), abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.lists(st.floats(-4, 4), min_size=2, max_size=6))
def test_tw_crps_non_increasing_in_threshold(x, rs):
    law = NormalLaw(np.array(0.2), np.array(1.1))
    members = np.array([-1.0, 0.0, 0.7, 2.0])
    rs = sorted(rs)
    law_scores = [vf.tw_crps(law, x, r) for r in rs]
    ens_scores = [float(vf.tw_crps(members, x, r)) for r in rs]
    assert np.all(np.diff(law_scores) <= 1e-9)
    assert np.all(np.diff(ens_scores) <= 1e-12)


def test_skill_score_examples():
    assert vf.skill_score(1.7, 1.7) == 0.0
    assert vf.skill_score(0.0, 2.0) == 1.0
    assert vf.skill_score(1.0, 2.0) == 0.5
    with pytest.raises(ZeroDivisionError):
        vf.skill_score(1.0, 0.0)


def test_rank_extremes():
    rng = np.random.default_rng(0)
    m = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    assert vf.rank_of_obs(m, 0.0, rng) == 1
    assert vf.rank_of_obs(m, 9.0, rng) == 6


def test_rank_ties_uniform_over_admissible():
    rng = np.random.default_rng(1)
    m = np.array([2.0, 2.0, 2.0, 5.0, 6.0])
    r = vf.rank_of_obs(np.broadcast_to(m, (10_000, 5)), np.full(10_000, 2.0), rng)
    counts = np.bincount(r, minlength=7)[1:]
    assert counts[4:].sum() == 0
    assert stats.chisquare(counts[:4]).pvalue > 0.01


def test_multivariate_ranks_above_all():
    rng = np.random.default_rng(2)
    m = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    for method in ("average", "multivariate"):
        assert vf.multivariate_ranks(m, np.array([5.0, 5.0]), method, rng) == 4
    with pytest.raises(ValueError):
        vf.multivariate_ranks(m, np.array([5.0, 5.0]), "median", rng)
    with pytest.raises(ValueError):
        vf.multivariate_ranks(m[:, :1], np.array([5.0]), "average", rng)


def test_multivariate_ranks_identical_member():
    rng = np.random.default_rng(3)
    m = np.array([[0.0, 0.0], [3.0, 3.0], [1.0, 1.0]])
    y = np.array([1.0, 1.0])
    r = [vf.multivariate_ranks(m, y, "multivariate", rng) for _ in range(2000)]
    assert set(r) == {2, 3}
    assert abs(np.mean(np.array(r) == 2) - 0.5) < 0.05


def _brute_preranks(points):
    return [sum(all(q[c] <= p[c] for c in range(len(p))) for q in points) for p in points]


def test_multivariate_ranks_brute_force_fixture():
    # obs (1, 2); members (2, 1), (0, 0), (3, 3)
    pooled = [(1.0, 2.0), (2.0, 1.0), (0.0, 0.0), (3.0, 3.0)]
    pre = _brute_preranks(pooled)
    assert pre == [2, 2, 1, 4]
    # obs ties with the first member: admissible ranks 2 and 3
    rng = np.random.default_rng(4)
    m, y = np.array(pooled[1:]), np.array(pooled[0])
    got = {vf.multivariate_ranks(m, y, "multivariate", rng) for _ in range(200)}
    assert got == {2, 3}
    # average ranks: margin ranks within the pooled set
    avg = [np.mean([sum(q[c] <= p[c] for q in pooled) for c in range(2)]) for p in pooled]
    assert avg == [2.5, 2.5, 1.0, 4.0]
    got = {vf.multivariate_ranks(m, y, "average", rng) for _ in range(200)}
    assert got == {2, 3}


@pytest.mark.parametrize("method", ["average", "multivariate"])
def test_calibrated_multivariate_ranks_are_uniform(method):
    rng = np.random.default_rng(5)
    n, k = 5000, 10
    cov = np.array([[1.0, 0.6], [0.6, 1.0]])
    chol = np.linalg.cholesky(cov)
    draws = rng.normal(size=(n, k + 1, 2)) @ chol.T
    r = vf.multivariate_ranks(draws[:, 1:], draws[:, 0], method, rng)
    assert vf.uniformity_pvalue(vf.rank_histogram(r, k).counts) > 0.01


def test_calibrated_univariate_ranks_are_uniform():
    rng = np.random.default_rng(6)
    draws = rng.normal(size=(5000, 11))
    r = vf.rank_of_obs(draws[:, 1:], draws[:, 0], rng)
    assert vf.uniformity_pvalue(vf.rank_histogram(r, 10).counts) > 0.01


def test_reliability_index_examples():
    assert vf.reliability_index(np.full(11, 7)) == 0.0
    counts = np.zeros(51)
    counts[0] = 100
    assert vf.reliability_index(counts) == pytest.approx(2 * 50 / 51, abs=1e-15)
    assert vf.reliability_index([2, 1, 1]) == pytest.approx(1 / 3, abs=1e-15)
    with pytest.raises(ValueError):
        vf.reliability_index([0, 0])


def test_histogram_counts_sum_to_cases():
    h = vf.pit_histogram(np.random.default_rng(0).random(777))
    assert h.n == 777 and h.counts.size == 20 and h.reliability >= 0
    h = vf.rank_histogram(np.array([1, 1, 3]), 2)
    assert list(h.counts) == [2, 0, 1]


def test_pit_examples():
    rng = np.random.default_rng(7)
    law = NormalLaw(np.array(2.0), np.array(3.0))
    assert float(vf.pit_value(law, 2.0, rng)) == pytest.approx(0.5)
    pits = vf.pit_value(np.full((5000, 4), 1.0), np.ones(5000), rng)
    assert stats.kstest(pits, "uniform").pvalue > 0.01


def test_calibrated_pit_stream_is_uniform():
    rng = np.random.default_rng(8)
    mu = rng.normal(20, 3, 5000)
    sig = rng.uniform(0.5, 2.0, 5000)
    y = rng.normal(mu, sig)
    pits = vf.pit_value(NormalLaw(mu, sig), y, rng)
    assert stats.kstest(pits, "uniform").pvalue > 0.01
    members = rng.normal(mu[:, None], sig[:, None], (5000, 10))
    ens = vf.ensemble_pit(members, y, rng)
    assert stats.kstest(ens, "uniform").pvalue > 0.01


def test_forecast_value_worked_example():
    t = vf.ContingencyTable(hits=20, misses=5, false_alarms=10, correct_rejections=65)
    e_f, e_clim, e_perf = vf.mean_expenses(t, 0.2)
    assert (e_f, e_clim, e_perf) == pytest.approx((0.11, 0.2, 0.05), abs=1e-15)
    assert vf.forecast_value(t, 0.2) == pytest.approx(0.6, abs=1e-12)


def test_forecast_value_perfect_and_base_rate():
    perfect = vf.ContingencyTable(25, 0, 0, 75)
    assert all(vf.forecast_value(perfect, c) == pytest.approx(1.0) for c in (0.1, 0.5, 0.9))
    events = np.r_[np.ones(25, bool), np.zeros(75, bool)]
    for c in (0.1, 0.2, 0.3, 0.6):
        t = vf.contingency_table(np.full(100, 0.25), events, c)
        assert vf.forecast_value(t, c) == pytest.approx(0.0, abs=1e-12)
    assert np.isnan(vf.forecast_value(vf.ContingencyTable(0, 0, 3, 7), 0.5))
    with pytest.raises(ValueError):
        vf.forecast_value(perfect, 1.0)
    with pytest.raises(ValueError):
        vf.ContingencyTable(-1, 0, 0, 0)


def test_value_curve_bounded_and_perfect():
    rng = np.random.default_rng(9)
    ev = [rng.random(200) < 0.3 for _ in range(5)]
    perfect = vf.value_curve([e.astype(float) for e in ev], ev)
    assert perfect.cl_ratios.size == 99 and np.allclose(perfect.values, 1.0)
    noisy = vf.value_curve([np.clip(e + rng.normal(0, 0.4, e.size), 0, 1) for e in ev], ev)
    assert np.all(noisy.values[np.isfinite(noisy.values)] <= 1.0)
    assert np.any(noisy.values < 1.0)


def test_station_significance_examples():
    rng = np.random.default_rng(10)
    a = {f"s{i}": rng.integers(0, 9, 30).astype(float) for i in range(20)}
    assert vf.station_significance(a, a).fraction == 0.0
    b = {k: v + 1.0 for k, v in a.items()}
    assert vf.station_significance(a, b).fraction == 1.0
    short = dict(a, tiny=np.ones(3))
    res = vf.station_significance(short, dict(short))
    assert res.n_excluded == 1 and res.n_tested == 20


def test_station_significance_null_rate():
    rng = np.random.default_rng(11)
    a = {i: rng.normal(size=60) for i in range(100)}
    b = {i: rng.normal(size=60) for i in range(100)}
    assert abs(vf.station_significance(a, b).fraction - 0.05) <= 0.03


def test_bootstrap_constant_and_contains_estimate():
    const = {i: np.full(10, 2.5) for i in range(8)}
    assert vf.bootstrap_ci(const, n_boot=300) == (2.5, 2.5)
    rng = np.random.default_rng(12)
    s = {i: rng.normal(size=20) for i in range(30)}
    lo, hi = vf.bootstrap_ci(s, n_boot=500, rng=rng)
    est = np.mean(np.concatenate(list(s.values())))
    assert lo <= est <= hi
    lo2, hi2 = vf.bootstrap_ci(s, statistic=np.median, n_boot=300, rng=rng)
    assert lo2 < hi2
    with pytest.raises(ValueError):
        vf.bootstrap_ci(s, n_boot=100)


def test_bootstrap_coverage():
    rng = np.random.default_rng(13)
    cover = 0
    for _ in range(500):
        s = {i: rng.normal(1.0, 1.0, 5) for i in range(40)}
        lo, hi = vf.bootstrap_ci(s, n_boot=400, rng=rng)
        cover += lo <= 1.0 <= hi
    assert 0.90 <= cover / 500 <= 0.98
