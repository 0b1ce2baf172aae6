import numpy as np
import pytest
from scipy import integrate, stats
from hypothesis import given, settings, strategies as st

from heatcal import emos_uni as eu
from heatcal.optim import OptimizationError, minimize_score

from _oracles import gev_support, quad_crps, scipy_gev


def _validation_grid(n=100, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        mu, sigma = rng.uniform(-5, 30), rng.uniform(0.2, 4.0)
        xi = 0.0 if i % 10 == 0 else rng.uniform(-0.5, 0.5)
        x = mu + sigma * rng.uniform(-4, 6)
        out.append((mu, sigma, xi, x))
    return out


GRID = _validation_grid()


# -- GEV distribution -----------------------------------------------------------

def test_gev_cdf_examples():
    assert eu.gev_cdf(eu.GevLaw(0.0, 1.0, 0.0), 0.0) == pytest.approx(np.exp(-1.0), abs=1e-15)
    assert eu.gev_cdf(eu.GevLaw(0.0, 1.0, 0.3), -10.0 / 3.0) == 0.0
    assert eu.gev_cdf(eu.GevLaw(2.0, 0.5, -0.2), 3.0) == pytest.approx(0.92518644464701646, abs=1e-14)


def test_gev_cdf_density_consistency():
    law = eu.GevLaw(2.0, 0.5, -0.2)
    ref = scipy_gev(2.0, 0.5, -0.2)
    area = integrate.quad(ref.pdf, -np.inf, 3.0)[0]
    assert float(eu.gev_cdf(law, 3.0)) == pytest.approx(area, abs=1e-10)


@pytest.mark.parametrize("xi", [-0.5, -0.2, 0.0, 0.25, 0.5])
def test_gev_cdf_matches_scipy_and_is_monotone(xi):
    law = eu.GevLaw(1.0, 2.0, xi)
    x = np.linspace(-20, 30, 2001)
    f = eu.gev_cdf(law, x)
    assert np.allclose(f, scipy_gev(1.0, 2.0, xi).cdf(x), atol=1e-13)
    assert np.all(np.diff(f) >= 0)
    assert eu.gev_cdf(law, -1e6) == pytest.approx(0.0, abs=1e-12)
    assert eu.gev_cdf(law, 1e6) == pytest.approx(1.0, abs=1e-6)


def test_gev_ppf_inverts_cdf():
    p = np.linspace(0.001, 0.999, 50)
    for xi in (-0.4, 0.0, 0.3):
        law = eu.GevLaw(3.0, 1.5, xi)
        assert np.allclose(eu.gev_cdf(law, eu.gev_ppf(law, p)), p, atol=1e-12)


def test_gev_rejects_xi_at_least_one():
    with pytest.raises(ValueError):
        eu.GevLaw(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        eu.crps_gev(_raw_gev(1.0), 0.0)
    assert np.isfinite(eu.crps_gev(eu.GevLaw(0.0, 1.0, 0.999999), 0.0))


def _raw_gev(xi):
    law = object.__new__(eu.GevLaw)
    object.__setattr__(law, "mu", 0.0)
    object.__setattr__(law, "sigma", 1.0)
    object.__setattr__(law, "xi", xi)
    return law


# -- closed-form CRPS ------------------------------------------------------------

def test_crps_normal_examples():
    assert eu.crps_normal(eu.NormalLaw(0.0, 1.0), 0.0) == pytest.approx(0.23369497725510907, abs=1e-12)
    assert eu.crps_normal(eu.NormalLaw(5.0, 1e-8), 7.0) == pytest.approx(2.0, abs=1e-7)
    a = eu.crps_normal(eu.NormalLaw(3.0, 1.7), 4.2)
    b = eu.crps_normal(eu.NormalLaw(3.0 + 13.7, 1.7), 4.2 + 13.7)
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("mu,sigma,xi,x,value", [
    (0, 1, 0.0, 0, 0.3228363531326281),
    (0, 1, 0.3, 1, 0.43320501359638046),
    (2, 0.5, -0.2, 3, 0.53635072933541594),
    (0, 1, 0.4, -5, 5.0334588616386145),
    (1, 2, -0.45, 0.5, 0.71675683526391551),
])
def test_crps_gev_golden(mu, sigma, xi, x, value):
    # frozen from scripts/oracles/score_quadrature.py
    assert float(eu.crps_gev(eu.GevLaw(mu, sigma, xi), x)) == pytest.approx(value, abs=1e-9)


def test_crps_normal_matches_quadrature_grid():
    for mu, sigma, _, x in GRID:
        law = eu.NormalLaw(mu, sigma)
        ref = quad_crps(law.cdf, x, breaks=(mu,), scale=sigma)
        assert float(eu.crps_normal(law, x)) == pytest.approx(ref, abs=1e-6)


def test_crps_gev_matches_quadrature_grid():
    for mu, sigma, xi, x in GRID:
        law = eu.GevLaw(mu, sigma, xi)
        lo, hi = gev_support(mu, sigma, xi)
        ref = quad_crps(lambda y: float(eu.gev_cdf(law, y)), x, lo, hi, breaks=(mu,), scale=sigma)
        assert float(eu.crps_gev(law, x)) == pytest.approx(ref, abs=1e-6)


def test_crps_gev_continuous_through_gumbel():
    for x in (-2.0, 0.0, 3.0):
        g = float(eu.crps_gev(eu.GevLaw(0.0, 1.0, 0.0), x))
        for xi in (1e-6, -1e-6):
            assert float(eu.crps_gev(eu.GevLaw(0.0, 1.0, xi), x)) == pytest.approx(g, abs=1e-5)


def test_crps_ensemble_examples():
    assert eu.crps_ensemble([0.0], 1.0) == 1.0
    assert eu.crps_ensemble([0.0, 2.0], 1.0) == 0.5
    assert eu.crps_ensemble([1.0, 1.0, 1.0], 1.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=15), st.floats(-50, 50))
def test_crps_ensemble_matches_pairwise_form(m, x):
    m = np.array(m)
    ref = np.mean(np.abs(m - x)) - np.abs(m[:, None] - m[None, :]).sum() / (2 * m.size**2)
    got = eu.crps_ensemble(m, x)
    assert got == pytest.approx(ref, abs=1e-9)
    assert got >= -1e-12
    if got < 1e-12:
        assert np.allclose(m, x, atol=1e-5)


# -- links -------------------------------------------------------------------------

def _g(means, s2=0.0, md=0.0):
    means = np.atleast_2d(np.asarray(means, dtype=float)).reshape(-1, 1)
    n = means.shape[0]
    return eu.GroupedEnsemble(means, (1,), np.full(n, s2), np.full(n, md), means[:, 0])


def test_link_normal_examples():
    law = eu.link_normal(eu.NormalEmosCoefficients(0.0, (1.0,), 0.001, 1.0), _g(20.0, s2=4.0))
    assert law.mu[0] == 20.0 and law.sigma[0] ** 2 == pytest.approx(4.0, abs=1e-5)
    law = eu.link_normal(eu.NormalEmosCoefficients(1.0, (1.0,), 1.0, 0.0), _g(20.0))
    assert law.mu[0] == 21.0
    law = eu.link_normal(eu.NormalEmosCoefficients(0.5, (0.9,), 1.0, 0.5), _g(10.0, s2=4.0))
    assert law.mu[0] == pytest.approx(9.5) and law.sigma[0] ** 2 == pytest.approx(2.0)


def test_link_gev_examples():
    coef = eu.GevEmosCoefficients(0.0, (1.0,), 1.0, 0.0, 0.1)
    assert eu.link_gev(coef, _g(5.0, md=3.7)).sigma[0] == 1.0
    g = eu.GroupedEnsemble.from_members([[4.0, 4.0, 4.0]])
    assert g.md[0] == 0.0
    assert eu.link_gev(eu.GevEmosCoefficients(0.0, (1.0,), 1.0, 1.0, 0.0), g).sigma[0] == 1.0
    g = eu.GroupedEnsemble.from_members([[0.0, 2.0]])
    assert g.md[0] == 1.0
    assert eu.link_gev(eu.GevEmosCoefficients(0.0, (1.0,), 1.0, 1.0, 0.0), g).sigma[0] == 2.0


def test_link_count_mismatch():
    with pytest.raises(ValueError):
        eu.link_normal(eu.NormalEmosCoefficients(0.0, (1.0, 1.0), 1.0, 1.0), _g(1.0))


def test_grouped_ensemble_groups():
    g = eu.GroupedEnsemble.from_members([[1.0, 3.0, 10.0, 20.0]], groups=(2, 2))
    assert np.array_equal(g.means, [[2.0, 15.0]])
    assert g.s2[0] == pytest.approx(np.var([1, 3, 10, 20], ddof=1))
    with pytest.raises(ValueError):
        eu.GroupedEnsemble.from_members([[1.0, 2.0]], groups=(3,))


@pytest.mark.parametrize("scale", eu.SCALE_VARIANTS)
def test_gev_scale_variants(scale):
    g = eu.GroupedEnsemble.from_members([[0.0, 2.0, 4.0]])
    law = eu.link_gev(eu.GevEmosCoefficients(0.0, (1.0,), 1.0, 1.0, 0.0, scale), g)
    expect = {"md": 1 + g.md[0], "mean": 1 + g.mean[0], "var": np.sqrt(1 + g.s2[0]), "sd": 1 + np.sqrt(g.s2[0])}
    assert law.sigma[0] == pytest.approx(expect[scale])


def test_coefficient_serialisation_round_trip():
    c = eu.NormalEmosCoefficients(0.1, (0.9, 0.2), 1.1, 0.4)
    assert eu.NormalEmosCoefficients.from_dict(c.to_dict()) == c
    assert eu.NormalEmosCoefficients.from_vector(c.to_vector()) == c
    gc = eu.GevEmosCoefficients(0.1, (0.9,), 1.1, 0.4, -0.2, "sd")
    assert eu.GevEmosCoefficients.from_dict(gc.to_dict()) == gc


# -- fitting ----------------------------------------------------------------------

# predictors are anomalies (centred near 0) so the intercept is identifiable
# separately from the slope; with raw index levels around 20 degC the
# intercept inherits about 20x the slope's sampling error
def normal_recovery_set(n=5000, seed=3):
    rng = np.random.default_rng(seed)
    centre = rng.normal(0.0, 4.0, n)
    spread = rng.uniform(0.5, 3.0, n)
    members = centre[:, None] + spread[:, None] * rng.standard_normal((n, 10))
    g = eu.GroupedEnsemble.from_members(members)
    y = 2.0 + g.means[:, 0] + np.sqrt(1.0 + 0.25 * g.s2) * rng.standard_normal(n)
    return g, y


def gev_recovery_set(n=5000, seed=4):
    rng = np.random.default_rng(seed)
    centre = rng.normal(0.0, 4.0, n)
    spread = rng.uniform(0.3, 2.5, n)
    members = centre[:, None] + spread[:, None] * rng.standard_normal((n, 10))
    g = eu.GroupedEnsemble.from_members(members)
    law = eu.GevLaw(1.0 + g.means[:, 0], 0.5 + 0.5 * g.md, -0.1)
    return g, eu.sample_law(law, 1, rng)[:, 0]


def test_normal_emos_recovery():
    g, y = normal_recovery_set()
    fit = eu.fit_normal_emos(g, y)
    c = fit.coef
    assert c.a == pytest.approx(2.0, abs=0.1)
    assert c.b[0] == pytest.approx(1.0, abs=0.05)
    assert c.c**2 == pytest.approx(1.0, abs=0.2)
    assert c.d**2 == pytest.approx(0.25, abs=0.2)
    assert fit.objective <= fit.initial_objective


def test_gev_emos_recovery():
    g, y = gev_recovery_set()
    fit = eu.fit_gev_emos(g, y)
    c = fit.coef
    assert c.alpha == pytest.approx(1.0, abs=0.15)
    assert c.beta[0] == pytest.approx(1.0, abs=0.15)
    assert c.gamma**2 == pytest.approx(0.5, abs=0.15)
    assert c.delta**2 == pytest.approx(0.5, abs=0.15)
    assert c.xi == pytest.approx(-0.1, abs=0.05)


def test_calibrated_input_fit_no_worse_than_raw():
    rng = np.random.default_rng(8)
    n = 3000
    centre = rng.normal(15.0, 3.0, n)
    truth_and_members = centre[:, None] + rng.standard_normal((n, 11))
    y, members = truth_and_members[:, 0], truth_and_members[:, 1:]
    g = eu.GroupedEnsemble.from_members(members)
    fit = eu.fit_normal_emos(g, y)
    fitted = np.mean(eu.crps_normal(eu.link_normal(fit.coef, g), y))
    assert fitted <= np.mean(eu.crps_ensemble(members, y)) + 0.01


def test_constant_observations_flagged_with_floor():
    g, _ = normal_recovery_set(200)
    fit = eu.fit_normal_emos(g, np.full(200, 7.0))
    assert fit.degenerate
    assert np.all(eu.link_normal(fit.coef, g).sigma >= eu.SIGMA_FLOOR)


def test_left_skewed_data_gives_negative_xi():
    rng = np.random.default_rng(9)
    n = 3000
    centre = rng.normal(22.0, 3.0, n)
    members = centre[:, None] + rng.standard_normal((n, 10))
    g = eu.GroupedEnsemble.from_members(members)
    # reflected gamma noise is skewed to the left
    y = centre + 2.0 - rng.gamma(2.0, 1.0, n)
    assert eu.fit_gev_emos(g, y).coef.xi < 0


def test_fit_below_case_floor():
    g, y = normal_recovery_set(2)
    with pytest.raises(eu.InsufficientDataError):
        eu.fit_gev_emos(g, y)
    with pytest.raises(eu.InsufficientDataError):
        eu.fit_normal_emos(g, y)


def test_fit_order_independent():
    g, y = normal_recovery_set(400)
    perm = np.random.default_rng(0).permutation(400)
    a = eu.fit_normal_emos(g, y)
    b = eu.fit_normal_emos(g.subset(perm), y[perm])
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(0.2, 2.0), st.floats(-0.4, 0.4))
def test_fit_never_worse_than_start(seed, a, c, xi):
    g, y = normal_recovery_set(60, seed)
    init = eu.NormalEmosCoefficients(a, (1.0,), c, 1.0)
    fit = eu.fit_normal_emos(g, y, init=init, restarts=0)
    start = np.mean(eu.crps_normal(eu.link_normal(init, g), y))
    assert fit.objective <= start + 1e-12
    ginit = eu.GevEmosCoefficients(a, (1.0,), c, 1.0, xi)
    gfit = eu.fit_gev_emos(g, y, init=ginit, restarts=0)
    assert gfit.objective <= np.mean(eu.crps_gev(eu.link_gev(ginit, g), y)) + 1e-12
    assert abs(gfit.coef.xi) <= eu.XI_BOUND


def test_optimizer_error_when_never_finite():
    with pytest.raises(OptimizationError) as info:
        minimize_score(lambda v: np.nan, np.zeros(2), restarts=0, maxiter=20)
    assert info.value.best_x.shape == (2,)


# -- sampling ---------------------------------------------------------------------

def test_sample_normal_kolmogorov():
    x = eu.sample_law(eu.NormalLaw(1.0, 2.0), 100_000, np.random.default_rng(0))
    assert stats.kstest(x, stats.norm(1.0, 2.0).cdf).statistic < 0.01


def test_sample_gumbel_mean():
    x = eu.sample_law(eu.GevLaw(1.0, 2.0, 0.0), 100_000, np.random.default_rng(1))
    se = 2.0 * np.pi / np.sqrt(6.0) / np.sqrt(x.size)
    assert abs(x.mean() - (1.0 + 2.0 * np.euler_gamma)) < 3 * se


def test_sample_reproducible_and_shaped():
    law = eu.GevLaw(np.zeros(3), np.ones(3), 0.2)
    a = eu.sample_law(law, 7, np.random.default_rng(5))
    b = eu.sample_law(law, 7, np.random.default_rng(5))
    assert a.shape == (3, 7) and np.array_equal(a, b)
    with pytest.raises(ValueError):
        eu.sample_law(law, 0, np.random.default_rng(5))
