import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatcal import indices as ix

# frozen from scripts/oracles/bernard_wet_bulb.py (40-digit bisection)
GOLDEN = {
    (30.0, 20.0): dict(tpwb=22.972666406111121, wbgt=25.291686492094451, rh=55.095610115928221,
                       di=26.171900762382881),
    (35.0, 10.0): dict(tpwb=19.434832585085768, wbgt=24.571337832007464, rh=21.843306239809631,
                       di=26.187832778538536),
    (25.0, 15.0): dict(tpwb=18.526122395422995, wbgt=20.662502004933406, rh=53.849410597019166,
                       di=22.334803461977857),
    (40.0, 5.0): dict(tpwb=19.313391328732554, wbgt=26.139972190250811, rh=11.832340784929843,
                      di=27.634485795086411),
    (10.0, -5.0): dict(tpwb=3.9917648118971291, wbgt=5.9744824239710765, rh=34.435091571978436,
                       di=11.622731483593534),
    (0.0, -20.0): dict(tpwb=-4.7251169968976638, wbgt=-3.1658283879214347, rh=20.60947742849596,
                       di=6.3313941750774472),
}

pairs = st.tuples(st.floats(-40, 55), st.floats(0, 60)).map(lambda p: (p[0], p[0] - p[1]))
valid_pairs = pairs.filter(lambda p: p[1] >= -60)


@pytest.mark.parametrize("t,td", list(GOLDEN))
def test_golden_values(t, td):
    g = GOLDEN[(t, td)]
    assert ix.psychrometric_wet_bulb(t, td) == pytest.approx(g["tpwb"], abs=1e-6)
    assert ix.wbgt_indoor(t, td) == pytest.approx(g["wbgt"], abs=1e-6)
    assert ix.relative_humidity(t, td) == pytest.approx(g["rh"], abs=1e-9)
    assert ix.discomfort_index(t, td) == pytest.approx(g["di"], abs=1e-9)


def test_relative_humidity_examples():
    assert ix.relative_humidity(25, 25) == 100.0
    assert ix.relative_humidity(25, 15) == pytest.approx(53.85, abs=0.01)
    with pytest.raises(ix.IndexDomainError):
        ix.relative_humidity(25, 26)


def test_discomfort_from_rh_examples():
    assert ix.discomfort_from_rh(30, 100) == 30.0
    assert ix.discomfort_from_rh(14.5, 37) == 14.5
    assert ix.discomfort_from_rh(30, 50) == pytest.approx(25.7375, abs=1e-12)
    for bad in (0.0, -1.0, 100.5):
        with pytest.raises(ix.IndexDomainError):
            ix.discomfort_from_rh(30, bad)


def test_wet_bulb_examples():
    assert ix.psychrometric_wet_bulb(20, 20) == pytest.approx(20.0, abs=1e-8)
    assert 20 < ix.psychrometric_wet_bulb(30, 20) < 30
    assert 10 < ix.psychrometric_wet_bulb(35, 10) < 35
    assert ix.wbgt_indoor(30, 20) == pytest.approx(0.67 * GOLDEN[(30.0, 20.0)]["tpwb"] + 9.9, abs=1e-6)


def test_saturation_fixed_points():
    assert ix.wbgt_indoor(25, 25) == pytest.approx(25.0, abs=1e-8)
    assert ix.wbgt_indoor(14.5, 14.5) == pytest.approx(14.5, abs=1e-8)
    assert ix.heat_indices(20, 20) == pytest.approx((20.0, 20.0), abs=1e-8)


def test_heat_indices_composition():
    di, wb = ix.heat_indices(30, 20)
    hr = ix.relative_humidity(30, 20)
    assert di == pytest.approx(30 - 0.0055 * (100 - hr) * 15.5, abs=1e-12)
    assert wb == pytest.approx(GOLDEN[(30.0, 20.0)]["wbgt"], abs=1e-6)
    with pytest.raises(ix.IndexDomainError):
        ix.heat_indices(25, 26)


def test_domain_bounds():
    with pytest.raises(ix.IndexDomainError):
        ix.relative_humidity(61, 0)
    with pytest.raises(ix.IndexDomainError):
        ix.wbgt_indoor(np.nan, 0)


def test_array_shapes_preserved():
    t = np.array([[30.0, 25.0], [20.0, 35.0]])
    td = t - np.array([[10.0, 10.0], [0.0, 25.0]])
    di, wb = ix.heat_indices(t, td)
    assert di.shape == wb.shape == (2, 2)
    assert wb[0, 0] == pytest.approx(GOLDEN[(30.0, 20.0)]["wbgt"], abs=1e-6)


def test_convergence_error_when_budget_too_small():
    with pytest.raises(ix.ConvergenceError):
        ix.psychrometric_wet_bulb(35.0, 10.0, maxiter=3)


@settings(max_examples=200, deadline=None)
@given(valid_pairs)
def test_wet_bulb_bracketed_with_small_residual(p):
    t, td = p
    w = ix.psychrometric_wet_bulb(t, td)
    assert td - 1e-12 <= w <= t + 1e-12
    assert abs(ix.bernard_residual(t, td, w)) < 1e-8
    assert ix.wbgt_indoor(t, td) <= t + 1e-9


@settings(max_examples=200, deadline=None)
@given(valid_pairs)
def test_di_below_t_when_warm_and_unsaturated(p):
    t, td = p
    if t > 14.5 and td < t - 1e-6:
        assert ix.discomfort_index(t, td) < t


def test_relative_humidity_monotone_on_grid():
    t = np.linspace(-10, 45, 56)
    for tt in t[::5]:
        tds = np.linspace(tt - 40, tt, 81)
        tds = tds[tds >= -60]
        assert np.all(np.diff(ix.relative_humidity(np.full_like(tds, tt), tds)) > 0)
    td = 0.0
    ts = np.linspace(0, 45, 91)
    assert np.all(np.diff(ix.relative_humidity(ts, np.full_like(ts, td))) < 0)


def test_wet_bulb_equals_t_only_at_saturation():
    t = np.linspace(0, 45, 46)
    assert np.allclose(ix.psychrometric_wet_bulb(t, t), t, atol=1e-8)
    assert np.all(ix.psychrometric_wet_bulb(t, t - 0.5) < t - 1e-3)
