"""Heat indices derived from air temperature and dew point.

All functions accept scalars or numpy arrays (broadcast together) and
return floats for scalar input, arrays otherwise.
"""

import numpy as np

T_MIN, T_MAX = -60.0, 60.0

# Magnus constants used for relative humidity
MAGNUS_A, MAGNUS_B = 17.62, 243.12
# vapour pressure constants used inside the psychrometric balance
VP_E0, VP_A, VP_B = 6.106, 17.27, 237.3

WETBULB_TOL = 1e-8
WETBULB_MAXITER = 200


class IndexDomainError(ValueError):
    """Input outside the domain where an index is defined."""


class ConvergenceError(RuntimeError):
    """Root solver did not reach the residual tolerance."""


def _scalar_or_array(x, scalar):
    return float(x) if scalar else x


def check_pair(t, td):
    """Validate and broadcast a (temperature, dew point) pair."""
    t = np.asarray(t, dtype=float)
    td = np.asarray(td, dtype=float)
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(td))):
        raise IndexDomainError("temperature and dew point must be finite")
    if np.any(t < T_MIN) or np.any(t > T_MAX) or np.any(td < T_MIN) or np.any(td > T_MAX):
        raise IndexDomainError(f"values outside [{T_MIN}, {T_MAX}] degC")
    if np.any(td > t):
        raise IndexDomainError("dew point exceeds temperature")
    return np.broadcast_arrays(t, td)


def relative_humidity(t, td):
    """Relative humidity (%) from temperature and dew point via Magnus."""
    scalar = np.ndim(t) == 0 and np.ndim(td) == 0
    t, td = check_pair(t, td)
    hr = 100.0 * np.exp(MAGNUS_A * td / (MAGNUS_B + td) - MAGNUS_A * t / (MAGNUS_B + t))
    return _scalar_or_array(hr, scalar)


def discomfort_from_rh(t, hr):
    """Discomfort index from temperature (degC) and relative humidity (%)."""
    scalar = np.ndim(t) == 0 and np.ndim(hr) == 0
    t = np.asarray(t, dtype=float)
    hr = np.asarray(hr, dtype=float)
    if np.any(~(hr > 0.0)) or np.any(hr > 100.0):
        raise IndexDomainError("relative humidity must lie in (0, 100]")
    di = t - 0.0055 * (100.0 - hr) * (t - 14.5)
    return _scalar_or_array(di, scalar)


def vapour_pressure(x):
    """Saturation vapour pressure (hPa) at temperature ``x`` (degC)."""
    return VP_E0 * np.exp(VP_A * x / (VP_B + x))


def bernard_residual(t, td, tpwb):
    """Left-hand side of the psychrometric balance; zero at the wet bulb."""
    pd = vapour_pressure(td)
    pw = vapour_pressure(tpwb)
    return 1556.0 * pd - 1.484 * pd * tpwb - 1556.0 * pw + 1.484 * pw * tpwb + 1010.0 * (t - tpwb)


def psychrometric_wet_bulb(t, td, tol=WETBULB_TOL, maxiter=WETBULB_MAXITER):
    """Psychrometric wet-bulb temperature by bisection on [td, t].

    The residual is non-negative at ``td`` and non-positive at ``t``, so the
    bracket always holds. Iteration stops once every element has
    ``|residual| < tol / 10`` or its bracket collapsed to adjacent floats.

    Raises
    ------
    ConvergenceError
        If any returned root has ``|residual| >= tol``.
    """
    scalar = np.ndim(t) == 0 and np.ndim(td) == 0
    t, td = check_pair(t, td)
    lo = td.astype(float).copy()
    hi = t.astype(float).copy()
    mid = 0.5 * (lo + hi)
    res = bernard_residual(t, td, mid)
    for _ in range(maxiter):
        active = (np.abs(res) >= 0.1 * tol) & (hi - lo > 0)
        if not active.any():
            break
        up = active & (res > 0)
        down = active & (res <= 0)
        lo = np.where(up, mid, lo)
        hi = np.where(down, mid, hi)
        new_mid = 0.5 * (lo + hi)
        # bracket can no longer be split in double precision
        stuck = active & ((new_mid == lo) | (new_mid == hi))
        hi = np.where(stuck, lo, hi)
        mid = np.where(active, new_mid, mid)
        res = bernard_residual(t, td, mid)
    if np.any(np.abs(res) >= tol):
        worst = float(np.max(np.abs(res)))
        raise ConvergenceError(f"wet-bulb residual {worst:.3e} above tolerance {tol:g}")
    return _scalar_or_array(mid, scalar)


def wbgt_indoor(t, td):
    """Indoor wet-bulb globe temperature (degC)."""
    scalar = np.ndim(t) == 0 and np.ndim(td) == 0
    t, td = check_pair(t, td)
    w = 0.67 * psychrometric_wet_bulb(t, td) + 0.33 * t
    return _scalar_or_array(w, scalar)


def discomfort_index(t, td):
    return discomfort_from_rh(t, relative_humidity(t, td))


def heat_indices(t, td):
    """Return ``(DI, WBGTid)`` for temperature/dew-point input."""
    return discomfort_index(t, td), wbgt_indoor(t, td)
