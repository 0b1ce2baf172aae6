"""High-precision CRPS and GEV CDF values by direct integration (mpmath)."""

import mpmath as mp

mp.mp.dps = 30


def gev_cdf(mu, sigma, xi, x):
    z = (mp.mpf(x) - mu) / sigma
    if xi == 0:
        return mp.e ** (-mp.e ** (-z))
    s = 1 + xi * z
    if s <= 0:
        return mp.mpf(0) if xi > 0 else mp.mpf(1)
    return mp.e ** (-s ** (-1 / mp.mpf(xi)))


def crps_by_quadrature(cdf, x, lo, hi):
    x = mp.mpf(x)
    below = mp.quad(lambda y: cdf(y) ** 2, [lo, x])
    above = mp.quad(lambda y: (1 - cdf(y)) ** 2, [x, hi])
    return below + above


def normal_cdf(mu, sigma):
    return lambda y: mp.ncdf((y - mu) / sigma)


def support(mu, sigma, xi):
    if xi > 0:
        return mu - sigma / xi, mp.inf
    if xi < 0:
        return -mp.inf, mu - sigma / xi
    return -mp.inf, mp.inf


if __name__ == "__main__":
    print("crps_normal(0,1;0)", mp.nstr(crps_by_quadrature(normal_cdf(0, 1), 0, -mp.inf, mp.inf), 17))
    for mu, sigma, xi, x in [(0, 1, 0, 0), (0, 1, mp.mpf("0.3"), 1), (2, mp.mpf("0.5"), mp.mpf("-0.2"), 3),
                             (0, 1, mp.mpf("0.4"), -5), (1, 2, mp.mpf("-0.45"), 0.5)]:
        lo, hi = support(mu, sigma, xi)
        f = lambda y: gev_cdf(mu, sigma, xi, y)
        # outside the support the integrand is 1 between x and the endpoint
        extra = max(x - hi, 0) + max(lo - x, 0)
        # finite truncation: Gumbel-type tails vanish double-exponentially past 60 sigma,
        # the xi > 0 upper tail decays like y**(-2/xi) and is negligible past 1e7 sigma
        lo = max(lo, mu - 60 * sigma)
        hi = min(hi, mu + (1e7 if xi > 0 else 100) * sigma)
        inner = [mp.mpf(x), mp.mpf(mu)] + [mu + k * sigma for k in (-10, -3, 3, 10, 1e2, 1e3, 1e4, 1e5, 1e6)]
        pts = [lo, *sorted(set(p for p in inner if lo < p < hi)), hi]
        val = extra + sum(mp.quad(lambda y: (f(y) - (1 if y >= x else 0)) ** 2, [a, b])
                          for a, b in zip(pts, pts[1:]))
        print(f"crps_gev({mu},{sigma},{xi};{x})", mp.nstr(val, 17), "cdf", mp.nstr(f(x), 17))
