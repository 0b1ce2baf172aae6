"""Synthetic parameter recovery for the three EMOS families over several seeds.

    python scripts/recovery.py [--seeds 0 1 2 3 4] [--n 5000] [--n-bivariate 10000]
"""

import argparse

import numpy as np

from heatcal import emos_bi as eb
from heatcal import emos_uni as eu

BI_TRUTH = eb.BiEmosCoefficients(A=np.array([0.8, -0.5]), B=np.array([[[0.9, 0.1], [0.05, 0.95]]]),
                                 C=np.array([[0.8, 0.0], [0.3, 0.6]]), D=np.array([[0.7, 0.0], [0.2, 0.5]]))


def _members(rng, n, lo, hi):
    centre, spread = rng.normal(0.0, 4.0, n), rng.uniform(lo, hi, n)
    return eu.GroupedEnsemble.from_members(centre[:, None] + spread[:, None] * rng.standard_normal((n, 10)))


def normal(seed, n):
    rng = np.random.default_rng(seed)
    g = _members(rng, n, 0.5, 3.0)
    y = 2.0 + g.means[:, 0] + np.sqrt(1.0 + 0.25 * g.s2) * rng.standard_normal(n)
    c = eu.fit_normal_emos(g, y).coef
    return np.array([c.a - 2.0, c.b[0] - 1.0, c.c**2 - 1.0, c.d**2 - 0.25])


def gev(seed, n):
    rng = np.random.default_rng(seed)
    g = _members(rng, n, 0.3, 2.5)
    y = eu.sample_law(eu.GevLaw(1.0 + g.means[:, 0], 0.5 + 0.5 * g.md, -0.1), 1, rng)[:, 0]
    c = eu.fit_gev_emos(g, y).coef
    return np.array([c.alpha - 1.0, c.beta[0] - 1.0, c.gamma**2 - 0.5, c.delta**2 - 0.5, c.xi + 0.1])


def _pairs(rng, n):
    ctr = rng.normal(0.0, 4.0, (n, 2))
    scale = rng.uniform(0.4, 2.0, (n, 1, 1))
    z = rng.standard_normal((n, 10, 2)) @ np.array([[1.0, 0.0], [0.6, 0.8]]).T
    return eb.GroupedEnsemble2D.from_members(ctr[:, None, :] + scale * z)


def bivariate(seed, n):
    rng = np.random.default_rng(seed)
    g = _pairs(rng, n)
    y = eb.sample_bivariate(eb.link_bivariate(BI_TRUTH, g), 1, rng)[:, 0]
    fit = eb.fit_bivariate_emos(g, y).coef
    held = _pairs(np.random.default_rng(seed + 1000), 500)
    s_fit, s_true = eb.link_bivariate(fit, held).sigma, eb.link_bivariate(BI_TRUTH, held).sigma
    frob = np.linalg.norm(s_fit - s_true, axis=(1, 2)) / np.linalg.norm(s_true, axis=(1, 2))
    return np.array([*np.abs(fit.A - BI_TRUTH.A), np.abs(fit.B - BI_TRUTH.B).max(), frob.max()])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--n-bivariate", type=int, default=10_000)
    args = ap.parse_args()
    np.set_printoptions(precision=4, suppress=True)
    for name, fn, cols, n in (("normal", normal, "a b c2 d2", args.n),
                              ("gev", gev, "alpha beta gamma2 delta2 xi", args.n),
                              ("bivariate", bivariate, "|dA1| |dA2| max|dB| maxSigmaRelErr", args.n_bivariate)):
        errs = np.array([fn(s, n) for s in args.seeds])
        print(f"{name} errors ({cols})")
        for s, e in zip(args.seeds, errs):
            print(f"  seed {s}: {e}")
        print(f"  max |err|: {np.abs(errs).max(axis=0)}")


if __name__ == "__main__":
    main()
