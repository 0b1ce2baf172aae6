"""Ensemble copula coupling with random margin samples (ECC-R)."""

from dataclasses import dataclass

import numpy as np

from .data import consistency_clamp
from .emos_uni import sample_law


def stable_ranks(values):
    """0-based ranks along the last axis, ties broken by position."""
    order = np.argsort(values, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(values.shape[-1]), axis=-1)
    return ranks


def ecc_reorder(calibrated, raw):
    """Permute ``calibrated`` so its rank vector equals that of ``raw``.

    Works on the last axis; leading axes are broadcast case dimensions.
    """
    calibrated = np.asarray(calibrated, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if calibrated.shape[-1] != raw.shape[-1]:
        raise ValueError("calibrated sample and raw ensemble differ in size")
    ranks = stable_ranks(raw)
    ranks = np.broadcast_to(ranks, calibrated.shape)
    return np.take_along_axis(np.sort(calibrated, axis=-1), ranks, axis=-1)


@dataclass(frozen=True)
class EccSample:
    replicate_index: int
    t: np.ndarray
    td: np.ndarray


def ecc_r_samples(t_law, td_law, raw_t, raw_td, n_replicates, rng, clamp=True):
    """Array form of the ECC-R pipeline.

    Returns ``(t, td)`` of shape ``(..., n_replicates, K)`` where the leading
    axes follow the laws' batch shape. Each replicate is rank-matched to the
    raw margins and, with ``clamp``, dew points are capped at the paired
    temperature. The clamp can alter dew-point ranks where it binds.
    """
    if n_replicates < 1:
        raise ValueError("need at least one replicate")
    raw_t = np.asarray(raw_t, dtype=float)
    raw_td = np.asarray(raw_td, dtype=float)
    k = raw_t.shape[-1]
    st = sample_law(t_law, n_replicates * k, rng)
    sd = sample_law(td_law, n_replicates * k, rng)
    st = st.reshape(st.shape[:-1] + (n_replicates, k))
    sd = sd.reshape(sd.shape[:-1] + (n_replicates, k))
    t = ecc_reorder(st, raw_t[..., None, :])
    td = ecc_reorder(sd, raw_td[..., None, :])
    return t, consistency_clamp(t, td) if clamp else td


def ecc_r_pipeline(t_law, td_law, raw_t, raw_td, n_replicates, rng, clamp=True):
    """Single-case ECC-R returning one :class:`EccSample` per replicate."""
    t, td = ecc_r_samples(t_law, td_law, raw_t, raw_td, n_replicates, rng, clamp)
    return [EccSample(i + 1, t[i], td[i]) for i in range(n_replicates)]
