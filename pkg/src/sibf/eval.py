"""Objective quality metrics in dB.

Perfect matches return ``inf`` rather than a huge finite number; callers that
tabulate results should check ``math.isinf``.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DimensionError
from .tfr import StftConfig, stft

__all__ = ["MetricReport", "si_sdr", "snr", "sdr_decomposition", "bin_correlation"]

# residual-to-target energy ratio below which a match counts as exact (-200 dB)
PERFECT = 1e-20


def _db(num: float, den: float) -> float:
    if den <= PERFECT * num:
        return math.inf
    if num <= 0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def si_sdr(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Scale-invariant SDR of ``estimate`` against ``reference``."""
    e, s = _pair(estimate, reference)
    ss = float(s @ s)
    if ss == 0:
        raise ValueError("reference signal is all zeros")
    target = (float(e @ s) / ss) * s
    resid = e - target
    return _db(float(target @ target), float(resid @ resid))


def snr(signal_part: np.ndarray, noise_part: np.ndarray) -> float:
    s, n = _pair(signal_part, noise_part)
    return _db(float(s @ s), float(n @ n))


def bin_correlation(est_spec: np.ndarray, ref_spec: np.ndarray) -> float:
    """Mean over bins of ``|<Y, S>_t| / (||Y|| ||S||)``; silent bins are skipped."""
    num = np.abs(np.sum(est_spec * ref_spec.conj(), axis=-1))
    den = np.linalg.norm(est_spec, axis=-1) * np.linalg.norm(ref_spec, axis=-1)
    ok = den > 0
    if not np.any(ok):
        return math.nan
    return float(np.mean(num[ok] / den[ok]))


@dataclass(frozen=True)
class MetricReport:
    si_sdr: float
    sdr: float
    snr: float
    correlation: float
    degenerate: bool = False

    def as_row(self) -> dict:
        return {"si_sdr": self.si_sdr, "sdr": self.sdr, "snr": self.snr,
                "correlation": self.correlation}


def sdr_decomposition(
    estimate: np.ndarray,
    reference_image: np.ndarray,
    cfg: Optional[StftConfig] = None,
) -> MetricReport:
    """Split ``estimate`` into its projection on the reference span and the rest.

    ``reference_image`` is one signal or a (K, n_samples) stack spanning the
    allowed target subspace. SDR is the energy ratio of projection to
    residual; SNR compares the estimate sample-by-sample with the first
    reference signal. With ``cfg`` the per-bin spectral correlation is
    filled in, otherwise it is NaN.
    """
    e = np.asarray(estimate, dtype=float).ravel()
    R = np.atleast_2d(np.asarray(reference_image, dtype=float))
    if R.shape[1] != e.size:
        raise DimensionError(f"length mismatch: {e.size} vs {R.shape[1]}")
    degenerate = np.linalg.matrix_rank(R) == 0
    if degenerate:
        return MetricReport(math.nan, math.nan, math.nan, math.nan, degenerate=True)
    coef, *_ = np.linalg.lstsq(R.T, e, rcond=None)
    proj = R.T @ coef
    resid = e - proj
    corr = math.nan
    if cfg is not None:
        corr = bin_correlation(stft(e, cfg), stft(R[0], cfg))
    return MetricReport(
        si_sdr=si_sdr(e, R[0]),
        sdr=_db(float(proj @ proj), float(resid @ resid)),
        snr=snr(R[0], e - R[0]),
        correlation=corr,
    )
