"""Distribution diagnostics for return and growth series.

Moments use the plain (biased) sample definitions

    skew   = m3 / m2**1.5
    exkurt = m4 / m2**2 - 3

with ``m_k`` the k-th central sample moment over ``n``, while ``sd`` is the
usual ``n - 1`` standard deviation.

The Anderson-Darling test is the version for a normal law whose mean and
variance are estimated from the sample.  The statistic is corrected for
sample size as ``A*2 = A2 (1 + 0.75/n + 2.25/n**2)`` and compared with the
5% critical value 0.752 (D'Agostino & Stephens, Goodness-of-Fit Techniques,
1986, Table 4.7).  Normal tail probabilities come from
``scipy.special.log_ndtr`` so that extreme points do not round to log(0).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, ndtri

AD_CRITICAL_5PCT = 0.752
AD_MIN_N = 8


class DegenerateSeriesError(ValueError):
    """The series has zero variance (or too few points) for the requested statistic."""


@dataclass(frozen=True)
class Moments:
    mean: float
    sd: float
    skew: float
    exkurt: float


@dataclass(frozen=True)
class ADResult:
    A2: float
    A2star: float
    reject5: bool


@dataclass(frozen=True)
class SeriesStats:
    n: int
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float
    A2: float
    A2star: float
    reject_at_5pct: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _as_array(series: Sequence[float], min_n: int) -> np.ndarray:
    x = np.asarray(series, dtype=float).ravel()
    if x.size < min_n:
        raise DegenerateSeriesError(f"need at least {min_n} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    return x


def moments(series: Sequence[float]) -> Moments:
    x = _as_array(series, 2)
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise DegenerateSeriesError("series has zero variance")
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    sd = float(np.sqrt(m2 * x.size / (x.size - 1)))
    return Moments(mean, sd, m3 / m2**1.5, m4 / (m2 * m2) - 3.0)


def anderson_darling(series: Sequence[float]) -> ADResult:
    """Anderson-Darling normality test with estimated mean and variance.

    Ties are allowed: the normal CDF is evaluated at every sorted point.
    """
    x = _as_array(series, AD_MIN_N)
    n = x.size
    sd = np.std(x, ddof=1)
    if sd == 0.0:
        raise DegenerateSeriesError("series has zero variance")
    z = np.sort((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    # log(1 - Phi(z)) = log Phi(-z)
    s = np.sum((2 * i - 1) * (log_ndtr(z) + log_ndtr(-z[::-1])))
    a2 = float(-n - s / n)
    a2star = a2 * (1.0 + 0.75 / n + 2.25 / n**2)
    return ADResult(a2, a2star, bool(a2star > AD_CRITICAL_5PCT))


def normal_plotting_positions(n: int) -> np.ndarray:
    """``Phi^-1((i - 0.5) / n)`` for i = 1..n."""
    return ndtri((np.arange(1, n + 1) - 0.5) / n)


def qq_normal(series: Sequence[float], mode: str = "standardized") -> np.ndarray:
    """QQ pairs ``(theoretical, sample)`` as an ``(n, 2)`` array.

    ``standardized`` scales the normal quantiles by the sample mean and sd so
    that a normal sample lies on the 45 degree line in data units; ``raw``
    keeps standard normal quantiles.
    """
    x = _as_array(series, 2)
    q = normal_plotting_positions(x.size)
    if mode == "standardized":
        sd = np.std(x, ddof=1)
        if sd == 0.0:
            raise DegenerateSeriesError("series has zero variance")
        q = q * sd + x.mean()
    elif mode != "raw":
        raise ValueError("mode must be 'standardized' or 'raw'")
    return np.column_stack([q, np.sort(x)])


def describe(series: Sequence[float]) -> SeriesStats:
    x = _as_array(series, AD_MIN_N)
    m = moments(x)
    ad = anderson_darling(x)
    return SeriesStats(x.size, m.mean, m.sd, m.skew, m.exkurt, ad.A2, ad.A2star, ad.reject5)


def write_report(stats: dict[str, SeriesStats], path: str | Path) -> None:
    doc = {name: s.to_dict() for name, s in stats.items()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_qq_csv(series: Sequence[float], path: str | Path) -> None:
    """Both QQ modes side by side: theoretical_std, theoretical_raw, sample."""
    std = qq_normal(series, "standardized")
    raw = qq_normal(series, "raw")
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["theoretical_standardized", "theoretical_raw", "sample"])
        for a, b, c in zip(std[:, 0], raw[:, 0], std[:, 1]):
            out.writerow([repr(float(a)), repr(float(b)), repr(float(c))])
