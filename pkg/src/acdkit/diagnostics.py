"""Residual-based model checks.

Standardized residuals w_i / psi_i of a correctly specified model are
iid with the assumed innovation distribution; the checks here probe
that claim: Ljung-Box on the residual autocorrelations, the excess
dispersion statistic against the exponential null, and probability
integral transforms tested for uniformity with a chi-squared bin count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .durations import DurationSeries
from .errors import DomainError, ParameterError, ValidationError
from .model import AcdSpec, filter_psi

# chi-squared(20) upper 5% point, the usual cutoff quoted for LB(20)
LB20_CRITICAL_5PCT = 31.41


@dataclass(frozen=True)
class ResidualSegment:
    day_index: int
    offset: int
    values: np.ndarray


@dataclass(frozen=True)
class ResidualSeries:
    """Standardized residuals, segmented like the filtered input."""

    segments: tuple[ResidualSegment, ...]

    @property
    def n_obs(self) -> int:
        return sum(seg.values.size for seg in self.segments)

    def values(self) -> np.ndarray:
        if not self.segments:
            return np.empty(0)
        return np.concatenate([seg.values for seg in self.segments])


def residuals(spec: AcdSpec, series: DurationSeries) -> ResidualSeries:
    """Elementwise w_i / psi_i over the filtered observations."""
    path = filter_psi(spec, series)
    segs = []
    for pseg, dseg in zip(path.segments, series.segments):
        w = dseg.duration[pseg.offset :]
        segs.append(ResidualSegment(pseg.day_index, pseg.offset, w / pseg.psi))
    return ResidualSeries(tuple(segs))


def sample_acf(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations rho_1..rho_max_lag."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n <= max_lag:
        raise ParameterError(f"need more than {max_lag} observations")
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom == 0.0:
        raise DomainError("series has zero variance")
    return np.array([float(dev[k:] @ dev[:-k]) / denom for k in range(1, max_lag + 1)])


def ljung_box(x, lags: int = 20) -> tuple[float, float]:
    """Ljung-Box Q over the first ``lags`` autocorrelations and its
    chi-squared(lags) p-value."""
    x = x.values() if isinstance(x, (ResidualSeries, DurationSeries)) else np.asarray(x, float)
    n = x.size
    rho = sample_acf(x, lags)
    k = np.arange(1, lags + 1)
    q = float(n * (n + 2.0) * np.sum(rho**2 / (n - k)))
    p = float(stats.chi2.sf(q, df=lags))
    return q, p


def excess_dispersion_test(resid) -> tuple[float, float]:
    """sqrt(n) (sigma_hat^2 - 1) / (2 sqrt(2)) against N(0,1), two-sided.

    The normalization 2*sqrt(2) is the asymptotic standard deviation of
    the sample variance of unit-exponential draws, so the statistic is
    asymptotically standard normal under an exponential null.
    """
    x = resid.values() if isinstance(resid, ResidualSeries) else np.asarray(resid, float)
    n = x.size
    if n < 2:
        raise ValidationError("need at least two residuals")
    var = float(np.var(x, ddof=1))
    stat = np.sqrt(n) * (var - 1.0) / (2.0 * np.sqrt(2.0))
    p = 2.0 * float(stats.norm.sf(abs(stat)))
    return float(stat), p


def pit(series: DurationSeries, spec: AcdSpec) -> np.ndarray:
    """Probability integral transform through the one-step-ahead
    conditional CDF: q_i = F_eps(w_i / psi_i), in [0, 1]."""
    path = filter_psi(spec, series)
    w = path.aligned_durations(series)
    psi = path.values()
    return np.asarray(spec.innovation.cdf(w / psi))


def pit_chisq(q, n_categories: int = 20) -> tuple[float, float]:
    """Chi-squared uniformity check on equal-width PIT bins.

    Expected probability is 1/T per bin; the statistic is referred to a
    chi-squared with T - 1 degrees of freedom.
    """
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        raise ValidationError("empty PIT series")
    if n_categories < 2:
        raise ParameterError("need at least two categories")
    counts, _ = np.histogram(q, bins=n_categories, range=(0.0, 1.0))
    expected = q.size / n_categories
    chi2 = float(np.sum((counts - expected) ** 2) / expected)
    p = float(stats.chi2.sf(chi2, df=n_categories - 1))
    return chi2, p


def correlogram(x, max_lag: int, include_lag0: bool = False) -> list[tuple[int, float]]:
    """(lag, autocorrelation) pairs for plotting."""
    x = x.values() if isinstance(x, (ResidualSeries, DurationSeries)) else np.asarray(x, float)
    rho = sample_acf(x, max_lag)
    out = [(0, 1.0)] if include_lag0 else []
    out.extend((k, float(r)) for k, r in enumerate(rho, start=1))
    return out


def diagnostic_report(spec: AcdSpec, series: DurationSeries, lb_lags: int = 20,
                      pit_bins: int = 20, acf_lags: int = 50) -> dict:
    """Bundle of residual checks as a JSON-ready dict."""
    res = residuals(spec, series)
    x = res.values()
    q, p = ljung_box(x, lb_lags)
    stat, disp_p = excess_dispersion_test(x)
    u = pit(series, spec)
    chi2, chi2_p = pit_chisq(u, pit_bins)
    acf = correlogram(x, min(acf_lags, x.size - 1))
    return {
        "n_obs": int(x.size),
        "residual_mean": float(x.mean()),
        "residual_var": float(np.var(x, ddof=1)),
        "lb": {"Q": q, "p": p, "lags": lb_lags},
        "dispersion": {"stat": stat, "p": disp_p},
        "pit_chisq": {"chi2": chi2, "p": chi2_p, "bins": pit_bins},
        "acf": [[k, r] for k, r in acf],
    }
