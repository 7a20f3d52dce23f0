"""Conditional-duration model: specification, filtering, likelihood,
moments and simulation.

The conditional mean psi_i of duration w_i follows one of three
recursions (all restarted at each day boundary):

    linear     psi_i = omega + sum_j alpha_j w_{i-j} + sum_j beta_j psi_{i-j}
    log_type1  ln psi_i = omega + sum_j alpha_j ln w_{i-j} + sum_j beta_j ln psi_{i-j}
    log_type2  ln psi_i = omega + sum_j alpha_j (w_{i-j}/psi_{i-j}) + sum_j beta_j ln psi_{i-j}

with w_i = psi_i * eps_i and eps drawn from a unit-mean innovation
family.  The log forms free the signs of alpha/beta; psi itself is kept
as the conditional mean (always positive) in every form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.signal import lfilter, lfiltic

from .durations import (
    SESSION_CLOSE,
    SESSION_OPEN,
    STATE_RAW,
    DurationSegment,
    DurationSeries,
    TickDay,
)
from .errors import (
    DomainError,
    InfiniteVarianceError,
    NonStationaryError,
    ParameterError,
    PositivityError,
    ValidationError,
)
from .innovations import Innovation

LINEAR = "linear"
LOG_TYPE1 = "log_type1"
LOG_TYPE2 = "log_type2"

INIT_UNCONDITIONAL = "unconditional_mean"
INIT_SAMPLE = "sample_mean"
INIT_FIRST_WINDOW = "first_window_mean"


@dataclass(frozen=True)
class AcdSpec:
    """Model family, orders, parameters, innovation and initialization rule.

    The linear form flags (but does not forbid) negative alpha/beta:
    estimation is unconstrained, and positivity of the conditional mean
    is enforced at filter time instead.
    """

    mean_form: str
    omega: float
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    innovation: Innovation
    init_rule: str = INIT_FIRST_WINDOW
    init_window: float = 900.0  # seconds

    def __post_init__(self):
        if self.mean_form not in (LINEAR, LOG_TYPE1, LOG_TYPE2):
            raise ParameterError(f"unknown mean form {self.mean_form!r}")
        if self.init_rule not in (INIT_UNCONDITIONAL, INIT_SAMPLE, INIT_FIRST_WINDOW):
            raise ParameterError(f"unknown init rule {self.init_rule!r}")
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.alpha) < 1 or len(self.beta) < 1:
            raise ParameterError("orders (m, q) must both be >= 1")
        if self.init_window <= 0:
            raise ParameterError("init window must be > 0")

    @property
    def m_lags(self) -> int:
        return len(self.alpha)

    @property
    def q_lags(self) -> int:
        return len(self.beta)

    @property
    def persistence(self) -> float:
        return sum(self.alpha) + sum(self.beta)

    def is_stationary(self) -> bool:
        """Weak-stationarity indicator for the spec's mean form."""
        if self.mean_form == LINEAR:
            return self.persistence < 1.0
        if self.mean_form == LOG_TYPE1:
            return abs(self.persistence) < 1.0
        return abs(sum(self.beta)) < 1.0

    @property
    def n_mean_params(self) -> int:
        return 1 + self.m_lags + self.q_lags

    @property
    def n_params(self) -> int:
        return self.n_mean_params + self.innovation.n_shapes

    def label(self) -> str:
        tag = {"exponential": "EACD", "weibull": "WACD", "gamma": "GACD",
               "gengamma": "GGACD"}[self.innovation.variant]
        return f"{tag}({self.m_lags},{self.q_lags})"

    def to_dict(self) -> dict:
        return {
            "mean_form": self.mean_form,
            "omega": self.omega,
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "innovation": self.innovation.to_dict(),
            "init_rule": self.init_rule,
            "init_window": self.init_window,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AcdSpec":
        return cls(
            mean_form=data["mean_form"],
            omega=float(data["omega"]),
            alpha=tuple(data["alpha"]),
            beta=tuple(data["beta"]),
            innovation=Innovation.from_dict(data["innovation"]),
            init_rule=data.get("init_rule", INIT_FIRST_WINDOW),
            init_window=float(data.get("init_window", 900.0)),
        )


@dataclass(frozen=True)
class PsiSegment:
    day_index: int
    offset: int  # leading observations consumed by the init window
    psi: np.ndarray


@dataclass(frozen=True)
class PsiPath:
    """Per-observation conditional means, segmented like the input series."""

    segments: tuple[PsiSegment, ...]

    @property
    def n_obs(self) -> int:
        return sum(seg.psi.size for seg in self.segments)

    def values(self) -> np.ndarray:
        if not self.segments:
            return np.empty(0)
        return np.concatenate([seg.psi for seg in self.segments])

    def aligned_durations(self, series: DurationSeries) -> np.ndarray:
        """Durations matching the filtered psi values (window obs dropped)."""
        parts = []
        for pseg, dseg in zip(self.segments, series.segments):
            parts.append(dseg.duration[pseg.offset :])
        return np.concatenate(parts) if parts else np.empty(0)


def unconditional_mean(spec: AcdSpec) -> float:
    """omega / (1 - sum(alpha) - sum(beta)) for a stationary linear spec."""
    if spec.mean_form != LINEAR:
        raise ParameterError("unconditional mean is available for the linear form only")
    if spec.persistence >= 1.0:
        raise NonStationaryError(
            f"sum(alpha) + sum(beta) = {spec.persistence:.6g} >= 1"
        )
    return spec.omega / (1.0 - spec.persistence)


def unconditional_variance(spec: AcdSpec, second_moment_eps: float | None = None) -> float:
    """Unconditional duration variance of a linear (1,1) spec.

    Uses the closed form in terms of E(eps^2); with E(eps^2) = 2 it
    reduces to Var = E^2(w) * (1 - b^2 - 2ab) / (1 - b^2 - 2ab - 2a^2).
    """
    if spec.mean_form != LINEAR or spec.m_lags != 1 or spec.q_lags != 1:
        raise ParameterError("closed-form variance requires a linear (1,1) spec")
    a, b = spec.alpha[0], spec.beta[0]
    e2 = spec.innovation.second_moment() if second_moment_eps is None else float(second_moment_eps)
    mu = unconditional_mean(spec)
    denom = 1.0 - b * b - 2.0 * a * b - a * a * e2
    if denom <= 0:
        raise InfiniteVarianceError(
            f"b^2 + 2ab + a^2 E(eps^2) = {1.0 - denom:.6g} >= 1"
        )
    num = e2 * (1.0 - b * b - 2.0 * a * b - a * a) - denom
    return mu * mu * num / denom


def acf1(spec: AcdSpec) -> float:
    """First-order autocorrelation of a stationary linear (1,1) spec."""
    if spec.mean_form != LINEAR or spec.m_lags != 1 or spec.q_lags != 1:
        raise ParameterError("closed-form ACF requires a linear (1,1) spec")
    if spec.persistence >= 1.0:
        raise NonStationaryError("spec is not weakly stationary")
    a, b = spec.alpha[0], spec.beta[0]
    return a * (1.0 - b * b - a * b) / (1.0 - b * b - 2.0 * a * b)


def arma_coefficients(spec: AcdSpec) -> tuple[list[float], list[float]]:
    """ARMA(max(m,q), q) representation of the linear form.

    AR coefficient j is alpha_j + beta_j (missing lags padded with 0);
    MA coefficient j is -beta_j.
    """
    if spec.mean_form != LINEAR:
        raise ParameterError("ARMA form is defined for the linear mean equation")
    p = max(spec.m_lags, spec.q_lags)
    alpha = list(spec.alpha) + [0.0] * (p - spec.m_lags)
    beta = list(spec.beta) + [0.0] * (p - spec.q_lags)
    ar = [alpha[j] + beta[j] for j in range(p)]
    ma = [-b for b in spec.beta]
    return ar, ma


def _init_value(spec: AcdSpec, series_mean: float, day_w: np.ndarray,
                day_start: np.ndarray) -> tuple[float, int]:
    """Initialization value and number of leading observations consumed."""
    if spec.init_rule == INIT_UNCONDITIONAL:
        return unconditional_mean(spec), 0
    if spec.init_rule == INIT_SAMPLE:
        return series_mean, 0
    window_end = day_start[0] + spec.init_window
    in_window = day_start < window_end
    n_in = int(np.count_nonzero(in_window))
    if n_in == day_w.size:
        return float(np.mean(day_w)), day_w.size  # whole day inside the window
    return float(np.mean(day_w[:n_in])), n_in


def _psi_linear(spec: AcdSpec, w: np.ndarray, init: float) -> np.ndarray:
    """Linear recursion via a rational filter; pre-sample w and psi = init."""
    m, q = spec.m_lags, spec.q_lags
    n = w.size
    wx = np.concatenate([np.full(m, init), w])
    x = np.full(n, spec.omega)
    for j, a_j in enumerate(spec.alpha, start=1):
        x += a_j * wx[m - j : m - j + n]
    a_poly = np.concatenate([[1.0], -np.asarray(spec.beta)])
    zi = lfiltic([1.0], a_poly, y=np.full(q, init))
    psi, _ = lfilter([1.0], a_poly, x, zi=zi)
    return psi


def _psi_log1(spec: AcdSpec, w: np.ndarray, init: float) -> np.ndarray:
    if np.any(w <= 0):
        raise DomainError("log_type1 recursion requires strictly positive durations")
    m, q = spec.m_lags, spec.q_lags
    n = w.size
    log_init = math.log(init)
    lx = np.concatenate([np.full(m, log_init), np.log(w)])
    x = np.full(n, spec.omega)
    for j, a_j in enumerate(spec.alpha, start=1):
        x += a_j * lx[m - j : m - j + n]
    a_poly = np.concatenate([[1.0], -np.asarray(spec.beta)])
    zi = lfiltic([1.0], a_poly, y=np.full(q, log_init))
    log_psi, _ = lfilter([1.0], a_poly, x, zi=zi)
    return np.exp(log_psi)


def _psi_log2(spec: AcdSpec, w: np.ndarray, init: float) -> np.ndarray:
    m, q = spec.m_lags, spec.q_lags
    n = w.size
    log_init = math.log(init)
    ratios = [1.0] * m  # pre-sample w/psi = init/init
    logs = [log_init] * q
    out = np.empty(n)
    alpha, beta = spec.alpha, spec.beta
    for i in range(n):
        lp = spec.omega
        for j in range(m):
            lp += alpha[j] * ratios[-1 - j]
        for j in range(q):
            lp += beta[j] * logs[-1 - j]
        psi = math.exp(lp)
        out[i] = psi
        ratios.append(w[i] / psi)
        logs.append(lp)
        if len(ratios) > m + 1:
            del ratios[0]
        if len(logs) > q + 1:
            del logs[0]
    return out


_PSI_FUNCS = {LINEAR: _psi_linear, LOG_TYPE1: _psi_log1, LOG_TYPE2: _psi_log2}


def filter_psi(spec: AcdSpec, series: DurationSeries) -> PsiPath:
    """Run the conditional-mean recursion over a duration series.

    The recursion restarts at every day boundary using the spec's
    initialization rule; under ``first_window_mean`` the first window of
    each day seeds the recursion and those observations are excluded
    from the filtered path.  Any non-positive conditional mean under the
    linear form raises :class:`PositivityError` with the flat index.
    """
    if not all(np.isfinite([spec.omega, *spec.alpha, *spec.beta])):
        raise ParameterError("spec parameters must be finite")
    values = series.values()
    series_mean = float(np.mean(values)) if values.size else 1.0
    psi_fn = _PSI_FUNCS[spec.mean_form]
    segments = []
    flat_base = 0
    for seg in series.segments:
        w = seg.duration
        if w.size == 0:
            segments.append(PsiSegment(seg.day_index, 0, np.empty(0)))
            continue
        init, offset = _init_value(spec, series_mean, w, seg.start)
        w_used = w[offset:]
        if w_used.size == 0:
            segments.append(PsiSegment(seg.day_index, offset, np.empty(0)))
            flat_base += w.size
            continue
        if init <= 0:
            raise DomainError(
                f"day {seg.day_index}: non-positive initialization value {init!r}"
            )
        psi = psi_fn(spec, w_used, init)
        bad = np.flatnonzero(psi <= 0)
        if bad.size:
            raise PositivityError(flat_base + offset + int(bad[0]), float(psi[bad[0]]))
        segments.append(PsiSegment(seg.day_index, offset, psi))
        flat_base += w.size
    return PsiPath(tuple(segments))


@dataclass(frozen=True)
class LoglikResult:
    total: float
    contributions: np.ndarray
    path: PsiPath


def loglik(spec: AcdSpec, series: DurationSeries) -> LoglikResult:
    """Log-likelihood sum of ln p(w_i/psi_i) - ln psi_i, with the
    per-observation contributions exposed."""
    path = filter_psi(spec, series)
    w = path.aligned_durations(series)
    psi = path.values()
    if w.size == 0:
        return LoglikResult(0.0, np.empty(0), path)
    if np.any(w <= 0):
        raise DomainError("likelihood requires strictly positive durations")
    contrib = spec.innovation.log_density(w / psi) - np.log(psi)
    bad = np.flatnonzero(~np.isfinite(contrib))
    if bad.size:
        raise DomainError(
            f"non-finite likelihood contribution at observation {int(bad[0])}"
        )
    return LoglikResult(float(np.sum(contrib)), contrib, path)


def conditional_intensity(spec: AcdSpec, elapsed, psi_next: float):
    """Instantaneous event rate a given time after the last event.

    Computed as hazard(elapsed / psi) / psi for the spec's unit-mean
    innovation family; constant at 1/psi for exponential innovations,
    monotone increasing (decreasing) for Weibull shape > 1 (< 1).
    """
    if psi_next <= 0:
        raise ParameterError("conditional mean must be > 0")
    elapsed = np.asarray(elapsed, dtype=float)
    if np.any(elapsed < 0):
        raise DomainError("elapsed time must be >= 0")
    out = spec.innovation.hazard(elapsed / psi_next) / psi_next
    return float(out) if np.ndim(out) == 0 else out


class _Stepper:
    """Stateful one-step-ahead recursion shared by the simulators.

    The linear form accumulates the conditional mean in the same
    operation order as the lfilter-based filter (omega + alpha terms
    first, beta terms added last), so replaying the generating spec on
    simulated output reproduces the innovations bit-for-bit for (1,1)
    orders.
    """

    def __init__(self, spec: AcdSpec, init: float):
        self.spec = spec
        self.form = spec.mean_form
        m, q = spec.m_lags, spec.q_lags
        if self.form == LINEAR:
            self._a = [init] * m  # lagged w
            self._b = [init] * q  # lagged psi
        elif self.form == LOG_TYPE1:
            self._a = [math.log(init)] * m  # lagged ln w
            self._b = [math.log(init)] * q  # lagged ln psi
        else:
            self._a = [1.0] * m  # lagged w/psi
            self._b = [math.log(init)] * q  # lagged ln psi

    def next_mean(self) -> float:
        spec = self.spec
        x = spec.omega
        for j in range(spec.m_lags):
            x += spec.alpha[j] * self._a[-1 - j]
        for j in range(spec.q_lags):
            x += spec.beta[j] * self._b[-1 - j]
        return x if self.form == LINEAR else math.exp(x)

    def push(self, w: float, psi: float) -> None:
        if self.form == LINEAR:
            self._a.append(w)
            self._b.append(psi)
        elif self.form == LOG_TYPE1:
            self._a.append(math.log(w))
            self._b.append(math.log(psi))
        else:
            self._a.append(w / psi)
            self._b.append(math.log(psi))
        del self._a[0], self._b[0]


def simulate_durations(spec: AcdSpec, n: int, seed_or_rng, init: float | None = None,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Draw one uninterrupted stretch of n durations (no day structure).

    Returns (w, psi) with w = psi * eps.
    """
    if not spec.is_stationary():
        raise NonStationaryError("refusing to simulate a non-stationary spec")
    rng = np.random.default_rng(seed_or_rng) if isinstance(seed_or_rng, (int, np.integer)) else seed_or_rng
    eps = spec.innovation.draw(rng, n)
    if init is None:
        init = unconditional_mean(spec) if spec.mean_form == LINEAR else 1.0
    w = np.empty(n)
    psi = np.empty(n)
    stepper = _Stepper(spec, init)
    for i in range(n):
        p = stepper.next_mean()
        wi = p * eps[i]
        psi[i] = p
        w[i] = wi
        stepper.push(wi, p)
    return w, psi


def simulate(spec: AcdSpec, n_per_day: int, n_days: int, seed: int,
             profile=None, session: tuple[float, float] = (SESSION_OPEN, SESSION_CLOSE),
             price0: float = 100.0, volume: float = 100.0,
             price_step_sd: float = 1e-4) -> tuple[DurationSeries, list[TickDay]]:
    """Simulate tick days from the spec, with optional diurnal factor.

    Each day restarts the recursion at the unconditional mean (linear)
    or at 1 (log forms), places an opening tick at the session open and
    advances the clock by s(t) * psi * eps, rounding onto the
    millisecond grid.  The day ends at the session close or after
    ``n_per_day`` durations, whichever comes first; ``n_per_day = 0``
    means fill the session.  Prices follow a log random walk with
    standard-normal steps scaled by ``price_step_sd``; volumes are
    constant.  Identical seeds give identical output.

    Returns the duration series implied by the (rounded) tick clock plus
    the tick days themselves, so writing the ticks out and re-ingesting
    them reproduces the duration series exactly.
    """
    if not spec.is_stationary():
        raise NonStationaryError("refusing to simulate a non-stationary spec")
    if seed is None or int(seed) < 0:
        raise ParameterError("a non-negative integer seed is required")
    if n_days < 1:
        raise ParameterError("n_days must be >= 1")
    rng = np.random.default_rng(int(seed))
    open_ms = int(round(session[0] * 1000))
    close_ms = int(round(session[1] * 1000))
    init = unconditional_mean(spec) if spec.mean_form == LINEAR else 1.0
    cap = n_per_day if n_per_day and n_per_day > 0 else None

    day_list: list[TickDay] = []
    segments: list[DurationSegment] = []
    for day in range(n_days):
        t_ms = open_ms
        times = [t_ms]
        log_price = math.log(price0)
        prices = [price0]
        stepper = _Stepper(spec, init)
        count = 0
        while cap is None or count < cap:
            p = stepper.next_mean()
            scale = float(profile.evaluate(t_ms / 1000.0)) if profile is not None else 1.0
            eps = float(spec.innovation.draw(rng, ()))
            wi = scale * p * eps
            next_ms = t_ms + int(round(wi * 1000.0))
            if next_ms > close_ms:
                break
            w_grid = (next_ms - t_ms) / 1000.0
            # the recursion runs on deseasonalized durations; feed back the
            # grid-rounded adjusted value so re-ingested data replays the
            # same recursion (log forms keep the exact draw when the grid
            # would give a zero, which they cannot accept)
            w_adj = w_grid / scale
            if spec.mean_form != LINEAR and w_grid <= 0:
                w_adj = p * eps
            t_ms = next_ms
            times.append(t_ms)
            log_price += price_step_sd * rng.standard_normal()
            prices.append(math.exp(log_price))
            stepper.push(w_adj, p)
            count += 1
        times_arr = np.asarray(times, dtype=np.int64)
        vols = np.full(times_arr.size, float(volume))
        day_list.append(TickDay(day, times_arr, np.asarray(prices), vols))
        dur = (times_arr[1:] - times_arr[:-1]) / 1000.0
        segments.append(DurationSegment(day, times_arr[:-1] / 1000.0,
                                        times_arr[1:] / 1000.0, dur))
    series = DurationSeries(kind="trade", segments=tuple(segments),
                            seasonal_state=STATE_RAW)
    return series, day_list
