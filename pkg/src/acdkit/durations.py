"""Construction of duration series from tick records.

Builds trade, transaction-aggregated, price and volume duration series
with per-day bookkeeping, plus zero/cap filtering and descriptive
statistics.  Timestamps are carried internally as integer milliseconds
(the finest resolution the market records) and converted to float
seconds at API boundaries, so differencing never accumulates float
drift even over very large samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParameterError, ValidationError

SESSION_OPEN = 34_200.0  # 09:30:00 in seconds since midnight
SESSION_CLOSE = 57_600.0  # 16:00:00

# Guard for float equality at grid prices: |dp| >= C is tested as
# |dp| >= C - PRICE_TOL.
PRICE_TOL = 1e-9

KIND_TRADE = "trade"
KIND_AGGREGATED = "aggregated"
KIND_PRICE = "price"
KIND_VOLUME = "volume"

STATE_RAW = "raw"
STATE_DESEASONALIZED = "deseasonalized"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TickRecord:
    """One transaction: trading-day ordinal, time of day, price, volume."""

    day_index: int
    time: float  # seconds since midnight, millisecond resolution
    price: float
    volume: float


@dataclass(frozen=True)
class TickDay:
    """One trading day's ordered tick sequence.

    Times are stored as int64 milliseconds since midnight; construction
    validates non-decreasing order and positive prices/volumes.
    Simultaneous ticks (zero gaps) are permitted.
    """

    day_index: int
    times_ms: np.ndarray
    prices: np.ndarray
    volumes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_ms, dtype=np.int64)
        p = np.asarray(self.prices, dtype=float)
        v = np.asarray(self.volumes, dtype=float)
        if t.size == 0:
            raise ValidationError(f"day {self.day_index}: empty tick day")
        if not (t.size == p.size == v.size):
            raise ValidationError(f"day {self.day_index}: column lengths differ")
        if np.any(np.diff(t) < 0):
            i = int(np.argmax(np.diff(t) < 0))
            raise ValidationError(
                f"day {self.day_index}: decreasing timestamp at tick {i + 1}"
            )
        if np.any(p <= 0):
            raise ValidationError(f"day {self.day_index}: non-positive price")
        if np.any(v <= 0):
            raise ValidationError(f"day {self.day_index}: non-positive volume")
        object.__setattr__(self, "times_ms", _readonly(t))
        object.__setattr__(self, "prices", _readonly(p))
        object.__setattr__(self, "volumes", _readonly(v))

    @classmethod
    def from_seconds(cls, day_index: int, times: Sequence[float],
                     prices: Sequence[float], volumes: Sequence[float]) -> "TickDay":
        """Build a day from float-second timestamps, rounded onto the ms grid."""
        t = np.asarray(times, dtype=float)
        ms = np.rint(t * 1000.0).astype(np.int64)
        return cls(day_index, ms, np.asarray(prices, float), np.asarray(volumes, float))

    @property
    def times(self) -> np.ndarray:
        """Tick times in float seconds."""
        return self.times_ms / 1000.0

    def __len__(self) -> int:
        return int(self.times_ms.size)

    def records(self) -> list[TickRecord]:
        return [
            TickRecord(self.day_index, t, p, v)
            for t, p, v in zip(self.times, self.prices, self.volumes)
        ]


@dataclass(frozen=True)
class DurationSegment:
    """One day's run of durations: (start, end, duration) triples.

    For raw series ``duration == end - start``; after deseasonalization
    durations become dimensionless ratios while start/end keep the
    original clock times.
    """

    day_index: int
    start: np.ndarray
    end: np.ndarray
    duration: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.start, dtype=float)
        e = np.asarray(self.end, dtype=float)
        d = np.asarray(self.duration, dtype=float)
        if not (s.size == e.size == d.size):
            raise ValidationError("segment arrays must have equal length")
        object.__setattr__(self, "start", _readonly(s))
        object.__setattr__(self, "end", _readonly(e))
        object.__setattr__(self, "duration", _readonly(d))

    def __len__(self) -> int:
        return int(self.duration.size)


@dataclass(frozen=True)
class DurationSeries:
    """Ordered positive durations with per-day segmentation and provenance.

    ``kind`` records how the series was built (trade, aggregated, price,
    volume) with the defining parameter (T, C or V) in ``param``.
    ``contiguous`` is cleared by filtering: surviving entries keep
    non-decreasing start times but ends no longer meet the next start.
    """

    kind: str
    segments: tuple[DurationSegment, ...]
    seasonal_state: str = STATE_RAW
    param: float | None = None
    contiguous: bool = True

    @property
    def n_obs(self) -> int:
        return sum(len(seg) for seg in self.segments)

    @property
    def n_days(self) -> int:
        return len(self.segments)

    def values(self) -> np.ndarray:
        """All durations, concatenated in day order."""
        if not self.segments:
            return np.empty(0)
        return np.concatenate([seg.duration for seg in self.segments])

    def starts(self) -> np.ndarray:
        if not self.segments:
            return np.empty(0)
        return np.concatenate([seg.start for seg in self.segments])

    @classmethod
    def from_durations(cls, values: Sequence[float], day_index: int = 0,
                       t0: float = 0.0, kind: str = KIND_TRADE,
                       seasonal_state: str = STATE_RAW) -> "DurationSeries":
        """Wrap a plain duration vector as a single synthetic day."""
        d = np.asarray(values, dtype=float)
        edges = t0 + np.concatenate([[0.0], np.cumsum(d)])
        seg = DurationSegment(day_index, edges[:-1], edges[1:], d)
        return cls(kind=kind, segments=(seg,), seasonal_state=seasonal_state)


@dataclass(frozen=True)
class ThinningConfig:
    """Thresholds for event thinning: price movement C and volume V."""

    price_threshold: float = 0.05
    volume_threshold: float = 10_000.0

    def __post_init__(self):
        if self.price_threshold < 0:
            raise ParameterError("price threshold must be >= 0")
        if self.volume_threshold <= 0:
            raise ParameterError("volume threshold must be > 0")


@dataclass(frozen=True)
class FilterPolicy:
    """Zero-drop and duration-cap filter applied before modeling."""

    drop_zero: bool = True
    max_duration_cap: float | None = 3.0

    def __post_init__(self):
        if self.max_duration_cap is not None and self.max_duration_cap <= 0:
            raise ParameterError("duration cap must be > 0 when set")

    @property
    def is_identity(self) -> bool:
        return not self.drop_zero and self.max_duration_cap is None


def _as_days(ticks: TickDay | Iterable[TickDay]) -> list[TickDay]:
    if isinstance(ticks, TickDay):
        return [ticks]
    return list(ticks)


def _segment_from_retained(day: TickDay, idx: np.ndarray) -> DurationSegment:
    """Durations between consecutive retained tick indices of one day."""
    kept_ms = day.times_ms[idx]
    dur = (kept_ms[1:] - kept_ms[:-1]) / 1000.0
    return DurationSegment(day.day_index, kept_ms[:-1] / 1000.0,
                           kept_ms[1:] / 1000.0, dur)


def compute_trade_durations(ticks: TickDay | Iterable[TickDay]) -> DurationSeries:
    """Differences between consecutive tick times, day by day.

    Zero durations (simultaneous ticks) are retained; a day with fewer
    than two ticks contributes an empty segment.  Day boundaries always
    break the chain, so no duration spans two days.
    """
    segments = []
    for day in _as_days(ticks):
        idx = np.arange(len(day))
        segments.append(_segment_from_retained(day, idx))
    return DurationSeries(kind=KIND_TRADE, segments=tuple(segments))


def aggregate_transactions(ticks: TickDay | Iterable[TickDay], T: int) -> DurationSeries:
    """Durations spanning (T-1) consecutive tick gaps, non-overlapping.

    Entry i of a day covers tick times ``t[(T-1)*i] .. t[(T-1)*(i+1)]``,
    giving ``floor((N-1)/(T-1))`` durations for N ticks.  T = 2
    reproduces :func:`compute_trade_durations` exactly.
    """
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ParameterError(f"aggregation count T must be an integer >= 2, got {T!r}")
    step = int(T) - 1
    segments = []
    for day in _as_days(ticks):
        idx = np.arange(0, len(day), step)
        segments.append(_segment_from_retained(day, idx))
    return DurationSeries(kind=KIND_AGGREGATED, segments=tuple(segments), param=float(T))


def aggregate_durations(series: DurationSeries, T: int) -> DurationSeries:
    """Aggregate an existing trade-duration series over (T-1)-gap blocks.

    Each output duration is the sum of (T-1) consecutive input
    durations; start/end times span the block.  On a raw trade series
    this coincides with :func:`aggregate_transactions` on the underlying
    ticks; on a filtered or deseasonalized trade series the blocks group
    consecutive surviving entries (adjust ticks first, then aggregate).
    """
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ParameterError(f"aggregation count T must be an integer >= 2, got {T!r}")
    if series.kind != KIND_TRADE:
        raise ValidationError("duration aggregation is defined on trade series")
    step = int(T) - 1
    segments = []
    for seg in series.segments:
        k = len(seg) // step
        if k == 0:
            segments.append(DurationSegment(seg.day_index, np.empty(0), np.empty(0), np.empty(0)))
            continue
        block = seg.duration[: k * step].reshape(k, step)
        dur = block.sum(axis=1)
        start = seg.start[0 : k * step : step]
        end = seg.end[step - 1 : k * step : step]
        segments.append(DurationSegment(seg.day_index, start, end, dur))
    return DurationSeries(kind=KIND_AGGREGATED, segments=tuple(segments),
                          seasonal_state=series.seasonal_state, param=float(T))


def thin_by_price(ticks: TickDay | Iterable[TickDay], threshold: float) -> DurationSeries:
    """Retain ticks whose price moved by at least ``threshold`` since the
    last retained tick; durations are gaps between retained times.

    Starting from the day's first tick, the next retained tick is the
    first one with ``|p - p_last| >= threshold`` (absolute price change,
    with a 1e-9 tolerance guarding float equality at grid prices).
    ``threshold = 0`` degenerates to keeping every tick.  Thinning
    restarts at each day boundary.
    """
    if threshold < 0:
        raise ParameterError("price threshold must be >= 0")
    segments = []
    for day in _as_days(ticks):
        kept = [0]
        ref = day.prices[0]
        if threshold > 0:
            for j in range(1, len(day)):
                if abs(day.prices[j] - ref) >= threshold - PRICE_TOL:
                    kept.append(j)
                    ref = day.prices[j]
        else:
            kept = list(range(len(day)))
        segments.append(_segment_from_retained(day, np.asarray(kept, dtype=np.intp)))
    return DurationSeries(kind=KIND_PRICE, segments=tuple(segments), param=float(threshold))


def thin_by_volume(ticks: TickDay | Iterable[TickDay], threshold: float) -> DurationSeries:
    """Retain each first tick at which cumulative volume since the last
    retained tick reaches ``threshold`` (the retained tick itself does
    not count toward the next window)."""
    if threshold <= 0:
        raise ParameterError("volume threshold must be > 0")
    segments = []
    for day in _as_days(ticks):
        kept = [0]
        acc = 0.0
        for j in range(1, len(day)):
            acc += day.volumes[j]
            if acc >= threshold:
                kept.append(j)
                acc = 0.0
        segments.append(_segment_from_retained(day, np.asarray(kept, dtype=np.intp)))
    return DurationSeries(kind=KIND_VOLUME, segments=tuple(segments), param=float(threshold))


def apply_filter(series: DurationSeries, policy: FilterPolicy) -> DurationSeries:
    """Drop zero durations and/or durations above the cap.

    Never reorders or alters surviving values.  Day segmentation is
    preserved; if anything was dropped the contiguity flag is cleared
    (start times stay non-decreasing but the chain is broken).
    """
    if series.seasonal_state != STATE_RAW:
        raise ValidationError("filtering applies to raw series")
    if policy.is_identity:
        return series
    segments = []
    dropped = 0
    for seg in series.segments:
        keep = np.ones(len(seg), dtype=bool)
        if policy.drop_zero:
            keep &= seg.duration > 0.0
        if policy.max_duration_cap is not None:
            keep &= seg.duration <= policy.max_duration_cap
        dropped += int(len(seg) - keep.sum())
        segments.append(DurationSegment(seg.day_index, seg.start[keep],
                                        seg.end[keep], seg.duration[keep]))
    return DurationSeries(kind=series.kind, segments=tuple(segments),
                          seasonal_state=series.seasonal_state, param=series.param,
                          contiguous=series.contiguous and dropped == 0)


QUANTILE_PROBS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class SeriesSummary:
    """Descriptive statistics of a duration series."""

    kind: str
    sample_size: int
    mean: float
    std: float
    quantiles: dict = field(default_factory=dict)
    ljung_box_q: float | None = None
    ljung_box_p: float | None = None
    ljung_box_lags: int = 20

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "sample_size": self.sample_size,
            "mean": self.mean,
            "std": self.std,
        }
        for p, v in self.quantiles.items():
            out[f"q{int(round(p * 100)):02d}"] = v
        out["ljung_box"] = (
            None
            if self.ljung_box_q is None
            else {"Q": self.ljung_box_q, "p": self.ljung_box_p, "lags": self.ljung_box_lags}
        )
        return out


def describe(series: DurationSeries, lb_lags: int = 20) -> SeriesSummary:
    """Sample size, mean, SD, empirical-CDF-inverse quantiles and the
    Ljung-Box Q statistic over the first ``lb_lags`` autocorrelations.

    Quantiles follow the empirical-distribution inverse: q(p) is the
    smallest observation x with F(x) >= p.  For a constant series the
    Ljung-Box statistic is reported as undefined (None).
    """
    x = series.values()
    if x.size == 0:
        raise ValidationError("cannot describe an empty series")
    quantiles = {p: float(np.quantile(x, p, method="inverted_cdf")) for p in QUANTILE_PROBS}
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    lb_q = lb_p = None
    if std > 0 and x.size > lb_lags:
        from .diagnostics import ljung_box

        lb_q, lb_p = ljung_box(x, lb_lags)
    return SeriesSummary(
        kind=series.kind,
        sample_size=int(x.size),
        mean=float(np.mean(x)),
        std=std,
        quantiles=quantiles,
        ljung_box_q=lb_q,
        ljung_box_p=lb_p,
        ljung_box_lags=lb_lags,
    )


def price_duration_volatility(threshold: float, price: float, hazard: float) -> float:
    """Instantaneous volatility implied by a price-duration hazard.

    Returns ``(threshold / price)**2 * hazard``: the squared relative
    price move that defines the duration, times the instantaneous rate
    at which such moves arrive.
    """
    if price <= 0:
        raise ParameterError("price must be > 0")
    if hazard < 0:
        raise DomainError("hazard must be >= 0")
    return (threshold / price) ** 2 * hazard


def restrict_days(series: DurationSeries, day_indices: Iterable[int]) -> DurationSeries:
    """Sub-series containing only the given trading days."""
    wanted = set(int(d) for d in day_indices)
    segs = tuple(seg for seg in series.segments if seg.day_index in wanted)
    return replace(series, segments=segs)
