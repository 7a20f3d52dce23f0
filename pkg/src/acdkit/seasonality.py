"""Intraday periodicity estimation and removal.

Durations decompose as w_i = w~_i * s(t_{i-1}) with s a deterministic
time-of-day factor evaluated at the duration's start time.  The factor
is estimated either by a natural cubic spline through binned pooled
means or by a flexible Fourier-series least-squares fit, and divided
out to produce the seasonally adjusted series.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .durations import (
    SESSION_CLOSE,
    SESSION_OPEN,
    STATE_DESEASONALIZED,
    STATE_RAW,
    DurationSegment,
    DurationSeries,
)
from .errors import ParameterError, ValidationError

PROFILE_FLOOR = 1e-6
SESSION_MINUTES = int((SESSION_CLOSE - SESSION_OPEN) / 60)


@dataclass(frozen=True)
class DiurnalProfile:
    """Deterministic time-of-day factor s(t), spline or Fourier form.

    Spline profiles interpolate positive node values at strictly
    increasing node times with natural boundary conditions (zero second
    derivative); evaluation clamps t to the node range and floors the
    value at 1e-6.  Fourier profiles evaluate
    intercept + trend * t_bar + sum_j [c_j cos(2 pi j t_bar) + s_j sin(2 pi j t_bar)]
    with t_bar the fraction of the session elapsed at t.
    """

    form: str  # "cubic_spline" | "fourier"
    session: tuple[float, float] = (SESSION_OPEN, SESSION_CLOSE)
    node_times: tuple[float, ...] = ()
    node_values: tuple[float, ...] = ()
    order: int = 0
    intercept: float = 0.0
    trend: float = 0.0
    cos_coef: tuple[float, ...] = ()
    sin_coef: tuple[float, ...] = ()

    def __post_init__(self):
        if self.form not in ("cubic_spline", "fourier"):
            raise ParameterError(f"unknown profile form {self.form!r}")
        if self.form == "cubic_spline":
            t = np.asarray(self.node_times, dtype=float)
            v = np.asarray(self.node_values, dtype=float)
            if t.size < 2:
                raise ParameterError("spline profile needs at least two nodes")
            if np.any(np.diff(t) <= 0):
                raise ParameterError("node times must be strictly increasing")
            if np.any(v <= 0):
                raise ParameterError("node values must be > 0")
        else:
            if len(self.cos_coef) != self.order or len(self.sin_coef) != self.order:
                raise ParameterError("harmonic coefficient count must equal the order")

    @classmethod
    def constant(cls, value: float,
                 session: tuple[float, float] = (SESSION_OPEN, SESSION_CLOSE)) -> "DiurnalProfile":
        return cls(form="cubic_spline", session=session,
                   node_times=(session[0], session[1]), node_values=(value, value))

    def _spline(self):
        from scipy.interpolate import CubicSpline

        return CubicSpline(np.asarray(self.node_times), np.asarray(self.node_values),
                           bc_type="natural")

    def evaluate(self, t) -> np.ndarray | float:
        """s(t) for t in seconds since midnight, floored at 1e-6."""
        t = np.asarray(t, dtype=float)
        if self.form == "cubic_spline":
            tt = np.clip(t, self.node_times[0], self.node_times[-1])
            vals = self._spline()(tt)
        else:
            open_, close = self.session
            tbar = np.clip((t - open_) / (close - open_), 0.0, 1.0)
            vals = np.full_like(tbar, self.intercept, dtype=float) + self.trend * tbar
            for j in range(1, self.order + 1):
                vals = (vals
                        + self.cos_coef[j - 1] * np.cos(2.0 * np.pi * j * tbar)
                        + self.sin_coef[j - 1] * np.sin(2.0 * np.pi * j * tbar))
        out = np.maximum(vals, PROFILE_FLOOR)
        return float(out) if out.ndim == 0 else out

    def min_on_grid(self, step: float = 1.0) -> float:
        grid = np.arange(self.session[0], self.session[1] + step, step)
        return float(np.min(self.evaluate(grid)))

    def to_dict(self) -> dict:
        out = {"form": self.form, "session": list(self.session)}
        if self.form == "cubic_spline":
            out["node_times"] = list(self.node_times)
            out["node_values"] = list(self.node_values)
        else:
            out.update({
                "order": self.order,
                "intercept": self.intercept,
                "trend": self.trend,
                "cos": list(self.cos_coef),
                "sin": list(self.sin_coef),
            })
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DiurnalProfile":
        session = tuple(data.get("session", (SESSION_OPEN, SESSION_CLOSE)))
        if data["form"] == "cubic_spline":
            return cls(form="cubic_spline", session=session,
                       node_times=tuple(data["node_times"]),
                       node_values=tuple(data["node_values"]))
        return cls(form="fourier", session=session, order=int(data["order"]),
                   intercept=float(data["intercept"]), trend=float(data["trend"]),
                   cos_coef=tuple(data["cos"]), sin_coef=tuple(data["sin"]))


def estimate_spline_profile(series: DurationSeries, bin_minutes: int = 15,
                            session: tuple[float, float] = (SESSION_OPEN, SESSION_CLOSE),
                            ) -> DiurnalProfile:
    """Natural cubic spline through pooled bin means of raw durations.

    All days are stacked; each bin's node value is the mean of durations
    whose start time falls in the bin, and the node sits at the bin
    center.  An empty bin is an error naming the bin (coarsen the bins).
    """
    if series.seasonal_state != STATE_RAW:
        raise ValidationError("profile estimation expects a raw series")
    open_, close = session
    total_min = (close - open_) / 60.0
    if bin_minutes <= 0 or abs(total_min / bin_minutes - round(total_min / bin_minutes)) > 1e-9:
        raise ParameterError(
            f"bin width {bin_minutes} min must divide the {total_min:.0f}-minute session"
        )
    n_bins = int(round(total_min / bin_minutes))
    width = bin_minutes * 60.0
    starts = series.starts()
    values = series.values()
    if starts.size == 0:
        raise ValidationError("cannot estimate a profile from an empty series")
    if np.any(starts < open_) or np.any(starts > close):
        raise ValidationError("durations start outside the session bounds")
    idx = np.minimum(((starts - open_) / width).astype(int), n_bins - 1)
    sums = np.bincount(idx, weights=values, minlength=n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    if np.any(counts == 0):
        b = int(np.argmax(counts == 0))
        lo = open_ + b * width
        raise ValidationError(
            f"empty bin {b} ({lo:.0f}-{lo + width:.0f} s); use coarser bins"
        )
    node_values = sums / counts
    node_times = open_ + (np.arange(n_bins) + 0.5) * width
    return DiurnalProfile(form="cubic_spline", session=session,
                          node_times=tuple(node_times), node_values=tuple(node_values))


def estimate_fourier_profile(series: DurationSeries, order: int,
                             session: tuple[float, float] = (SESSION_OPEN, SESSION_CLOSE),
                             ) -> tuple[DiurnalProfile, np.ndarray]:
    """Least-squares Fourier fit of durations on the time-of-day basis.

    The basis is [1, t_bar, cos(2 pi j t_bar), sin(2 pi j t_bar)] for
    j = 1..order.  Returns the profile and heteroskedasticity-robust
    standard errors of the coefficients (same order as the basis).
    """
    if series.seasonal_state != STATE_RAW:
        raise ValidationError("profile estimation expects a raw series")
    if order < 0:
        raise ParameterError("order must be >= 0")
    starts = series.starts()
    w = series.values()
    if w.size == 0:
        raise ValidationError("cannot estimate a profile from an empty series")
    open_, close = session
    tbar = np.clip((starts - open_) / (close - open_), 0.0, 1.0)
    cols = [np.ones_like(tbar), tbar]
    for j in range(1, order + 1):
        cols.append(np.cos(2.0 * np.pi * j * tbar))
        cols.append(np.sin(2.0 * np.pi * j * tbar))
    X = np.column_stack(cols)
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise ValidationError(
            f"design matrix is rank deficient (rank {rank} < {X.shape[1]})"
        )
    coef, *_ = np.linalg.lstsq(X, w, rcond=None)
    resid = w - X @ coef
    xtx_inv = np.linalg.inv(X.T @ X)
    meat = (X * resid[:, None] ** 2).T @ X
    se = np.sqrt(np.diag(xtx_inv @ meat @ xtx_inv))
    profile = DiurnalProfile(
        form="fourier", session=session, order=order,
        intercept=float(coef[0]), trend=float(coef[1]),
        cos_coef=tuple(float(c) for c in coef[2::2]),
        sin_coef=tuple(float(c) for c in coef[3::2]),
    )
    return profile, se


def deseasonalize(series: DurationSeries, profile: DiurnalProfile) -> DurationSeries:
    """Divide each duration by the factor at its start time."""
    if series.seasonal_state != STATE_RAW:
        raise ValidationError("series is already deseasonalized")
    segments = []
    for seg in series.segments:
        s = profile.evaluate(seg.start) if len(seg) else np.empty(0)
        segments.append(DurationSegment(seg.day_index, seg.start, seg.end,
                                        seg.duration / s))
    return replace(series, segments=tuple(segments), seasonal_state=STATE_DESEASONALIZED)


def reseasonalize(series: DurationSeries, profile: DiurnalProfile) -> DurationSeries:
    """Exact inverse of :func:`deseasonalize`."""
    if series.seasonal_state != STATE_DESEASONALIZED:
        raise ValidationError("series is not deseasonalized")
    segments = []
    for seg in series.segments:
        s = profile.evaluate(seg.start) if len(seg) else np.empty(0)
        segments.append(DurationSegment(seg.day_index, seg.start, seg.end,
                                        seg.duration * s))
    return replace(series, segments=tuple(segments), seasonal_state=STATE_RAW)


def profile_curve(profile: DiurnalProfile, step_seconds: float = 60.0) -> np.ndarray:
    """(time, s(t)) pairs on a regular grid, ready for plotting."""
    grid = np.arange(profile.session[0], profile.session[1] + step_seconds, step_seconds)
    return np.column_stack([grid, profile.evaluate(grid)])
