"""CSV and JSON interchange.

Tick files are headerless or headered CSV with columns
``day,time,price,volume``: day an ISO date or 0-based ordinal, time
either seconds-since-midnight with up to three decimals or
HH:MM:SS.mmm, prices and volumes positive.  Malformed rows are rejected
with their line numbers; the session filter (09:30-16:00) is applied at
ingest.  Duration series are exchanged as ``day,start_time,duration``
rows.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .durations import (
    SESSION_CLOSE,
    SESSION_OPEN,
    DurationSegment,
    DurationSeries,
    TickDay,
)
from .errors import ValidationError

_HMS_RE = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})(\.\d{1,3})?$")
_ISO_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

SESSION_OPEN_MS = int(SESSION_OPEN * 1000)
SESSION_CLOSE_MS = int(SESSION_CLOSE * 1000)


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_kept: int = 0
    rejected: list = field(default_factory=list)  # (line_number, reason)
    day_labels: list = field(default_factory=list)

    @property
    def rows_rejected(self) -> int:
        return len(self.rejected)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_rejected": self.rows_rejected,
            "rejected": [{"line": ln, "reason": r} for ln, r in self.rejected[:1000]],
            "days_found": len(self.day_labels),
            "day_labels": self.day_labels,
        }


def parse_time_ms(text: str) -> int | None:
    """Seconds-since-midnight (decimal) or HH:MM:SS.mmm, to integer ms.

    Returns None when the text is not a valid time on the millisecond
    grid.
    """
    text = text.strip()
    m = _HMS_RE.match(text)
    if m:
        hh, mm, ss = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if mm >= 60 or ss >= 60:
            return None
        frac = m.group(4) or ""
        ms = int((frac + "000")[1:4]) if frac else 0
        return ((hh * 60 + mm) * 60 + ss) * 1000 + ms
    try:
        value = float(text)
    except ValueError:
        return None
    if value < 0 or not np.isfinite(value):
        return None
    ms = round(value * 1000.0)
    if abs(value * 1000.0 - ms) > 1e-6:
        return None  # finer than the millisecond grid
    return int(ms)


def format_time_s(ms: int) -> str:
    return f"{ms / 1000.0:.3f}"


def _parse_day(text: str, day_map: dict) -> int | None:
    text = text.strip()
    if _ISO_RE.match(text):
        if text not in day_map:
            day_map[text] = len(day_map)
        return day_map[text]
    try:
        value = int(text)
    except ValueError:
        return None
    return value if value >= 0 else None


def read_ticks(path) -> tuple[list[TickDay], IngestReport]:
    """Parse and validate a tick CSV into per-day arrays.

    Rows outside the trading session, on a sub-millisecond grid, with
    non-positive price/volume, malformed fields, or breaking the
    non-decreasing time order within their day are rejected with a
    reason.  ISO day labels are mapped to 0-based ordinals in order of
    first appearance.
    """
    path = Path(path)
    report = IngestReport()
    day_map: dict = {}
    rows: dict[int, list] = {}
    last_ms: dict[int, int] = {}

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if line_no == 1 and parts and not parts[0][0].isdigit():
                continue  # header row
            report.rows_read += 1
            if len(parts) != 4:
                report.rejected.append((line_no, "expected 4 columns"))
                continue
            day = _parse_day(parts[0], day_map)
            if day is None:
                report.rejected.append((line_no, "unparseable day"))
                continue
            ms = parse_time_ms(parts[1])
            if ms is None:
                report.rejected.append((line_no, "unparseable time or off millisecond grid"))
                continue
            if not (SESSION_OPEN_MS <= ms <= SESSION_CLOSE_MS):
                report.rejected.append((line_no, "outside session"))
                continue
            try:
                price = float(parts[2])
                volume = float(parts[3])
            except ValueError:
                report.rejected.append((line_no, "unparseable price/volume"))
                continue
            if not (price > 0 and np.isfinite(price)):
                report.rejected.append((line_no, "non-positive price"))
                continue
            if not (volume > 0 and np.isfinite(volume)):
                report.rejected.append((line_no, "non-positive volume"))
                continue
            if day in last_ms and ms < last_ms[day]:
                report.rejected.append((line_no, "non-monotone time within day"))
                continue
            last_ms[day] = ms
            rows.setdefault(day, []).append((ms, price, volume))
            report.rows_kept += 1

    report.day_labels = sorted(day_map, key=day_map.get) if day_map else sorted(rows)
    days = []
    for day in sorted(rows):
        data = rows[day]
        times = np.array([r[0] for r in data], dtype=np.int64)
        prices = np.array([r[1] for r in data])
        volumes = np.array([r[2] for r in data])
        days.append(TickDay(day, times, prices, volumes))
    return days, report


def write_ticks(path, days: list[TickDay]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("day,time,price,volume\n")
        for day in days:
            for ms, p, v in zip(day.times_ms, day.prices, day.volumes):
                fh.write(f"{day.day_index},{format_time_s(int(ms))},{p:.6f},{v:.2f}\n")


def write_durations_csv(path, series: DurationSeries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("day,start_time,duration\n")
        for seg in series.segments:
            for s, d in zip(seg.start, seg.duration):
                fh.write(f"{seg.day_index},{s:.3f},{d!r}\n")


def read_durations_csv(path, kind: str = "trade",
                       seasonal_state: str = "raw") -> DurationSeries:
    """Rebuild a raw duration series from day,start_time,duration rows."""
    by_day: dict[int, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or (line_no == 1 and line.lower().startswith("day")):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValidationError(f"line {line_no}: expected 3 columns")
            day = int(parts[0])
            start = float(parts[1])
            dur = float(parts[2])
            by_day.setdefault(day, []).append((start, dur))
    segments = []
    for day in sorted(by_day):
        arr = np.asarray(by_day[day])
        start, dur = arr[:, 0], arr[:, 1]
        segments.append(DurationSegment(day, start, start + dur, dur))
    return DurationSeries(kind=kind, segments=tuple(segments),
                          seasonal_state=seasonal_state, contiguous=False)


def dump_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_curve_csv(path, rows, header: str) -> None:
    """Two-column plot-ready CSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header.rstrip("\n") + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
