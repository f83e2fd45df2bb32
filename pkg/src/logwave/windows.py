"""Sliding-window behavior matrices.

Events are aggregated per user into H x W count matrices: one row per
behavior category, one column per time bin inside the window. Windows
slide over the observation span with a fixed stride and are labeled
Abnormal when they contain at least one ground-truth anomalous event.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .events import Event

HOUR = 3600
DAY = 24 * HOUR


class Label(str, Enum):
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"


@dataclass
class BehaviorMatrix:
    """Per-category, per-bin event counts for one user window.

    Entries are non-negative integers before modulation; bins are half-open
    [start, start + bin) so every event lands in exactly one bin.
    """

    values: np.ndarray  # (H, W) float array
    window_start: int
    bin_hours: int
    user: str

    @property
    def num_categories(self) -> int:
        return self.values.shape[0]

    @property
    def num_bins(self) -> int:
        return self.values.shape[1]

    @property
    def window_hours(self) -> int:
        return self.num_bins * self.bin_hours

    def write_debug_csv(self, fh: IO[str]) -> None:
        """Header (H, W, window_start, bin_hours, user), then row-major values."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([self.num_categories, self.num_bins, self.window_start,
                         self.bin_hours, self.user])
        for row in self.values:
            writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_debug_csv(cls, fh: IO[str]) -> "BehaviorMatrix":
        reader = csv.reader(fh)
        header = next(reader)
        h, w, start, bin_hours, user = int(header[0]), int(header[1]), int(header[2]), int(header[3]), header[4]
        values = np.array([[float(v) for v in next(reader)] for _ in range(h)])
        if values.shape != (h, w):
            raise DataError(f"debug dump shape {values.shape} != header ({h}, {w})")
        return cls(values=values, window_start=start, bin_hours=bin_hours, user=user)


@dataclass
class LabeledWindow:
    matrix: BehaviorMatrix
    label: Label


def build_matrix(
    events: Iterable[Event],
    window_start: int,
    window_hours: int,
    bin_hours: int,
    num_categories: int,
) -> BehaviorMatrix:
    """Count events per (category, bin) inside [start, start + window).

    Events outside the window are ignored; `bin_hours` must divide
    `window_hours` exactly.
    """
    if window_hours <= 0 or bin_hours <= 0:
        raise ConfigError("window_hours and bin_hours must be positive")
    if window_hours % bin_hours != 0:
        raise ConfigError(
            f"bin width {bin_hours}h does not divide window {window_hours}h"
        )
    w = window_hours // bin_hours
    values = np.zeros((num_categories, w), dtype=float)
    end = window_start + window_hours * HOUR
    bin_seconds = bin_hours * HOUR
    user = ""
    for evt in events:
        if not window_start <= evt.time < end:
            continue
        values[evt.category.id, (evt.time - window_start) // bin_seconds] += 1
        user = user or evt.user
    return BehaviorMatrix(values=values, window_start=window_start,
                          bin_hours=bin_hours, user=user)


def slide_windows(
    events: Sequence[Event],
    window_hours: int,
    step_hours: int = 24,
    span: tuple[int, int] | None = None,
) -> list[int]:
    """Window start timestamps striding `step_hours` across the span.

    Starts are t0, t0 + step, ... while start + window <= t1. When `span`
    is omitted it is derived from the events: t0 floors the first event to
    a day boundary, t1 rounds the last event up to a whole day past t0.
    A span shorter than one window yields an empty list.
    """
    if step_hours <= 0 or window_hours <= 0:
        raise ConfigError("window_hours and step_hours must be positive")
    if span is None:
        if not events:
            return []
        t_min = min(e.time for e in events)
        t_max = max(e.time for e in events)
        t0 = (t_min // DAY) * DAY
        t1 = t0 + ((t_max - t0) // DAY + 1) * DAY
    else:
        t0, t1 = span
    span_seconds = t1 - t0
    window_seconds = window_hours * HOUR
    if span_seconds < window_seconds:
        return []
    count = (span_seconds - window_seconds) // (step_hours * HOUR) + 1
    return [t0 + k * step_hours * HOUR for k in range(count)]


def label_window(
    window_start: int,
    window_hours: int,
    anomaly_times: Iterable[int],
) -> Label:
    """Abnormal iff any anomaly timestamp falls in [start, start + window)."""
    end = window_start + window_hours * HOUR
    for ts in anomaly_times:
        if window_start <= ts < end:
            return Label.ABNORMAL
    return Label.NORMAL
