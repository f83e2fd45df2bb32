"""Deterministic CERT-like log generator.

Normal routine: hourly event counts per category are Poisson with rate
base_rate * weekday multiplier * activity factor, where the factor is 1
inside the profile's work interval and `offhours_scale` (default 0, i.e.
a hard in-hours indicator) outside it. Timestamps land uniformly inside
their hour. Everything is driven by the profile seed, so a (profile,
scenario, seed) triple reproduces its logs bit for bit.

Scenario injection imitates the three classic insider-threat narratives:

1. off-hours logon + device + file bursts,
2. daytime http + file exfiltration ramping up across the window,
3. email + logon abuse bursts.

Injected events are purely additive; their timestamps are returned as
ground truth and the original stream is never touched.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .events import Event, Taxonomy, default_taxonomy, parse_timestamp
from .windows import DAY, HOUR

# Monday 2023-01-02 00:00 UTC, so weekday patterns start on a workweek.
DEFAULT_SPAN_START = parse_timestamp("01/02/2023 00:00:00")

WORKWEEK = (1.0, 1.0, 1.0, 1.0, 1.0, 0.15, 0.15)  # Mon..Sun

SCENARIO_CATEGORIES = {
    1: ("logon", "device", "file"),
    2: ("http", "file"),
    3: ("email", "logon"),
}

# Floor applied to a base rate before the intensity multiplier, so a burst
# shows up even in categories the user barely touches normally.
_MIN_BURST_BASE = 0.5


@dataclass
class UserProfile:
    """Routine shape for one synthetic user."""

    user: str
    base_rates: dict[str, float]
    work_hours: tuple[int, int] = (8, 18)
    weekly_pattern: tuple[float, ...] = WORKWEEK
    offhours_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.work_hours
        if not (0 <= lo < hi <= 24):
            raise ConfigError(f"work interval must sit inside [0, 24), got {self.work_hours}")
        if len(self.weekly_pattern) != 7:
            raise ConfigError("weekly_pattern needs one multiplier per weekday")
        if any(r < 0 for r in self.base_rates.values()):
            raise ConfigError("base rates must be non-negative")
        if self.offhours_scale < 0:
            raise ConfigError("offhours_scale must be non-negative")

    def in_work_hours(self, hour_of_day: int) -> bool:
        lo, hi = self.work_hours
        return lo <= hour_of_day < hi

    def activity_factor(self, ts: int) -> float:
        # DEFAULT_SPAN_START is a Monday midnight, so this is the true UTC weekday.
        weekday = ((ts - DEFAULT_SPAN_START) // DAY) % 7
        hour_of_day = (ts % DAY) // HOUR
        base = 1.0 if self.in_work_hours(hour_of_day) else self.offhours_scale
        return base * self.weekly_pattern[int(weekday)]


@dataclass
class ScenarioSpec:
    """Anomaly placement: which narrative, where, and how hard."""

    scenario: int
    anomaly_windows: list[tuple[int, int]]  # (start timestamp, duration hours)
    intensity: float = 8.0

    def __post_init__(self):
        if self.scenario not in SCENARIO_CATEGORIES:
            raise ConfigError(f"scenario must be one of {sorted(SCENARIO_CATEGORIES)}")
        if self.intensity <= 1:
            raise ConfigError(f"intensity must exceed 1, got {self.intensity}")
        for start, hours in self.anomaly_windows:
            if hours <= 0:
                raise ConfigError("anomaly window duration must be positive")


def _events_for_hour(
    rng: np.random.Generator,
    hour_start: int,
    user: str,
    category_name: str,
    rate: float,
    taxonomy: Taxonomy,
    source_by_name: dict[str, str],
) -> list[Event]:
    count = int(rng.poisson(rate)) if rate > 0 else 0
    if count == 0:
        return []
    offsets = np.sort(rng.integers(0, HOUR, size=count))
    category = taxonomy.by_name(category_name)
    source = source_by_name[category_name]
    return [Event(time=int(hour_start + off), user=user, category=category, source=source)
            for off in offsets]


def _source_map(taxonomy: Taxonomy) -> dict[str, str]:
    """Category name -> a source under which that category is expressible."""
    sources = {}
    for key, cid in taxonomy.rules.items():
        name = taxonomy.categories[cid].name
        sources.setdefault(name, key.split(":", 1)[0])
    return sources


def generate_user_logs(
    profile: UserProfile,
    span_days: int,
    start_time: int = DEFAULT_SPAN_START,
    taxonomy: Taxonomy | None = None,
) -> list[Event]:
    """Routine event stream for one user over `span_days` days."""
    if span_days < 1:
        raise ConfigError(f"span_days must be >= 1, got {span_days}")
    taxonomy = taxonomy or default_taxonomy()
    sources = _source_map(taxonomy)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=profile.seed, spawn_key=(0,)))
    events: list[Event] = []
    for hour_index in range(span_days * 24):
        hour_start = start_time + hour_index * HOUR
        factor = profile.activity_factor(hour_start)
        for name, base in profile.base_rates.items():
            events.extend(
                _events_for_hour(rng, hour_start, profile.user, name,
                                 base * factor, taxonomy, sources)
            )
    events.sort(key=lambda e: e.time)
    return events


def _scenario_hour_rate(spec: ScenarioSpec, profile: UserProfile, hour_start: int,
                        window_start: int, window_hours: int, category: str) -> float:
    """Injected hourly rate for one (hour, category) cell, by narrative shape."""
    base = spec.intensity * max(profile.base_rates.get(category, 0.0), _MIN_BURST_BASE)
    hour_of_day = (hour_start % DAY) // HOUR
    position = (hour_start - window_start) // HOUR
    if spec.scenario == 1:
        # After-hours breach: bursts strictly outside the work interval.
        return 0.0 if profile.in_work_hours(hour_of_day) else base
    if spec.scenario == 2:
        # Daytime exfiltration ramping from half to 1.5x the mean rate.
        if not profile.in_work_hours(hour_of_day):
            return 0.0
        if window_hours <= 1:
            return base
        ramp = 0.5 + (position / (window_hours - 1))
        return base * ramp
    # Disgruntled-admin abuse: concentrated bursts on alternating hours.
    return base * (1.5 if position % 2 == 0 else 0.5)


@dataclass
class GeneratorConfig:
    """Desk-scale default fixture: a few users, two months, sparse anomalies.

    Users cycle through the three scenario narratives; each listed anomaly
    day gets one window of `anomaly_duration_hours` for every user. With
    the defaults that is 3 anomalous days out of 60 (5% of daily windows),
    one early enough to land in a chronological training split and two
    late enough to land in the test split.
    """

    users: int = 3
    span_days: int = 60
    anomaly_days: tuple[int, ...] = (12, 50, 55)
    anomaly_duration_hours: int = 3
    intensity: float = 6.0
    offhours_scale: float = 0.08
    start_time: int = DEFAULT_SPAN_START
    base_rates: dict[str, float] = field(default_factory=lambda: {
        "logon": 0.5, "logoff": 0.5, "device": 0.3,
        "file": 1.2, "email": 1.0, "http": 2.5,
    })

    def __post_init__(self):
        if self.users < 1 or self.span_days < 1:
            raise ConfigError("need at least one user and one day")
        for day in self.anomaly_days:
            if not 0 <= day < self.span_days:
                raise ConfigError(f"anomaly day {day} outside the {self.span_days}-day span")


# Work intervals cycled by user index; scenario-1 bursts start at 01:00 so
# they sit strictly outside every interval, the others start mid-morning.
_WORK_INTERVALS = ((8, 18), (9, 18), (8, 17))
_NIGHT_START_HOUR = 1
_DAY_START_HOUR = 10


def build_fixture(
    config: GeneratorConfig,
    master_seed: int,
    taxonomy: Taxonomy | None = None,
) -> tuple[list[Event], list[tuple[int, str, int]], dict[str, int]]:
    """Generate the full multi-user fixture.

    Returns the combined event stream, ground-truth rows of
    (timestamp, user, scenario), and the scenario assigned to each user.
    User `u{i}` runs scenario (i mod 3) + 1; scenario 1 anomaly windows
    start at night so their bursts stay outside work hours, the others
    start mid-morning.
    """
    taxonomy = taxonomy or default_taxonomy()
    span = (config.start_time, config.start_time + config.span_days * DAY)
    events: list[Event] = []
    truth_rows: list[tuple[int, str, int]] = []
    scenario_by_user: dict[str, int] = {}

    for index in range(config.users):
        user = f"u{index + 1:02d}"
        scenario = (index % 3) + 1
        scenario_by_user[user] = scenario
        profile = UserProfile(
            user=user,
            base_rates=dict(config.base_rates),
            work_hours=_WORK_INTERVALS[index % len(_WORK_INTERVALS)],
            offhours_scale=config.offhours_scale,
            seed=int(np.random.SeedSequence(entropy=master_seed,
                                            spawn_key=(0, index)).generate_state(1)[0]),
        )
        routine = generate_user_logs(profile, config.span_days, config.start_time, taxonomy)

        start_hour = _NIGHT_START_HOUR if scenario == 1 else _DAY_START_HOUR
        windows = [
            (config.start_time + day * DAY + start_hour * HOUR, config.anomaly_duration_hours)
            for day in config.anomaly_days
        ]
        spec = ScenarioSpec(scenario=scenario, anomaly_windows=windows,
                            intensity=config.intensity)
        combined, injected_times = inject_scenario(routine, profile, spec, span, taxonomy)
        events.extend(combined)
        truth_rows.extend((ts, user, scenario) for ts in injected_times)

    events.sort(key=lambda e: (e.time, e.user))
    truth_rows.sort()
    return events, truth_rows, scenario_by_user


def inject_scenario(
    events: Sequence[Event],
    profile: UserProfile,
    spec: ScenarioSpec,
    span: tuple[int, int] | None = None,
    taxonomy: Taxonomy | None = None,
) -> tuple[list[Event], list[int]]:
    """Add scenario events inside the anomaly windows.

    Returns the combined time-sorted stream and the injected timestamps
    (the ground truth). The input events are contained unchanged in the
    output, so removing the injected events recovers the original stream.
    """
    taxonomy = taxonomy or default_taxonomy()
    sources = _source_map(taxonomy)
    if span is None:
        if not events:
            raise DataError("cannot derive the span from an empty event stream")
        span = (min(e.time for e in events), max(e.time for e in events) + 1)
    t0, t1 = span
    for start, hours in spec.anomaly_windows:
        if start < t0 or start + hours * HOUR > t1:
            raise DataError(
                f"anomaly window at {start} (+{hours}h) lies outside the span [{t0}, {t1})"
            )

    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=profile.seed, spawn_key=(2, spec.scenario))
    )
    injected: list[Event] = []
    for window_start, window_hours in spec.anomaly_windows:
        for offset in range(window_hours):
            hour_start = window_start + offset * HOUR
            for category in SCENARIO_CATEGORIES[spec.scenario]:
                rate = _scenario_hour_rate(spec, profile, hour_start,
                                           window_start, window_hours, category)
                injected.extend(
                    _events_for_hour(rng, hour_start, profile.user, category,
                                     rate, taxonomy, sources)
                )
    combined = sorted(list(events) + injected, key=lambda e: e.time)
    return combined, [e.time for e in injected]
