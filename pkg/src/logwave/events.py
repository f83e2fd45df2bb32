"""CERT-style event log ingestion.

Multi-source CSV rows are normalized into a flat stream of timestamped
events tagged with a small fixed set of behavior categories. The taxonomy
(ordered category list plus ``source:activity`` -> category rules) is data,
not code, so the category set stays configurable.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .errors import ConfigError, DataError

CERT_TIME_FORMAT = "%m/%d/%Y %H:%M:%S"

EVENT_CSV_COLUMNS = ("id", "date", "user", "activity", "source")
_REQUIRED_COLUMNS = ("id", "date", "user", "activity")

DEFAULT_CATEGORY_NAMES = ("logon", "logoff", "device", "file", "email", "http")

# Exact rules for the two-activity sources, wildcard rules where the CERT
# source file carries no meaningful activity column of its own.
DEFAULT_RULES = {
    "logon.csv:Logon": "logon",
    "logon.csv:Logoff": "logoff",
    "device.csv:Connect": "device",
    "device.csv:Disconnect": "device",
    "file.csv:*": "file",
    "email.csv:*": "email",
    "http.csv:*": "http",
}


def parse_timestamp(text: str) -> int:
    """UTC epoch seconds from ``MM/DD/YYYY HH:MM:SS`` (CERT) or ISO-8601.

    Sub-second precision is discarded; naive inputs are taken as UTC.
    """
    raw = text.strip()
    try:
        dt = datetime.strptime(raw, CERT_TIME_FORMAT)
        return int(dt.replace(tzinfo=timezone.utc).timestamp())
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.astimezone(timezone.utc).timestamp())


def format_timestamp(ts: int) -> str:
    """CERT-format string for a UTC epoch-seconds timestamp."""
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime(CERT_TIME_FORMAT)


@dataclass(frozen=True)
class BehaviorCategory:
    id: int
    name: str


@dataclass(frozen=True)
class Event:
    """One normalized log record."""

    time: int  # UTC epoch seconds
    user: str
    category: BehaviorCategory
    source: str = ""


@dataclass(frozen=True)
class Taxonomy:
    """Ordered behavior categories plus (source, activity) mapping rules.

    Rule keys are ``"source:activity"``; the activity part may be ``*`` to
    match any activity under that source. Exact rules win over wildcards.
    """

    categories: tuple[BehaviorCategory, ...]
    rules: Mapping[str, int]

    def __post_init__(self):
        ids = [c.id for c in self.categories]
        if ids != list(range(len(ids))):
            raise ConfigError(f"category ids must be dense 0..H-1, got {ids}")
        if len({c.name for c in self.categories}) != len(ids):
            raise ConfigError("duplicate category names in taxonomy")
        for key, cid in self.rules.items():
            if ":" not in key:
                raise ConfigError(f"rule key {key!r} is not 'source:activity'")
            if not 0 <= cid < len(ids):
                raise ConfigError(f"rule {key!r} targets unknown category id {cid}")

    @property
    def size(self) -> int:
        return len(self.categories)

    def category(self, cid: int) -> BehaviorCategory:
        return self.categories[cid]

    def by_name(self, name: str) -> BehaviorCategory:
        for c in self.categories:
            if c.name == name:
                return c
        raise ConfigError(f"unknown category name {name!r}")

    def lookup(self, source: str, activity: str) -> BehaviorCategory | None:
        cid = self.rules.get(f"{source}:{activity}")
        if cid is None:
            cid = self.rules.get(f"{source}:*")
        return None if cid is None else self.categories[cid]

    def activity_for(self, source: str, category: BehaviorCategory) -> str | None:
        """An activity string that maps back to `category` under `source`.

        Used when serializing events; first matching rule in insertion
        order wins, wildcard rules serialize as the category name.
        """
        prefix = f"{source}:"
        for key, cid in self.rules.items():
            if cid == category.id and key.startswith(prefix):
                activity = key[len(prefix):]
                return category.name if activity == "*" else activity
        return None

    def to_json_dict(self) -> dict:
        return {
            "categories": [c.name for c in self.categories],
            "rules": {k: self.categories[v].name for k, v in self.rules.items()},
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Taxonomy":
        unknown = set(data) - {"categories", "rules"}
        if unknown:
            raise ConfigError(f"unknown taxonomy keys: {sorted(unknown)}")
        names = data.get("categories")
        if not names:
            raise ConfigError("taxonomy must list at least one category")
        cats = tuple(BehaviorCategory(i, n) for i, n in enumerate(names))
        index = {c.name: c.id for c in cats}
        rules = {}
        for key, name in data.get("rules", {}).items():
            if name not in index:
                raise ConfigError(f"rule {key!r} targets unknown category {name!r}")
            rules[key] = index[name]
        return cls(categories=cats, rules=rules)

    @classmethod
    def load(cls, path: str | Path) -> "Taxonomy":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def default_taxonomy() -> Taxonomy:
    cats = tuple(BehaviorCategory(i, n) for i, n in enumerate(DEFAULT_CATEGORY_NAMES))
    index = {c.name: c.id for c in cats}
    return Taxonomy(categories=cats, rules={k: index[v] for k, v in DEFAULT_RULES.items()})


def map_event_type(source: str, activity: str, taxonomy: Taxonomy) -> BehaviorCategory | None:
    """Deterministic (source, activity) -> category mapping; None when no rule matches."""
    return taxonomy.lookup(source, activity)


@dataclass
class ParseResult:
    """Parsed events plus the count of rows skipped for unmappable activities."""

    events: list[Event]
    skipped: int

    @property
    def parsed(self) -> int:
        return len(self.events)


def parse_event_log(
    stream: IO[str] | str,
    taxonomy: Taxonomy,
    source: str | None = None,
) -> ParseResult:
    """Parse one event-CSV stream into a time-sorted event list.

    The header must carry at least (id, date, user, activity); a `source`
    column is honored when present unless the `source` argument overrides
    it (e.g. with the originating file name). Rows whose activity maps to
    no taxonomy rule are counted and skipped. A malformed timestamp aborts
    with the offending line number; a missing required column is fatal.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise DataError("event CSV has no header row")
    missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise DataError(f"event CSV missing required columns: {missing}")
    has_source_col = "source" in reader.fieldnames

    events: list[Event] = []
    skipped = 0
    for row in reader:
        row_source = source if source is not None else (row["source"] if has_source_col else "")
        row_source = (row_source or "").strip()
        category = taxonomy.lookup(row_source, (row["activity"] or "").strip())
        if category is None:
            skipped += 1
            continue
        try:
            ts = parse_timestamp(row["date"] or "")
        except DataError as exc:
            raise DataError(f"line {reader.line_num}: {exc}") from exc
        events.append(Event(time=ts, user=(row["user"] or "").strip(),
                            category=category, source=row_source))
    events.sort(key=lambda e: e.time)
    return ParseResult(events=events, skipped=skipped)


def write_events_csv(events: Iterable[Event], fh: IO[str], taxonomy: Taxonomy) -> None:
    """Serialize events in the same CSV format `parse_event_log` consumes.

    Each event is written with an activity string that maps back to its
    category under its source, so parse -> write -> parse round-trips to an
    identical event list.
    """
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(EVENT_CSV_COLUMNS)
    for i, evt in enumerate(events):
        activity = taxonomy.activity_for(evt.source, evt.category)
        if activity is None:
            raise DataError(
                f"category {evt.category.name!r} has no rule under source {evt.source!r}"
            )
        writer.writerow([f"E{i:07d}", format_timestamp(evt.time), evt.user, activity, evt.source])


def read_ground_truth(stream: IO[str] | str) -> list[tuple[int, str, int]]:
    """Read a ground-truth CSV of (timestamp, user, scenario) rows."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or not {"timestamp", "user", "scenario"} <= set(reader.fieldnames):
        raise DataError("ground-truth CSV must have columns: timestamp, user, scenario")
    rows = []
    for row in reader:
        rows.append((parse_timestamp(row["timestamp"]), row["user"].strip(), int(row["scenario"])))
    return rows


def write_ground_truth(rows: Sequence[tuple[int, str, int]], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["timestamp", "user", "scenario"])
    for ts, user, scenario in rows:
        writer.writerow([format_timestamp(ts), user, scenario])
