"""The structured data request wire format.

A request is three parenthesized groups separated by whitespace:

    (entity; entity; ...) (metric; metric; ...) (d/m/yyyy - d/m/yyyy; ...)

Dates are day/month/year with no zero padding. The ordering convention is
fixed by the request pair ("for the previous 6 months" resolving to
7/1/2024 - 7/7/2024): the middle field is the month, so 7/1 is 7 January.
Getting this backwards is the single most likely integration mistake.

Entity forms: a plain name is a company, "X Peers" selects X's registered
competitors, and "S Companies" selects every company in sector S. Semicolons
are forbidden inside names (the registry loader enforces this), which makes
"; " an unambiguous separator. Parentheses inside names, e.g.
"Net operating profit after tax (NOPAT)", are legal and handled by depth
counting rather than naive splitting.

A request whose query carried no date phrase has the literal token
``Latest`` as its date group; the data module then picks the most recent
range it can serve.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass
from enum import Enum

from .errors import DateTokenError, RequestParseError

__all__ = [
    "SelectorKind",
    "EntitySelector",
    "DateRange",
    "LATEST",
    "LatestAvailable",
    "StructuredDataRequest",
    "format_date",
    "parse_date_token",
    "serialize_request",
    "parse_request",
]


class SelectorKind(str, Enum):
    COMPANY = "company"
    PEERS = "peers"
    SECTOR = "sector"


@dataclass(frozen=True)
class EntitySelector:
    kind: SelectorKind
    name: str

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise ValueError("entity selector name must be nonempty")

    @staticmethod
    def company(name: str) -> "EntitySelector":
        return EntitySelector(SelectorKind.COMPANY, name)

    @staticmethod
    def peers_of(name: str) -> "EntitySelector":
        return EntitySelector(SelectorKind.PEERS, name)

    @staticmethod
    def sector(name: str) -> "EntitySelector":
        return EntitySelector(SelectorKind.SECTOR, name)

    def render(self) -> str:
        if self.kind is SelectorKind.PEERS:
            return f"{self.name} Peers"
        if self.kind is SelectorKind.SECTOR:
            return f"{self.name} Companies"
        return self.name

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "name": self.name}

    @staticmethod
    def from_json(obj: dict) -> "EntitySelector":
        return EntitySelector(SelectorKind(obj["kind"]), obj["name"])


@dataclass(frozen=True, order=True)
class DateRange:
    start: dt.date
    end: dt.date

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"date range start {self.start} is after end {self.end}")

    def render(self) -> str:
        return f"{format_date(self.start)} - {format_date(self.end)}"

    def overlaps(self, other: "DateRange") -> bool:
        return self.start <= other.end and other.start <= self.end

    def to_json(self) -> dict:
        return {"start": format_date(self.start), "end": format_date(self.end)}


class LatestAvailable:
    """Sentinel for "no dates in the request": data module picks the range."""

    _instance: "LatestAvailable | None" = None

    def __new__(cls) -> "LatestAvailable":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "LATEST"


LATEST = LatestAvailable()

_LATEST_TOKEN = "Latest"


@dataclass(frozen=True)
class StructuredDataRequest:
    """Parsed form of the wire format; all three fields nonempty.

    Names are kept verbatim as parsed. Resolving them against a registry
    (case and punctuation insensitively) is the caller's job, so that
    serialize(parse(s)) can round-trip exactly what was on the wire.
    """

    entities: tuple[EntitySelector, ...]
    metrics: tuple[str, ...]
    ranges: tuple[DateRange, ...] | LatestAvailable

    def __post_init__(self) -> None:
        if not self.entities:
            raise ValueError("request must select at least one entity")
        if not self.metrics:
            raise ValueError("request must name at least one metric")
        if not isinstance(self.ranges, LatestAvailable) and not self.ranges:
            raise ValueError("request must carry at least one date range (or Latest)")

    def to_json(self) -> dict:
        if isinstance(self.ranges, LatestAvailable):
            ranges: list[dict] = [{"latest": True}]
        else:
            ranges = [r.to_json() for r in self.ranges]
        return {
            "entities": [e.to_json() for e in self.entities],
            "metrics": list(self.metrics),
            "ranges": ranges,
        }


def format_date(d: dt.date) -> str:
    return f"{d.day}/{d.month}/{d.year}"


_DATE_TOKEN_RE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})$")


def parse_date_token(text: str) -> dt.date:
    """Strict d/m/yyyy. Rejects month > 12 and days invalid for the month."""
    m = _DATE_TOKEN_RE.match(text.strip())
    if not m:
        raise DateTokenError(f"malformed date token {text!r}, expected d/m/yyyy")
    day, month, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
    try:
        return dt.date(year, month, day)
    except ValueError:
        raise DateTokenError(f"{text.strip()!r} is not a valid calendar date") from None


def serialize_request(request: StructuredDataRequest) -> str:
    entities = "; ".join(e.render() for e in request.entities)
    metrics = "; ".join(request.metrics)
    if isinstance(request.ranges, LatestAvailable):
        ranges = _LATEST_TOKEN
    else:
        ranges = "; ".join(r.render() for r in request.ranges)
    return f"({entities}) ({metrics}) ({ranges})"


_GROUP_NAMES = ("entity", "metric", "date-range")


def _extract_groups(text: str) -> list[tuple[str, int]]:
    """Return the three top-level (content, offset) groups of a request."""
    groups: list[tuple[str, int]] = []
    i = 0
    n = len(text)
    while True:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        if len(groups) == 3:
            raise RequestParseError(
                "unexpected content after date-range group", offset=i
            )
        if text[i] != "(":
            raise RequestParseError(
                f"expected '(' to open {_GROUP_NAMES[len(groups)]} group", offset=i
            )
        depth = 0
        start = i
        for j in range(i, n):
            if text[j] == "(":
                depth += 1
            elif text[j] == ")":
                depth -= 1
                if depth == 0:
                    groups.append((text[start + 1 : j], start))
                    i = j + 1
                    break
        else:
            raise RequestParseError(
                f"unbalanced parentheses in {_GROUP_NAMES[len(groups)]} group",
                offset=start,
            )
    if len(groups) < 3:
        raise RequestParseError(
            f"missing {_GROUP_NAMES[len(groups)]} group", offset=len(text)
        )
    return groups


def _split_entries(content: str, group: str, offset: int) -> list[str]:
    """Split group content on top-level semicolons, normalizing whitespace."""
    entries: list[str] = []
    depth = 0
    current: list[str] = []
    for ch in content:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == ";" and depth == 0:
            entries.append("".join(current))
            current = []
        else:
            current.append(ch)
    entries.append("".join(current))
    cleaned = [" ".join(e.split()) for e in entries]
    if not any(cleaned):
        raise RequestParseError(f"empty {group} group", group=group, offset=offset)
    for e in cleaned:
        if not e:
            raise RequestParseError(
                f"empty entry in {group} group", group=group, offset=offset
            )
    return cleaned


def _parse_entity(text: str) -> EntitySelector:
    if text.endswith(" Peers"):
        return EntitySelector.peers_of(text[: -len(" Peers")])
    if text.endswith(" Companies"):
        return EntitySelector.sector(text[: -len(" Companies")])
    return EntitySelector.company(text)


def _parse_range(text: str, offset: int) -> DateRange:
    parts = [p.strip() for p in text.split("-")]
    if len(parts) != 2:
        raise RequestParseError(
            f"malformed date range {text!r}, expected 'd/m/yyyy - d/m/yyyy'",
            group="date-range",
            offset=offset,
        )
    try:
        start, end = parse_date_token(parts[0]), parse_date_token(parts[1])
    except DateTokenError as exc:
        raise RequestParseError(str(exc), group="date-range", offset=offset) from None
    if start > end:
        raise RequestParseError(
            f"date range {text!r} starts after it ends", group="date-range", offset=offset
        )
    return DateRange(start, end)


def parse_request(text: str) -> StructuredDataRequest:
    """Parse a structured data request string.

    Tolerant of arbitrary whitespace (including newlines) between and inside
    groups; names come back with internal whitespace collapsed to single
    spaces, which is the canonical form serialize_request emits.
    """
    groups = _extract_groups(text)
    (ent_text, ent_off), (met_text, met_off), (rng_text, rng_off) = groups
    entities = tuple(
        _parse_entity(e) for e in _split_entries(ent_text, "entity", ent_off)
    )
    metrics = tuple(_split_entries(met_text, "metric", met_off))
    range_entries = _split_entries(rng_text, "date-range", rng_off)
    ranges: tuple[DateRange, ...] | LatestAvailable
    if len(range_entries) == 1 and range_entries[0].lower() == _LATEST_TOKEN.lower():
        ranges = LATEST
    else:
        ranges = tuple(_parse_range(r, rng_off) for r in range_entries)
    return StructuredDataRequest(entities=entities, metrics=metrics, ranges=ranges)
