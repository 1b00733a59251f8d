"""The data module: tabular financial observations and news.

Observations are keyed (company, metric, period). Quarterly and annual
series are usually stored as report-date points (period_start ==
period_end == the fiscal period's closing date), daily series as one point
per day; arbitrary period spans are accepted.

Range resolution is frequency-aware:

* daily: the observations inside the requested range, i.e. the exact range
  as requested clipped to availability; if the range contains none, the
  single nearest day (flagged as a substitution).
* quarterly/annual/static: the reporting periods overlapping the requested
  range, widened to the period nearest each requested boundary, so a
  request for 31/3/2023 - 30/6/2023 against quarters reported 30/3/2023 and
  29/6/2023 returns both, resolved as 30/3/2023 - 29/6/2023. If nothing
  overlaps at all, the single period with the smallest day gap to the
  request (ties to the more recent period), flagged as a substitution.
* no dates in the request (Latest): the most recent reporting period, or
  for daily series a trailing window (default 30 days).

Distance between a period and a date/range is zero when they overlap, else
the smallest boundary gap in days.

Every answered row carries its resolved range and frequency annotation;
pairs that cannot be answered are listed as unresolved, never dropped
silently.

News matching scores the query against headline text (entity names and
their aliases appended when a registry is attached) with a deterministic
lexical cosine over stopword-filtered token counts. Items with zero
similarity are not considered matches. Any callable (text, text) -> float
can replace the default scorer.

Ingestion is serialized through a lock and swaps an immutable snapshot, so
readers see all of a batch or none of it.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy import sparse

from .errors import IngestError, UnknownEntityError, UnknownMetricError
from .grammar import (
    LATEST,
    DateRange,
    EntitySelector,
    LatestAvailable,
    SelectorKind,
    StructuredDataRequest,
    format_date,
    parse_date_token,
)
from .registry import MetricSpec, Registry

__all__ = [
    "Observation",
    "NewsItem",
    "IngestReport",
    "TableRow",
    "RetrievalTable",
    "ObservationStore",
    "NewsStore",
    "default_scorer",
    "format_value",
    "tokenize_for_match",
    "read_observations_csv",
    "read_news_jsonl",
    "MARKET_WIDE_SECTOR",
]

MARKET_WIDE_SECTOR = "All"

OBSERVATION_FIELDS = ("company", "metric", "period_start", "period_end", "value", "unit")


@dataclass(frozen=True, order=True)
class Observation:
    period_start: dt.date
    period_end: dt.date
    company: str
    metric: str
    value: float
    unit: str

    def __post_init__(self) -> None:
        if self.period_start > self.period_end:
            raise ValueError("observation period_start is after period_end")
        if not math.isfinite(self.value):
            raise ValueError("observation value must be finite")


@dataclass(frozen=True)
class NewsItem:
    id: str
    published: dt.datetime
    headline: str
    body: str
    entities: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.headline.strip():
            raise ValueError("news headline must be nonempty")


@dataclass
class IngestReport:
    inserted: int = 0
    replaced: int = 0
    rejected: int = 0
    reasons: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "inserted": self.inserted,
            "replaced": self.replaced,
            "rejected": self.rejected,
            "reasons": self.reasons,
        }


@dataclass(frozen=True)
class TableRow:
    entity: str
    metric: str
    values: tuple[float, ...]
    resolved_range: DateRange
    frequency: str
    unit: str
    nearest_substitution: bool = False


@dataclass(frozen=True)
class RetrievalTable:
    """Resolved observations for one request: metric-major, request order."""

    metrics: tuple[str, ...]
    entities: tuple[str, ...]
    rows: tuple[TableRow, ...]
    unresolved: tuple[tuple[str, str, str], ...]  # (entity, metric, reason)

    def row_for(self, entity: str, metric: str) -> TableRow | None:
        for row in self.rows:
            if row.entity == entity and row.metric == metric:
                return row
        return None

    def to_json(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "entities": list(self.entities),
            "rows": [
                {
                    "entity": r.entity,
                    "metric": r.metric,
                    "values": list(r.values),
                    "resolved_range": r.resolved_range.to_json(),
                    "frequency": r.frequency,
                    "unit": r.unit,
                    "nearest_substitution": r.nearest_substitution,
                }
                for r in self.rows
            ],
            "unresolved": [list(u) for u in self.unresolved],
        }


def _distance_to_point(obs: Observation, day: dt.date) -> int:
    if obs.period_start <= day <= obs.period_end:
        return 0
    if day < obs.period_start:
        return (obs.period_start - day).days
    return (day - obs.period_end).days


def _distance_to_range(obs: Observation, requested: DateRange) -> int:
    if obs.period_start <= requested.end and requested.start <= obs.period_end:
        return 0
    if obs.period_end < requested.start:
        return (requested.start - obs.period_end).days
    return (obs.period_start - requested.end).days


def _recency_key(obs: Observation) -> tuple[dt.date, dt.date]:
    return (obs.period_end, obs.period_start)


class ObservationStore:
    """Embedded time-series store with an in-memory (company, metric) index."""

    def __init__(self, registry: Registry, latest_window_days: int = 30):
        self._registry = registry
        self.latest_window_days = latest_window_days
        self._lock = threading.Lock()
        self._snapshot: dict[tuple[str, str], tuple[Observation, ...]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._snapshot.values())

    def ingest_timeseries(self, records: Iterable[Observation]) -> IngestReport:
        """Idempotent upsert keyed by (company, metric, period).

        Unknown companies/metrics and frequency-inconsistent records are
        rejected (counted, with reasons) without stopping the batch. The
        new snapshot is published atomically once the whole batch is in.
        """
        report = IngestReport()
        with self._lock:
            staging: dict[tuple[str, str], dict[tuple[dt.date, dt.date], Observation]] = {
                key: {(o.period_start, o.period_end): o for o in existing}
                for key, existing in self._snapshot.items()
            }
            for record in records:
                try:
                    company = self._registry.resolve_company_name(record.company)
                    spec = self._registry.resolve_metric(record.metric)
                except (UnknownEntityError, UnknownMetricError) as exc:
                    report.rejected += 1
                    report.reasons.append(str(exc))
                    continue
                if spec.frequency.value == "daily" and record.period_start != record.period_end:
                    report.rejected += 1
                    report.reasons.append(
                        f"daily metric {spec.canonical_name!r} requires period_start == period_end"
                    )
                    continue
                key = (company, spec.canonical_name)
                period = (record.period_start, record.period_end)
                bucket = staging.setdefault(key, {})
                if period in bucket:
                    report.replaced += 1
                else:
                    report.inserted += 1
                bucket[period] = Observation(
                    period_start=record.period_start,
                    period_end=record.period_end,
                    company=company,
                    metric=spec.canonical_name,
                    value=record.value,
                    unit=record.unit,
                )
            self._snapshot = {
                key: tuple(sorted(bucket.values())) for key, bucket in staging.items()
            }
        return report

    def series(self, company: str, metric: str) -> tuple[Observation, ...]:
        return self._snapshot.get((company, metric), ())

    def resolve_range(
        self,
        metric: MetricSpec,
        company: str,
        requested: DateRange | LatestAvailable,
        _snapshot: dict[tuple[str, str], tuple[Observation, ...]] | None = None,
    ) -> tuple[list[Observation], DateRange, bool] | None:
        """Pick the observations answering a request for one series.

        Returns (observations, resolved range, nearest-substitution flag),
        or None when the series has no data at all. The resolved range is
        exactly the span of the returned observations.
        """
        snapshot = self._snapshot if _snapshot is None else _snapshot
        series = snapshot.get((company, metric.canonical_name), ())
        if not series:
            return None
        if isinstance(requested, LatestAvailable):
            chosen = self._resolve_latest(series, metric)
            substituted = False
        elif metric.frequency.value == "daily":
            chosen, substituted = self._resolve_daily(series, requested)
        else:
            chosen, substituted = self._resolve_periodic(series, requested)
        resolved = DateRange(
            min(o.period_start for o in chosen), max(o.period_end for o in chosen)
        )
        return list(chosen), resolved, substituted

    def _resolve_latest(
        self, series: tuple[Observation, ...], metric: MetricSpec
    ) -> list[Observation]:
        if metric.frequency.value == "daily":
            last_day = max(o.period_end for o in series)
            window_start = last_day - dt.timedelta(days=self.latest_window_days - 1)
            return [o for o in series if o.period_end >= window_start]
        return [max(series, key=_recency_key)]

    def _resolve_daily(
        self, series: tuple[Observation, ...], requested: DateRange
    ) -> tuple[list[Observation], bool]:
        inside = [
            o
            for o in series
            if o.period_start >= requested.start and o.period_end <= requested.end
        ]
        if inside:
            return inside, False
        nearest = min(
            series, key=lambda o: (_distance_to_range(o, requested), *_negate(_recency_key(o)))
        )
        return [nearest], True

    def _resolve_periodic(
        self, series: tuple[Observation, ...], requested: DateRange
    ) -> tuple[list[Observation], bool]:
        indexed = list(series)
        overlap_indices = [
            i for i, o in enumerate(indexed) if _distance_to_range(o, requested) == 0
        ]
        if not overlap_indices:
            nearest = min(
                series,
                key=lambda o: (_distance_to_range(o, requested), *_negate(_recency_key(o))),
            )
            return [nearest], True
        # widen to the periods nearest each requested boundary: a report
        # filed just before the range start still belongs to the answer
        start_idx = min(
            range(len(indexed)),
            key=lambda i: (_distance_to_point(indexed[i], requested.start), i),
        )
        end_idx = min(
            range(len(indexed)),
            key=lambda i: (_distance_to_point(indexed[i], requested.end), -i),
        )
        lo = min(start_idx, end_idx, *overlap_indices)
        hi = max(start_idx, end_idx, *overlap_indices)
        return indexed[lo : hi + 1], False

    def fetch_table(
        self, request: StructuredDataRequest, registry: Registry
    ) -> RetrievalTable:
        """Answer a request: one row per (expanded entity, metric) pair.

        Duplicate metrics are retrieved once at their first occurrence;
        selectors that expand to nothing contribute unresolved entries.
        Unknown names in the request raise.
        """
        metric_specs: list[MetricSpec] = []
        for name in request.metrics:
            spec = registry.resolve_metric(name)
            if all(spec.canonical_name != m.canonical_name for m in metric_specs):
                metric_specs.append(spec)

        expanded: list[str] = []
        empty_selectors: list[str] = []
        for selector in request.entities:
            if selector.kind is SelectorKind.COMPANY:
                names = [registry.resolve_company_name(selector.name)]
            elif selector.kind is SelectorKind.PEERS:
                canonical = registry.resolve_company_name(selector.name)
                names = [c.canonical_name for c in registry.peers_of(canonical)]
                if not names:
                    empty_selectors.append(f"{canonical} Peers")
            else:
                if selector.name != MARKET_WIDE_SECTOR:
                    registry.resolve_sector(selector.name)
                names = [c.canonical_name for c in registry.sector_companies(selector.name)]
                if not names:
                    empty_selectors.append(f"{selector.name} Companies")
            for name in names:
                if name not in expanded:
                    expanded.append(name)

        ranges = request.ranges
        snapshot = self._snapshot  # one snapshot for the whole request
        rows: list[TableRow] = []
        unresolved: list[tuple[str, str, str]] = []
        for label in empty_selectors:
            reason = "no peers registered" if label.endswith(" Peers") else "no companies in sector"
            for spec in metric_specs:
                unresolved.append((label, spec.canonical_name, reason))
        for spec in metric_specs:
            for company in expanded:
                resolution = self._resolve_for_ranges(spec, company, ranges, snapshot)
                if resolution is None:
                    unresolved.append(
                        (company, spec.canonical_name, "no data for this company and metric")
                    )
                    continue
                observations, resolved, substituted = resolution
                rows.append(
                    TableRow(
                        entity=company,
                        metric=spec.canonical_name,
                        values=tuple(o.value for o in observations),
                        resolved_range=resolved,
                        frequency=spec.frequency.value.capitalize(),
                        unit=spec.unit,
                        nearest_substitution=substituted,
                    )
                )
        return RetrievalTable(
            metrics=tuple(m.canonical_name for m in metric_specs),
            entities=tuple(expanded),
            rows=tuple(rows),
            unresolved=tuple(unresolved),
        )

    def _resolve_for_ranges(
        self,
        spec: MetricSpec,
        company: str,
        ranges: tuple[DateRange, ...] | LatestAvailable,
        snapshot: dict[tuple[str, str], tuple[Observation, ...]],
    ) -> tuple[list[Observation], DateRange, bool] | None:
        if isinstance(ranges, LatestAvailable):
            return self.resolve_range(spec, company, LATEST, _snapshot=snapshot)
        merged: dict[tuple[dt.date, dt.date], Observation] = {}
        substituted = False
        for requested in ranges:
            result = self.resolve_range(spec, company, requested, _snapshot=snapshot)
            if result is None:
                return None
            observations, _, flag = result
            substituted = substituted or flag
            for o in observations:
                merged[(o.period_start, o.period_end)] = o
        chosen = sorted(merged.values())
        resolved = DateRange(
            min(o.period_start for o in chosen), max(o.period_end for o in chosen)
        )
        return chosen, resolved, substituted

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(OBSERVATION_FIELDS)
            snapshot = self._snapshot
            for series in snapshot.values():
                for o in series:
                    writer.writerow(
                        [
                            o.company,
                            o.metric,
                            format_date(o.period_start),
                            format_date(o.period_end),
                            format_value(o.value),
                            o.unit,
                        ]
                    )

    def load(self, path: str | Path) -> IngestReport:
        return self.ingest_timeseries(read_observations_csv(path))


def _negate(key: tuple[dt.date, dt.date]) -> tuple[int, int]:
    # invert a recency key so that min() prefers the more recent period
    return (-key[0].toordinal(), -key[1].toordinal())


def format_value(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def read_observations_csv(path: str | Path) -> list[Observation]:
    """Read the delimited time-series interchange format (d/m/yyyy dates)."""
    observations = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != OBSERVATION_FIELDS:
            raise IngestError(
                f"expected header {','.join(OBSERVATION_FIELDS)!r} in {path}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                observations.append(
                    Observation(
                        company=row["company"],
                        metric=row["metric"],
                        period_start=parse_date_token(row["period_start"]),
                        period_end=parse_date_token(row["period_end"]),
                        value=float(row["value"]),
                        unit=row["unit"] or "",
                    )
                )
            except Exception as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
    return observations


# --- news ---------------------------------------------------------------

_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have in into is it its of on or
    s should that the their this to was were will with""".split()
)
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize_for_match(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in _STOPWORDS]


def default_scorer(a: str, b: str) -> float:
    """Cosine over stopword-filtered token counts: symmetric, in [0, 1],
    exactly 1.0 when the token multisets are proportional."""
    ca, cb = Counter(tokenize_for_match(a)), Counter(tokenize_for_match(b))
    if not ca or not cb:
        return 0.0
    dot = sum(ca[t] * cb[t] for t in ca.keys() & cb.keys())
    if dot == 0:
        return 0.0
    norm = math.sqrt(sum(v * v for v in ca.values())) * math.sqrt(
        sum(v * v for v in cb.values())
    )
    return min(1.0, dot / norm)


class NewsStore:
    """News items with a vectorized lexical index for headline matching."""

    def __init__(self, registry: Registry | None = None):
        self._registry = registry
        self._lock = threading.Lock()
        self._items: dict[str, NewsItem] = {}
        self._index_dirty = True
        self._vocab: dict[str, int] = {}
        self._matrix: sparse.csr_matrix | None = None
        self._order: list[str] = []

    def __len__(self) -> int:
        return len(self._items)

    def ingest_news(self, items: Iterable[NewsItem]) -> IngestReport:
        report = IngestReport()
        with self._lock:
            staging = dict(self._items)
            for item in items:
                if item.id in staging:
                    report.replaced += 1
                else:
                    report.inserted += 1
                staging[item.id] = item
            self._items = staging  # published atomically; readers keep their copy
            self._index_dirty = True
        return report

    def _document_text(self, item: NewsItem) -> str:
        parts = [item.headline]
        for entity in item.entities:
            parts.append(entity)
            if self._registry is not None:
                try:
                    company = self._registry.companies[
                        self._registry.resolve_company_name(entity)
                    ]
                except UnknownEntityError:
                    continue
                parts.extend(company.aliases)
        return " ".join(parts)

    def _rebuild_index(self) -> None:
        items = sorted(self._items.values(), key=lambda it: (it.published, it.id))
        self._order = [it.id for it in items]
        vocab: dict[str, int] = {}
        rows: list[int] = []
        cols: list[int] = []
        data: list[float] = []
        for i, item in enumerate(items):
            counts = Counter(tokenize_for_match(self._document_text(item)))
            for token, count in counts.items():
                col = vocab.setdefault(token, len(vocab))
                rows.append(i)
                cols.append(col)
                data.append(float(count))
        self._vocab = vocab
        if items and vocab:
            matrix = sparse.csr_matrix(
                (data, (rows, cols)), shape=(len(items), len(vocab))
            )
            norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())
            norms[norms == 0] = 1.0
            self._matrix = sparse.csr_matrix(sparse.diags(1.0 / norms) @ matrix)
        else:
            self._matrix = None
        self._index_dirty = False

    def match_news(
        self,
        query: str,
        k: int = 5,
        scorer: Callable[[str, str], float] | None = None,
        require_entities: Iterable[str] | None = None,
    ) -> list[tuple[NewsItem, float]]:
        """Top-k items by similarity, ties by recency then id.

        Zero-similarity items never match. require_entities turns the soft
        entity boost into a hard filter on the items' tagged entities.
        """
        if k < 1:
            raise ValueError("k must be positive")
        entity_filter = set(require_entities) if require_entities is not None else None
        items = self._items  # one snapshot for the whole match
        candidates = list(items.values())
        if entity_filter is not None:
            candidates = [
                it for it in candidates if entity_filter.intersection(it.entities)
            ]
        if not candidates:
            return []
        if scorer is None and entity_filter is None:
            scored = self._match_vectorized(query)
        else:
            fn = scorer or (lambda q, doc: default_scorer(q, doc))
            scored = [(it, fn(query, self._document_text(it))) for it in candidates]
        scored = [(it, s) for it, s in scored if s > 0.0]
        scored.sort(key=lambda pair: (-pair[1], _age_key(pair[0]), pair[0].id))
        return scored[:k]

    def _match_vectorized(self, query: str) -> list[tuple[NewsItem, float]]:
        with self._lock:
            if self._index_dirty:
                self._rebuild_index()
            matrix, vocab, order = self._matrix, self._vocab, self._order
            items = self._items
        if matrix is None:
            return []
        counts = Counter(tokenize_for_match(query))
        cols = [vocab[t] for t in counts if t in vocab]
        if not cols:
            return []
        values = np.array([float(counts[t]) for t in counts if t in vocab])
        qnorm = math.sqrt(sum(v * v for v in counts.values()))
        vec = sparse.csr_matrix(
            (values / qnorm, (np.zeros(len(cols), dtype=int), cols)),
            shape=(1, matrix.shape[1]),
        )
        scores = (matrix @ vec.T).toarray().ravel()
        return [
            (items[item_id], min(1.0, float(score)))
            for item_id, score in zip(order, scores)
        ]

    def save(self, path: str | Path) -> None:
        items = self._items
        with open(path, "w", encoding="utf-8") as fh:
            for item in sorted(items.values(), key=lambda it: (it.published, it.id)):
                fh.write(
                    json.dumps(
                        {
                            "id": item.id,
                            "published": item.published.isoformat(),
                            "headline": item.headline,
                            "body": item.body,
                            "entities": list(item.entities),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    def load(self, path: str | Path) -> IngestReport:
        return self.ingest_news(read_news_jsonl(path))


def _age_key(item: NewsItem) -> float:
    return -item.published.timestamp()


def read_news_jsonl(path: str | Path) -> list[NewsItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                items.append(
                    NewsItem(
                        id=str(obj["id"]),
                        published=_parse_timestamp(obj["published"]),
                        headline=obj["headline"],
                        body=obj.get("body", ""),
                        entities=tuple(obj.get("entities", [])),
                    )
                )
            except Exception as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
    return items


def _parse_timestamp(raw: str) -> dt.datetime:
    return dt.datetime.fromisoformat(raw.replace("Z", "+00:00"))
