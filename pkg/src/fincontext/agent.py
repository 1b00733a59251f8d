"""Compiles a natural-language financial query into a structured data request.

The rule-based compiler extracts, in query surface order:

* entities, by longest-alias match over the registry's company vocabulary,
  plus three phrase forms: "its competitor(s)" / "its peers" attaches a
  peers selector to the nearest preceding company, "<sector> sector"
  phrases select a sector, and queries with no entity at all but a
  market-wide cue ("top 5 companies") select every company;
* metrics, by longest-alias match, each expanded with its registry-defined
  related metrics (emitted inline after the primary, duplicates kept);
* the date phrase, verbatim, resolved against an injected reference date.

Matching is greedy left-to-right with no overlaps; ties break to the
earlier query position, then to the longer alias. The dataset synthesizer
uses the same registry and the same date resolver, which is what makes
compiling a synthesized row's query reproduce its label exactly.

An external model can stand in for the rule-based compiler: it is called
over HTTP with the raw query and must answer with a request string, which
is parsed and falls back to the rule-based path if unparseable.
"""

from __future__ import annotations

import datetime as dt
import logging
import re
from dataclasses import dataclass

import httpx

from .dates import find_date_phrase, resolve_date_phrase
from .errors import (
    ExternalAgentStatusError,
    ExternalAgentTimeout,
    ExternalAgentTransportError,
    NoEntityFoundError,
    NoMetricFoundError,
)
from .grammar import (
    LATEST,
    EntitySelector,
    StructuredDataRequest,
    parse_request,
)
from .registry import Registry

log = logging.getLogger(__name__)

__all__ = [
    "AgentConfig",
    "RequiredData",
    "compile_query",
    "build_request",
    "ExternalAgentClient",
    "compile_with_fallback",
]

MARKET_WIDE_SECTOR = "All"

_PEERS_PHRASE_RE = re.compile(
    r"(?:\band\s+)?\b(?:its|their)\s+(?:competitors?|peers)(?:['’]s?)?", re.IGNORECASE
)
_MARKET_WIDE_RE = re.compile(r"\bcompanies\b", re.IGNORECASE)
_WORD_RE = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class AgentConfig:
    """How queries get compiled; reference_date anchors relative phrases."""

    reference_date: dt.date
    mode: str = "rule_based"  # rule_based | external
    external_endpoint: str | None = None
    timeout: float = 10.0

    def __post_init__(self) -> None:
        if self.mode not in ("rule_based", "external"):
            raise ValueError(f"unknown agent mode {self.mode!r}")
        if (self.mode == "external") != (self.external_endpoint is not None):
            raise ValueError("external_endpoint must be set exactly when mode is 'external'")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class RequiredData:
    """The data needed to answer a query, before wire serialization."""

    companies: tuple[EntitySelector, ...]
    metrics: tuple[tuple[str, tuple[str, ...]], ...]  # (primary, related...)
    date_phrase: str

    def to_json(self) -> dict:
        return {
            "companies": [c.to_json() for c in self.companies],
            "metrics": [{"metric": m, "related": list(r)} for m, r in self.metrics],
            "date_phrase": self.date_phrase,
        }

    @staticmethod
    def from_json(obj: dict) -> "RequiredData":
        return RequiredData(
            companies=tuple(EntitySelector.from_json(c) for c in obj["companies"]),
            metrics=tuple((m["metric"], tuple(m["related"])) for m in obj["metrics"]),
            date_phrase=obj["date_phrase"],
        )


def _token_spans(text: str) -> list[tuple[str, int]]:
    """Lowercased word tokens with their character offsets."""
    return [(m.group(0).lower(), m.start()) for m in _WORD_RE.finditer(text)]


def _scan_vocab(
    tokens: list[tuple[str, int]], lookup: dict[tuple[str, ...], str], max_len: int
) -> list[tuple[str, int]]:
    """Longest-match scan; returns (canonical, char_offset) in text order."""
    words = [t for t, _ in tokens]
    found: list[tuple[str, int]] = []
    i = 0
    while i < len(words):
        for length in range(min(max_len, len(words) - i), 0, -1):
            canonical = lookup.get(tuple(words[i : i + length]))
            if canonical is not None:
                found.append((canonical, tokens[i][1]))
                i += length
                break
        else:
            i += 1
    return found


def _max_key_len(lookup: dict[tuple[str, ...], str]) -> int:
    return max((len(k) for k in lookup), default=1)


def _sector_phrase_re(registry: Registry) -> re.Pattern[str]:
    names = sorted(registry.sectors(), key=len, reverse=True)
    alternation = "|".join(re.escape(n) for n in names) or "(?!x)x"
    return re.compile(
        rf"(?:\bother\s+companies\s+in\s+the\s+|\bcompanies\s+in\s+the\s+|\bthe\s+)?"
        rf"\b({alternation})\s+sector\b",
        re.IGNORECASE,
    )


def _extract_entities(query: str, registry: Registry) -> list[EntitySelector]:
    tokens = _token_spans(query)
    mentions: list[tuple[int, EntitySelector]] = [
        (pos, EntitySelector.company(name))
        for name, pos in _scan_vocab(tokens, registry.company_lookup, _max_key_len(registry.company_lookup))
    ]
    for m in _sector_phrase_re(registry).finditer(query):
        mentions.append((m.start(), EntitySelector.sector(registry.resolve_sector(m.group(1)))))
    for m in _PEERS_PHRASE_RE.finditer(query):
        preceding = [p for p, sel in mentions if sel.kind.value == "company" and p < m.start()]
        if preceding:
            owner = max(preceding)
            company = next(sel for p, sel in mentions if p == owner and sel.kind.value == "company")
            mentions.append((m.start(), EntitySelector.peers_of(company.name)))
        # a peers phrase with no company before it is ignored
    mentions.sort(key=lambda item: item[0])
    selectors: list[EntitySelector] = []
    for _, sel in mentions:
        if sel not in selectors:
            selectors.append(sel)
    return selectors


def _extract_metrics(query: str, registry: Registry) -> list[str]:
    tokens = _token_spans(query)
    found = _scan_vocab(tokens, registry.metric_lookup, _max_key_len(registry.metric_lookup))
    names: list[str] = []
    for name, _ in found:
        if name not in names:
            names.append(name)
    return names


def build_request(
    required: RequiredData, reference_date: dt.date
) -> StructuredDataRequest:
    """Serialize-ready request from required data plus date resolution."""
    flat_metrics: list[str] = []
    for primary, related in required.metrics:
        flat_metrics.append(primary)
        flat_metrics.extend(related)
    resolved = resolve_date_phrase(required.date_phrase, reference_date)
    ranges = LATEST if resolved is LATEST else (resolved,)
    return StructuredDataRequest(
        entities=required.companies,
        metrics=tuple(flat_metrics),
        ranges=ranges,
    )


def compile_query(
    query: str, registry: Registry, config: AgentConfig
) -> tuple[RequiredData, StructuredDataRequest]:
    """Rule-based compilation of a query into (required data, request).

    Raises NoMetricFoundError / NoEntityFoundError with the query attached;
    a query with no entity but a market-wide cue ("top 5 companies") is
    compiled against every company.
    """
    metrics = _extract_metrics(query, registry)
    if not metrics:
        raise NoMetricFoundError(query)
    entities = _extract_entities(query, registry)
    if not entities:
        if _MARKET_WIDE_RE.search(query):
            entities = [EntitySelector.sector(MARKET_WIDE_SECTOR)]
        else:
            raise NoEntityFoundError(query)
    hit = find_date_phrase(query)
    date_phrase = hit[0] if hit else ""
    required = RequiredData(
        companies=tuple(entities),
        metrics=tuple(
            (m, tuple(r.canonical_name for r in registry.related_metrics(m))) for m in metrics
        ),
        date_phrase=date_phrase,
    )
    return required, build_request(required, config.reference_date)


class ExternalAgentClient:
    """HTTP client for a model that emits request strings.

    Protocol: POST {endpoint} with JSON {"query": ...}; the response is JSON
    {"request_text": ...}. The emitted text is returned unmodified; parsing
    and fallback are the caller's concern. Timeout, connection, and status
    failures raise distinct exceptions.
    """

    def __init__(self, config: AgentConfig, transport: httpx.BaseTransport | None = None):
        if config.mode != "external":
            raise ValueError("ExternalAgentClient requires mode='external'")
        self._config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def request_text(self, query: str) -> str:
        try:
            response = self._client.post(
                self._config.external_endpoint, json={"query": query}
            )
        except httpx.TimeoutException as exc:
            raise ExternalAgentTimeout(str(exc)) from exc
        except httpx.TransportError as exc:
            raise ExternalAgentTransportError(str(exc)) from exc
        if response.status_code >= 400:
            raise ExternalAgentStatusError(response.status_code, response.text)
        return response.json()["request_text"]

    def close(self) -> None:
        self._client.close()


def compile_with_fallback(
    query: str,
    registry: Registry,
    config: AgentConfig,
    client: ExternalAgentClient | None = None,
) -> tuple[RequiredData | None, StructuredDataRequest]:
    """Compile via the external agent when configured, else rule-based.

    External responses that fail to parse (or fail transport) fall back to
    the rule-based compiler; the fallback is logged. The external path
    yields no RequiredData breakdown, only the request.
    """
    if config.mode == "external":
        own_client = client is None
        client = client or ExternalAgentClient(config)
        try:
            text = client.request_text(query)
            try:
                return None, parse_request(text)
            except Exception as exc:
                log.warning(
                    "external agent emitted unparseable request (%s); falling back to rules",
                    exc,
                )
        except (ExternalAgentTimeout, ExternalAgentTransportError, ExternalAgentStatusError) as exc:
            log.warning("external agent unavailable (%s); falling back to rules", exc)
        finally:
            if own_client:
                client.close()
        fallback_config = AgentConfig(reference_date=config.reference_date)
        return compile_query(query, registry, fallback_config)
    return compile_query(query, registry, config)
