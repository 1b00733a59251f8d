"""Canonical vocabularies: metrics, companies, sectors, and query templates.

The registry is a single human-editable YAML document with three sections
(metrics, companies, templates) so the metric/related-metric mapping stays
reviewable in diffs. Schema:

    metrics:
      - name: Quick Ratio            # canonical, unique
        aliases: [Acid Test Ratio]   # optional, globally unique
        related: [Cash, ...]         # optional, ordered, must all be defined
        frequency: quarterly         # daily | quarterly | annual | static
        unit: ratio
        trackable: true              # optional, default true
    companies:
      - name: Adobe Inc.
        aliases: [Adobe, ADBE]
        sector: Technology
        peers: ["Salesforce, Inc."]  # optional, must all be defined
    templates:
      - id: t001
        pattern: "Judging by [company]'s [metrics][date], ...?"
        metric_constraint: any       # any | trackable_only | descriptive_only
        max_metrics: 3

Matching is case and punctuation insensitive ("acid-test ratio" resolves),
and trailing possessives are tolerated ("Amcor's"). There is no fuzzy
matching: unknown surface forms are hard errors, which keeps the rule-based
compiler auditable. Loaded registries are immutable; reload produces a new
value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from .errors import RegistryError, UnknownEntityError, UnknownMetricError
from .grammar import EntitySelector

__all__ = [
    "Frequency",
    "MetricConstraint",
    "MetricSpec",
    "CompanySpec",
    "QueryTemplate",
    "Registry",
    "load_registry",
    "load_templates",
    "normalize",
]

_POSSESSIVE_RE = re.compile(r"(?:['’]s?|['’])\s*$")
_NON_ALNUM_RE = re.compile(r"[^a-z0-9]+")

ALLOWED_PLACEHOLDERS = frozenset(
    {"company", "company1", "company2", "metrics", "date", "industry", "number"}
)
_PLACEHOLDER_RE = re.compile(r"\[([a-z0-9]+)\]")

# Entity suffixes reserved by the request grammar.
_RESERVED_SUFFIXES = (" Peers", " Companies")


def normalize(text: str) -> tuple[str, ...]:
    """Normalized token tuple used for all vocabulary matching."""
    text = _POSSESSIVE_RE.sub("", text.strip())
    return tuple(_NON_ALNUM_RE.sub(" ", text.lower()).split())


class Frequency(str, Enum):
    DAILY = "daily"
    QUARTERLY = "quarterly"
    ANNUAL = "annual"
    STATIC = "static"


class MetricConstraint(str, Enum):
    ANY = "any"
    TRACKABLE_ONLY = "trackable_only"
    DESCRIPTIVE_ONLY = "descriptive_only"


@dataclass(frozen=True)
class MetricSpec:
    canonical_name: str
    aliases: tuple[str, ...]
    related_metrics: tuple[str, ...]
    frequency: Frequency
    unit: str
    trackable: bool = True

    def surface_forms(self) -> tuple[str, ...]:
        return (self.canonical_name,) + self.aliases


@dataclass(frozen=True)
class CompanySpec:
    canonical_name: str
    aliases: tuple[str, ...]
    sector: str
    peers: tuple[str, ...]

    def surface_forms(self) -> tuple[str, ...]:
        return (self.canonical_name,) + self.aliases


@dataclass(frozen=True)
class QueryTemplate:
    template_id: str
    pattern: str
    metric_constraint: MetricConstraint = MetricConstraint.ANY
    max_metrics: int = 3

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.pattern)


def _require_fields(record: dict, allowed: dict[str, bool], section: str, label: str) -> None:
    for key in record:
        if key not in allowed:
            raise RegistryError(f"unknown field {key!r}", section=section, record=label)
    for key, required in allowed.items():
        if required and key not in record:
            raise RegistryError(f"missing field {key!r}", section=section, record=label)


def _clean_name(value: object, section: str, label: str, what: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise RegistryError(f"{what} must be a nonempty string", section=section, record=label)
    name = " ".join(value.split())
    if ";" in name:
        raise RegistryError(f"{what} {name!r} may not contain ';'", section=section, record=label)
    return name


def _clean_name_list(value: object, section: str, label: str, what: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise RegistryError(f"{what} must be a list", section=section, record=label)
    return tuple(_clean_name(v, section, label, f"{what} entry") for v in value)


@dataclass(frozen=True)
class Registry:
    """Immutable snapshot of the loaded vocabularies, safe to share freely."""

    metrics: dict[str, MetricSpec]
    companies: dict[str, CompanySpec]
    templates: tuple[QueryTemplate, ...]
    _metric_lookup: dict[tuple[str, ...], str] = field(repr=False)
    _company_lookup: dict[tuple[str, ...], str] = field(repr=False)
    _sector_lookup: dict[tuple[str, ...], str] = field(repr=False)

    @property
    def metric_lookup(self) -> dict[tuple[str, ...], str]:
        """Normalized surface tuple -> canonical metric name."""
        return self._metric_lookup

    @property
    def company_lookup(self) -> dict[tuple[str, ...], str]:
        """Normalized surface tuple -> canonical company name."""
        return self._company_lookup

    def resolve_metric(self, surface_text: str) -> MetricSpec:
        canonical = self._metric_lookup.get(normalize(surface_text))
        if canonical is None:
            raise UnknownMetricError(surface_text)
        return self.metrics[canonical]

    def resolve_sector(self, surface_text: str) -> str:
        canonical = self._sector_lookup.get(normalize(surface_text))
        if canonical is None:
            raise UnknownEntityError(surface_text)
        return canonical

    def resolve_entity(self, surface_text: str) -> EntitySelector:
        """Resolve one entity phrase to a selector.

        Accepts company aliases, "X Peers", "S Companies", sector phrases
        like "other companies in the energy sector", and bare sector names.
        """
        tokens = normalize(surface_text)
        canonical = self._company_lookup.get(tokens)
        if canonical is not None:
            return EntitySelector.company(canonical)
        if tokens and tokens[-1] == "peers":
            head = self._company_lookup.get(tokens[:-1])
            if head is not None:
                return EntitySelector.peers_of(head)
        if tokens and tokens[-1] in ("companies", "sector"):
            body = tokens[:-1]
            # strip "other companies in the" style prefixes
            for prefix in (("other", "companies", "in", "the"), ("companies", "in", "the"), ("the",)):
                if body[: len(prefix)] == prefix:
                    body = body[len(prefix) :]
                    break
            sector = self._sector_lookup.get(body)
            if sector is not None:
                return EntitySelector.sector(sector)
        sector = self._sector_lookup.get(tokens)
        if sector is not None:
            return EntitySelector.sector(sector)
        raise UnknownEntityError(surface_text)

    def related_metrics(self, metric: str) -> list[MetricSpec]:
        spec = self.resolve_metric(metric)
        return [self.metrics[name] for name in spec.related_metrics]

    def peers_of(self, company: str) -> list[CompanySpec]:
        spec = self.companies[self.resolve_company_name(company)]
        return [self.companies[name] for name in spec.peers]

    def resolve_company_name(self, surface_text: str) -> str:
        canonical = self._company_lookup.get(normalize(surface_text))
        if canonical is None:
            raise UnknownEntityError(surface_text)
        return canonical

    def sector_companies(self, sector: str) -> list[CompanySpec]:
        """Companies in a sector, registry order. Sector "All" means everyone."""
        if normalize(sector) == ("all",):
            return list(self.companies.values())
        canonical = self.resolve_sector(sector)
        return [c for c in self.companies.values() if c.sector == canonical]

    def sectors(self) -> list[str]:
        seen: dict[str, None] = {}
        for company in self.companies.values():
            seen.setdefault(company.sector)
        return list(seen)

    def template_by_id(self, template_id: str) -> QueryTemplate:
        for t in self.templates:
            if t.template_id == template_id:
                return t
        raise KeyError(template_id)


def _parse_metric(record: object, index: int) -> MetricSpec:
    label = f"metric #{index + 1}"
    if not isinstance(record, dict):
        raise RegistryError("metric record must be a mapping", section="metrics", record=label)
    name = record.get("name")
    if isinstance(name, str):
        label = name
    _require_fields(
        record,
        {"name": True, "aliases": False, "related": False, "frequency": True, "unit": True, "trackable": False},
        "metrics",
        label,
    )
    name = _clean_name(record["name"], "metrics", label, "metric name")
    try:
        frequency = Frequency(record["frequency"])
    except ValueError:
        raise RegistryError(
            f"invalid frequency {record['frequency']!r}", section="metrics", record=label
        ) from None
    trackable = record.get("trackable", True)
    if not isinstance(trackable, bool):
        raise RegistryError("trackable must be a boolean", section="metrics", record=label)
    return MetricSpec(
        canonical_name=name,
        aliases=_clean_name_list(record.get("aliases"), "metrics", label, "alias"),
        related_metrics=_clean_name_list(record.get("related"), "metrics", label, "related metric"),
        frequency=frequency,
        unit=_clean_name(record["unit"], "metrics", label, "unit"),
        trackable=trackable,
    )


def _parse_company(record: object, index: int) -> CompanySpec:
    label = f"company #{index + 1}"
    if not isinstance(record, dict):
        raise RegistryError("company record must be a mapping", section="companies", record=label)
    name = record.get("name")
    if isinstance(name, str):
        label = name
    _require_fields(
        record, {"name": True, "aliases": False, "sector": True, "peers": False}, "companies", label
    )
    name = _clean_name(record["name"], "companies", label, "company name")
    for suffix in _RESERVED_SUFFIXES:
        if name.endswith(suffix):
            raise RegistryError(
                f"company name may not end with {suffix!r} (reserved by the request grammar)",
                section="companies",
                record=label,
            )
    return CompanySpec(
        canonical_name=name,
        aliases=_clean_name_list(record.get("aliases"), "companies", label, "alias"),
        sector=_clean_name(record["sector"], "companies", label, "sector"),
        peers=_clean_name_list(record.get("peers"), "companies", label, "peer"),
    )


def _parse_template(record: object, index: int) -> QueryTemplate:
    label = f"template #{index + 1}"
    if not isinstance(record, dict):
        raise RegistryError("template record must be a mapping", section="templates", record=label)
    tid = record.get("id")
    if isinstance(tid, str):
        label = tid
    _require_fields(
        record,
        {"id": True, "pattern": True, "metric_constraint": False, "max_metrics": False},
        "templates",
        label,
    )
    pattern = record["pattern"]
    if not isinstance(pattern, str) or not pattern.strip():
        raise RegistryError("pattern must be a nonempty string", section="templates", record=label)
    placeholders = _PLACEHOLDER_RE.findall(pattern)
    if not placeholders:
        raise RegistryError("pattern has no placeholders", section="templates", record=label)
    for p in placeholders:
        if p not in ALLOWED_PLACEHOLDERS:
            raise RegistryError(f"unknown placeholder [{p}]", section="templates", record=label)
    for p, limit in (("company", 1), ("company1", 1), ("company2", 1), ("metrics", 1), ("date", 1), ("industry", 1), ("number", 1)):
        if placeholders.count(p) > limit:
            raise RegistryError(f"placeholder [{p}] appears more than once", section="templates", record=label)
    if "company" in placeholders and ("company1" in placeholders or "company2" in placeholders):
        raise RegistryError(
            "pattern mixes [company] with [company1]/[company2]", section="templates", record=label
        )
    try:
        constraint = MetricConstraint(record.get("metric_constraint", "any"))
    except ValueError:
        raise RegistryError(
            f"invalid metric_constraint {record['metric_constraint']!r}",
            section="templates",
            record=label,
        ) from None
    max_metrics = record.get("max_metrics", 3)
    if not isinstance(max_metrics, int) or max_metrics < 1:
        raise RegistryError("max_metrics must be a positive integer", section="templates", record=label)
    return QueryTemplate(
        template_id=_clean_name(record["id"], "templates", label, "template id"),
        pattern=pattern,
        metric_constraint=constraint,
        max_metrics=max_metrics,
    )


def _register_surfaces(
    lookup: dict[tuple[str, ...], str],
    taken: dict[tuple[str, ...], str],
    surfaces: tuple[str, ...],
    canonical: str,
    section: str,
) -> None:
    for surface in surfaces:
        key = normalize(surface)
        if not key:
            raise RegistryError(
                f"surface form {surface!r} normalizes to nothing", section=section, record=canonical
            )
        owner = taken.get(key)
        if owner is not None and owner != f"{section}:{canonical}":
            raise RegistryError(
                f"duplicate alias {surface!r} (already used by {owner.split(':', 1)[1]!r})",
                section=section,
                record=canonical,
            )
        taken[key] = f"{section}:{canonical}"
        lookup[key] = canonical


def _load_document(path: str | Path) -> dict:
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise RegistryError(f"not valid YAML{where}: {exc}") from None
    if not isinstance(doc, dict):
        raise RegistryError("registry document must be a mapping with metrics/companies/templates")
    return doc


def load_templates(path: str | Path) -> tuple[QueryTemplate, ...]:
    """Load just the templates section of a registry-format file."""
    doc = _load_document(path)
    raw_templates = doc.get("templates") or []
    if not isinstance(raw_templates, list):
        raise RegistryError("templates section must be a list")
    templates = tuple(_parse_template(t, i) for i, t in enumerate(raw_templates))
    seen: set[str] = set()
    for t in templates:
        if t.template_id in seen:
            raise RegistryError(f"duplicate template id {t.template_id!r}", section="templates")
        seen.add(t.template_id)
    return templates


def load_registry(path: str | Path) -> Registry:
    """Load and validate a registry file, rejecting anything inconsistent."""
    doc = _load_document(path)
    for section in doc:
        if section not in ("metrics", "companies", "templates"):
            raise RegistryError(f"unknown section {section!r}")

    raw_metrics = doc.get("metrics") or []
    if not isinstance(raw_metrics, list) or not raw_metrics:
        raise RegistryError("registry must define at least one metric")
    raw_companies = doc.get("companies") or []
    if not isinstance(raw_companies, list):
        raise RegistryError("companies section must be a list")

    metrics: dict[str, MetricSpec] = {}
    taken: dict[tuple[str, ...], str] = {}
    metric_lookup: dict[tuple[str, ...], str] = {}
    for i, record in enumerate(raw_metrics):
        spec = _parse_metric(record, i)
        if spec.canonical_name in metrics:
            raise RegistryError(
                f"duplicate metric {spec.canonical_name!r}", section="metrics"
            )
        metrics[spec.canonical_name] = spec
        _register_surfaces(metric_lookup, taken, spec.surface_forms(), spec.canonical_name, "metrics")

    companies: dict[str, CompanySpec] = {}
    company_lookup: dict[tuple[str, ...], str] = {}
    for i, record in enumerate(raw_companies):
        spec = _parse_company(record, i)
        if spec.canonical_name in companies:
            raise RegistryError(
                f"duplicate company {spec.canonical_name!r}", section="companies"
            )
        companies[spec.canonical_name] = spec
        _register_surfaces(company_lookup, taken, spec.surface_forms(), spec.canonical_name, "companies")

    sector_lookup: dict[tuple[str, ...], str] = {}
    for spec in companies.values():
        sector_lookup.setdefault(normalize(spec.sector), spec.sector)

    # Closure checks: related metrics and peers must themselves be defined,
    # and nothing may reference itself. Related/peer entries are rewritten
    # to the canonical spelling they resolve to.
    resolved_metrics: dict[str, MetricSpec] = {}
    for spec in metrics.values():
        resolved_related = []
        for related in spec.related_metrics:
            canonical = metric_lookup.get(normalize(related))
            if canonical is None:
                raise RegistryError(
                    f"related metric {related!r} of {spec.canonical_name!r} is not defined",
                    section="metrics",
                    record=spec.canonical_name,
                )
            if canonical == spec.canonical_name:
                raise RegistryError(
                    "metric lists itself as related", section="metrics", record=spec.canonical_name
                )
            resolved_related.append(canonical)
        resolved_metrics[spec.canonical_name] = MetricSpec(
            canonical_name=spec.canonical_name,
            aliases=spec.aliases,
            related_metrics=tuple(resolved_related),
            frequency=spec.frequency,
            unit=spec.unit,
            trackable=spec.trackable,
        )

    resolved_companies: dict[str, CompanySpec] = {}
    for spec in companies.values():
        resolved_peers = []
        for peer in spec.peers:
            canonical = company_lookup.get(normalize(peer))
            if canonical is None:
                raise RegistryError(
                    f"peer {peer!r} of {spec.canonical_name!r} is not defined",
                    section="companies",
                    record=spec.canonical_name,
                )
            if canonical == spec.canonical_name:
                raise RegistryError(
                    "company lists itself as a peer", section="companies", record=spec.canonical_name
                )
            resolved_peers.append(canonical)
        resolved_companies[spec.canonical_name] = CompanySpec(
            canonical_name=spec.canonical_name,
            aliases=spec.aliases,
            sector=spec.sector,
            peers=tuple(resolved_peers),
        )

    raw_templates = doc.get("templates") or []
    if not isinstance(raw_templates, list):
        raise RegistryError("templates section must be a list")
    templates = tuple(_parse_template(t, i) for i, t in enumerate(raw_templates))
    seen_ids: set[str] = set()
    for t in templates:
        if t.template_id in seen_ids:
            raise RegistryError(f"duplicate template id {t.template_id!r}", section="templates")
        seen_ids.add(t.template_id)

    return Registry(
        metrics=resolved_metrics,
        companies=resolved_companies,
        templates=templates,
        _metric_lookup=metric_lookup,
        _company_lookup=company_lookup,
        _sector_lookup=sector_lookup,
    )
