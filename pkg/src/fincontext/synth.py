"""Template expansion and dataset synthesis.

A dataset row is (query, required data, structured request). Rows are
synthesized by binding randomized registry picks into query templates:
company slots draw a company (sometimes widened to "X and its competitor"),
the metrics slot draws 1..max_metrics metrics satisfying the template's
constraint, the date slot draws one of six phrase shapes, and surface forms
vary over each entry's canonical name and aliases.

The structured request is produced with the same date resolver and the
same related-metric expansion the rule-based compiler uses, and every
candidate row is verified to compile back to its own label (ambiguous
surface fusions are redrawn), so compiling a synthesized query reproduces
its label byte for byte. Queries are distinct within a run (exact
comparison after whitespace normalization), enforced by resampling with a
bounded retry budget.

Everything is a pure function of (templates, registry, n, seed,
reference_date): rows derive per-index seeds, so any row can be recomputed
independently of the others.
"""

from __future__ import annotations

import calendar
import datetime as dt
import json
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .agent import AgentConfig, RequiredData, build_request, compile_query
from .dates import resolve_date_phrase
from .errors import (
    DatePhraseError,
    DistinctnessError,
    FinContextError,
    UnsatisfiableTemplateError,
)
from .grammar import (
    LATEST,
    EntitySelector,
    parse_request,
    serialize_request,
)
from .registry import (
    CompanySpec,
    MetricConstraint,
    MetricSpec,
    QueryTemplate,
    Registry,
)

__all__ = [
    "SlotBindings",
    "DatasetRow",
    "ValidationReport",
    "sample_bindings",
    "expand_template",
    "synthesize_dataset",
    "validate_row",
    "write_rows",
    "read_rows",
]

MARKET_WIDE_SECTOR = "All"

_DATE_KINDS = ("month_year", "year", "quarter", "from_to", "previous_months", "absent")
_YEARS = range(2015, 2025)
_PREVIOUS_MONTH_CHOICES = (3, 6, 9, 12, 18, 24)
_PEER_PHRASE_PROBABILITY = 0.2


@dataclass(frozen=True)
class SlotBindings:
    """Sampled values for one template expansion.

    companies holds selectors in pattern order (a peers-widened company
    slot contributes two adjacent selectors). surfaces maps each
    placeholder occurrence to the exact text spliced into the pattern, so
    expansion itself is deterministic.
    """

    template_id: str
    companies: tuple[EntitySelector, ...]
    metrics: tuple[str, ...]
    date_phrase: str
    numbers: tuple[int, ...]
    industry: str | None
    surfaces: tuple[tuple[str, str], ...]

    def surface(self, slot: str) -> str:
        for name, text in self.surfaces:
            if name == slot:
                return text
        raise KeyError(slot)


@dataclass(frozen=True)
class DatasetRow:
    query: str
    required_data: RequiredData
    structured_request: str
    template_id: str
    seed: int

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "required_data": self.required_data.to_json(),
            "structured_request": self.structured_request,
            "template_id": self.template_id,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(obj: dict) -> "DatasetRow":
        return DatasetRow(
            query=obj["query"],
            required_data=RequiredData.from_json(obj["required_data"]),
            structured_request=obj["structured_request"],
            template_id=obj["template_id"],
            seed=obj["seed"],
        )


def _eligible_metrics(template: QueryTemplate, registry: Registry) -> list[MetricSpec]:
    metrics = list(registry.metrics.values())
    if template.metric_constraint is MetricConstraint.TRACKABLE_ONLY:
        metrics = [m for m in metrics if m.trackable]
    elif template.metric_constraint is MetricConstraint.DESCRIPTIVE_ONLY:
        metrics = [m for m in metrics if not m.trackable]
    if not metrics:
        raise UnsatisfiableTemplateError(
            f"template {template.template_id!r} requires "
            f"{template.metric_constraint.value} metrics but the registry has none"
        )
    return metrics


def _pick_surface(rng: random.Random, forms: tuple[str, ...]) -> str:
    return rng.choice(list(forms))


def _metric_phrase(surfaces: list[str]) -> str:
    if len(surfaces) == 1:
        return surfaces[0]
    return ", ".join(surfaces[:-1]) + " and " + surfaces[-1]


def _sample_date(rng: random.Random) -> str:
    kind = rng.choice(_DATE_KINDS)
    if kind == "absent":
        return ""
    if kind == "year":
        return f"in {rng.choice(_YEARS)}"
    if kind == "quarter":
        return f"in Q{rng.randint(1, 4)} {rng.choice(_YEARS)}"
    if kind == "month_year":
        month, year = rng.randint(1, 12), rng.choice(_YEARS)
        name = rng.choice((calendar.month_abbr[month], calendar.month_name[month]))
        return f"in {name} {year}"
    if kind == "from_to":
        a = (rng.choice(_YEARS), rng.randint(1, 12))
        b = (rng.choice(_YEARS), rng.randint(1, 12))
        (y1, m1), (y2, m2) = sorted((a, b))
        style = rng.choice((calendar.month_abbr, calendar.month_name))
        return f"from {style[m1]} {y1} to {style[m2]} {y2}"
    return f"for the previous {rng.choice(_PREVIOUS_MONTH_CHOICES)} months"


def _sample_company(
    rng: random.Random, pool: list[CompanySpec], allow_peers: bool
) -> tuple[list[EntitySelector], str, CompanySpec]:
    company = rng.choice(pool)
    surface = _pick_surface(rng, company.surface_forms())
    selectors = [EntitySelector.company(company.canonical_name)]
    if allow_peers and company.peers and rng.random() < _PEER_PHRASE_PROBABILITY:
        # singular so a template possessive lands as "and its competitor's"
        surface = f"{surface} and its competitor"
        selectors.append(EntitySelector.peers_of(company.canonical_name))
    return selectors, surface, company


def sample_bindings(template: QueryTemplate, registry: Registry, seed: int) -> SlotBindings:
    """Draw one full set of slot values. Deterministic in all arguments."""
    rng = random.Random(f"{template.template_id}:{seed}")
    placeholders = template.placeholders()

    companies: list[EntitySelector] = []
    surfaces: list[tuple[str, str]] = []
    numbers: list[int] = []
    industry: str | None = None
    metric_picks: tuple[str, ...] = ()
    date_phrase = ""

    company_pool = list(registry.companies.values())
    used_companies: set[str] = set()

    for slot in placeholders:
        if slot in ("company", "company1", "company2"):
            pool = [c for c in company_pool if c.canonical_name not in used_companies]
            if not pool:
                raise UnsatisfiableTemplateError(
                    f"template {template.template_id!r} needs more distinct companies "
                    "than the registry defines"
                )
            selectors, surface, picked = _sample_company(rng, pool, allow_peers=True)
            used_companies.add(picked.canonical_name)
            companies.extend(selectors)
            surfaces.append((slot, surface))
        elif slot == "metrics":
            eligible = _eligible_metrics(template, registry)
            count = rng.randint(1, min(template.max_metrics, len(eligible)))
            picked_metrics = rng.sample(eligible, count)
            metric_picks = tuple(m.canonical_name for m in picked_metrics)
            metric_surfaces = [_pick_surface(rng, m.surface_forms()) for m in picked_metrics]
            surfaces.append((slot, _metric_phrase(metric_surfaces)))
        elif slot == "date":
            date_phrase = _sample_date(rng)
            surfaces.append((slot, date_phrase))
        elif slot == "industry":
            sectors = registry.sectors()
            if not sectors:
                raise UnsatisfiableTemplateError(
                    f"template {template.template_id!r} needs a sector but none are defined"
                )
            industry = rng.choice(sectors)
            surface = rng.choice((industry, industry.lower()))
            companies.append(EntitySelector.sector(industry))
            surfaces.append((slot, surface))
        elif slot == "number":
            value = rng.randint(2, 10)
            numbers.append(value)
            surfaces.append((slot, str(value)))

    if not metric_picks:
        raise UnsatisfiableTemplateError(
            f"template {template.template_id!r} has no [metrics] placeholder"
        )
    if not companies:
        companies.append(EntitySelector.sector(MARKET_WIDE_SECTOR))

    return SlotBindings(
        template_id=template.template_id,
        companies=tuple(companies),
        metrics=metric_picks,
        date_phrase=date_phrase,
        numbers=tuple(numbers),
        industry=industry,
        surfaces=tuple(surfaces),
    )


def expand_template(template: QueryTemplate, bindings: SlotBindings) -> str:
    """Splice bound surfaces into the pattern; pure text, no randomness."""
    if bindings.template_id != template.template_id:
        raise FinContextError(
            f"bindings for {bindings.template_id!r} applied to {template.template_id!r}"
        )
    out = template.pattern
    for slot, surface in bindings.surfaces:
        token = f"[{slot}]"
        if token not in out:
            raise FinContextError(f"surface bound for missing placeholder {token}")
        if slot == "metrics" and not surface:
            raise FinContextError("empty metrics surface")
        if slot == "date":
            replacement = f" {surface}" if surface else ""
        else:
            replacement = surface
        out = out.replace(token, replacement, 1)
    leftover = [p for p in template.placeholders() if f"[{p}]" in out]
    if leftover:
        raise FinContextError(f"unbound placeholders remain: {leftover}")
    out = " ".join(out.split())
    return re.sub(r"\s+([.,?!;:])", r"\1", out)


def _row_from_bindings(
    template: QueryTemplate,
    bindings: SlotBindings,
    registry: Registry,
    reference_date: dt.date,
    seed: int,
) -> DatasetRow:
    query = expand_template(template, bindings)
    required = RequiredData(
        companies=bindings.companies,
        metrics=tuple(
            (name, tuple(r.canonical_name for r in registry.related_metrics(name)))
            for name in bindings.metrics
        ),
        date_phrase=bindings.date_phrase,
    )
    request = build_request(required, reference_date)
    return DatasetRow(
        query=query,
        required_data=required,
        structured_request=serialize_request(request),
        template_id=template.template_id,
        seed=seed,
    )


def synthesize_dataset(
    templates: list[QueryTemplate] | tuple[QueryTemplate, ...],
    registry: Registry,
    n: int,
    seed: int,
    reference_date: dt.date,
    max_retries: int = 80,
) -> list[DatasetRow]:
    """Produce exactly n distinct rows, deterministically.

    Raises DistinctnessError when a row cannot be made distinct within the
    retry budget, which in practice means n exceeds what the registry and
    template set can express.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not templates:
        raise ValueError("at least one template is required")
    compiler_config = AgentConfig(reference_date=reference_date)
    rows: list[DatasetRow] = []
    seen: set[str] = set()
    for index in range(n):
        for attempt in range(max_retries):
            derived = (seed * 1_000_003 + index) * 1_000_003 + attempt
            picker = random.Random(f"pick:{derived}")
            template = picker.choice(list(templates))
            bindings = sample_bindings(template, registry, derived)
            row = _row_from_bindings(template, bindings, registry, reference_date, derived)
            key = " ".join(row.query.split())
            if key in seen:
                continue
            if not _compiles_back(row, registry, compiler_config):
                # surfaces fused into an ambiguous phrase (e.g. "Sales,
                # Revenue" reading as "Sales Revenue"); redraw
                continue
            seen.add(key)
            rows.append(row)
            break
        else:
            raise DistinctnessError(
                f"could not synthesize {n} distinct queries: stuck at row {index} "
                f"after {max_retries} resamples (registry too small for n)"
            )
    return rows


def _compiles_back(row: DatasetRow, registry: Registry, config: AgentConfig) -> bool:
    """True when the rule-based compiler reproduces the row's label.

    Guards the generator's side of the synthesizer/compiler consistency
    contract: an expansion whose surface text is ambiguous does not enter
    the dataset.
    """
    try:
        _, request = compile_query(row.query, registry, config)
    except FinContextError:
        return False
    return serialize_request(request) == row.structured_request


@dataclass
class ValidationReport:
    violations: list[str]
    skipped: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _reference_free(phrase: str) -> bool:
    """True when the phrase resolves the same regardless of reference date."""
    probe_a, probe_b = dt.date(2000, 1, 15), dt.date(2031, 7, 7)
    try:
        return resolve_date_phrase(phrase, probe_a) == resolve_date_phrase(phrase, probe_b)
    except DatePhraseError:
        return False


def validate_row(
    row: DatasetRow, registry: Registry, reference_date: dt.date | None = None
) -> ValidationReport:
    """Check a row's internal consistency against the registry.

    Violations are data, not faults: the report lists everything wrong.
    The date check needs the run's reference date for relative phrases; if
    it is not supplied, those rows get a skipped note instead of a verdict.
    """
    violations: list[str] = []
    skipped: list[str] = []

    if "[" in row.query and "]" in row.query:
        violations.append("query contains residual placeholder tokens")

    try:
        parsed = parse_request(row.structured_request)
    except Exception as exc:
        if "date-range" in str(exc):
            violations.append(f"missing or malformed date-range group: {exc}")
        else:
            violations.append(f"structured_request does not parse: {exc}")
        return ValidationReport(violations, skipped)

    for selector in parsed.entities:
        try:
            if selector.kind.value == "sector":
                if selector.name != MARKET_WIDE_SECTOR:
                    registry.resolve_sector(selector.name)
            else:
                registry.resolve_company_name(selector.name)
        except Exception:
            violations.append(f"unresolvable entity {selector.render()!r}")
    for metric in parsed.metrics:
        try:
            registry.resolve_metric(metric)
        except Exception:
            violations.append(f"unresolvable metric {metric!r}")

    expected_metrics: list[str] = []
    for primary, related in row.required_data.metrics:
        expected_metrics.append(primary)
        try:
            registry_related = tuple(
                r.canonical_name for r in registry.related_metrics(primary)
            )
        except Exception:
            violations.append(f"required metric {primary!r} not in registry")
            continue
        if tuple(related) != registry_related:
            violations.append(
                f"related-metric order mismatch for {primary!r}: "
                f"row has {list(related)}, registry has {list(registry_related)}"
            )
        expected_metrics.extend(related)
    if list(parsed.metrics) != expected_metrics:
        violations.append(
            "structured_request metrics do not equal required_data after related expansion"
        )
    if tuple(parsed.entities) != row.required_data.companies:
        violations.append("structured_request entities do not match required_data")

    phrase = row.required_data.date_phrase
    if reference_date is None and not _reference_free(phrase) and phrase.strip():
        skipped.append("date-range check skipped: relative phrase and no reference date")
    else:
        ref = reference_date or dt.date(2000, 1, 15)
        try:
            resolved = resolve_date_phrase(phrase, ref)
        except DatePhraseError:
            violations.append(f"date phrase {phrase!r} does not resolve")
        else:
            if resolved is LATEST:
                if parsed.ranges is not LATEST:
                    violations.append(
                        "empty date phrase but structured_request has explicit ranges"
                    )
            elif parsed.ranges is LATEST or tuple(parsed.ranges) != (resolved,):
                violations.append(
                    "structured_request date range differs from resolving the date phrase"
                )
    return ValidationReport(violations, skipped)


def write_rows(path: str | Path, rows: list[DatasetRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row.to_json(), ensure_ascii=False) + "\n")


def read_rows(path: str | Path) -> list[DatasetRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(DatasetRow.from_json(json.loads(line)))
    return rows
