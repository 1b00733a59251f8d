"""Renders retrieved data and news into the enriched prompt for the LLM.

Layout:

    <preamble>

    Financial Data:

    <Metric> (<unit>) (<resolved range>) (<Frequency>):
    <Company> : v1, v2, ...
    ...

    News: <item>
    <item>

    Financial Query:
    <original query>

Metric blocks follow the request's first-occurrence order; values are
plain numbers with no thousands separators. Empty sections (no table rows,
no news) are omitted entirely, and the original query is always the final
section, verbatim. When a character budget is set, news items are dropped
lowest-score-first to fit; the table is never truncated.
"""

from __future__ import annotations

from dataclasses import dataclass

from .datastore import NewsItem, RetrievalTable, format_value

__all__ = ["EnrichedQuery", "DEFAULT_PREAMBLE", "render_table", "build_enriched_query"]

DEFAULT_PREAMBLE = (
    "You are an expert financial advisor. You will be provided with financial "
    "data and a financial query, and you have to answer the query based on the "
    "analysis of the data."
)


@dataclass(frozen=True)
class EnrichedQuery:
    preamble: str
    table_text: str
    news_text: str
    query: str
    rendered: str


def render_table(table: RetrievalTable) -> str:
    """One block per metric; one "<Company> : values" line per entity.

    Unresolved pairs render as "data unavailable (<reason>)" lines inside
    their metric's block so nothing disappears silently. An empty table
    renders as an empty string.
    """
    blocks: list[str] = []
    for metric in table.metrics:
        lines: list[str] = []
        header = ""
        for entity in table.entities:
            row = table.row_for(entity, metric)
            if row is None:
                continue
            if not header:
                header = (
                    f"{metric} ({row.unit}) ({row.resolved_range.render()}) "
                    f"({row.frequency}):"
                )
            lines.append(f"{entity} : " + ", ".join(format_value(v) for v in row.values))
        unavailable = [
            f"{entity} : data unavailable ({reason})"
            for entity, m, reason in table.unresolved
            if m == metric
        ]
        lines.extend(unavailable)
        if not header:
            if not lines:
                continue
            header = f"{metric}:"
        blocks.append("\n".join([header, *lines]))
    return "\n\n".join(blocks)


def _news_line(item: NewsItem) -> str:
    if item.body.strip():
        return f"{item.headline} {item.body.strip()}"
    return item.headline


def build_enriched_query(
    query: str,
    table: RetrievalTable,
    news: list[NewsItem],
    preamble: str = DEFAULT_PREAMBLE,
    max_chars: int | None = None,
) -> EnrichedQuery:
    """Assemble the full prompt. news must already be relevance-ordered;
    when max_chars is exceeded, items are dropped from the end of that
    ordering until the prompt fits (the table always survives)."""
    if not query.strip():
        raise ValueError("query must be nonempty")
    table_text = render_table(table)
    kept = list(news)
    while True:
        news_text = "\n".join(_news_line(item) for item in kept)
        rendered = _assemble(preamble, table_text, news_text, query)
        if max_chars is None or len(rendered) <= max_chars or not kept:
            break
        kept.pop()
    return EnrichedQuery(
        preamble=preamble,
        table_text=table_text,
        news_text=news_text,
        query=query,
        rendered=rendered,
    )


def _assemble(preamble: str, table_text: str, news_text: str, query: str) -> str:
    parts = [preamble]
    if table_text:
        parts.append("Financial Data:")
        parts.append(table_text)
    if news_text:
        parts.append(f"News: {news_text}")
    parts.append(f"Financial Query:\n{query}")
    return "\n\n".join(parts) + "\n"
