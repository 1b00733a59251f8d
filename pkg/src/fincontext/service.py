"""End-to-end pipeline and the HTTP surface.

A Pipeline owns the registry, the two stores, and the agent configuration,
and runs the five steps for one query: compile it into a structured data
request, fetch the table, match news, render the enriched prompt, and
optionally forward it to a downstream LLM endpoint. Stage failures after
compilation degrade gracefully (empty news, unresolved table entries,
recorded forwarding errors) instead of aborting.

HTTP endpoints (JSON bodies mirroring the domain types, dates d/m/yyyy):

    POST /query           {"query", "forward"?, "k_news"?, "reference_date"?}
    POST /agent/compile   {"query", "reference_date"?}
    POST /data/fetch      {"request"}
    POST /context/render  {"query", "request", "k_news"?}
    GET  /health

Compilation failures come back as HTTP 400 with {"error": {"kind",
"message", "query"}}. With fixed stores, registry, and reference date the
pipeline is deterministic apart from the latency fields.
"""

from __future__ import annotations

import datetime as dt
import logging
import time
from dataclasses import dataclass, field

import httpx
from pydantic import BaseModel

from .agent import AgentConfig, ExternalAgentClient, compile_query, compile_with_fallback
from .context import DEFAULT_PREAMBLE, build_enriched_query
from .datastore import NewsStore, ObservationStore, RetrievalTable
from .errors import CompileError, FinContextError, NoMetricFoundError
from .grammar import parse_date_token, parse_request, serialize_request
from .registry import Registry

log = logging.getLogger(__name__)

__all__ = ["Pipeline", "PipelineResult", "create_app"]


class QueryBody(BaseModel):
    query: str
    forward: bool = False
    k_news: int | None = None
    reference_date: str | None = None


class CompileBody(BaseModel):
    query: str
    reference_date: str | None = None


class FetchBody(BaseModel):
    request: str


class RenderBody(BaseModel):
    query: str
    request: str
    k_news: int | None = None


@dataclass
class PipelineResult:
    request_string: str
    enriched_query: str
    unresolved: list[tuple[str, str, str]]
    news_ids: list[str]
    latency: dict[str, float]
    answer: str | None = None
    forward_error: str | None = None

    def to_json(self) -> dict:
        return {
            "request_string": self.request_string,
            "enriched_query": self.enriched_query,
            "unresolved": [list(u) for u in self.unresolved],
            "news_ids": self.news_ids,
            "latency": self.latency,
            "answer": self.answer,
            "forward_error": self.forward_error,
        }


@dataclass
class Pipeline:
    registry: Registry
    observations: ObservationStore
    news: NewsStore
    agent_config: AgentConfig
    preamble: str = DEFAULT_PREAMBLE
    k_news: int = 5
    max_prompt_chars: int | None = None
    forward_endpoint: str | None = None
    forward_timeout: float = 30.0
    external_client: ExternalAgentClient | None = field(default=None, repr=False)

    def handle_query(
        self,
        query: str,
        forward: bool = False,
        k_news: int | None = None,
        reference_date: dt.date | None = None,
    ) -> PipelineResult:
        """Run the full pipeline for one query.

        Raises CompileError when no request can be built; everything after
        that degrades instead of raising.
        """
        latency: dict[str, float] = {}
        config = self.agent_config
        if reference_date is not None:
            config = AgentConfig(
                reference_date=reference_date,
                mode=config.mode,
                external_endpoint=config.external_endpoint,
                timeout=config.timeout,
            )

        t0 = time.perf_counter()
        _, request = compile_with_fallback(
            query, self.registry, config, client=self.external_client
        )
        latency["compile"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        try:
            table = self.observations.fetch_table(request, self.registry)
        except FinContextError as exc:
            log.warning("fetch failed (%s); continuing with an empty table", exc)
            table = RetrievalTable(
                metrics=tuple(request.metrics),
                entities=(),
                rows=(),
                unresolved=tuple(
                    (e.render(), m, f"fetch failed: {exc}")
                    for e in request.entities
                    for m in request.metrics
                ),
            )
        latency["fetch"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        try:
            matches = self.news.match_news(query, k=k_news or self.k_news)
        except Exception as exc:
            log.warning("news matching failed (%s); continuing without news", exc)
            matches = []
        latency["match_news"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        enriched = build_enriched_query(
            query,
            table,
            [item for item, _ in matches],
            preamble=self.preamble,
            max_chars=self.max_prompt_chars,
        )
        latency["render"] = time.perf_counter() - t0

        answer: str | None = None
        forward_error: str | None = None
        if forward:
            t0 = time.perf_counter()
            answer, forward_error = self._forward(enriched.rendered)
            latency["forward"] = time.perf_counter() - t0
        else:
            latency["forward"] = 0.0

        return PipelineResult(
            request_string=serialize_request(request),
            enriched_query=enriched.rendered,
            unresolved=list(table.unresolved),
            news_ids=[item.id for item, _ in matches],
            latency=latency,
            answer=answer,
            forward_error=forward_error,
        )

    def _forward(self, prompt: str) -> tuple[str | None, str | None]:
        if not self.forward_endpoint:
            return None, "no downstream endpoint configured"
        try:
            response = httpx.post(
                self.forward_endpoint, json={"prompt": prompt}, timeout=self.forward_timeout
            )
            response.raise_for_status()
            return response.json().get("answer"), None
        except Exception as exc:
            log.warning("forwarding failed: %s", exc)
            return None, str(exc)


def create_app(pipeline: Pipeline):
    """FastAPI application wrapping a pipeline."""
    from fastapi import FastAPI
    from fastapi.responses import JSONResponse

    app = FastAPI(title="fincontext", version="0.1.0")

    def _compile_error(exc: CompileError) -> JSONResponse:
        kind = "no-metric-found" if isinstance(exc, NoMetricFoundError) else "no-entity-found"
        return JSONResponse(
            status_code=400,
            content={"error": {"kind": kind, "message": str(exc), "query": exc.query}},
        )

    def _bad_request(exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={"error": {"kind": "invalid-request", "message": str(exc)}},
        )

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "observations": len(pipeline.observations),
            "news": len(pipeline.news),
        }

    @app.post("/query")
    def query(body: QueryBody):
        try:
            ref = parse_date_token(body.reference_date) if body.reference_date else None
            result = pipeline.handle_query(
                body.query, forward=body.forward, k_news=body.k_news, reference_date=ref
            )
        except CompileError as exc:
            return _compile_error(exc)
        except FinContextError as exc:
            return _bad_request(exc)
        return result.to_json()

    @app.post("/agent/compile")
    def compile_endpoint(body: CompileBody):
        try:
            ref = (
                parse_date_token(body.reference_date)
                if body.reference_date
                else pipeline.agent_config.reference_date
            )
            required, request = compile_query(
                body.query, pipeline.registry, AgentConfig(reference_date=ref)
            )
        except CompileError as exc:
            return _compile_error(exc)
        except FinContextError as exc:
            return _bad_request(exc)
        return {
            "required_data": required.to_json(),
            "request_string": serialize_request(request),
            "request": request.to_json(),
        }

    @app.post("/data/fetch")
    def fetch(body: FetchBody):
        try:
            request = parse_request(body.request)
            table = pipeline.observations.fetch_table(request, pipeline.registry)
        except FinContextError as exc:
            return _bad_request(exc)
        return table.to_json()

    @app.post("/context/render")
    def render(body: RenderBody):
        try:
            request = parse_request(body.request)
            table = pipeline.observations.fetch_table(request, pipeline.registry)
            matches = pipeline.news.match_news(body.query, k=body.k_news or pipeline.k_news)
            enriched = build_enriched_query(
                body.query,
                table,
                [item for item, _ in matches],
                preamble=pipeline.preamble,
                max_chars=pipeline.max_prompt_chars,
            )
        except FinContextError as exc:
            return _bad_request(exc)
        except ValueError as exc:
            return _bad_request(exc)
        return {
            "enriched_query": enriched.rendered,
            "request_string": serialize_request(request),
            "unresolved": [list(u) for u in table.unresolved],
            "news_ids": [item.id for item, _ in matches],
        }

    return app
