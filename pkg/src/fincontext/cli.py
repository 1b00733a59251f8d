"""Command-line surface.

Subcommands: synth, ingest-ts, ingest-news, parse, fetch, render, query,
eval, serve. Exit code 0 on success; failures exit nonzero after printing
a single "error: ..." line on stderr. Option values resolve with the usual
precedence: flags beat environment variables (FINCONTEXT_*) beat the
--config file, whose top-level keys are subcommand names mapping to
option defaults.
"""

from __future__ import annotations

import datetime as dt
import json
import sys
from pathlib import Path

import click
import yaml

from .agent import AgentConfig, compile_query
from .context import DEFAULT_PREAMBLE, build_enriched_query
from .datastore import NewsStore, ObservationStore, read_news_jsonl, read_observations_csv
from .errors import FinContextError
from .evalmetrics import evaluate_agent
from .grammar import parse_date_token, parse_request, serialize_request
from .registry import load_registry, load_templates
from .seeds import seed_news_path, seed_observations_path, seed_registry_path
from .service import Pipeline, create_app
from .synth import read_rows, synthesize_dataset, write_rows

_REGISTRY_OPT = click.option(
    "--registry",
    "registry_path",
    envvar="FINCONTEXT_REGISTRY",
    default=str(seed_registry_path()),
    show_default="packaged seed registry",
    help="Registry file (metrics/companies/templates).",
)
_STORE_OPT = click.option(
    "--store",
    "store_path",
    envvar="FINCONTEXT_STORE",
    default=None,
    help="Observation store CSV (defaults to the packaged seed data).",
)
_NEWS_OPT = click.option(
    "--news",
    "news_path",
    envvar="FINCONTEXT_NEWS",
    default=None,
    help="News store JSONL (defaults to the packaged seed data).",
)
_REF_DATE_OPT = click.option(
    "--reference-date",
    envvar="FINCONTEXT_REFERENCE_DATE",
    default="7/7/2023",
    show_default=True,
    help="The 'today' anchoring relative date phrases, d/m/yyyy.",
)


def _ref_date(value: str) -> dt.date:
    return parse_date_token(value)


def _load_stores(registry, store_path: str | None, news_path: str | None):
    observations = ObservationStore(registry)
    observations.load(store_path or seed_observations_path())
    news = NewsStore(registry)
    news.load(news_path or seed_news_path())
    return observations, news


class _Group(click.Group):
    """Translates package errors into clean one-line CLI failures."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except FinContextError as exc:
            raise click.ClickException(str(exc)) from exc


@click.group(cls=_Group)
@click.option(
    "--config",
    "config_path",
    envvar="FINCONTEXT_CONFIG",
    default=None,
    help="YAML file of per-subcommand option defaults.",
)
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Ground financial queries in tabular and news data."""
    if config_path:
        loaded = yaml.safe_load(Path(config_path).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise click.ClickException("config file must be a mapping")
        ctx.default_map = loaded


@main.command()
@click.option("--templates", "templates_path", default=None, help="Template file (defaults to the registry's templates section).")
@_REGISTRY_OPT
@click.option("--n", type=int, required=True, help="Number of rows to synthesize.")
@click.option("--seed", type=int, default=0, show_default=True)
@_REF_DATE_OPT
@click.option("--out", "out_path", required=True, help="Output JSONL path.")
def synth(templates_path, registry_path, n, seed, reference_date, out_path) -> None:
    """Synthesize a dataset of (query, required data, request) rows."""
    registry = load_registry(registry_path)
    templates = load_templates(templates_path) if templates_path else registry.templates
    rows = synthesize_dataset(list(templates), registry, n, seed, _ref_date(reference_date))
    write_rows(out_path, rows)
    click.echo(json.dumps({"rows": len(rows), "out": str(out_path)}))


@main.command("ingest-ts")
@click.option("--input", "input_path", required=True, help="Delimited observations to ingest.")
@_STORE_OPT
@_REGISTRY_OPT
def ingest_ts(input_path, store_path, registry_path) -> None:
    """Ingest time-series observations into a store file."""
    if not store_path:
        raise click.ClickException("--store is required for ingestion")
    registry = load_registry(registry_path)
    store = ObservationStore(registry)
    if Path(store_path).exists():
        store.load(store_path)
    report = store.ingest_timeseries(read_observations_csv(input_path))
    store.save(store_path)
    click.echo(json.dumps(report.to_json()))


@main.command("ingest-news")
@click.option("--input", "input_path", required=True, help="News JSONL to ingest.")
@_NEWS_OPT
@_REGISTRY_OPT
def ingest_news(input_path, news_path, registry_path) -> None:
    """Ingest news items into a news store file."""
    if not news_path:
        raise click.ClickException("--news is required for ingestion")
    registry = load_registry(registry_path)
    store = NewsStore(registry)
    if Path(news_path).exists():
        store.load(news_path)
    report = store.ingest_news(read_news_jsonl(input_path))
    store.save(news_path)
    click.echo(json.dumps(report.to_json()))


@main.command()
@click.option("--request", "request_text", required=True, help="Request string to parse.")
def parse(request_text) -> None:
    """Parse a structured data request and print its JSON mirror."""
    request = parse_request(request_text)
    click.echo(json.dumps({"canonical": serialize_request(request), **request.to_json()}))


@main.command()
@click.option("--request", "request_text", required=True, help="Request string to answer.")
@_REGISTRY_OPT
@_STORE_OPT
def fetch(request_text, registry_path, store_path) -> None:
    """Answer a request against the observation store; print the table JSON."""
    registry = load_registry(registry_path)
    store = ObservationStore(registry)
    store.load(store_path or seed_observations_path())
    table = store.fetch_table(parse_request(request_text), registry)
    click.echo(json.dumps(table.to_json()))


@main.command()
@click.option("--text", "query_text", required=True, help="The financial query.")
@_REGISTRY_OPT
@_STORE_OPT
@_NEWS_OPT
@_REF_DATE_OPT
@click.option("--k-news", type=int, default=5, show_default=True)
def render(query_text, registry_path, store_path, news_path, reference_date, k_news) -> None:
    """Compile, fetch, and print the enriched prompt."""
    registry = load_registry(registry_path)
    observations, news = _load_stores(registry, store_path, news_path)
    _, request = compile_query(
        query_text, registry, AgentConfig(reference_date=_ref_date(reference_date))
    )
    table = observations.fetch_table(request, registry)
    matches = news.match_news(query_text, k=k_news)
    enriched = build_enriched_query(
        query_text, table, [item for item, _ in matches], preamble=DEFAULT_PREAMBLE
    )
    click.echo(enriched.rendered, nl=False)


@main.command()
@click.option("--text", "query_text", required=True, help="The financial query.")
@_REGISTRY_OPT
@_REF_DATE_OPT
@click.option("--full", is_flag=True, help="Print required data and the JSON mirror too.")
def query(query_text, registry_path, reference_date, full) -> None:
    """Compile a query and print its structured data request string."""
    registry = load_registry(registry_path)
    required, request = compile_query(
        query_text, registry, AgentConfig(reference_date=_ref_date(reference_date))
    )
    if full:
        click.echo(
            json.dumps(
                {
                    "request_string": serialize_request(request),
                    "required_data": required.to_json(),
                    "request": request.to_json(),
                }
            )
        )
    else:
        click.echo(serialize_request(request))


@main.command("eval")
@click.option("--dataset", "dataset_path", required=True, help="Dataset JSONL (synth output).")
@click.option(
    "--agent",
    "agent_kind",
    type=click.Choice(["rule", "external"]),
    default="rule",
    show_default=True,
)
@click.option("--report", "report_path", required=True, help="Where to write the JSON report.")
@_REGISTRY_OPT
@_REF_DATE_OPT
@click.option("--endpoint", envvar="FINCONTEXT_AGENT_ENDPOINT", default=None, help="External agent URL (required with --agent external).")
@click.option("--timeout", type=float, default=10.0, show_default=True)
def eval_command(dataset_path, agent_kind, report_path, registry_path, reference_date, endpoint, timeout) -> None:
    """Score an agent's request strings against dataset labels."""
    registry = load_registry(registry_path)
    rows = read_rows(dataset_path)
    ref = _ref_date(reference_date)
    if agent_kind == "external":
        if not endpoint:
            raise click.ClickException("--endpoint is required with --agent external")
        from .agent import compile_with_fallback

        config = AgentConfig(
            reference_date=ref, mode="external", external_endpoint=endpoint, timeout=timeout
        )

        def agent_fn(q: str) -> str:
            _, request = compile_with_fallback(q, registry, config)
            return serialize_request(request)

    else:
        config = AgentConfig(reference_date=ref)

        def agent_fn(q: str) -> str:
            _, request = compile_query(q, registry, config)
            return serialize_request(request)

    report = evaluate_agent(rows, agent_fn)
    Path(report_path).write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")
    click.echo(
        json.dumps(
            {
                "bleu": report.bleu,
                "rouge1_f1": report.rouge1_f1,
                "rouge2_f1": report.rouge2_f1,
                "rougeL_f1": report.rougeL_f1,
                "exact_match_rate": report.exact_match_rate,
                "report": str(report_path),
            }
        )
    )


@main.command()
@_REGISTRY_OPT
@_STORE_OPT
@_NEWS_OPT
@_REF_DATE_OPT
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--k-news", type=int, default=5, show_default=True)
@click.option("--forward-endpoint", envvar="FINCONTEXT_FORWARD_ENDPOINT", default=None, help="Downstream LLM endpoint for --forward queries.")
def serve(registry_path, store_path, news_path, reference_date, host, port, k_news, forward_endpoint) -> None:
    """Run the HTTP service."""
    import uvicorn

    registry = load_registry(registry_path)
    observations, news = _load_stores(registry, store_path, news_path)
    pipeline = Pipeline(
        registry=registry,
        observations=observations,
        news=news,
        agent_config=AgentConfig(reference_date=_ref_date(reference_date)),
        k_news=k_news,
        forward_endpoint=forward_endpoint,
    )
    uvicorn.run(create_app(pipeline), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
