"""fincontext: grounds financial questions in real-time tabular and news data.

Compiles natural-language queries into structured data requests, answers
them from an embedded time-series and news store with frequency-aware
range resolution, renders the enriched prompt for a downstream LLM, and
ships the dataset synthesizer and BLEU/ROUGE evaluation harness used to
build and score the query compiler.
"""

from .agent import AgentConfig, ExternalAgentClient, RequiredData, compile_query, compile_with_fallback
from .context import DEFAULT_PREAMBLE, EnrichedQuery, build_enriched_query, render_table
from .dates import find_date_phrase, resolve_date_phrase
from .datastore import (
    IngestReport,
    NewsItem,
    NewsStore,
    Observation,
    ObservationStore,
    RetrievalTable,
    default_scorer,
    read_news_jsonl,
    read_observations_csv,
)
from .errors import FinContextError
from .evalmetrics import EvalReport, bleu, evaluate_agent, rouge_l, rouge_n
from .grammar import (
    LATEST,
    DateRange,
    EntitySelector,
    StructuredDataRequest,
    parse_date_token,
    parse_request,
    serialize_request,
)
from .registry import (
    CompanySpec,
    MetricSpec,
    QueryTemplate,
    Registry,
    load_registry,
    load_templates,
)
from .service import Pipeline, PipelineResult, create_app
from .synth import DatasetRow, SlotBindings, expand_template, sample_bindings, synthesize_dataset, validate_row

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "CompanySpec",
    "DEFAULT_PREAMBLE",
    "DatasetRow",
    "DateRange",
    "EnrichedQuery",
    "EntitySelector",
    "EvalReport",
    "ExternalAgentClient",
    "FinContextError",
    "IngestReport",
    "LATEST",
    "MetricSpec",
    "NewsItem",
    "NewsStore",
    "Observation",
    "ObservationStore",
    "Pipeline",
    "PipelineResult",
    "QueryTemplate",
    "Registry",
    "RequiredData",
    "RetrievalTable",
    "SlotBindings",
    "StructuredDataRequest",
    "bleu",
    "build_enriched_query",
    "compile_query",
    "compile_with_fallback",
    "create_app",
    "default_scorer",
    "evaluate_agent",
    "expand_template",
    "find_date_phrase",
    "load_registry",
    "load_templates",
    "parse_date_token",
    "parse_request",
    "read_news_jsonl",
    "read_observations_csv",
    "render_table",
    "resolve_date_phrase",
    "rouge_l",
    "rouge_n",
    "sample_bindings",
    "serialize_request",
    "synthesize_dataset",
    "validate_row",
]
