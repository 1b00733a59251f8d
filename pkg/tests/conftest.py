import datetime as dt
from pathlib import Path

import pytest

from fincontext import AgentConfig, NewsStore, ObservationStore, Pipeline, load_registry
from fincontext.seeds import seed_news_path, seed_observations_path, seed_registry_path

FIXTURES = Path(__file__).parent / "fixtures"

BEVERAGE_QUERY = (
    "Based on their net income in the last quarter, should I invest in Pepsi or Coca Cola?"
)
BEVERAGE_REQUEST = (
    "(PepsiCo, Inc.; Coca-Cola Co) "
    "(Net Income; Total Revenue; Cost of Revenue; Operating Expense; "
    "Depreciation and Amortization; Interest Expense) "
    "(31/3/2023 - 30/6/2023)"
)
BEVERAGE_REFERENCE_DATE = dt.date(2023, 7, 7)


@pytest.fixture(scope="session")
def registry():
    return load_registry(seed_registry_path())


@pytest.fixture()
def observation_store(registry):
    store = ObservationStore(registry)
    store.load(seed_observations_path())
    return store


@pytest.fixture()
def news_store(registry):
    store = NewsStore(registry)
    store.load(seed_news_path())
    return store


@pytest.fixture()
def pipeline(registry, observation_store, news_store):
    return Pipeline(
        registry=registry,
        observations=observation_store,
        news=news_store,
        agent_config=AgentConfig(reference_date=BEVERAGE_REFERENCE_DATE),
    )


@pytest.fixture(scope="session")
def golden_prompt() -> str:
    return (FIXTURES / "enriched_prompt_beverages.txt").read_text(encoding="utf-8")
