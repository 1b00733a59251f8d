"""Paths to the packaged seed data (registry, observations, news)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def _data_path(name: str) -> Path:
    return Path(resources.files("fincontext") / "data" / name)


def seed_registry_path() -> Path:
    return _data_path("registry.yaml")


def seed_observations_path() -> Path:
    return _data_path("observations.csv")


def seed_news_path() -> Path:
    return _data_path("news.jsonl")
