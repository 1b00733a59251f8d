import json

import pytest
from click.testing import CliRunner

from fincontext.cli import main
from fincontext.synth import read_rows

from conftest import BEVERAGE_QUERY, BEVERAGE_REQUEST

AMCOR_REQUEST_MULTILINE = (
    "(Amcor plc) \n"
    "(Quick Ratio; Cash; Cash Equivalents; Marketable Securities; Accounts Receivable; "
    "Current Liabilities; Bid Size; Quantity of shares; Multiple bid prices; "
    "Depth of the market; Order book; Cash Conversion Efficiency Ratio; "
    "Cash flow from operations; Net income)\n"
    "(7/1/2024 - 7/7/2024)"
)


@pytest.fixture()
def runner():
    return CliRunner()


class TestParseCommand:
    def test_parse_known_request(self, runner):
        result = runner.invoke(main, ["parse", "--request", AMCOR_REQUEST_MULTILINE])
        assert result.exit_code == 0
        body = json.loads(result.output)
        assert body["entities"] == [{"kind": "company", "name": "Amcor plc"}]
        assert len(body["metrics"]) == 14
        assert body["ranges"] == [{"start": "7/1/2024", "end": "7/7/2024"}]

    def test_parse_failure_is_single_line(self, runner):
        result = runner.invoke(main, ["parse", "--request", "(A)"])
        assert result.exit_code != 0
        error_lines = [l for l in result.output.strip().splitlines() if l]
        assert len(error_lines) == 1
        assert "missing metric group" in error_lines[0]


class TestQueryCommand:
    def test_prints_request_string(self, runner):
        result = runner.invoke(
            main,
            ["query", "--text", BEVERAGE_QUERY, "--reference-date", "7/7/2023"],
        )
        assert result.exit_code == 0
        assert result.output.strip() == BEVERAGE_REQUEST

    def test_full_flag_includes_required_data(self, runner):
        result = runner.invoke(
            main,
            ["query", "--text", BEVERAGE_QUERY, "--reference-date", "7/7/2023", "--full"],
        )
        body = json.loads(result.output)
        assert body["request_string"] == BEVERAGE_REQUEST
        assert body["required_data"]["companies"][0]["name"] == "PepsiCo, Inc."

    def test_unknown_query_fails_cleanly(self, runner):
        result = runner.invoke(main, ["query", "--text", "Explain gibberish of nothing"])
        assert result.exit_code != 0
        assert "no metric found" in result.output


class TestSynthAndEval:
    def test_synth_eval_round_trip(self, runner, tmp_path):
        dataset = tmp_path / "rows.jsonl"
        report_path = tmp_path / "report.json"
        result = runner.invoke(
            main,
            [
                "synth", "--n", "40", "--seed", "3",
                "--reference-date", "7/7/2023", "--out", str(dataset),
            ],
        )
        assert result.exit_code == 0, result.output
        rows = read_rows(dataset)
        assert len(rows) == 40
        result = runner.invoke(
            main,
            [
                "eval", "--dataset", str(dataset), "--agent", "rule",
                "--reference-date", "7/7/2023", "--report", str(report_path),
            ],
        )
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output)
        assert summary["bleu"] == 1.0
        assert summary["exact_match_rate"] == 1.0
        report = json.loads(report_path.read_text())
        assert report["external_agent_reference"]["rouge2_f1"] == 0.9693
        assert report["per_row_failures"] == []

    def test_synth_with_standalone_template_file(self, runner, tmp_path):
        templates = tmp_path / "templates.yaml"
        templates.write_text(
            """
templates:
  - id: solo
    pattern: "Evaluate the [metrics] of [company][date]."
""",
            encoding="utf-8",
        )
        out = tmp_path / "rows.jsonl"
        result = runner.invoke(
            main,
            [
                "synth", "--templates", str(templates), "--n", "10",
                "--reference-date", "7/7/2023", "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        rows = read_rows(out)
        assert {r.template_id for r in rows} == {"solo"}

    def test_synth_distinctness_error_exit(self, runner, tmp_path):
        registry = tmp_path / "tiny.yaml"
        registry.write_text(
            """
metrics:
  - name: Widget Output
    frequency: quarterly
    unit: units
companies:
  - name: Acme Corp
    sector: Widgets
templates:
  - id: only
    pattern: "Evaluate the [metrics] of [company]."
    max_metrics: 1
""",
            encoding="utf-8",
        )
        result = runner.invoke(
            main,
            [
                "synth", "--registry", str(registry), "--n", "2",
                "--reference-date", "7/7/2023", "--out", str(tmp_path / "x.jsonl"),
            ],
        )
        assert result.exit_code != 0
        assert "distinct" in result.output


class TestIngestAndFetch:
    def test_ingest_then_fetch(self, runner, tmp_path):
        store = tmp_path / "store.csv"
        new_data = tmp_path / "new.csv"
        new_data.write_text(
            "company,metric,period_start,period_end,value,unit\n"
            '"Boeing Company",Net Income,30/3/2023,30/3/2023,222000,in thousands\n',
            encoding="utf-8",
        )
        result = runner.invoke(
            main, ["ingest-ts", "--input", str(new_data), "--store", str(store)]
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["inserted"] == 1
        result = runner.invoke(
            main,
            [
                "fetch", "--request", "(Boeing Company) (Net Income) (Latest)",
                "--store", str(store),
            ],
        )
        assert result.exit_code == 0
        body = json.loads(result.output)
        assert body["rows"][0]["values"] == [222000]

    def test_ingest_news_and_render(self, runner, tmp_path, golden_prompt):
        news = tmp_path / "news.jsonl"
        from fincontext.seeds import seed_news_path

        result = runner.invoke(
            main,
            [
                "ingest-news",
                "--input", str(seed_news_path()),
                "--news", str(news),
            ],
        )
        assert result.exit_code == 0, result.output
        result = runner.invoke(
            main,
            [
                "render", "--text", BEVERAGE_QUERY,
                "--news", str(news), "--reference-date", "7/7/2023",
            ],
        )
        assert result.exit_code == 0
        assert result.output == golden_prompt


class TestConfigPrecedence:
    def test_config_file_supplies_defaults_flags_override(self, runner, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text(
            'query:\n  reference_date: "7/7/2023"\n', encoding="utf-8"
        )
        from_config = runner.invoke(
            main, ["--config", str(config), "query", "--text", BEVERAGE_QUERY]
        )
        assert from_config.exit_code == 0
        assert from_config.output.strip() == BEVERAGE_REQUEST
        overridden = runner.invoke(
            main,
            [
                "--config", str(config),
                "query", "--text", BEVERAGE_QUERY, "--reference-date", "7/10/2023",
            ],
        )
        assert overridden.output.strip().endswith("(30/6/2023 - 30/9/2023)")

    def test_env_var_beats_config(self, runner, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text('query:\n  reference_date: "7/7/2023"\n', encoding="utf-8")
        result = runner.invoke(
            main,
            ["--config", str(config), "query", "--text", BEVERAGE_QUERY],
            env={"FINCONTEXT_REFERENCE_DATE": "7/10/2023"},
        )
        assert result.output.strip().endswith("(30/6/2023 - 30/9/2023)")


def test_unknown_subcommand(runner):
    result = runner.invoke(main, ["frobnicate"])
    assert result.exit_code != 0
