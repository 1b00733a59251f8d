import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fincontext.errors import DateTokenError, RequestParseError
from fincontext.grammar import (
    LATEST,
    DateRange,
    EntitySelector,
    SelectorKind,
    StructuredDataRequest,
    format_date,
    parse_date_token,
    parse_request,
    serialize_request,
)

# Known request strings, as rendered in their source with groups on
# separate lines.
AMCOR_REQUEST = (
    "(Amcor plc) \n"
    "(Quick Ratio; Cash; Cash Equivalents; Marketable Securities; Accounts Receivable; "
    "Current Liabilities; Bid Size; Quantity of shares; Multiple bid prices; "
    "Depth of the market; Order book; Cash Conversion Efficiency Ratio; "
    "Cash flow from operations; Net income)\n"
    "(7/1/2024 - 7/7/2024)"
)
ADOBE_REQUEST = (
    "(Adobe Inc.; Adobe Inc. Peers)\n"
    "(Sales Revenue; Total Revenue; Economic Value Added; "
    "Net operating profit after tax (NOPAT); Cost of capital)\n"
    "(1/9/2018 - 30/9/2018)"
)
HALLIBURTON_REQUEST = (
    "(Halliburton Co.; Energy Companies)\n"
    "(Return on Average Assets; Net income; Average total assets; Return on Working Capital; "
    "Net income; Working capital; Gross Profit Margin; Revenue; Cost of Goods Sold (COGS); "
    "Cash Return on Average Fixed Assets; Operating cash flow; Average fixed assets)\n"
    "(1/4/2016 - 1/7/2017)"
)
BEVERAGE_REQUEST = (
    "(PepsiCo, Inc.; Coca-Cola Co) "
    "(Net Income; Total Revenue; Cost of Revenue; Operating Expense; "
    "Depreciation and Amortization; Interest Expense) "
    "(31/3/2023 - 30/6/2023)"
)


class TestParseKnownRequests:
    def test_amcor_request_fields(self):
        request = parse_request(AMCOR_REQUEST)
        assert request.entities == (EntitySelector.company("Amcor plc"),)
        assert len(request.metrics) == 14
        assert request.metrics[0] == "Quick Ratio"
        assert request.metrics[-1] == "Net income"
        assert request.ranges == (
            DateRange(dt.date(2024, 1, 7), dt.date(2024, 7, 7)),
        )

    def test_adobe_request_fields(self):
        request = parse_request(ADOBE_REQUEST)
        assert request.entities == (
            EntitySelector.company("Adobe Inc."),
            EntitySelector.peers_of("Adobe Inc."),
        )
        assert "Net operating profit after tax (NOPAT)" in request.metrics
        assert request.ranges == (
            DateRange(dt.date(2018, 9, 1), dt.date(2018, 9, 30)),
        )

    def test_halliburton_request_fields(self):
        request = parse_request(HALLIBURTON_REQUEST)
        assert request.entities == (
            EntitySelector.company("Halliburton Co."),
            EntitySelector.sector("Energy"),
        )
        assert request.metrics.count("Net income") == 2
        assert "Cost of Goods Sold (COGS)" in request.metrics
        assert request.ranges == (
            DateRange(dt.date(2016, 4, 1), dt.date(2017, 7, 1)),
        )

    def test_beverage_request_fields(self):
        request = parse_request(BEVERAGE_REQUEST)
        assert [e.name for e in request.entities] == ["PepsiCo, Inc.", "Coca-Cola Co"]
        assert len(request.metrics) == 6
        assert request.ranges == (
            DateRange(dt.date(2023, 3, 31), dt.date(2023, 6, 30)),
        )

    @pytest.mark.parametrize(
        "text", [AMCOR_REQUEST, ADOBE_REQUEST, HALLIBURTON_REQUEST, BEVERAGE_REQUEST]
    )
    def test_reserialization_differs_only_in_whitespace(self, text):
        canonical = serialize_request(parse_request(text))
        assert " ".join(canonical.split()) == " ".join(text.split())

    @pytest.mark.parametrize(
        "text", [AMCOR_REQUEST, ADOBE_REQUEST, HALLIBURTON_REQUEST, BEVERAGE_REQUEST]
    )
    def test_canonicalization_is_a_fixed_point(self, text):
        once = serialize_request(parse_request(text))
        assert serialize_request(parse_request(once)) == once


class TestSerialize:
    def test_adobe_style_request(self):
        request = StructuredDataRequest(
            entities=(
                EntitySelector.company("Adobe Inc."),
                EntitySelector.peers_of("Adobe Inc."),
            ),
            metrics=(
                "Sales Revenue",
                "Total Revenue",
                "Economic Value Added",
                "Net operating profit after tax (NOPAT)",
                "Cost of capital",
            ),
            ranges=(DateRange(dt.date(2018, 9, 1), dt.date(2018, 9, 30)),),
        )
        assert serialize_request(request) == (
            "(Adobe Inc.; Adobe Inc. Peers) "
            "(Sales Revenue; Total Revenue; Economic Value Added; "
            "Net operating profit after tax (NOPAT); Cost of capital) "
            "(1/9/2018 - 30/9/2018)"
        )

    def test_minimal_one_day_request(self):
        request = StructuredDataRequest(
            entities=(EntitySelector.company("X"),),
            metrics=("M",),
            ranges=(DateRange(dt.date(2024, 1, 1), dt.date(2024, 1, 1)),),
        )
        assert serialize_request(request) == "(X) (M) (1/1/2024 - 1/1/2024)"

    def test_sector_selector_renders_companies_suffix(self):
        request = StructuredDataRequest(
            entities=(
                EntitySelector.company("Halliburton Co."),
                EntitySelector.sector("Energy"),
            ),
            metrics=("Revenue",),
            ranges=(DateRange(dt.date(2016, 4, 1), dt.date(2017, 7, 1)),),
        )
        assert serialize_request(request).endswith("(1/4/2016 - 1/7/2017)")
        assert "(Halliburton Co.; Energy Companies)" in serialize_request(request)

    def test_no_zero_padding_in_dates(self):
        assert format_date(dt.date(2024, 1, 7)) == "7/1/2024"

    def test_latest_round_trips(self):
        request = StructuredDataRequest(
            entities=(EntitySelector.company("X"),), metrics=("M",), ranges=LATEST
        )
        text = serialize_request(request)
        assert text == "(X) (M) (Latest)"
        assert parse_request(text).ranges is LATEST


class TestParseErrors:
    def test_missing_date_group(self):
        with pytest.raises(RequestParseError, match="missing date-range group"):
            parse_request("(A) (M1; M2)")

    def test_missing_metric_group(self):
        with pytest.raises(RequestParseError, match="missing metric group"):
            parse_request("(A)")

    def test_unbalanced_parentheses(self):
        with pytest.raises(RequestParseError, match="unbalanced"):
            parse_request("(A) (M1; (M2) (1/1/2024 - 2/1/2024)")

    def test_empty_group(self):
        with pytest.raises(RequestParseError, match="empty entity group"):
            parse_request("() (M) (1/1/2024 - 2/1/2024)")

    def test_empty_entry(self):
        with pytest.raises(RequestParseError, match="empty entry in metric group"):
            parse_request("(A) (M1;; M2) (1/1/2024 - 2/1/2024)")

    def test_trailing_garbage(self):
        with pytest.raises(RequestParseError, match="unexpected content"):
            parse_request("(A) (M) (1/1/2024 - 2/1/2024) extra")

    def test_invalid_date_names_group(self):
        with pytest.raises(RequestParseError, match="date-range"):
            parse_request("(A) (M) (41/1/2024 - 2/1/2024)")

    def test_backwards_range_rejected(self):
        with pytest.raises(RequestParseError, match="starts after it ends"):
            parse_request("(A) (M) (2/1/2024 - 1/1/2024)")


class TestDateTokens:
    def test_plain_token(self):
        assert parse_date_token("30/9/2018") == dt.date(2018, 9, 30)

    def test_leap_day(self):
        assert parse_date_token("29/2/2024") == dt.date(2024, 2, 29)

    def test_non_leap_year_rejected(self):
        with pytest.raises(DateTokenError, match="not a valid calendar date"):
            parse_date_token("29/2/2023")

    def test_month_over_twelve_rejected(self):
        with pytest.raises(DateTokenError):
            parse_date_token("7/13/2024")

    def test_format_error_distinct_from_calendar_error(self):
        with pytest.raises(DateTokenError, match="malformed"):
            parse_date_token("2024-01-07")


def test_nested_parens_inside_metric_names():
    text = "(A) (Economic Value Added; Net operating profit after tax (NOPAT)) (1/9/2018 - 30/9/2018)"
    request = parse_request(text)
    assert request.metrics == (
        "Economic Value Added",
        "Net operating profit after tax (NOPAT)",
    )


# --- round-trip property --------------------------------------------------

_NAME_WORD = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,&'",
    min_size=1,
    max_size=8,
).filter(lambda w: w not in (".", ",", "&", "'"))


@st.composite
def _names(draw, allow_parens=True):
    words = draw(st.lists(_NAME_WORD, min_size=1, max_size=4))
    if allow_parens and draw(st.booleans()):
        words.append("(" + draw(_NAME_WORD) + ")")
    name = " ".join(words)
    if name.endswith(" Peers") or name.endswith(" Companies"):
        name += " x"
    return name


@st.composite
def _selectors(draw):
    kind = draw(st.sampled_from(list(SelectorKind)))
    return EntitySelector(kind, draw(_names()))


_DATES = st.dates(min_value=dt.date(1990, 1, 1), max_value=dt.date(2035, 12, 31))


@st.composite
def _ranges(draw):
    a, b = draw(_DATES), draw(_DATES)
    return DateRange(min(a, b), max(a, b))


@st.composite
def requests(draw):
    ranges = (
        LATEST
        if draw(st.booleans()) and draw(st.booleans())
        else tuple(draw(st.lists(_ranges(), min_size=1, max_size=3)))
    )
    return StructuredDataRequest(
        entities=tuple(draw(st.lists(_selectors(), min_size=1, max_size=4))),
        metrics=tuple(draw(st.lists(_names(), min_size=1, max_size=6))),
        ranges=ranges,
    )


@settings(max_examples=300, deadline=None)
@given(requests())
def test_round_trip_identity(request_value):
    assert parse_request(serialize_request(request_value)) == request_value


@settings(max_examples=100, deadline=None)
@given(requests())
def test_parse_tolerates_interleaved_whitespace(request_value):
    text = serialize_request(request_value)
    sloppy = text.replace(") (", ")\n  (").replace("; ", ";\n ")
    assert parse_request(sloppy) == request_value
