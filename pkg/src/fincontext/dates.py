"""Natural-language date phrases and their resolution to calendar ranges.

One resolver serves both the dataset synthesizer and the rule-based query
compiler, so a synthesized row's date range always matches what compiling
its query produces.

Resolution conventions, each anchored by a known phrase/range pair:

* month-year ("Sep 2018")            -> 1/9/2018 - 30/9/2018 (whole month)
* bare year ("2022")                 -> 1/1/2022 - 31/12/2022
* quarter ("Q3 2023")                -> 1/7/2023 - 30/9/2023
* "from Apr 2016 to Jul 2017"        -> 1/4/2016 - 1/7/2017. The range ends
  on the FIRST day of the end month, not the last. Asymmetric with the
  month-year form, but it is the established convention for this format
  and is preserved deliberately.
* "for the previous 6 months", today = 7/7/2024 -> 7/1/2024 - 7/7/2024
* "last quarter", today = 7/7/2023   -> 31/3/2023 - 30/6/2023. The most
  recent completed calendar quarter, with both boundary days inclusive:
  the range starts on the last day of the quarter before it.
* empty phrase                       -> LATEST (data module picks the range)

"Today" is always an injected reference date, never the wall clock, so
dataset builds and tests are reproducible.
"""

from __future__ import annotations

import calendar
import datetime as dt
import re

from .errors import DatePhraseError
from .grammar import LATEST, DateRange, LatestAvailable

__all__ = [
    "resolve_date_phrase",
    "find_date_phrase",
    "month_range",
    "year_range",
    "quarter_range",
    "shift_months",
]

_MONTHS = {
    name.lower(): i
    for i, name in enumerate(calendar.month_name)
    if name
}
_MONTHS.update({name.lower(): i for i, name in enumerate(calendar.month_abbr) if name})
_MONTHS["sept"] = 9

_MONTH_PAT = "|".join(sorted(_MONTHS, key=len, reverse=True))
_LEAD = r"(?:(?:in|during|for|over)\s+)?(?:the\s+)?"

# Ordered: more specific forms first so e.g. "from Apr 2016 to Jul 2017"
# is not eaten by the bare-year pattern.
_PHRASE_RES: list[tuple[str, re.Pattern[str]]] = [
    (
        "from_to",
        re.compile(
            rf"\bfrom\s+({_MONTH_PAT})\s+(\d{{4}})\s+to\s+({_MONTH_PAT})\s+(\d{{4}})",
            re.IGNORECASE,
        ),
    ),
    (
        "previous_months",
        re.compile(
            rf"\b{_LEAD}(?:previous|last|past)\s+(\d{{1,3}})\s+months?\b",
            re.IGNORECASE,
        ),
    ),
    (
        "last_quarter",
        re.compile(rf"\b{_LEAD}(?:last|previous)\s+quarter\b", re.IGNORECASE),
    ),
    (
        "quarter",
        re.compile(rf"\b{_LEAD}Q([1-4])\s+(\d{{4}})\b", re.IGNORECASE),
    ),
    (
        "month_year",
        re.compile(rf"\b{_LEAD}({_MONTH_PAT})\s+(\d{{4}})\b", re.IGNORECASE),
    ),
    (
        "year",
        re.compile(rf"\b{_LEAD}((?:19|20)\d{{2}})\b", re.IGNORECASE),
    ),
]


def _last_day(year: int, month: int) -> int:
    return calendar.monthrange(year, month)[1]


def month_range(year: int, month: int) -> DateRange:
    return DateRange(dt.date(year, month, 1), dt.date(year, month, _last_day(year, month)))


def year_range(year: int) -> DateRange:
    return DateRange(dt.date(year, 1, 1), dt.date(year, 12, 31))


def quarter_range(year: int, quarter: int) -> DateRange:
    start_month = 3 * (quarter - 1) + 1
    end_month = start_month + 2
    return DateRange(
        dt.date(year, start_month, 1),
        dt.date(year, end_month, _last_day(year, end_month)),
    )


def shift_months(d: dt.date, months: int) -> dt.date:
    """Shift by whole months, clamping the day to the target month's length."""
    index = d.year * 12 + (d.month - 1) + months
    year, month = divmod(index, 12)
    month += 1
    return dt.date(year, month, min(d.day, _last_day(year, month)))


def _completed_quarter(reference: dt.date) -> tuple[int, int]:
    """Most recent calendar quarter whose last day is strictly before reference."""
    year, quarter = reference.year, (reference.month - 1) // 3 + 1
    while True:
        quarter -= 1
        if quarter == 0:
            year, quarter = year - 1, 4
        if quarter_range(year, quarter).end < reference:
            return year, quarter


def _resolve_match(kind: str, m: re.Match[str], reference: dt.date) -> DateRange:
    if kind == "from_to":
        start = dt.date(int(m.group(2)), _MONTHS[m.group(1).lower()], 1)
        end = dt.date(int(m.group(4)), _MONTHS[m.group(3).lower()], 1)
        if start > end:
            raise DatePhraseError(m.group(0))
        return DateRange(start, end)
    if kind == "previous_months":
        n = int(m.group(1))
        if n == 0:
            raise DatePhraseError(m.group(0))
        return DateRange(shift_months(reference, -n), reference)
    if kind == "last_quarter":
        year, quarter = _completed_quarter(reference)
        q = quarter_range(year, quarter)
        return DateRange(q.start - dt.timedelta(days=1), q.end)
    if kind == "quarter":
        return quarter_range(int(m.group(2)), int(m.group(1)))
    if kind == "month_year":
        return month_range(int(m.group(2)), _MONTHS[m.group(1).lower()])
    if kind == "year":
        return year_range(int(m.group(1)))
    raise AssertionError(f"unhandled phrase kind {kind}")


def resolve_date_phrase(
    phrase: str, reference_date: dt.date
) -> DateRange | LatestAvailable:
    """Resolve a date phrase to a calendar range.

    An empty (or whitespace-only) phrase resolves to LATEST: the request is
    sent without dates and the data module picks the freshest range it has.
    Raises DatePhraseError when the phrase is nonempty but unparseable.
    """
    phrase = phrase.strip()
    if not phrase:
        return LATEST
    for kind, pattern in _PHRASE_RES:
        m = pattern.match(phrase)
        if m and m.end() == len(phrase):
            return _resolve_match(kind, m, reference_date)
    raise DatePhraseError(phrase)


def find_date_phrase(text: str) -> tuple[str, tuple[int, int]] | None:
    """Find the leftmost date phrase in free text.

    Returns the verbatim matched span and its (start, end) offsets, or None.
    Among patterns matching at the same position the more specific one wins
    (pattern order), so "Q3 2023" is a quarter, not the bare year 2023.
    """
    best: tuple[int, int, str] | None = None
    for rank, (_, pattern) in enumerate(_PHRASE_RES):
        m = pattern.search(text)
        if m and (best is None or (m.start(), rank) < (best[0], best[1])):
            best = (m.start(), rank, m.group(0))
    if best is None:
        return None
    start, _, phrase = best
    return phrase, (start, start + len(phrase))
