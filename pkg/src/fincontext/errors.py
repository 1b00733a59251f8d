"""Exception hierarchy. Everything raised on purpose derives from FinContextError."""

from __future__ import annotations


class FinContextError(Exception):
    """Base class for all errors raised by this package."""


class RegistryError(FinContextError):
    """Registry file is malformed or violates an invariant."""

    def __init__(self, message: str, *, section: str | None = None, record: str | None = None):
        self.section = section
        self.record = record
        where = ""
        if section:
            where = f" [{section}" + (f": {record}]" if record else "]")
        super().__init__(message + where)


class UnknownMetricError(FinContextError):
    def __init__(self, surface: str):
        self.surface = surface
        super().__init__(f"unknown metric: {surface!r}")


class UnknownEntityError(FinContextError):
    def __init__(self, surface: str):
        self.surface = surface
        super().__init__(f"unknown entity: {surface!r}")


class RequestParseError(FinContextError):
    """Structured data request text does not conform to the wire grammar."""

    def __init__(self, message: str, *, group: str | None = None, offset: int | None = None):
        self.group = group
        self.offset = offset
        detail = message
        if group is not None:
            detail += f" (group: {group}"
            if offset is not None:
                detail += f", offset {offset}"
            detail += ")"
        elif offset is not None:
            detail += f" (offset {offset})"
        super().__init__(detail)


class DateTokenError(RequestParseError):
    """A date token is malformed or not a real calendar date."""


class DatePhraseError(FinContextError):
    def __init__(self, phrase: str):
        self.phrase = phrase
        super().__init__(f"unparseable date phrase: {phrase!r}")


class CompileError(FinContextError):
    """Query compilation failed; carries the query verbatim for logging."""

    def __init__(self, message: str, query: str):
        self.query = query
        super().__init__(f"{message}: {query!r}")


class NoMetricFoundError(CompileError):
    def __init__(self, query: str):
        super().__init__("no metric found in query", query)


class NoEntityFoundError(CompileError):
    def __init__(self, query: str):
        super().__init__("no entity found in query", query)


class UnsatisfiableTemplateError(FinContextError):
    """A template's slot constraints cannot be met by the registry."""


class DistinctnessError(FinContextError):
    """Could not synthesize the requested number of distinct queries."""


class IngestError(FinContextError):
    """A record stream is structurally unreadable (not a per-record rejection)."""


class ExternalAgentError(FinContextError):
    """Base for external agent transport problems."""


class ExternalAgentTimeout(ExternalAgentError):
    pass


class ExternalAgentTransportError(ExternalAgentError):
    pass


class ExternalAgentStatusError(ExternalAgentError):
    def __init__(self, status_code: int, body: str = ""):
        self.status_code = status_code
        super().__init__(f"external agent returned status {status_code}: {body[:200]}")
