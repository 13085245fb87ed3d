"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PivotEnsembleError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PivotEnsembleError):
    pass


class InputMismatch(PivotEnsembleError):
    """Parallel inputs (hypotheses/references, outputs/segments) differ in length."""


# -- backends ---------------------------------------------------------------


class BackendError(PivotEnsembleError):
    pass


class BackendUnavailable(BackendError):
    """Transport failure persisted past the configured retry limit."""


class ProtocolError(BackendError):
    def __init__(self, message: str, payload: str | bytes | None = None):
        excerpt = ""
        if payload is not None:
            if isinstance(payload, bytes):
                payload = payload.decode("utf-8", errors="replace")
            excerpt = payload[:200]
        self.payload_excerpt = excerpt
        super().__init__(f"{message} (payload: {excerpt!r})" if excerpt else message)


class EmptyHypothesis(BackendError):
    """One or more items of a batch came back empty.

    ``indices`` names the offending positions; ``translations`` holds the
    full response so callers may keep the non-empty items.
    """

    def __init__(self, indices: list[int], translations: list[str]):
        self.indices = list(indices)
        self.translations = list(translations)
        super().__init__(f"empty translation at batch indices {self.indices}")


# -- generation / selection -------------------------------------------------


class GenerationFailed(PivotEnsembleError):
    def __init__(self, segment_id: str, reasons: dict[str, str] | None = None):
        self.segment_id = segment_id
        self.reasons = dict(reasons or {})
        detail = "; ".join(f"{p}: {r}" for p, r in self.reasons.items())
        super().__init__(f"all paths failed for segment {segment_id!r}" + (f" ({detail})" if detail else ""))


class EmptyCorpus(PivotEnsembleError):
    pass


class InsufficientPaths(PivotEnsembleError):
    pass


class MetricError(PivotEnsembleError):
    pass


# -- ranking / merging ------------------------------------------------------


class QeUnavailable(PivotEnsembleError):
    pass


class FixtureGap(PivotEnsembleError):
    pass


class RenderError(PivotEnsembleError):
    pass


class EmptyMergeOutput(PivotEnsembleError):
    pass


# -- storage / harness ------------------------------------------------------


class StorageError(PivotEnsembleError):
    pass


class CacheCorrupt(StorageError):
    pass


class ParseError(PivotEnsembleError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


class RunFailed(PivotEnsembleError):
    pass


class CorpusMismatch(PivotEnsembleError):
    pass
