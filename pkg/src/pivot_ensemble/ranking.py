"""Quality-estimation scoring of candidate pools and top-k selection.

Ranking only needs one score per candidate followed by a sort, i.e.
O(N log N) comparisons, as opposed to the O(N^2) pair comparisons of a
pairwise ranker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

from .backends import BackendConfig, HttpBackend
from .core import DIRECT_CODE, CandidatePool, ScoredCandidate, SourceSegment
from .errors import BackendError, ConfigError, FixtureGap, QeUnavailable
from .metrics import sentence_chrf_pp
from .storage import CacheKey, DiskCache, Operation, cache_get, cache_put

log = logging.getLogger(__name__)

DEFAULT_K = 3


class QeBackend(Protocol):
    kind: str

    def score(self, segment: SourceSegment, pool: CandidatePool) -> list[float]: ...


@dataclass
class CannedQe:
    """Scores from a fixture map.

    Keys are either ``(segment_id, hypothesis)`` pairs or bare hypothesis
    strings; the scoped form wins when both match.
    """

    scores: Mapping[Any, float]
    kind: str = field(default="canned", init=False)

    def score(self, segment: SourceSegment, pool: CandidatePool) -> list[float]:
        out = []
        for c in pool.candidates:
            if (segment.id, c.text) in self.scores:
                out.append(float(self.scores[(segment.id, c.text)]))
            elif c.text in self.scores:
                out.append(float(self.scores[c.text]))
            else:
                raise FixtureGap(f"no canned QE score for segment {segment.id!r} candidate {c.text!r}")
        return out


@dataclass
class LexicalProxyQe:
    """chrF++ of each candidate against the pool's direct-path candidate.

    Test-only stand-in that lets the pipeline run offline; it is not a
    quality estimator in any real sense. Without a direct candidate the
    first candidate in path order is the anchor.
    """

    kind: str = field(default="lexical", init=False)

    def score(self, segment: SourceSegment, pool: CandidatePool) -> list[float]:
        anchor = next((c for c in pool.candidates if c.path.code == DIRECT_CODE), pool.candidates[0])
        return [sentence_chrf_pp(c.text, anchor.text) for c in pool.candidates]


class ExternalQe:
    """HTTP scorer: POST [{"source", "hypothesis"}, ...] -> [{"score"}, ...]."""

    kind = "external"

    def __init__(self, config: BackendConfig, cache: DiskCache | None = None, backend: HttpBackend | None = None):
        if config.is_mock:
            raise ConfigError("external QE needs an http(s) endpoint")
        self.config = config
        self.cache = cache
        self._http = backend or HttpBackend(config)

    def _key(self, source: str, hypothesis: str) -> CacheKey:
        return CacheKey.for_payload(Operation.QE_SCORE, {"source": source, "hypothesis": hypothesis}, self.config.endpoint)

    def score(self, segment: SourceSegment, pool: CandidatePool) -> list[float]:
        scores: list[float | None] = []
        for c in pool.candidates:
            hit = cache_get(self.cache, self._key(segment.text, c.text))
            scores.append(float(hit) if isinstance(hit, (int, float)) else None)
        todo = [i for i, s in enumerate(scores) if s is None]
        step = self.config.max_batch
        for start in range(0, len(todo), step):
            chunk = todo[start : start + step]
            body = [{"source": segment.text, "hypothesis": pool.candidates[i].text} for i in chunk]
            try:
                data = self._http.post_json(body)
            except BackendError as exc:
                raise QeUnavailable(str(exc)) from exc
            if not isinstance(data, list) or len(data) != len(chunk):
                raise QeUnavailable(f"QE response is not a list of {len(chunk)} scores")
            for i, item in zip(chunk, data):
                try:
                    value = float(item["score"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise QeUnavailable(f"malformed QE item {item!r}") from exc
                scores[i] = value
                cache_put(self.cache, self._key(segment.text, pool.candidates[i].text), value)
        return scores  # type: ignore[return-value]


def qe_from_config(cfg: Mapping[str, Any] | None, cache: DiskCache | None = None) -> QeBackend:
    cfg = dict(cfg or {"kind": "lexical"})
    kind = cfg.pop("kind", "lexical")
    if kind == "lexical":
        return LexicalProxyQe()
    if kind == "canned":
        scores = cfg.get("scores")
        if scores is None:
            raise ConfigError("canned QE needs a 'scores' map")
        return CannedQe(scores)
    if kind == "external":
        return ExternalQe(BackendConfig.from_dict(cfg.get("backend", {})), cache=cache)
    raise ConfigError(f"unknown QE kind {kind!r}")


def score_pool(segment: SourceSegment, pool: CandidatePool, qe: QeBackend) -> list[ScoredCandidate]:
    if not pool.candidates:
        raise ValueError("cannot score an empty pool")
    scores = qe.score(segment, pool)
    return [ScoredCandidate(c, s) for c, s in zip(pool.candidates, scores)]


@dataclass(frozen=True)
class RankingConfig:
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")


class _RankKey:
    """Sort key: higher score first. The sort is stable, so equal scores keep
    their pool (path-order) position."""

    __slots__ = ("score",)

    def __init__(self, score: float):
        self.score = score

    def __lt__(self, other: _RankKey) -> bool:
        return self.score > other.score


def select_top_k(scored: Sequence[ScoredCandidate], cfg: RankingConfig = RankingConfig()) -> list[ScoredCandidate]:
    if not scored:
        raise ValueError("nothing to select from")
    k = cfg.k
    if k > len(scored):
        log.warning("k=%d exceeds pool size %d; keeping the whole pool", k, len(scored))
        k = len(scored)
    ranked = sorted(scored, key=lambda s: _RankKey(s.score))
    return ranked[:k]
