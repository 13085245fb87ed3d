"""Choosing the n best translation paths for a language pair.

Each candidate path (direct, plus one per pivot in the pool) translates a
benchmark corpus and is scored against its references. ``select_top_paths``
then keeps the n best, breaking score ties by putting the direct path first
and then ordering pivots by language code.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import fmean
from typing import Mapping, Sequence

from .backends import Backend
from .core import CandidatePool, LanguageCode, SourceSegment, TranslationPath, lang
from .errors import ConfigError, InsufficientPaths, MetricError, ParseError
from .generation import generate_corpus
from .metrics import BleuConfig, corpus_bleu
from .storage import DiskCache

log = logging.getLogger(__name__)


class SelectionMetric(str, Enum):
    BLEU = "bleu"
    QE_SCORE = "qe"


@dataclass(frozen=True)
class PathScoreTable:
    """Per-path scores for one language pair.

    ``partial`` marks tables transcribed from a published top-n excerpt,
    which need not contain the direct row.
    """

    lang_pair: tuple[LanguageCode, LanguageCode]
    rows: Mapping[TranslationPath, float]
    metric: SelectionMetric = SelectionMetric.BLEU
    partial: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        src, tgt = self.lang_pair
        for path, score in self.rows.items():
            if not math.isfinite(score):
                raise ValueError(f"non-finite score for path {path.code}")
            if (path.source_lang, path.target_lang) != (src, tgt):
                raise ValueError(f"path {path} does not belong to {src}→{tgt}")
        if not self.partial and TranslationPath.direct(src, tgt) not in self.rows:
            raise ValueError("a path score table must contain the direct row")

    def ranked(self) -> list[tuple[TranslationPath, float]]:
        """All rows, best first, with the documented tie-break."""
        return sorted(self.rows.items(), key=lambda kv: (-kv[1], kv[0].is_pivot, kv[0].code))

    # -- persistence: TSV of (path code, score) plus a JSON sidecar --

    def write(self, tsv_path: str | os.PathLike) -> Path:
        tsv_path = Path(tsv_path)
        lines = [f"{p.code}\t{score!r}" for p, score in self.ranked()]
        tsv_path.write_text("path\tscore\n" + "\n".join(lines) + "\n", encoding="utf-8")
        sidecar = tsv_path.with_suffix(".json")
        meta = {
            "source_lang": self.lang_pair[0].code,
            "target_lang": self.lang_pair[1].code,
            "metric": self.metric.value,
            "partial": self.partial,
        }
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return sidecar

    @classmethod
    def read(
        cls,
        tsv_path: str | os.PathLike,
        source: str | LanguageCode | None = None,
        target: str | LanguageCode | None = None,
        metric: SelectionMetric | str | None = None,
        partial: bool | None = None,
    ) -> PathScoreTable:
        """Load a table; explicit arguments override the JSON sidecar.

        Rows whose score is ``-`` (no such path) are skipped.
        """
        tsv_path = Path(tsv_path)
        meta: dict = {}
        sidecar = tsv_path.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
        src = source or meta.get("source_lang")
        tgt = target or meta.get("target_lang")
        if not src or not tgt:
            raise ConfigError(f"language pair for {tsv_path} is neither given nor in {sidecar.name}")
        metric = SelectionMetric(metric or meta.get("metric", "bleu"))
        partial = meta.get("partial", False) if partial is None else partial
        rows: dict[TranslationPath, float] = {}
        for lineno, line in enumerate(tsv_path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip() or (lineno == 1 and line.startswith("path\t")):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"expected 'path<TAB>score', got {line!r}", lineno)
            code, value = fields[0].strip(), fields[1].strip()
            if value == "-":
                continue
            try:
                path = TranslationPath.from_code(code, src, tgt)
                rows[path] = float(value)
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
        return cls((lang(src), lang(tgt)), rows, metric, partial)


def select_top_paths(table: PathScoreTable, n: int, include_direct: bool = False) -> list[TranslationPath]:
    """The n best paths, best first.

    With ``include_direct`` the direct path is kept even when it ranks below
    n, displacing the weakest of the n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(table.rows):
        raise InsufficientPaths(f"asked for {n} paths, table has {len(table.rows)}")
    ranked = [p for p, _ in table.ranked()]
    top = ranked[:n]
    if include_direct:
        direct = TranslationPath.direct(*table.lang_pair)
        if direct not in table.rows:
            raise InsufficientPaths("the table has no direct row to include")
        if direct not in top:
            top = [p for p in ranked if p in top[:-1] or p == direct]
    return top


def candidate_paths(
    source: str | LanguageCode, target: str | LanguageCode, pivot_pool: Sequence[str | LanguageCode]
) -> list[TranslationPath]:
    src, tgt = lang(source), lang(target)
    pivots = [lang(p) for p in pivot_pool]
    if src in pivots or tgt in pivots:
        raise ConfigError("the pivot pool must exclude the source and target languages")
    if len(set(pivots)) != len(pivots):
        raise ConfigError("duplicate languages in the pivot pool")
    return [TranslationPath.direct(src, tgt)] + [TranslationPath.via(src, p, tgt) for p in pivots]


def score_paths(
    benchmark: Sequence[tuple[SourceSegment, str]],
    pivot_pool: Sequence[str | LanguageCode],
    backend: Backend,
    metric: SelectionMetric = SelectionMetric.BLEU,
    target: str | LanguageCode | None = None,
    qe=None,
    cache: DiskCache | None = None,
    parallelism: int = 1,
    bleu: BleuConfig = BleuConfig(),
) -> PathScoreTable:
    """Translate the benchmark along every path and score each path.

    A path that fails on any benchmark segment is left out with a warning,
    except the direct path, whose failure is fatal.
    """
    if not benchmark:
        raise ValueError("empty benchmark")
    if target is None:
        raise ConfigError("target language is required")
    segments = [seg for seg, _ in benchmark]
    references = [ref for _, ref in benchmark]
    src, tgt = segments[0].lang, lang(target)
    paths = candidate_paths(src, tgt, pivot_pool)
    run = generate_corpus(segments, paths, backend, cache, parallelism)
    pools: dict[str, CandidatePool] = {p.segment_id: p for p in run.pools}

    pool_scores: dict[str, list[float]] = {}
    rows: dict[TranslationPath, float] = {}
    for path in paths:
        outputs = []
        for seg in segments:
            pool = pools.get(seg.id)
            cand = pool.by_path(path) if pool else None
            if cand is None:
                break
            outputs.append((seg, pool, cand))
        if len(outputs) != len(segments):
            if not path.is_pivot:
                raise MetricError("the direct path failed on the benchmark; cannot build a score table")
            log.warning("omitting path %s: backend failures on the benchmark", path.code)
            continue
        if metric is SelectionMetric.BLEU:
            rows[path] = corpus_bleu([c.text for _, _, c in outputs], references, bleu)
        else:
            if qe is None:
                raise ConfigError("QE-based path selection needs a QE backend")
            scores = []
            for seg, pool, cand in outputs:
                if seg.id not in pool_scores:
                    pool_scores[seg.id] = qe.score(seg, pool)
                scores.append(pool_scores[seg.id][pool.candidates.index(cand)])
            rows[path] = fmean(scores)
    return PathScoreTable((src, tgt), rows, metric)
