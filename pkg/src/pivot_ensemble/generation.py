"""Candidate generation: run every configured path through one backend.

A direct path costs one backend translation per segment, a pivot path two
chained ones (source→pivot, then pivot→target). Requests are grouped per
language pair and batched up to ``max_batch``; all first hops finish before
any second hop is issued.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backends import Backend, TranslateRequest, translate_cached
from .core import Candidate, CandidatePool, PathFailure, SourceSegment, TranslationPath
from .errors import BackendError, EmptyCorpus, EmptyHypothesis, GenerationFailed
from .storage import DiskCache

log = logging.getLogger(__name__)

DEFAULT_NUM_PATHS = 4


@dataclass
class GenerationRun:
    """Outcome of a corpus run: pools for the segments that produced any
    candidate (in segment order) and the error for those that did not."""

    pools: list[CandidatePool]
    failures: dict[str, GenerationFailed] = field(default_factory=dict)

    @property
    def path_failures(self) -> int:
        return sum(len(p.failures) for p in self.pools)

    def summary(self) -> str:
        return (
            f"{len(self.pools)} pools, {len(self.failures)} failed segments, "
            f"{self.path_failures} failed paths in surviving pools"
        )


def _check_paths(segments: Sequence[SourceSegment], paths: Sequence[TranslationPath]) -> None:
    if not paths:
        raise ValueError("at least one translation path is required")
    if len(set(paths)) != len(paths):
        raise ValueError("translation paths must be pairwise distinct")
    targets = {p.target_lang for p in paths}
    if len(targets) != 1:
        raise ValueError("all paths must share one target language")
    sources = {p.source_lang for p in paths}
    for seg in segments:
        if sources != {seg.lang}:
            raise ValueError(f"segment {seg.id!r} is {seg.lang}, paths start from {sorted(map(str, sources))}")


@dataclass
class _Task:
    path: TranslationPath
    seg_indices: list[int]
    requests: list[TranslateRequest]


def _chunk(path: TranslationPath, hop: int, items: list[tuple[int, str]], max_batch: int) -> list[_Task]:
    src, tgt = path.hops()[hop]
    tasks = []
    for start in range(0, len(items), max_batch):
        part = items[start : start + max_batch]
        tasks.append(_Task(path, [i for i, _ in part], [TranslateRequest(t, src, tgt) for _, t in part]))
    return tasks


def _run_hop(tasks: list[_Task], backend: Backend, cache: DiskCache | None, parallelism: int):
    """Execute tasks; returns {(path, seg_index): text} and {(path, seg_index): reason}."""

    def run(task: _Task):
        try:
            return translate_cached(backend, task.requests, cache), None
        except EmptyHypothesis as exc:
            return exc.translations, exc
        except BackendError as exc:
            return None, exc

    ok: dict[tuple[TranslationPath, int], str] = {}
    failed: dict[tuple[TranslationPath, int], str] = {}
    if parallelism > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run, tasks))
    else:
        outcomes = [run(t) for t in tasks]
    for task, (texts, exc) in zip(tasks, outcomes):
        for pos, seg_idx in enumerate(task.seg_indices):
            key = (task.path, seg_idx)
            if texts is not None and texts[pos].strip():
                ok[key] = texts[pos]
            else:
                failed[key] = f"{type(exc).__name__}: {exc}"
    return ok, failed


def generate_corpus(
    segments: Sequence[SourceSegment],
    paths: Sequence[TranslationPath],
    backend: Backend,
    cache: DiskCache | None = None,
    parallelism: int = 1,
) -> GenerationRun:
    if not segments:
        raise EmptyCorpus("no source segments to translate")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    _check_paths(segments, paths)
    max_batch = backend.config.max_batch

    first_tasks: list[_Task] = []
    for path in paths:
        first_tasks += _chunk(path, 0, [(i, s.text) for i, s in enumerate(segments)], max_batch)
    first_ok, failed = _run_hop(first_tasks, backend, cache, parallelism)

    second_tasks: list[_Task] = []
    for path in paths:
        if path.is_pivot:
            items = [(i, first_ok[(path, i)]) for i in range(len(segments)) if (path, i) in first_ok]
            second_tasks += _chunk(path, 1, items, max_batch)
    second_ok, second_failed = _run_hop(second_tasks, backend, cache, parallelism)
    failed.update(second_failed)

    run = GenerationRun(pools=[])
    for i, seg in enumerate(segments):
        candidates: list[Candidate] = []
        failures: list[PathFailure] = []
        for path in paths:
            key = (path, i)
            if key in failed:
                failures.append(PathFailure(path, failed[key]))
            elif path.is_pivot:
                candidates.append(Candidate(second_ok[key], path, seg.id, intermediate=first_ok[key]))
            else:
                candidates.append(Candidate(first_ok[key], path, seg.id))
        if not candidates:
            err = GenerationFailed(seg.id, {f.path.code: f.reason for f in failures})
            log.error("%s", err)
            run.failures[seg.id] = err
            continue
        for f in failures:
            log.warning("segment %s: path %s failed: %s", seg.id, f.path.code, f.reason)
        run.pools.append(CandidatePool(seg.id, tuple(candidates), tuple(paths), tuple(failures)))
    return run


def generate_pool(
    segment: SourceSegment,
    paths: Sequence[TranslationPath],
    backend: Backend,
    cache: DiskCache | None = None,
) -> CandidatePool:
    run = generate_corpus([segment], paths, backend, cache)
    if run.failures:
        raise run.failures[segment.id]
    return run.pools[0]
