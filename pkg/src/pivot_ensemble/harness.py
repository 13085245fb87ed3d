"""End-to-end runner and evaluation reports.

A run is three stages over a corpus (generate, rank, merge), each of which
writes a JSONL artifact; the CLI exposes the same stage functions so a
staged run and a monolithic one produce identical files.

Config keys (JSON or YAML)::

    languages:      {source: kor_Hang, target: ita_Latn}
    paths:          [direct, eng_Latn, spa_Latn, por_Latn]   # or
    path_table:     table.tsv  (with n, include_direct)
    k:              3
    qe:             {kind: lexical | canned | external, ...}
    merger:         {strategy: llm_fusion | selection_top1 | mbr,
                     candidates: top_k | [direct, eng_Latn],
                     mbr_utility: chrf_pp, symmetrize: false}
    backends:       {translation: {...}, llm: {...}}
    parallelism:    4
    failure_budget: 0.0
    cache_dir:      cache
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from statistics import fmean
from typing import Any, Mapping, Sequence

import yaml

from . import __version__
from .backends import Backend, BackendConfig, open_backend
from .core import (
    CandidatePool,
    EnsembleOutput,
    LanguageCode,
    ScoredCandidate,
    SourceSegment,
    Strategy,
    TranslationPath,
    lang,
    segments_from_lines,
)
from .errors import (
    BackendError,
    ConfigError,
    CorpusMismatch,
    EmptyMergeOutput,
    FixtureGap,
    InputMismatch,
    QeUnavailable,
    RunFailed,
)
from .generation import DEFAULT_NUM_PATHS, generate_corpus
from .merging import MbrConfig, Utility, fid_frames, mbr_output, merge_llm, merge_select_top1, TriceInput
from .metrics import BleuConfig, Tokenizer, corpus_bleu, corpus_chrf_pp
from .path_selection import PathScoreTable, select_top_paths
from .ranking import DEFAULT_K, ExternalQe, QeBackend, RankingConfig, qe_from_config, score_pool, select_top_k
from .storage import DiskCache, RunManifest, fingerprint_lines, read_jsonl, write_jsonl

log = logging.getLogger(__name__)

POOLS_FILE = "pools.jsonl"
RANKED_FILE = "ranked.jsonl"
OUTPUTS_FILE = "outputs.jsonl"
HYPOTHESES_FILE = "hypotheses.txt"
TRICE_FILE = "trice.jsonl"
FID_FILE = "fid.jsonl"
MANIFEST_FILE = "manifest.json"

STRATEGY_NAMES = {"llm_fusion", "selection_top1", "mbr"}


# -- configuration ------------------------------------------------------------


@dataclass
class PipelineConfig:
    source_lang: LanguageCode
    target_lang: LanguageCode
    paths: list[TranslationPath]
    k: int = DEFAULT_K
    qe: dict[str, Any] = field(default_factory=lambda: {"kind": "lexical"})
    strategy: str = "llm_fusion"
    fixed_paths: list[TranslationPath] | None = None
    mbr: MbrConfig = MbrConfig()
    translation: BackendConfig = BackendConfig()
    llm: BackendConfig = BackendConfig()
    parallelism: int = 1
    failure_budget: float = 0.0
    cache_dir: str | None = None

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base_dir: str | os.PathLike | None = None) -> PipelineConfig:
        try:
            languages = d["languages"]
            src, tgt = lang(languages["source"]), lang(languages["target"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"config needs languages.source and languages.target: {exc}") from exc
        base = Path(base_dir) if base_dir else Path.cwd()

        try:
            if "paths" in d:
                if not isinstance(d["paths"], list):
                    raise ConfigError("'paths' must be a list of path codes")
                paths = [TranslationPath.from_code(c, src, tgt) for c in d["paths"]]
            elif "path_table" in d:
                table = PathScoreTable.read(base / d["path_table"], src, tgt)
                n = int(d.get("n", DEFAULT_NUM_PATHS))
                paths = select_top_paths(table, n, include_direct=bool(d.get("include_direct")))
            else:
                raise ConfigError("config needs either 'paths' or 'path_table'")
        except ValueError as exc:
            raise ConfigError(f"bad path configuration: {exc}") from exc
        if d.get("include_direct") and TranslationPath.direct(src, tgt) not in paths:
            paths = [TranslationPath.direct(src, tgt)] + paths
        if len(set(paths)) != len(paths) or not paths:
            raise ConfigError("paths must be non-empty and distinct")

        merger = dict(d.get("merger", {}))
        strategy = merger.get("strategy", "llm_fusion")
        if strategy not in STRATEGY_NAMES:
            raise ConfigError(f"unknown merger strategy {strategy!r}; expected one of {sorted(STRATEGY_NAMES)}")
        candidates = merger.get("candidates", "top_k")
        fixed = None
        if candidates != "top_k":
            if not isinstance(candidates, list) or not candidates:
                raise ConfigError("merger.candidates must be 'top_k' or a list of path codes")
            fixed = [TranslationPath.from_code(c, src, tgt) for c in candidates]
            missing = [p.code for p in fixed if p not in paths]
            if missing:
                raise ConfigError(f"fixed merger paths not among generated paths: {missing}")
        try:
            mbr = MbrConfig(Utility(merger.get("mbr_utility", "chrf_pp")), bool(merger.get("symmetrize", False)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        backends = d.get("backends", {})
        k = int(d.get("k", DEFAULT_K))
        parallelism = int(d.get("parallelism", 1))
        budget = float(d.get("failure_budget", 0.0))
        if k < 1 or parallelism < 1 or not 0.0 <= budget <= 1.0:
            raise ConfigError("need k >= 1, parallelism >= 1, 0 <= failure_budget <= 1")
        cache_dir = d.get("cache_dir")
        if cache_dir is not None:
            cache_dir = str(base / cache_dir)
        return cls(
            source_lang=src,
            target_lang=tgt,
            paths=paths,
            k=k,
            qe=dict(d.get("qe", {"kind": "lexical"})),
            strategy=strategy,
            fixed_paths=fixed,
            mbr=mbr,
            translation=BackendConfig.from_dict(backends.get("translation", {})),
            llm=BackendConfig.from_dict(backends.get("llm", {})),
            parallelism=parallelism,
            failure_budget=budget,
            cache_dir=cache_dir,
        )

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved snapshot; feeding it back to from_dict reproduces the run."""
        merger: dict[str, Any] = {
            "strategy": self.strategy,
            "candidates": [p.code for p in self.fixed_paths] if self.fixed_paths else "top_k",
            "mbr_utility": self.mbr.utility.value,
            "symmetrize": self.mbr.symmetrize,
        }
        return {
            "languages": {"source": self.source_lang.code, "target": self.target_lang.code},
            "paths": [p.code for p in self.paths],
            "k": self.k,
            "qe": self.qe,
            "merger": merger,
            "backends": {"translation": self.translation.to_dict(), "llm": self.llm.to_dict()},
            "parallelism": self.parallelism,
            "failure_budget": self.failure_budget,
            "cache_dir": self.cache_dir,
        }


def read_config_file(path: str | os.PathLike) -> dict[str, Any]:
    """Raw config mapping from a JSON or YAML file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return data


def load_config(path: str | os.PathLike) -> PipelineConfig:
    return PipelineConfig.from_dict(read_config_file(path), base_dir=Path(path).parent)


def read_corpus(path: str | os.PathLike, source_lang: str | LanguageCode) -> list[SourceSegment]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read corpus {path}: {exc}") from exc
    try:
        return segments_from_lines(lines, source_lang)
    except ValueError as exc:
        raise InputMismatch(f"{path}: {exc}") from exc


def read_lines(path: str | os.PathLike) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


# -- stages -------------------------------------------------------------------


@dataclass(frozen=True)
class RankedPool:
    segment_id: str
    scored: tuple[ScoredCandidate, ...]
    selected: tuple[ScoredCandidate, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "scored": [s.to_dict() for s in self.scored],
            "selected": [s.to_dict() for s in self.selected],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RankedPool:
        return cls(
            str(d["segment_id"]),
            tuple(ScoredCandidate.from_dict(s) for s in d["scored"]),
            tuple(ScoredCandidate.from_dict(s) for s in d["selected"]),
        )


@dataclass
class StageResult:
    records: list[Any]
    failures: dict[str, str] = field(default_factory=dict)


def open_cache(cfg: PipelineConfig) -> DiskCache | None:
    return DiskCache(cfg.cache_dir) if cfg.cache_dir else None


def stage_generate(
    segments: Sequence[SourceSegment], cfg: PipelineConfig, backend: Backend, cache: DiskCache | None
) -> StageResult:
    run = generate_corpus(segments, cfg.paths, backend, cache, cfg.parallelism)
    return StageResult(list(run.pools), {sid: str(err) for sid, err in run.failures.items()})


def _pmap(fn, items: Sequence[Any], parallelism: int) -> list[Any]:
    if parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def stage_rank(
    segments: Sequence[SourceSegment], pools: Sequence[CandidatePool], cfg: PipelineConfig, qe: QeBackend
) -> StageResult:
    by_id = {s.id: s for s in segments}
    ranking = RankingConfig(cfg.k)

    def rank(pool: CandidatePool):
        try:
            scored = score_pool(by_id[pool.segment_id], pool, qe)
        except (QeUnavailable, FixtureGap) as exc:
            return pool.segment_id, None, f"{type(exc).__name__}: {exc}"
        if cfg.fixed_paths is not None:
            chosen = [s for p in cfg.fixed_paths for s in scored if s.candidate.path == p]
            if not chosen:
                return pool.segment_id, None, "none of the fixed merger paths produced a candidate"
            if cfg.strategy == "selection_top1":
                chosen = select_top_k(chosen, RankingConfig(len(chosen)))
        else:
            chosen = select_top_k(scored, ranking)
        return pool.segment_id, RankedPool(pool.segment_id, tuple(scored), tuple(chosen)), None

    result = StageResult([])
    for sid, ranked, err in _pmap(rank, pools, cfg.parallelism):
        if ranked is None:
            result.failures[sid] = err
        else:
            result.records.append(ranked)
    return result


def stage_merge(
    segments: Sequence[SourceSegment],
    ranked: Sequence[RankedPool],
    cfg: PipelineConfig,
    llm: Backend | None,
    cache: DiskCache | None,
) -> StageResult:
    by_id = {s.id: s for s in segments}
    target_name = cfg.target_lang.display_name

    def merge(rp: RankedPool):
        try:
            if cfg.strategy == "selection_top1":
                return rp.segment_id, merge_select_top1(rp.selected), None
            if cfg.strategy == "mbr":
                # MBR chooses among the whole pool, without QE preselection
                pool = rp.scored if cfg.fixed_paths is None else rp.selected
                return rp.segment_id, mbr_output(rp.segment_id, pool, cfg.mbr), None
            strategy = Strategy.FIXED_PATHS if cfg.fixed_paths is not None else Strategy.LLM_FUSION
            out = merge_llm(by_id[rp.segment_id], rp.selected, llm, target_name, cache, strategy)
            return rp.segment_id, out, None
        except (BackendError, EmptyMergeOutput) as exc:
            return rp.segment_id, None, f"{type(exc).__name__}: {exc}"

    result = StageResult([])
    for sid, out, err in _pmap(merge, ranked, cfg.parallelism):
        if out is None:
            result.failures[sid] = err
        else:
            result.records.append(out)
    return result


def export_merger_inputs(
    segments: Sequence[SourceSegment], ranked: Sequence[RankedPool], cfg: PipelineConfig, out_dir: Path
) -> None:
    """TRICE sequences and FiD frames for external merger training."""
    by_id = {s.id: s for s in segments}
    trice, fid = [], []
    for rp in ranked:
        seg = by_id[rp.segment_id]
        texts = [s.candidate.text for s in rp.selected]
        try:
            seq = TriceInput(seg.text, cfg.source_lang.code, cfg.target_lang.code, tuple(texts)).serialize()
        except ValueError as exc:
            log.warning("segment %s: no TRICE input (%s)", seg.id, exc)
        else:
            trice.append({"segment_id": seg.id, "input": seq})
        fid.append({"segment_id": seg.id, "frames": fid_frames(seg.text, cfg.target_lang.display_name, texts)})
    write_jsonl(out_dir / TRICE_FILE, trice)
    write_jsonl(out_dir / FID_FILE, fid)


def write_outputs(out_dir: Path, outputs: Sequence[EnsembleOutput]) -> None:
    write_jsonl(out_dir / OUTPUTS_FILE, outputs)
    (out_dir / HYPOTHESES_FILE).write_text("".join(o.text.replace("\n", " ") + "\n" for o in outputs), encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def check_budget(failures: Mapping[str, str], n_segments: int, budget: float) -> None:
    if failures and len(failures) / n_segments > budget:
        worst = "; ".join(f"{k}: {v}" for k, v in list(failures.items())[:3])
        raise RunFailed(f"{len(failures)}/{n_segments} segments failed (budget {budget:.0%}): {worst}")


def run_pipeline(
    segments: Sequence[SourceSegment],
    cfg: PipelineConfig,
    out_dir: str | os.PathLike | None = None,
    backend: Backend | None = None,
    llm: Backend | None = None,
    qe: QeBackend | None = None,
    corpus_path: str | None = None,
) -> tuple[list[EnsembleOutput], RunManifest]:
    """Generation → ranking → merging for every segment.

    Backends default to the configured endpoints; passing instances lets
    tests instrument them. Per-segment failures are collected and the run
    raises :class:`RunFailed` only when their share exceeds the budget.
    """
    started = _now()
    cache = open_cache(cfg)
    backend = backend or open_backend(cfg.translation)
    if cfg.strategy == "llm_fusion" and llm is None:
        llm = open_backend(cfg.llm)
    qe = qe or qe_from_config(cfg.qe, cache)

    failures: dict[str, str] = {}
    gen = stage_generate(segments, cfg, backend, cache)
    failures.update(gen.failures)
    ranked = stage_rank(segments, gen.records, cfg, qe)
    failures.update(ranked.failures)
    merged = stage_merge(segments, ranked.records, cfg, llm, cache)
    failures.update(merged.failures)
    outputs: list[EnsembleOutput] = merged.records

    manifest = RunManifest(
        config=cfg.to_dict(),
        corpus_fingerprint=fingerprint_lines(s.text for s in segments),
        paths=[p.code for p in cfg.paths],
        k=cfg.k,
        strategy=cfg.strategy,
        tool_version=__version__,
        corpus_path=corpus_path,
        started_at=started,
        failures=failures,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(out / POOLS_FILE, gen.records)
        write_jsonl(out / RANKED_FILE, ranked.records)
        write_outputs(out, outputs)
        export_merger_inputs(segments, ranked.records, cfg, out)
        manifest.artifacts = {
            name: name for name in (POOLS_FILE, RANKED_FILE, OUTPUTS_FILE, HYPOTHESES_FILE, TRICE_FILE, FID_FILE)
        }
    manifest.finished_at = _now()
    if out_dir is not None:
        manifest.write(Path(out_dir) / MANIFEST_FILE)
    check_budget(failures, len(segments), cfg.failure_budget)
    return outputs, manifest


# -- evaluation ----------------------------------------------------------------

METRIC_COLUMNS = ("BLEU", "chrF++", "COMET")


def round2(x: float) -> Decimal:
    """Half-up rounding to two decimals, for display."""
    return Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


@dataclass
class EvalReport:
    system: str
    bleu: float
    chrf: float
    qe: float | None
    n_segments: int
    corpus_fingerprint: str
    metadata: dict[str, str] = field(default_factory=dict)

    def values(self) -> dict[str, float | None]:
        return {"BLEU": self.bleu, "chrF++": self.chrf, "COMET": self.qe}

    def cells(self) -> list[str]:
        return [str(round2(v)) if v is not None else "-" for v in self.values().values()]

    def to_markdown(self) -> str:
        return render_markdown([self], best=None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "bleu": self.bleu,
            "chrf": self.chrf,
            "qe": self.qe,
            "n_segments": self.n_segments,
            "corpus_fingerprint": self.corpus_fingerprint,
            "metadata": self.metadata,
        }


KOREAN = "kor_Hang"


def evaluate(
    outputs: Sequence[EnsembleOutput | str],
    references: Sequence[str],
    system: str = "system",
    target_lang: str | LanguageCode | None = None,
    qe: QeBackend | None = None,
    segments: Sequence[SourceSegment] | None = None,
) -> EvalReport:
    """Corpus BLEU and chrF++; the QE column only with an external scorer.

    Korean targets are scored with whitespace tokenization in place of a
    morphological analyzer, which is recorded in the report metadata.
    """
    hyps = [o.text if isinstance(o, EnsembleOutput) else o for o in outputs]
    if len(hyps) != len(references):
        raise InputMismatch(f"{len(hyps)} outputs vs {len(references)} references")
    metadata = {"bleu_tokenizer": Tokenizer.THIRTEEN_A.value}
    bleu_cfg = BleuConfig()
    if target_lang is not None and lang(target_lang).code == KOREAN:
        bleu_cfg = BleuConfig(tokenizer=Tokenizer.WHITESPACE)
        metadata["bleu_tokenizer"] = Tokenizer.WHITESPACE.value
        metadata["note"] = "Korean BLEU uses whitespace tokens; no morphological analyzer available"
    qe_score = None
    if isinstance(qe, ExternalQe):
        if segments is None or len(segments) != len(hyps):
            raise InputMismatch("the QE column needs the source segments aligned with the outputs")
        from .core import Candidate

        scores = []
        for seg, hyp in zip(segments, hyps):
            path = TranslationPath.direct(seg.lang, target_lang or "eng_Latn")
            pool = CandidatePool(seg.id, (Candidate(hyp, path, seg.id),), (path,))
            scores.append(qe.score(seg, pool)[0])
        qe_score = fmean(scores)
        metadata["qe"] = "external"
    else:
        metadata["qe"] = "unavailable"
    return EvalReport(
        system=system,
        bleu=corpus_bleu(hyps, references, bleu_cfg),
        chrf=corpus_chrf_pp(hyps, references),
        qe=qe_score,
        n_segments=len(hyps),
        corpus_fingerprint=fingerprint_lines(references),
        metadata=metadata,
    )


@dataclass
class ComparisonTable:
    reports: list[EvalReport]
    best: dict[str, set[str]]

    def to_markdown(self) -> str:
        return render_markdown(self.reports, self.best)

    def to_tsv(self) -> str:
        rows = ["Model\t" + "\t".join(METRIC_COLUMNS)]
        for r in self.reports:
            cells = [c + ("*" if r.system in self.best.get(col, ()) else "") for col, c in zip(METRIC_COLUMNS, r.cells())]
            rows.append("\t".join([r.system, *cells]))
        return "\n".join(rows) + "\n"


def render_markdown(reports: Sequence[EvalReport], best: Mapping[str, set[str]] | None) -> str:
    lines = ["| Model | " + " | ".join(METRIC_COLUMNS) + " |", "|---|" + "---:|" * len(METRIC_COLUMNS)]
    for r in reports:
        cells = []
        for col, cell in zip(METRIC_COLUMNS, r.cells()):
            cells.append(f"**{cell}**" if best and r.system in best.get(col, ()) else cell)
        lines.append(f"| {r.system} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def compare_systems(reports: Sequence[EvalReport]) -> ComparisonTable:
    """Rows stay in the given order; the best displayed value of every
    column is flagged, all maximizers on a tie."""
    if not reports:
        raise ValueError("nothing to compare")
    prints = {r.corpus_fingerprint for r in reports}
    if len(prints) > 1:
        raise CorpusMismatch("reports were computed on different reference corpora")
    best: dict[str, set[str]] = {}
    for col in METRIC_COLUMNS:
        scored = [(round2(v), r.system) for r in reports if (v := r.values()[col]) is not None]
        if scored:
            top = max(v for v, _ in scored)
            best[col] = {name for v, name in scored if v == top}
    return ComparisonTable(list(reports), best)


def write_report(reports: Sequence[EvalReport], out_dir: str | os.PathLike, figure: bool = True) -> ComparisonTable:
    """report.tsv, report.md, report.json and (optionally) report.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = compare_systems(reports)
    (out / "report.tsv").write_text(table.to_tsv(), encoding="utf-8")
    (out / "report.md").write_text(table.to_markdown(), encoding="utf-8")
    (out / "report.json").write_text(
        json.dumps([r.to_dict() for r in reports], ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if figure:
        from .plotting import plot_report

        plot_report(reports, out / "report.png")
    return table


def load_outputs(path: str | os.PathLike) -> list[EnsembleOutput]:
    return list(read_jsonl(path, EnsembleOutput))
