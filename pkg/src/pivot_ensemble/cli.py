"""``pivot-ensemble`` command line.

Exit codes: 0 ok, 1 run failure, 2 configuration or usage error, 3 backend
failure, 4 data mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .backends import BackendConfig, open_backend
from .core import CandidatePool, EnsembleOutput, SourceSegment
from .errors import (
    BackendError,
    ConfigError,
    CorpusMismatch,
    InputMismatch,
    InsufficientPaths,
    MetricError,
    ParseError,
    PivotEnsembleError,
    QeUnavailable,
    RunFailed,
)
from .harness import (
    HYPOTHESES_FILE,
    MANIFEST_FILE,
    OUTPUTS_FILE,
    POOLS_FILE,
    RANKED_FILE,
    EvalReport,
    PipelineConfig,
    RankedPool,
    check_budget,
    evaluate,
    export_merger_inputs,
    open_cache,
    read_config_file,
    read_corpus,
    read_lines,
    run_pipeline,
    stage_generate,
    stage_merge,
    stage_rank,
    write_outputs,
    write_report,
)
from .path_selection import PathScoreTable, SelectionMetric, score_paths, select_top_paths
from .plotting import plot_path_scores
from .ranking import ExternalQe, qe_from_config
from .storage import RunManifest, fingerprint_lines, read_jsonl, write_jsonl

log = logging.getLogger("pivot_ensemble")

EXIT_OK, EXIT_RUN, EXIT_CONFIG, EXIT_BACKEND, EXIT_DATA = 0, 1, 2, 3, 4

SAMPLE_CORPUS = "sample.kor_Hang.txt"
SAMPLE_REFERENCES = "sample.ita_Latn.txt"
SAMPLE_CONFIG = "sample_config.json"


def sample_file(name: str) -> Path:
    return Path(str(resources.files("pivot_ensemble") / "data" / name))


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (InputMismatch, CorpusMismatch, ParseError)):
        return EXIT_DATA
    if isinstance(exc, (BackendError, QeUnavailable)):
        return EXIT_BACKEND
    if isinstance(exc, (ConfigError, InsufficientPaths)):
        return EXIT_CONFIG
    return EXIT_RUN


def _print_json(obj: Any) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True))


# -- config resolution ----------------------------------------------------------


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file (or the bundled sample) plus command-line overrides."""
    if getattr(args, "config", None):
        path = Path(args.config)
    elif getattr(args, "sample", False):
        path = sample_file(SAMPLE_CONFIG)
    else:
        raise ConfigError("--config is required (or --sample for the bundled example)")
    data = read_config_file(path)
    if getattr(args, "strategy", None):
        data["merger"] = {**data.get("merger", {}), "strategy": args.strategy}
    if getattr(args, "parallelism", None):
        data["parallelism"] = args.parallelism
    if getattr(args, "k", None):
        data["k"] = args.k
    base = path.parent
    out_dir = getattr(args, "out_dir", None)
    if getattr(args, "sample", False) and not args.config:
        # the bundled config lives inside the package; keep caches out of it
        base = Path.cwd()
    if data.get("cache_dir") is None and out_dir:
        data["cache_dir"] = str(Path(out_dir).resolve() / "cache")
    return PipelineConfig.from_dict(data, base_dir=base)


def resolve_corpus(args: argparse.Namespace, cfg: PipelineConfig) -> tuple[list[SourceSegment], str]:
    if getattr(args, "corpus", None):
        path = Path(args.corpus)
    elif getattr(args, "sample", False):
        path = sample_file(SAMPLE_CORPUS)
    else:
        raise ConfigError("--corpus is required (or --sample)")
    return read_corpus(path, cfg.source_lang), str(path)


# -- commands -----------------------------------------------------------------


def cmd_select_paths(args: argparse.Namespace) -> int:
    if args.from_table is None and not args.pivots:
        args.parser.error("--pivots is required unless --from-table is given")
    metric = SelectionMetric(args.metric)
    if args.dry_run:
        _print_json({k: v for k, v in vars(args).items() if k not in ("func", "parser")})
        return EXIT_OK
    if args.from_table:
        table = PathScoreTable.read(args.from_table, args.src, args.tgt, metric)
    else:
        if args.source_file:
            sources = read_lines(args.source_file)
            references = read_lines(args.reference_file) if args.reference_file else None
        elif (args.src, args.tgt) == ("kor_Hang", "ita_Latn"):
            sources = read_lines(sample_file(SAMPLE_CORPUS))
            references = read_lines(sample_file(SAMPLE_REFERENCES))
        else:
            raise ConfigError("--source-file is required for this language pair")
        if metric is SelectionMetric.BLEU and references is None:
            raise ConfigError("BLEU path selection needs --reference-file")
        if references is not None and len(references) != len(sources):
            raise InputMismatch(f"{len(sources)} source lines vs {len(references)} references")
        segments = read_corpus_lines(sources, args.src)
        benchmark = list(zip(segments, references or [""] * len(segments)))
        backend = open_backend(BackendConfig(endpoint=args.backend))
        qe = qe_from_config({"kind": args.qe}) if metric is SelectionMetric.QE_SCORE else None
        try:
            table = score_paths(benchmark, args.pivots, backend, metric, args.tgt, qe=qe, parallelism=args.parallelism)
        except MetricError as exc:
            log.error("%s", exc)
            return EXIT_BACKEND
    chosen = select_top_paths(table, args.n, include_direct=args.include_direct)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.write(out / "path_scores.tsv")
    plot_path_scores(table, out / "path_scores.png", highlight=args.n)
    result = {
        "source": table.lang_pair[0].code,
        "target": table.lang_pair[1].code,
        "metric": table.metric.value,
        "n": args.n,
        "paths": [p.code for p in chosen],
    }
    (out / "paths.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    for p in chosen:
        print(f"{p.code}\t{table.rows[p]:.2f}")
    return EXIT_OK


def read_corpus_lines(lines: Sequence[str], source_lang: str) -> list[SourceSegment]:
    from .core import segments_from_lines

    try:
        return segments_from_lines(lines, source_lang)
    except ValueError as exc:
        raise InputMismatch(str(exc)) from exc


def _stage_common(args: argparse.Namespace) -> tuple[PipelineConfig, list[SourceSegment], Path]:
    cfg = resolve_config(args)
    segments, _ = resolve_corpus(args, cfg)
    out = Path(args.out_dir)
    return cfg, segments, out


def _stage_input(path: Path, record_type):
    if not path.exists():
        raise ConfigError(f"stage input {path} does not exist; run the previous stage first")
    return list(read_jsonl(path, record_type))


def _dry(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    _print_json({"command": args.command, "config": cfg.to_dict()})
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    if args.dry_run:
        return _dry(args)
    cfg, segments, out = _stage_common(args)
    out.mkdir(parents=True, exist_ok=True)
    result = stage_generate(segments, cfg, open_backend(cfg.translation), open_cache(cfg))
    write_jsonl(out / POOLS_FILE, result.records)
    _report_failures(result.failures)
    check_budget(result.failures, len(segments), cfg.failure_budget)
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    if args.dry_run:
        return _dry(args)
    cfg, segments, out = _stage_common(args)
    out.mkdir(parents=True, exist_ok=True)
    pools = _stage_input(Path(args.pools) if args.pools else out / POOLS_FILE, CandidatePool)
    result = stage_rank(segments, pools, cfg, qe_from_config(cfg.qe, open_cache(cfg)))
    write_jsonl(out / RANKED_FILE, result.records)
    _report_failures(result.failures)
    check_budget(result.failures, len(segments), cfg.failure_budget)
    return EXIT_OK


def cmd_merge(args: argparse.Namespace) -> int:
    if args.dry_run:
        return _dry(args)
    cfg, segments, out = _stage_common(args)
    out.mkdir(parents=True, exist_ok=True)
    ranked = _stage_input(Path(args.ranked) if args.ranked else out / RANKED_FILE, RankedPool)
    llm = open_backend(cfg.llm) if cfg.strategy == "llm_fusion" else None
    result = stage_merge(segments, ranked, cfg, llm, open_cache(cfg))
    write_outputs(out, result.records)
    export_merger_inputs(segments, ranked, cfg, out)
    _report_failures(result.failures)
    check_budget(result.failures, len(segments), cfg.failure_budget)
    return EXIT_OK


def _read_hypotheses(path: str) -> list[EnsembleOutput | str]:
    if path.endswith(".jsonl"):
        return list(read_jsonl(path, EnsembleOutput))
    return list(read_lines(path))


def cmd_evaluate(args: argparse.Namespace) -> int:
    names = args.system or []
    if names and len(names) != len(args.outputs):
        args.parser.error("give one --system name per --outputs file")
    if args.dry_run:
        _print_json({k: v for k, v in vars(args).items() if k not in ("func", "parser")})
        return EXIT_OK
    references = read_lines(args.references)
    reports = []
    for i, path in enumerate(args.outputs):
        name = names[i] if names else Path(path).stem
        reports.append(evaluate(_read_hypotheses(path), references, name, args.tgt))
    table = write_report(reports, args.out_dir, figure=not args.no_figure)
    print(table.to_markdown(), end="")
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    manifest = None
    if args.resume:
        manifest = RunManifest.read(args.resume)
        cfg = PipelineConfig.from_dict(manifest.config)
        if args.parallelism:
            cfg.parallelism = args.parallelism
        corpus_path = args.corpus or manifest.corpus_path
        references_path = args.references or manifest.references_path
        if corpus_path is None:
            raise ConfigError("the manifest records no corpus path; pass --corpus")
    else:
        cfg = resolve_config(args)
        corpus_path = args.corpus or (str(sample_file(SAMPLE_CORPUS)) if args.sample else None)
        use_sample_refs = args.sample and not args.corpus
        references_path = args.references or (str(sample_file(SAMPLE_REFERENCES)) if use_sample_refs else None)
        if corpus_path is None:
            raise ConfigError("--corpus is required (or --sample)")
    if args.dry_run:
        _print_json({"command": "pipeline", "config": cfg.to_dict(), "corpus": corpus_path, "references": references_path})
        return EXIT_OK

    segments = read_corpus(corpus_path, cfg.source_lang)
    if manifest is not None and fingerprint_lines(s.text for s in segments) != manifest.corpus_fingerprint:
        raise CorpusMismatch(f"{corpus_path} differs from the corpus recorded in {args.resume}")
    references = read_lines(references_path) if references_path else None
    if references is not None and len(references) != len(segments):
        raise InputMismatch(f"{len(segments)} source lines vs {len(references)} references")

    out = Path(args.out_dir)
    try:
        outputs, manifest = run_pipeline(segments, cfg, out, corpus_path=corpus_path)
    except RunFailed:
        _report_failures(RunManifest.read(out / MANIFEST_FILE).failures)
        raise
    _report_failures(manifest.failures)
    if references is None:
        print(f"wrote {len(outputs)} translations to {out / HYPOTHESES_FILE}")
        return EXIT_OK
    if len(outputs) != len(references):
        # a tolerated failure budget leaves gaps; score only what was produced
        keep = {o.segment_id for o in outputs}
        references = [r for s, r in zip(segments, references) if s.id in keep]
    qe = qe_from_config(cfg.qe) if cfg.qe.get("kind") == "external" else None
    report = evaluate(
        outputs,
        references,
        system=f"pivot-ensemble ({cfg.strategy})",
        target_lang=cfg.target_lang,
        qe=qe if isinstance(qe, ExternalQe) else None,
        segments=[s for s in segments if s.id in {o.segment_id for o in outputs}],
    )
    table = write_report([report], out)
    manifest.references_path = references_path
    manifest.references_fingerprint = report.corpus_fingerprint
    manifest.artifacts.update({"report.tsv": "report.tsv", "report.md": "report.md", "report.png": "report.png"})
    manifest.write(out / MANIFEST_FILE)
    print(table.to_markdown(), end="")
    return EXIT_OK


def _report_failures(failures: dict[str, str]) -> None:
    for sid, reason in failures.items():
        log.warning("segment %s failed: %s", sid, reason)


# -- parser -------------------------------------------------------------------


def _add_stage_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config (JSON or YAML)")
    p.add_argument("--sample", action="store_true", help="use the bundled Korean-Italian sample")
    p.add_argument("--corpus", help="source corpus, one sentence per line")
    p.add_argument("--out-dir", default="run", help="artifact directory (default: run)")
    p.add_argument("--parallelism", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pivot-ensemble", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select-paths", help="score translation paths and keep the n best")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--pivots", type=lambda s: [x for x in s.split(",") if x], help="comma-separated pivot codes")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--metric", choices=[m.value for m in SelectionMetric], default="bleu")
    p.add_argument("--qe", default="lexical", help="QE kind for --metric qe")
    p.add_argument("--backend", default="mock:", help="translation endpoint (default: mock:)")
    p.add_argument("--source-file")
    p.add_argument("--reference-file")
    p.add_argument("--from-table", help="replay a path-score TSV instead of translating")
    p.add_argument("--include-direct", action="store_true")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out-dir", default="paths")
    p.set_defaults(func=cmd_select_paths)

    p = sub.add_parser("generate", help="build candidate pools (pools.jsonl)")
    _add_stage_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("rank", help="QE-score pools and keep the top k (ranked.jsonl)")
    _add_stage_args(p)
    p.add_argument("--pools", help="default: <out-dir>/pools.jsonl")
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("merge", help="merge ranked candidates (outputs.jsonl)")
    _add_stage_args(p)
    p.add_argument("--ranked", help="default: <out-dir>/ranked.jsonl")
    p.add_argument("--strategy", choices=["llm_fusion", "selection_top1", "mbr"])
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("evaluate", help="BLEU / chrF++ report for one or more systems")
    p.add_argument("--outputs", action="append", required=True, help="outputs.jsonl or plain text; repeatable")
    p.add_argument("--system", action="append", help="row label per --outputs")
    p.add_argument("--references", required=True)
    p.add_argument("--tgt", help="target language code (Korean switches BLEU tokenization)")
    p.add_argument("--out-dir", default="report")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="generate, rank, merge and evaluate in one go")
    _add_stage_args(p)
    p.add_argument("--references")
    p.add_argument("--strategy", choices=["llm_fusion", "selection_top1", "mbr"])
    p.add_argument("--resume", metavar="MANIFEST", help="rerun a recorded run (warm cache)")
    p.set_defaults(func=cmd_pipeline)

    for action in sub.choices.values():
        action.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")
        action.set_defaults(parser=action)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except PivotEnsembleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
