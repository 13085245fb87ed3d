"""Merger inputs and final-translation strategies.

Prompt templates are reproduced byte-for-byte; every bracketed slot in them
is substituted and lines are joined with a single ``\\n``. FiD frames and
TRICE sequences are only serialized here (their networks are trained
elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from .backends import Backend, complete_cached
from .core import CandidateRef, EnsembleOutput, ScoredCandidate, SourceSegment, Strategy
from .errors import EmptyMergeOutput, ParseError, RenderError
from .metrics import sentence_bleu, sentence_chrf_pp
from .storage import DiskCache


class TemplateId(str, Enum):
    ZERO_SHOT_TRANSLATE = "zero_shot_translate"
    ENSEMBLE_FUSE = "ensemble_fuse"
    GENFUSER_CONCAT = "genfuser_concat"


ZERO_SHOT_TEMPLATE = "Translate this sentence from {src} to {tgt}, Source: {source}\nTarget:"

ENSEMBLE_HEADER = (
    "Ensemble the {src} sentence with the provided {tgt} candidates "
    "to create the best possible {tgt} translation."
)
ENSEMBLE_SOURCE_LINE = "{src} sentence: {source}"
ENSEMBLE_CANDIDATE_LINE = "{tgt} candidate {i}: {candidate}"
ENSEMBLE_FOOTER = "Please provide only the {tgt} translation and no additional text.\n{tgt} translation:"


@dataclass(frozen=True)
class PromptSpec:
    template_id: TemplateId
    source_lang_name: str
    target_lang_name: str
    source_text: str
    candidates: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))


def render_prompt(spec: PromptSpec) -> str:
    if not spec.source_text.strip():
        raise RenderError("empty source text")
    if spec.template_id is TemplateId.ZERO_SHOT_TRANSLATE and spec.candidates:
        raise RenderError("the zero-shot template takes no candidates")
    if spec.template_id is not TemplateId.ZERO_SHOT_TRANSLATE and not spec.candidates:
        raise RenderError(f"{spec.template_id.value} needs at least one candidate")
    # one slot per line keeps the rendering injective
    for slot in (spec.source_text, *spec.candidates):
        if "\n" in slot:
            raise RenderError(f"prompt slot contains a newline: {slot!r}")
    src, tgt = spec.source_lang_name, spec.target_lang_name

    if spec.template_id is TemplateId.ZERO_SHOT_TRANSLATE:
        return ZERO_SHOT_TEMPLATE.format(src=src, tgt=tgt, source=spec.source_text)
    if spec.template_id is TemplateId.GENFUSER_CONCAT:
        return "\n".join([spec.source_text, *spec.candidates])
    lines = [
        ENSEMBLE_HEADER.format(src=src, tgt=tgt),
        ENSEMBLE_SOURCE_LINE.format(src=src, source=spec.source_text),
    ]
    lines += [ENSEMBLE_CANDIDATE_LINE.format(tgt=tgt, i=i, candidate=c) for i, c in enumerate(spec.candidates, 1)]
    lines.append(ENSEMBLE_FOOTER.format(tgt=tgt))
    return "\n".join(lines)


# -- encoder-decoder merger inputs -----------------------------------------

SEP = "</s>"


@dataclass(frozen=True)
class TriceInput:
    source_text: str
    source_lang_token: str
    target_lang_token: str
    candidates: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("a TRICE input needs at least one candidate")
        for tok in (self.source_lang_token, self.target_lang_token):
            if not tok or ";" in tok or SEP in tok:
                raise ValueError(f"invalid language token {tok!r}")
        for text in (self.source_text, *self.candidates):
            if SEP in text:
                raise ValueError(f"text may not contain {SEP!r}")

    def serialize(self) -> str:
        """``x</s>l_s;c1</s>l_t;...;ck</s>l_t``"""
        parts = [f"{self.source_text}{SEP}{self.source_lang_token}"]
        parts += [f"{c}{SEP}{self.target_lang_token}" for c in self.candidates]
        return ";".join(parts)

    @classmethod
    def parse(cls, line: str) -> TriceInput:
        chunks = line.split(SEP)
        if len(chunks) < 3:
            raise ParseError(f"not a TRICE sequence: {line[:80]!r}")
        texts = [chunks[0]]
        tokens = []
        for chunk in chunks[1:-1]:
            token, sep, rest = chunk.partition(";")
            if not sep:
                raise ParseError(f"missing ';' after language token in {chunk[:80]!r}")
            tokens.append(token)
            texts.append(rest)
        tokens.append(chunks[-1])
        if len(set(tokens[1:])) > 1:
            raise ParseError("candidates carry different target language tokens")
        return cls(texts[0], tokens[0], tokens[1], tuple(texts[1:]))

    def to_dict(self) -> dict[str, Any]:
        return {"input": self.serialize()}


FID_INSTRUCTION = "Translate source into {tgt} referring {tgt} candidate."


def fid_frames(source_text: str, target_lang_name: str, candidates: Sequence[str]) -> list[str]:
    """One encoder input per candidate: instruction, source, candidate."""
    instruction = FID_INSTRUCTION.format(tgt=target_lang_name)
    return [f"{instruction} source: {source_text} candidate: {c}" for c in candidates]


# -- strategies -------------------------------------------------------------


def merge_llm(
    segment: SourceSegment,
    top_k: Sequence[ScoredCandidate],
    llm: Backend,
    target_lang_name: str,
    cache: DiskCache | None = None,
    strategy: Strategy = Strategy.LLM_FUSION,
) -> EnsembleOutput:
    """Fuse the selected candidates with an LLM via the ensemble prompt."""
    if not top_k:
        raise ValueError("merge_llm needs at least one candidate")
    spec = PromptSpec(
        TemplateId.ENSEMBLE_FUSE,
        segment.lang.display_name,
        target_lang_name,
        segment.text,
        tuple(s.candidate.text for s in top_k),
    )
    text = complete_cached(llm, render_prompt(spec), cache)
    if not text.strip():
        raise EmptyMergeOutput(f"empty completion for segment {segment.id!r}")
    refs = tuple(CandidateRef.of(s.candidate) for s in top_k)
    return EnsembleOutput(segment.id, text, strategy, refs, len(refs))


def merge_select_top1(top_k: Sequence[ScoredCandidate]) -> EnsembleOutput:
    if not top_k:
        raise ValueError("merge_select_top1 needs at least one candidate")
    best = top_k[0].candidate
    return EnsembleOutput(best.segment_id, best.text, Strategy.SELECTION_TOP1, (CandidateRef.of(best),), 1)


class Utility(str, Enum):
    CHRF_PP = "chrf_pp"
    BLEU_SENTENCE = "bleu_sentence"


UTILITY_MAX = 100.0

_UTILITIES: Mapping[Utility, Callable[[str, str], float]] = {
    Utility.CHRF_PP: sentence_chrf_pp,
    Utility.BLEU_SENTENCE: sentence_bleu,
}


@dataclass(frozen=True)
class MbrConfig:
    utility: Utility = Utility.CHRF_PP
    symmetrize: bool = False


def merge_mbr(
    hypotheses: Sequence[str],
    cfg: MbrConfig = MbrConfig(),
    utility: Callable[[str, str], float] | None = None,
) -> tuple[int, list[float]]:
    """Minimum-Bayes-risk selection.

    Each hypothesis is scored by its mean utility against every *other*
    hypothesis taken as pseudo-reference; the highest mean wins and ties go
    to the lowest index. ``utility(hyp, ref)`` overrides ``cfg.utility``.
    """
    if not hypotheses:
        raise ValueError("merge_mbr needs at least one hypothesis")
    n = len(hypotheses)
    if n == 1:
        return 0, [UTILITY_MAX]
    u = utility or _UTILITIES[cfg.utility]
    expected: list[float] = []
    for i in range(n):
        total = 0.0
        for j in range(n):
            if i == j:
                continue
            value = u(hypotheses[i], hypotheses[j])
            if cfg.symmetrize:
                value = 0.5 * (value + u(hypotheses[j], hypotheses[i]))
            total += value
        expected.append(total / (n - 1))
    best = 0
    for i in range(1, n):
        if expected[i] > expected[best]:
            best = i
    return best, expected


def mbr_output(segment_id: str, scored: Sequence[ScoredCandidate], cfg: MbrConfig = MbrConfig()) -> EnsembleOutput:
    """MBR over candidate texts, wrapped as an EnsembleOutput."""
    texts = [s.candidate.text for s in scored]
    index, _ = merge_mbr(texts, cfg)
    refs = tuple(CandidateRef.of(s.candidate) for s in scored)
    return EnsembleOutput(segment_id, texts[index], Strategy.MBR, refs, len(refs))
