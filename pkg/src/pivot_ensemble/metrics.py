"""Corpus and sentence BLEU / chrF++, self-contained.

BLEU follows the usual SacreBLEU protocol: mteval-13a tokenization, n-gram
counts aggregated over the whole corpus before the geometric mean, and a
brevity penalty. chrF++ averages character (1..6) and word (1..2) n-gram
precision and recall over the orders that are observable on both sides and
combines them into an F-beta score (beta=2).

All text is NFC-normalized first so scores are byte-stable across platforms.
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import InputMismatch, MetricError


class Tokenizer(str, Enum):
    THIRTEEN_A = "13a"
    WHITESPACE = "whitespace"


class Smoothing(str, Enum):
    NONE = "none"
    FLOOR_EPSILON = "floor"


@dataclass(frozen=True)
class BleuConfig:
    max_ngram: int = 4
    tokenizer: Tokenizer = Tokenizer.THIRTEEN_A
    smoothing: Smoothing = Smoothing.NONE
    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.max_ngram < 1:
            raise ValueError("max_ngram must be >= 1")
        if self.smoothing is Smoothing.FLOOR_EPSILON and self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class ChrfConfig:
    char_order: int = 6
    word_order: int = 2
    beta: float = 2.0

    def __post_init__(self) -> None:
        if self.char_order < 1 or self.word_order < 0 or self.beta <= 0:
            raise ValueError("need char_order >= 1, word_order >= 0, beta > 0")


# -- tokenization -----------------------------------------------------------

_13A_SYMBOLS = re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])")
_13A_PERIOD_COMMA_AFTER_NONDIGIT = re.compile(r"([^0-9])([\.,])")
_13A_PERIOD_COMMA_BEFORE_NONDIGIT = re.compile(r"([\.,])([^0-9])")
_13A_DASH_AFTER_DIGIT = re.compile(r"([0-9])(-)")


def tokenize_13a(text: str) -> list[str]:
    """mteval-v13a tokenization, returning the token list."""
    norm = unicodedata.normalize("NFC", text)
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    if "&" in norm:
        norm = norm.replace("&quot;", '"').replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">")
    norm = f" {norm} "
    norm = _13A_SYMBOLS.sub(r" \1 ", norm)
    norm = _13A_PERIOD_COMMA_AFTER_NONDIGIT.sub(r"\1 \2 ", norm)
    norm = _13A_PERIOD_COMMA_BEFORE_NONDIGIT.sub(r" \1 \2", norm)
    norm = _13A_DASH_AFTER_DIGIT.sub(r"\1 \2 ", norm)
    return norm.split()


def tokenize(text: str, tokenizer: Tokenizer = Tokenizer.THIRTEEN_A) -> list[str]:
    if tokenizer is Tokenizer.WHITESPACE:
        return unicodedata.normalize("NFC", text).split()
    return tokenize_13a(text)


# -- BLEU -------------------------------------------------------------------


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuStats:
    matches: tuple[int, ...]
    hyp_totals: tuple[int, ...]
    ref_totals: tuple[int, ...]
    hyp_len: int
    ref_len: int

    def __add__(self, other: BleuStats) -> BleuStats:
        return BleuStats(
            tuple(a + b for a, b in zip(self.matches, other.matches)),
            tuple(a + b for a, b in zip(self.hyp_totals, other.hyp_totals)),
            tuple(a + b for a, b in zip(self.ref_totals, other.ref_totals)),
            self.hyp_len + other.hyp_len,
            self.ref_len + other.ref_len,
        )


def bleu_stats(hypothesis: str, reference: str, cfg: BleuConfig = BleuConfig()) -> BleuStats:
    hyp = tokenize(hypothesis, cfg.tokenizer)
    ref = tokenize(reference, cfg.tokenizer)
    matches, hyp_totals, ref_totals = [], [], []
    for n in range(1, cfg.max_ngram + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        matches.append(sum((h & r).values()))
        hyp_totals.append(max(len(hyp) - n + 1, 0))
        ref_totals.append(max(len(ref) - n + 1, 0))
    return BleuStats(tuple(matches), tuple(hyp_totals), tuple(ref_totals), len(hyp), len(ref))


def bleu_from_stats(stats: BleuStats, cfg: BleuConfig = BleuConfig()) -> float:
    """Score in [0, 100] from aggregated sufficient statistics.

    An order at which neither side has any n-grams (every segment shorter
    than n) is vacuous and left out of the geometric mean, so identical
    short segments still score 100. An order at which only the hypothesis
    side is empty has precision 0.
    """
    if stats.hyp_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(cfg.max_ngram):
        hyp_total, ref_total, match = stats.hyp_totals[n], stats.ref_totals[n], stats.matches[n]
        if hyp_total == 0 and ref_total == 0:
            continue
        orders += 1
        if match == 0:
            if cfg.smoothing is Smoothing.FLOOR_EPSILON and hyp_total > 0:
                log_sum += math.log(cfg.epsilon / hyp_total)
                continue
            return 0.0
        log_sum += math.log(match / hyp_total)
    bp = 1.0 if stats.hyp_len >= stats.ref_len else math.exp(1.0 - stats.ref_len / stats.hyp_len)
    return min(100.0, 100.0 * bp * math.exp(log_sum / orders))


def _check_lengths(hypotheses: Sequence[str], references: Sequence[str]) -> None:
    if len(hypotheses) != len(references):
        raise InputMismatch(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise InputMismatch("empty corpus")


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str], cfg: BleuConfig = BleuConfig()) -> float:
    _check_lengths(hypotheses, references)
    if cfg.smoothing is not Smoothing.NONE:
        raise MetricError("corpus BLEU is computed without smoothing")
    total = bleu_stats(hypotheses[0], references[0], cfg)
    for h, r in zip(hypotheses[1:], references[1:]):
        total = total + bleu_stats(h, r, cfg)
    return bleu_from_stats(total, cfg)


SENTENCE_BLEU = BleuConfig(smoothing=Smoothing.FLOOR_EPSILON)


def sentence_bleu(hypothesis: str, reference: str, cfg: BleuConfig = SENTENCE_BLEU) -> float:
    """Floor-smoothed sentence BLEU, for diagnostics and as an MBR utility."""
    return bleu_from_stats(bleu_stats(hypothesis, reference, cfg), cfg)


# -- chrF++ -----------------------------------------------------------------

_PUNCTUATION = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")


def chrf_words(text: str) -> list[str]:
    """Whitespace words with one leading or trailing punctuation mark split off."""
    words: list[str] = []
    for w in text.split():
        if len(w) == 1:
            words.append(w)
        elif w[-1] in _PUNCTUATION:
            words += [w[:-1], w[-1]]
        elif w[0] in _PUNCTUATION:
            words += [w[0], w[1:]]
        else:
            words.append(w)
    return words


def _triple(h: Counter, r: Counter) -> list[int]:
    # hypothesis n-grams of an order the reference lacks entirely are not
    # counted, as in sacrebleu; this only matters once stats are summed
    hyp_count = sum(h.values()) if r else 0
    return [hyp_count, sum(r.values()), sum((h & r).values())]


def chrf_stats(hypothesis: str, reference: str, cfg: ChrfConfig = ChrfConfig()) -> list[int]:
    """Flat [hyp_count, ref_count, match] triples, char orders then word orders."""
    hypothesis = unicodedata.normalize("NFC", hypothesis)
    reference = unicodedata.normalize("NFC", reference)
    stats: list[int] = []
    hyp_chars = "".join(hypothesis.split())
    ref_chars = "".join(reference.split())
    for n in range(1, cfg.char_order + 1):
        h = Counter(hyp_chars[i : i + n] for i in range(len(hyp_chars) - n + 1))
        r = Counter(ref_chars[i : i + n] for i in range(len(ref_chars) - n + 1))
        stats += _triple(h, r)
    hyp_words, ref_words = chrf_words(hypothesis), chrf_words(reference)
    for n in range(1, cfg.word_order + 1):
        stats += _triple(_ngrams(hyp_words, n), _ngrams(ref_words, n))
    return stats


def chrf_from_stats(stats: Sequence[int], cfg: ChrfConfig = ChrfConfig()) -> float:
    precision = recall = 0.0
    effective = 0
    for i in range(0, len(stats), 3):
        hyp_count, ref_count, match = stats[i : i + 3]
        if hyp_count > 0 and ref_count > 0:
            precision += match / hyp_count
            recall += match / ref_count
            effective += 1
    if effective == 0:
        return 0.0
    precision /= effective
    recall /= effective
    if precision + recall == 0:
        return 0.0
    b2 = cfg.beta**2
    return 100.0 * (1 + b2) * precision * recall / (b2 * precision + recall)


def sentence_chrf_pp(hypothesis: str, reference: str, cfg: ChrfConfig = ChrfConfig()) -> float:
    return chrf_from_stats(chrf_stats(hypothesis, reference, cfg), cfg)


def corpus_chrf_pp(hypotheses: Sequence[str], references: Sequence[str], cfg: ChrfConfig = ChrfConfig()) -> float:
    """n-gram statistics are summed over segments, then averaged over orders."""
    _check_lengths(hypotheses, references)
    total = [0] * (3 * (cfg.char_order + cfg.word_order))
    for h, r in zip(hypotheses, references):
        for i, v in enumerate(chrf_stats(h, r, cfg)):
            total[i] += v
    return chrf_from_stats(total, cfg)
