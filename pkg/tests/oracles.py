"""Brute-force reference implementations used only by the tests.

Written from the metric definitions with no code shared with the package:
plain loops, explicit n-gram lists, products instead of log sums.
"""

from __future__ import annotations

import string


def ngram_list(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def clipped_matches(hyp_ngrams, ref_ngrams):
    matched = 0
    for g in set(hyp_ngrams):
        matched += min(hyp_ngrams.count(g), ref_ngrams.count(g))
    return matched


def oracle_corpus_bleu(hyps, refs, max_n=4):
    """Whitespace-tokenized corpus BLEU without smoothing.

    Orders where neither side has any n-gram are skipped.
    """
    hyp_len = sum(len(h.split()) for h in hyps)
    ref_len = sum(len(r.split()) for r in refs)
    if hyp_len == 0:
        return 0.0
    product = 1.0
    used = 0
    for n in range(1, max_n + 1):
        total = 0
        ref_total = 0
        match = 0
        for h, r in zip(hyps, refs):
            hg = ngram_list(h.split(), n)
            rg = ngram_list(r.split(), n)
            total += len(hg)
            ref_total += len(rg)
            match += clipped_matches(hg, rg)
        if total == 0 and ref_total == 0:
            continue
        if match == 0:
            return 0.0
        product *= match / total
        used += 1
    geo = product ** (1.0 / used)
    if hyp_len < ref_len:
        bp = 2.718281828459045 ** (1 - ref_len / hyp_len)
    else:
        bp = 1.0
    return 100 * bp * geo


def chrf_word_tokens(sentence):
    """Split a leading or trailing punctuation mark off every token."""
    out = []
    for tok in sentence.split():
        if len(tok) == 1:
            out.append(tok)
        elif tok[-1] in string.punctuation:
            out += [tok[:-1], tok[-1]]
        elif tok[0] in string.punctuation:
            out += [tok[0], tok[1:]]
        else:
            out.append(tok)
    return out


def chrf_counts(hyp, ref, char_order=6, word_order=2):
    """[(hyp_total, ref_total, matches)] for char orders then word orders.

    A hypothesis total is reported as 0 when the reference has no n-gram of
    that order.
    """
    rows = []
    hc = "".join(hyp.split())
    rc = "".join(ref.split())
    for n in range(1, char_order + 1):
        hg = [hc[i : i + n] for i in range(len(hc) - n + 1)]
        rg = [rc[i : i + n] for i in range(len(rc) - n + 1)]
        rows.append((len(hg) if rg else 0, len(rg), clipped_matches(hg, rg)))
    hw = chrf_word_tokens(hyp)
    rw = chrf_word_tokens(ref)
    for n in range(1, word_order + 1):
        hg = ngram_list(hw, n)
        rg = ngram_list(rw, n)
        rows.append((len(hg) if rg else 0, len(rg), clipped_matches(hg, rg)))
    return rows


def oracle_chrf_from_rows(rows, beta=2.0):
    precisions = []
    recalls = []
    for hyp_total, ref_total, match in rows:
        if hyp_total > 0 and ref_total > 0:
            precisions.append(match / hyp_total)
            recalls.append(match / ref_total)
    if not precisions:
        return 0.0
    p = sum(precisions) / len(precisions)
    r = sum(recalls) / len(recalls)
    if p + r == 0:
        return 0.0
    return 100 * (1 + beta**2) * p * r / (beta**2 * p + r)


def oracle_sentence_chrf(hyp, ref):
    return oracle_chrf_from_rows(chrf_counts(hyp, ref))


def oracle_corpus_chrf(hyps, refs):
    summed = None
    for h, r in zip(hyps, refs):
        rows = chrf_counts(h, r)
        if summed is None:
            summed = rows
        else:
            summed = [tuple(a + b for a, b in zip(x, y)) for x, y in zip(summed, rows)]
    return oracle_chrf_from_rows(summed)


def oracle_mbr(hyps, utility):
    """Index maximizing the mean utility against the other hypotheses."""
    if len(hyps) == 1:
        return 0
    best_index = None
    best_value = None
    for i in range(len(hyps)):
        values = []
        for j in range(len(hyps)):
            if j != i:
                values.append(utility(hyps[i], hyps[j]))
        value = sum(values) / len(values)
        if best_value is None or value > best_value:
            best_index, best_value = i, value
    return best_index
