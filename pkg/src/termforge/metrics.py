"""Translation quality metrics: BLEU, chrF3, METEOR-lite, and reports.

All metrics are corpus-level over already-tokenized segments, return values
in [0, 100], and are pure functions of their inputs.  METEOR-lite keeps the
exact-match alignment, recall-weighted harmonic mean, and fragmentation
penalty, but drops the stemming/synonym/paraphrase stages, so its absolute
values are not comparable with the reference tooling.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

Segment = Sequence[str]

BLEU_ORDER = 4
BLEU_EPSILON = 1e-9

CHRF_ORDER = 6
CHRF_BETA = 3.0

METEOR_ALPHA = 0.9  # weight on precision in P*R/(a*P + (1-a)*R); recall dominates
METEOR_GAMMA = 0.5
METEOR_THETA = 3.0


@dataclass
class MetricScore:
    bleu: float
    chrf3: float
    meteor: float
    segment_count: int


def _check_lengths(hypotheses, references):
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise ValueError("need at least one segment")


def _ngram_counts(tokens: Segment, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hypothesis: Segment, reference: Segment) -> tuple[list, list, int, int]:
    """Sufficient statistics for one segment: clipped matches and totals per
    order, plus hypothesis/reference lengths.  Exposed for weight tuning."""
    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    for n in range(1, BLEU_ORDER + 1):
        hyp_ngrams = _ngram_counts(hypothesis, n)
        ref_ngrams = _ngram_counts(reference, n)
        total[n - 1] = sum(hyp_ngrams.values())
        correct[n - 1] = sum(
            min(count, ref_ngrams.get(gram, 0)) for gram, count in hyp_ngrams.items()
        )
    return correct, total, len(hypothesis), len(reference)


def bleu_from_stats(
    correct: Sequence[int], total: Sequence[int], hyp_len: int, ref_len: int
) -> float:
    """Corpus BLEU-4 from accumulated statistics, with the epsilon count
    floor for orders that matched nothing; orders with no n-grams at all are
    excluded from the geometric mean (short-segment corpora)."""
    log_sum = 0.0
    effective = 0
    for n in range(BLEU_ORDER):
        if total[n] == 0:
            continue
        effective += 1
        log_sum += math.log(max(correct[n], BLEU_EPSILON) / total[n])
    if effective == 0 or hyp_len == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / effective)


def bleu(hypotheses: Sequence[Segment], references: Sequence[Segment]) -> float:
    """Corpus-level BLEU-4 with brevity penalty, in [0, 100]."""
    _check_lengths(hypotheses, references)
    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        c, t, hl, rl = bleu_stats(hyp, ref)
        for n in range(BLEU_ORDER):
            correct[n] += c[n]
            total[n] += t[n]
        hyp_len += hl
        ref_len += rl
    return bleu_from_stats(correct, total, hyp_len, ref_len)


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def chrf3(
    hypotheses: Sequence[Segment],
    references: Sequence[Segment],
    max_n: int = CHRF_ORDER,
    beta: float = CHRF_BETA,
) -> float:
    """Character n-gram F-beta (recall weighted beta^2 times), in [0, 100].

    Whitespace is excluded from the n-grams; precision and recall are
    micro-averaged over the corpus per order, then averaged over orders.
    """
    _check_lengths(hypotheses, references)
    hyp_counts = [0] * max_n
    ref_counts = [0] * max_n
    match_counts = [0] * max_n
    for hyp, ref in zip(hypotheses, references):
        hyp_text = "".join(hyp)
        ref_text = "".join(ref)
        for n in range(1, max_n + 1):
            hyp_ngrams = _char_ngrams(hyp_text, n)
            ref_ngrams = _char_ngrams(ref_text, n)
            hyp_counts[n - 1] += sum(hyp_ngrams.values())
            ref_counts[n - 1] += sum(ref_ngrams.values())
            match_counts[n - 1] += sum((hyp_ngrams & ref_ngrams).values())
    precision = recall = 0.0
    effective = 0
    for n in range(max_n):
        if hyp_counts[n] > 0 and ref_counts[n] > 0:
            precision += match_counts[n] / hyp_counts[n]
            recall += match_counts[n] / ref_counts[n]
            effective += 1
    if effective == 0:
        return 0.0
    precision /= effective
    recall /= effective
    if precision + recall == 0.0:
        return 0.0
    beta_sq = beta * beta
    score = (1 + beta_sq) * precision * recall / (beta_sq * precision + recall)
    return 100.0 * score


def _greedy_matches(hypothesis: Segment, reference: Segment):
    """One-to-one exact unigram alignment, hypothesis scanned left to right,
    each token taking the first unmatched identical reference token."""
    taken = [False] * len(reference)
    matches = []  # (hyp_pos, ref_pos)
    for i, tok in enumerate(hypothesis):
        for j, ref_tok in enumerate(reference):
            if not taken[j] and ref_tok == tok:
                taken[j] = True
                matches.append((i, j))
                break
    return matches


def _count_chunks(matches) -> int:
    chunks = 0
    prev = None
    for i, j in matches:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(hypotheses: Sequence[Segment], references: Sequence[Segment]) -> float:
    """Exact-match METEOR: recall-weighted F-mean times a fragmentation
    penalty, aggregated over the corpus, in [0, 100]."""
    _check_lengths(hypotheses, references)
    total_matches = total_hyp = total_ref = total_chunks = 0
    for hyp, ref in zip(hypotheses, references):
        matches = _greedy_matches(hyp, ref)
        matches.sort()
        total_matches += len(matches)
        total_chunks += _count_chunks(matches)
        total_hyp += len(hyp)
        total_ref += len(ref)
    if total_matches == 0 or total_hyp == 0 or total_ref == 0:
        return 0.0
    precision = total_matches / total_hyp
    recall = total_matches / total_ref
    f_mean = precision * recall / (
        METEOR_ALPHA * precision + (1.0 - METEOR_ALPHA) * recall
    )
    penalty = METEOR_GAMMA * (total_chunks / total_matches) ** METEOR_THETA
    return 100.0 * f_mean * (1.0 - penalty)


def score_all(hypotheses: Sequence[Segment], references: Sequence[Segment]) -> MetricScore:
    return MetricScore(
        bleu=bleu(hypotheses, references),
        chrf3=chrf3(hypotheses, references),
        meteor=meteor_lite(hypotheses, references),
        segment_count=len(hypotheses),
    )


def format_report(results: dict[str, dict[str, MetricScore]]) -> str:
    """Matrix-shaped text report: one block per metric, systems as rows and
    evaluation sets as columns."""
    if not results:
        raise ValueError("no results to report")
    eval_sets: list[str] = []
    for per_system in results.values():
        for name in per_system:
            if name not in eval_sets:
                eval_sets.append(name)
    width = max(
        [len(s) for s in results] + [len(e) for e in eval_sets] + [10]
    )
    blocks = []
    for metric in ("BLEU", "METEOR", "chrF3"):
        attr = {"BLEU": "bleu", "METEOR": "meteor", "chrF3": "chrf3"}[metric]
        lines = [metric]
        header = " " * width + "".join(f"{e:>{width + 2}}" for e in eval_sets)
        lines.append(header)
        for system, per_system in results.items():
            row = f"{system:<{width}}"
            for eval_set in eval_sets:
                score = per_system.get(eval_set)
                cell = "/" if score is None else f"{getattr(score, attr):.2f}"
                row += f"{cell:>{width + 2}}"
            lines.append(row)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def format_report_tsv(results: dict[str, dict[str, MetricScore]]) -> str:
    """Machine-readable export: ``system<TAB>evalset<TAB>metric<TAB>value``."""
    if not results:
        raise ValueError("no results to report")
    lines = []
    for system, per_system in results.items():
        for eval_set, score in per_system.items():
            for metric, value in (
                ("bleu", score.bleu),
                ("meteor", score.meteor),
                ("chrf3", score.chrf3),
            ):
                lines.append(f"{system}\t{eval_set}\t{metric}\t{value:.6f}")
    return "\n".join(lines) + "\n"
