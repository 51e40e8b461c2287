"""Phrase-based beam decoder with terminology injection, plus weight tuning.

The decoder is a coverage-stack search over the log-linear model (four
phrase features, language model, word penalty, distortion penalty).
Annotated spans alter the option set before search starts:

* ``exclusive``  - phrase-table options overlapping the span are dropped;
  only the provided candidates translate it.
* ``inclusive``  - provided candidates simply compete with the table.
* ``constraint`` - overlapping table options survive only when they cover
  the whole span and contain one of the provided translations.

With an unbounded stack the search is exact dynamic programming over
(coverage, LM context, last phrase end), which is what the equivalence
tests against a brute-force decoder rely on.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .align import PROB_FLOOR, PhraseTable
from .corpus import Normalization, ParallelCorpus, Tokens, tokenize
from .errors import MarkupError
from .lm import EOS, BOS, NgramLanguageModel
from .metrics import bleu_from_stats, bleu_stats

FEATURE_NAMES = (
    "phrase_fwd",
    "phrase_rev",
    "lex_fwd",
    "lex_rev",
    "lm",
    "word_penalty",
    "distortion",
)

EXCLUSIVE = "exclusive"
INCLUSIVE = "inclusive"
CONSTRAINT = "constraint"
MODES = (EXCLUSIVE, INCLUSIVE, CONSTRAINT)


@dataclass
class LogLinearWeights:
    values: np.ndarray

    @classmethod
    def default(cls) -> "LogLinearWeights":
        return cls(np.array([1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.5]))

    @classmethod
    def from_mapping(cls, mapping) -> "LogLinearWeights":
        return cls(np.array([float(mapping[name]) for name in FEATURE_NAMES]))

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, (float(v) for v in self.values)))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"expected {len(FEATURE_NAMES)} weights")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("weights must be finite")


def save_weights(weights: LogLinearWeights, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for name, value in weights.as_mapping().items():
            f.write(f"{name} {value!r}\n")


def load_weights(path) -> LogLinearWeights:
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, value = line.split()
            mapping[name] = float(value)
    return LogLinearWeights.from_mapping(mapping)


@dataclass
class SpanCandidate:
    tokens: Tokens
    prob: float = 1.0


@dataclass
class Span:
    start: int
    end: int
    candidates: list[SpanCandidate]
    mode: str = EXCLUSIVE


@dataclass
class AnnotatedInput:
    tokens: Tokens
    spans: list[Span] = field(default_factory=list)

    def validate(self) -> None:
        occupied: set[int] = set()
        for span in self.spans:
            if not 0 <= span.start < span.end <= len(self.tokens):
                raise MarkupError(
                    f"span [{span.start}, {span.end}) outside {len(self.tokens)} tokens"
                )
            if span.mode not in MODES:
                raise MarkupError(f"unknown injection mode {span.mode!r}")
            if not span.candidates:
                raise MarkupError("span without candidates")
            positions = set(range(span.start, span.end))
            if positions & occupied:
                raise MarkupError("overlapping spans are not allowed")
            occupied |= positions


_MARKUP_RE = re.compile(
    r'<n\s+translation="([^"]*)"(?:\s+prob="([^"]*)")?\s*>(.*?)</n>'
)
_SEP_RE = re.compile(r"\s*\|\|\s*")


def parse_markup(
    line: str,
    mode: str = EXCLUSIVE,
    normalization: Normalization = Normalization(),
) -> AnnotatedInput:
    """Parse a source line with ``<n translation=.. prob=..>span</n>`` markup.

    Both ``a||b`` and ``a || b`` separator spellings are accepted.  The given
    injection mode applies to every span (the markup itself carries none).
    """
    tokens: list[str] = []
    spans: list[Span] = []
    pos = 0
    for match in _MARKUP_RE.finditer(line):
        tokens.extend(tokenize(line[pos:match.start()], normalization))
        translations = _SEP_RE.split(match.group(1).strip())
        if not translations or translations == [""]:
            raise MarkupError("translation attribute is empty")
        if match.group(2) is not None:
            prob_strs = _SEP_RE.split(match.group(2).strip())
            if len(prob_strs) != len(translations):
                raise MarkupError(
                    f"{len(translations)} translations but {len(prob_strs)} probs"
                )
            try:
                probs = [float(p) for p in prob_strs]
            except ValueError as exc:
                raise MarkupError(f"bad probability: {exc}") from None
        else:
            probs = [1.0] * len(translations)
        span_tokens = tokenize(match.group(3), normalization)
        if not span_tokens:
            raise MarkupError("empty span text")
        start = len(tokens)
        tokens.extend(span_tokens)
        candidates = [
            SpanCandidate(tokenize(text, normalization), prob)
            for text, prob in zip(translations, probs)
        ]
        spans.append(Span(start, len(tokens), candidates, mode))
        pos = match.end()
    tokens.extend(tokenize(line[pos:], normalization))
    annotated = AnnotatedInput(tuple(tokens), spans)
    annotated.validate()
    return annotated


def format_markup(annotated: AnnotatedInput) -> str:
    """Serialize back to the markup format (inverse of :func:`parse_markup`)."""
    parts: list[str] = []
    pos = 0
    for span in sorted(annotated.spans, key=lambda s: s.start):
        parts.extend(annotated.tokens[pos:span.start])
        translations = "||".join(" ".join(c.tokens) for c in span.candidates)
        probs = " || ".join(str(float(c.prob)) for c in span.candidates)
        text = " ".join(annotated.tokens[span.start:span.end])
        parts.append(f'<n translation="{translations}" prob="{probs}">{text}</n>')
        pos = span.end
    parts.extend(annotated.tokens[pos:])
    return " ".join(parts)


@dataclass
class BeamConfig:
    stack_size: int = 100
    distortion_limit: int = 6


@dataclass
class TracedPhrase:
    source_span: tuple[int, int]
    target: Tokens
    log_features: tuple[float, float, float, float]


@dataclass
class DecodeResult:
    tokens: Tokens
    score: float
    features: np.ndarray  # accumulated 7-dim feature vector
    trace: list[TracedPhrase]


@dataclass(frozen=True)
class _Option:
    start: int
    end: int
    target: Tokens
    log_feats: tuple[float, float, float, float]


def _log_feats(features) -> tuple[float, float, float, float]:
    return tuple(math.log(min(max(float(p), PROB_FLOOR), 1.0)) for p in features)


def _span_option(span: Span, cand: SpanCandidate) -> _Option:
    # candidate probability enters the forward-phrase slot; the reverse
    # phrase feature is neutral and both lexical slots mirror the probability
    return _Option(
        span.start, span.end, tuple(cand.tokens),
        _log_feats((cand.prob, 1.0, cand.prob, cand.prob)),
    )


def _overlaps(option: _Option, span: Span) -> bool:
    return option.start < span.end and span.start < option.end


def _covers(option: _Option, span: Span) -> bool:
    return option.start <= span.start and option.end >= span.end


def _contains_candidate(option: _Option, span: Span) -> bool:
    for cand in span.candidates:
        needle = tuple(cand.tokens)
        m = len(needle)
        if m == 0 or m > len(option.target):
            continue
        if any(
            option.target[i:i + m] == needle
            for i in range(len(option.target) - m + 1)
        ):
            return True
    return False


def build_options(
    annotated: AnnotatedInput, table: PhraseTable
) -> list[_Option]:
    """Translation options for one input after injection-mode filtering,
    including verbatim pass-through for otherwise uncovered tokens."""
    tokens = annotated.tokens
    options: list[_Option] = []
    max_len = table.max_phrase_len
    for i in range(len(tokens)):
        for j in range(i + 1, min(i + max_len, len(tokens)) + 1):
            for opt in table.options(tokens[i:j]):
                options.append(_Option(i, j, opt.target, _log_feats(opt.features)))

    for span in annotated.spans:
        if span.mode == EXCLUSIVE:
            options = [o for o in options if not _overlaps(o, span)]
        elif span.mode == CONSTRAINT:
            options = [
                o
                for o in options
                if not _overlaps(o, span)
                or (_covers(o, span) and _contains_candidate(o, span))
            ]
        options.extend(_span_option(span, cand) for cand in span.candidates)

    covered = set()
    for opt in options:
        covered.update(range(opt.start, opt.end))
    for pos, tok in enumerate(tokens):
        if pos not in covered:
            # OOV pass-through: copy the source token at no feature cost
            options.append(_Option(pos, pos + 1, (tok,), (0.0, 0.0, 0.0, 0.0)))
    return options


@dataclass
class _Hypothesis:
    score: float
    features: np.ndarray
    coverage: int
    lm_ctx: tuple[str, ...]
    last_end: int
    backptr: "_Hypothesis | None"
    option: _Option | None


def _extend(
    hyp: _Hypothesis,
    option: _Option,
    lm: NgramLanguageModel,
    weights: np.ndarray,
    lm_order: int,
) -> _Hypothesis:
    delta = np.zeros(len(FEATURE_NAMES))
    delta[0:4] = option.log_feats
    ctx = list(hyp.lm_ctx)
    lm_delta = 0.0
    for tok in option.target:
        lm_delta += lm.cond_logprob(tok, ctx)
        ctx.append(tok)
    delta[4] = lm_delta
    delta[5] = -float(len(option.target))
    delta[6] = -abs(option.start - hyp.last_end)
    features = hyp.features + delta
    return _Hypothesis(
        score=hyp.score + float(weights @ delta),
        features=features,
        coverage=hyp.coverage | _mask(option),
        lm_ctx=tuple(ctx[-(lm_order - 1):]) if lm_order > 1 else (),
        last_end=option.end,
        backptr=hyp,
        option=option,
    )


def _mask(option: _Option) -> int:
    return ((1 << (option.end - option.start)) - 1) << option.start


def _search(
    annotated: AnnotatedInput,
    table: PhraseTable,
    lm: NgramLanguageModel,
    weights: LogLinearWeights,
    beam: BeamConfig,
) -> dict[Tokens, _Hypothesis]:
    """Coverage-stack beam search; returns completed hypotheses by target."""
    annotated.validate()
    w = weights.values
    tokens = annotated.tokens
    n = len(tokens)
    options = build_options(annotated, table)
    options_by_start: list[list[_Option]] = [[] for _ in range(max(n, 1))]
    for opt in options:
        options_by_start[opt.start].append(opt)

    init = _Hypothesis(
        score=0.0,
        features=np.zeros(len(FEATURE_NAMES)),
        coverage=0,
        lm_ctx=(BOS,),
        last_end=0,
        backptr=None,
        option=None,
    )
    full = (1 << n) - 1
    finals: dict[Tokens, _Hypothesis] = {}

    if n == 0:
        eos = lm.cond_logprob(EOS, [BOS])
        delta = np.zeros(len(FEATURE_NAMES))
        delta[4] = eos
        finals[()] = _Hypothesis(
            float(w @ delta), delta, 0, (), 0, None, None
        )
        return finals

    stacks: list[dict] = [{} for _ in range(n + 1)]
    stacks[0][(0, (BOS,), 0)] = init

    for k in range(n):
        ranked = sorted(
            stacks[k].items(), key=lambda kv: (-kv[1].score, kv[0])
        )[: beam.stack_size]
        for _, hyp in ranked:
            for start in range(n):
                if hyp.coverage >> start & 1:
                    continue
                if abs(start - hyp.last_end) > beam.distortion_limit:
                    continue
                for opt in options_by_start[start]:
                    if hyp.coverage & _mask(opt):
                        continue
                    new = _extend(hyp, opt, lm, w, lm.order)
                    covered = k + (opt.end - opt.start)
                    if new.coverage == full:
                        eos_delta = np.zeros(len(FEATURE_NAMES))
                        eos_delta[4] = lm.cond_logprob(EOS, new.lm_ctx)
                        done = _Hypothesis(
                            new.score + float(w @ eos_delta),
                            new.features + eos_delta,
                            new.coverage,
                            new.lm_ctx,
                            new.last_end,
                            new.backptr,
                            new.option,
                        )
                        target = _target_tokens(done)
                        old = finals.get(target)
                        if old is None or done.score > old.score:
                            finals[target] = done
                    else:
                        key = (new.coverage, new.lm_ctx, new.last_end)
                        old = stacks[covered].get(key)
                        if old is None or new.score > old.score:
                            stacks[covered][key] = new
    return finals


def _target_tokens(hyp: _Hypothesis) -> Tokens:
    parts: list[Tokens] = []
    node = hyp
    while node is not None and node.option is not None:
        parts.append(node.option.target)
        node = node.backptr
    return tuple(tok for phrase in reversed(parts) for tok in phrase)


def _to_result(hyp: _Hypothesis) -> DecodeResult:
    trace: list[TracedPhrase] = []
    node = hyp
    while node is not None and node.option is not None:
        trace.append(
            TracedPhrase(
                (node.option.start, node.option.end),
                node.option.target,
                node.option.log_feats,
            )
        )
        node = node.backptr
    trace.reverse()
    return DecodeResult(
        tokens=_target_tokens(hyp),
        score=hyp.score,
        features=hyp.features,
        trace=trace,
    )


def _as_annotated(source) -> AnnotatedInput:
    if isinstance(source, AnnotatedInput):
        return source
    return AnnotatedInput(tuple(source), [])


def _search_complete(annotated, table, lm, weights, beam):
    finals = _search(annotated, table, lm, weights, beam)
    if not finals:
        # aggressive pruning can strand the search on dead ends; a monotone
        # completion always exists, so an unpruned pass must find something
        relaxed = BeamConfig(
            stack_size=max(beam.stack_size * 10, 1000),
            distortion_limit=max(beam.distortion_limit, len(annotated.tokens)),
        )
        finals = _search(annotated, table, lm, weights, relaxed)
    return finals


def decode(
    source,
    table: PhraseTable,
    lm: NgramLanguageModel,
    weights: LogLinearWeights,
    beam: BeamConfig = BeamConfig(),
) -> DecodeResult:
    """Translate one (possibly annotated) source into the best hypothesis.

    Source tokens with no translation options pass through verbatim, so the
    decoder never fails on OOV input.
    """
    finals = _search_complete(_as_annotated(source), table, lm, weights, beam)
    best = max(finals.items(), key=lambda kv: (kv[1].score, kv[0]))
    return _to_result(best[1])


def decode_nbest(
    source,
    table: PhraseTable,
    lm: NgramLanguageModel,
    weights: LogLinearWeights,
    beam: BeamConfig = BeamConfig(),
    n: int = 100,
) -> list[DecodeResult]:
    finals = _search_complete(_as_annotated(source), table, lm, weights, beam)
    ranked = sorted(finals.items(), key=lambda kv: (-kv[1].score, kv[0]))
    return [_to_result(hyp) for _, hyp in ranked[:n]]


# ---------------------------------------------------------------------------
# MERT-style tuning: iterated n-best generation + exact per-dimension line
# search on corpus BLEU, with random restarts.
# ---------------------------------------------------------------------------


def _upper_envelope(lines: list[tuple[float, float, int]]):
    """Upper envelope of y = a + b*x.

    ``lines`` holds (slope, intercept, id); returns [(x_from, id)] segments
    ordered by x.  Ids are stable under ties so the search is deterministic.
    """
    lines = sorted(lines, key=lambda t: (t[0], t[1], t[2]))
    # for equal slopes only the highest intercept can win
    dedup: list[tuple[float, float, int]] = []
    for b, a, idx in lines:
        if dedup and dedup[-1][0] == b:
            if a <= dedup[-1][1]:
                continue
            dedup.pop()
        dedup.append((b, a, idx))
    hull: list[tuple[float, float, int]] = []
    breaks: list[float] = []
    for b, a, idx in dedup:
        while hull:
            b0, a0, _ = hull[-1]
            # intersection with the current top line
            x = (a0 - a) / (b - b0)
            if breaks and x <= breaks[-1]:
                hull.pop()
                breaks.pop()
            else:
                breaks.append(x)
                hull.append((b, a, idx))
                break
        if not hull:
            hull.append((b, a, idx))
    return [(float("-inf") if i == 0 else breaks[i - 1], idx)
            for i, (_, _, idx) in enumerate(hull)]


def _line_search_dim(pools, stats, weights, dim):
    """Best value for one weight dimension by sweeping envelope breakpoints.

    Returns (best_lambda, best_bleu).  Among intervals tied on BLEU the
    widest wins and its midpoint is returned, which keeps the chosen weight
    away from decision boundaries.  ``pools`` maps sentence -> list of
    feature vectors; ``stats`` holds the matching BLEU statistics.
    """
    events: list[tuple[float, int, int]] = []  # (x, sentence, hyp index)
    active: list[int] = []
    for s_idx, feats in enumerate(pools):
        lines = []
        for h_idx, f in enumerate(feats):
            a = float(np.dot(weights, f) - weights[dim] * f[dim])
            b = float(f[dim])
            lines.append((b, a, h_idx))
        segments = _upper_envelope(lines)
        active.append(segments[0][1])
        for x, idx in segments[1:]:
            events.append((x, s_idx, idx))
    events.sort()

    def corpus_stats():
        correct, total, hyp_len, ref_len = [0] * 4, [0] * 4, 0, 0
        for s_idx, h_idx in enumerate(active):
            c, t, hl, rl = stats[s_idx][h_idx]
            for i in range(4):
                correct[i] += c[i]
                total[i] += t[i]
            hyp_len += hl
            ref_len += rl
        return correct, total, hyp_len, ref_len

    current_bleu = bleu_from_stats(*corpus_stats())
    if not events:
        return float(weights[dim]), current_bleu
    edge = 2.0  # pseudo-width for the unbounded end intervals
    best = (current_bleu, edge, min(events[0][0] - edge / 2, float(weights[dim])))
    for i, (x, s_idx, h_idx) in enumerate(events):
        active[s_idx] = h_idx
        right = events[i + 1][0] if i + 1 < len(events) else x + edge
        score = bleu_from_stats(*corpus_stats())
        cand = (score, right - x, (x + right) / 2.0)
        if (cand[0], cand[1]) > (best[0] + 1e-12, best[1]):
            best = cand
        elif abs(cand[0] - best[0]) <= 1e-12 and cand[1] > best[1]:
            best = (best[0], cand[1], cand[2])
    return best[2], best[0]


def _pool_bleu(pools, stats, weights):
    correct, total, hyp_len, ref_len = [0] * 4, [0] * 4, 0, 0
    for s_idx, feats in enumerate(pools):
        scores = [float(np.dot(weights, f)) for f in feats]
        h_idx = max(range(len(scores)), key=lambda i: (scores[i], -i))
        c, t, hl, rl = stats[s_idx][h_idx]
        for i in range(4):
            correct[i] += c[i]
            total[i] += t[i]
        hyp_len += hl
        ref_len += rl
    return bleu_from_stats(correct, total, hyp_len, ref_len)


def _optimize_on_pool(pools, stats, start, max_passes=8):
    """Coordinate ascent on pool BLEU, taking the steepest dimension per
    pass (first-improvement greedy is prone to knife-edge optima)."""
    weights = start.copy()
    best = _pool_bleu(pools, stats, weights)
    for _ in range(max_passes):
        best_dim, best_x, best_score = None, None, best
        for dim in range(len(FEATURE_NAMES)):
            x, score = _line_search_dim(pools, stats, weights, dim)
            if score > best_score + 1e-9:
                best_dim, best_x, best_score = dim, x, score
        if best_dim is None:
            break
        weights[best_dim] = best_x
        best = best_score
    peak = float(np.abs(weights).max())
    if peak > 0:
        weights = weights / peak
    return weights, _pool_bleu(pools, stats, weights)


def _corpus_bleu_decoding(dev, table, lm, weights, beam):
    hyps = [decode(src, table, lm, weights, beam).tokens for src, _ in dev.pairs]
    refs = [ref for _, ref in dev.pairs]
    correct, total, hyp_len, ref_len = [0] * 4, [0] * 4, 0, 0
    for hyp, ref in zip(hyps, refs):
        c, t, hl, rl = bleu_stats(hyp, ref)
        for i in range(4):
            correct[i] += c[i]
            total[i] += t[i]
        hyp_len += hl
        ref_len += rl
    return bleu_from_stats(correct, total, hyp_len, ref_len)


def mert_tune(
    dev: ParallelCorpus,
    table: PhraseTable,
    lm: NgramLanguageModel,
    init: LogLinearWeights,
    restarts: int = 3,
    iterations: int = 4,
    nbest: int = 100,
    seed: int = 42,
    beam: BeamConfig = BeamConfig(),
) -> LogLinearWeights:
    """Tune log-linear weights to maximize corpus BLEU on a development set.

    Never returns weights that decode the dev set worse than ``init``: the
    final step re-decodes with both and keeps the better.
    """
    if not dev.pairs:
        raise ValueError("development set is empty")
    rng = np.random.default_rng(seed)
    pools: list[list[np.ndarray]] = [[] for _ in dev.pairs]
    stats: list[list] = [[] for _ in dev.pairs]
    seen: list[set[Tokens]] = [set() for _ in dev.pairs]

    best_weights = init.values.copy()
    best_real = _corpus_bleu_decoding(dev, table, lm, init, beam)
    current = init.values.copy()
    for iteration in range(iterations):
        # n-best hypotheses under the current weights join the pool; weight
        # vectors that looked good on the pool but decode poorly thereby
        # contribute the counterexamples that correct the next line search
        grew = False
        for s_idx, (src, ref) in enumerate(dev.pairs):
            for result in decode_nbest(
                src, table, lm, LogLinearWeights(current), beam, nbest
            ):
                if result.tokens in seen[s_idx]:
                    continue
                seen[s_idx].add(result.tokens)
                pools[s_idx].append(result.features)
                stats[s_idx].append(bleu_stats(result.tokens, ref))
                grew = True
        if not grew and iteration > 0:
            break
        starts = [current.copy(), best_weights.copy()]
        for _ in range(restarts):
            starts.append(rng.uniform(-1.0, 1.0, len(FEATURE_NAMES)))
        best_w, best_score = None, float("-inf")
        for start in starts:
            w, score = _optimize_on_pool(pools, stats, start)
            if score > best_score + 1e-12:
                best_w, best_score = w, score
        current = best_w
        real = _corpus_bleu_decoding(
            dev, table, lm, LogLinearWeights(current), beam
        )
        if real > best_real + 1e-12:
            best_real = real
            best_weights = current.copy()
    return LogLinearWeights(best_weights)
