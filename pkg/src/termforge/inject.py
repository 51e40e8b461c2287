"""Rank external translation candidates by domain fit and annotate inputs.

Candidate scores come either uniformly (1.0 everywhere) or from the cosine
similarity between a domain vocabulary vector and each candidate's abstract
text, both as L2-normalized term-frequency bags.  Ranked candidates land in
decoder spans via longest-match scanning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Candidate, Lexicon, LexiconEntry, Normalization, Tokens, tokenize
from .smt import AnnotatedInput, EXCLUSIVE, Span, SpanCandidate

UNIFORM = "uniform"
COSINE = "cosine"


@dataclass
class VocabVector:
    """Sparse L2-normalized term-frequency vector."""

    weights: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "VocabVector":
        raw: dict[str, float] = {}
        for tok in tokens:
            raw[tok] = raw.get(tok, 0.0) + 1.0
        norm = math.sqrt(sum(v * v for v in raw.values()))
        if norm > 0:
            raw = {k: v / norm for k, v in raw.items()}
        return cls(raw)

    @classmethod
    def from_text(
        cls, text: str, normalization: Normalization = Normalization()
    ) -> "VocabVector":
        return cls.from_tokens(tokenize(text, normalization))

    @property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.weights.values()))


def cosine_score(x: VocabVector, y: VocabVector) -> float:
    """cos(x, y) = x.y / (|x| |y|); empty vectors score 0."""
    if not x.weights or not y.weights:
        return 0.0
    if len(x.weights) > len(y.weights):
        x, y = y, x
    dot = sum(w * y.weights.get(tok, 0.0) for tok, w in x.weights.items())
    denom = x.norm * y.norm
    if denom == 0.0:
        return 0.0
    return min(max(dot / denom, 0.0), 1.0)


def domain_vector(
    corpus_or_terms, normalization: Normalization = Normalization()
) -> VocabVector:
    """Domain vocabulary vector from a term list (token sequences or text)."""
    tokens: list[str] = []
    for item in corpus_or_terms:
        if isinstance(item, str):
            tokens.extend(tokenize(item, normalization))
        else:
            tokens.extend(item)
    return VocabVector.from_tokens(tokens)


def rank_candidates(
    domain_vocab: VocabVector, lexicon: Lexicon, mode: str = UNIFORM
) -> Lexicon:
    """Return a new lexicon with candidate scores set by the ranking mode.

    ``uniform`` sets every score to 1.0; ``cosine`` scores each candidate by
    the similarity of its entry's abstract to the domain vocabulary, with
    score 0 for entries lacking an abstract.
    """
    if mode not in (UNIFORM, COSINE):
        raise ValueError(f"unknown ranking mode {mode!r}")
    entries = []
    for entry in lexicon.entries:
        if mode == UNIFORM:
            score = 1.0
        elif entry.abstract is None:
            score = 0.0
        else:
            score = cosine_score(domain_vocab, VocabVector.from_text(entry.abstract))
        entries.append(
            LexiconEntry(
                entry.source_term,
                [Candidate(c.tokens, score) for c in entry.candidates],
                entry.abstract,
            )
        )
    return Lexicon(entries)


def annotate(
    source: Sequence[str],
    lexicon: Lexicon,
    mode: str = EXCLUSIVE,
) -> AnnotatedInput:
    """Longest-match left-to-right scan turning lexicon hits into spans.

    A match consumes its tokens, so later overlapping matches are skipped;
    spans come out non-overlapping and in ascending order.
    """
    tokens = tuple(source)
    by_source = lexicon.by_source()
    max_len = max((len(term) for term in by_source), default=0)
    spans: list[Span] = []
    i = 0
    while i < len(tokens):
        matched = None
        for k in range(min(max_len, len(tokens) - i), 0, -1):
            entry = by_source.get(tokens[i:i + k])
            if entry is not None:
                matched = (k, entry)
                break
        if matched is None:
            i += 1
            continue
        k, entry = matched
        candidates = [
            SpanCandidate(c.tokens, 1.0 if c.score is None else c.score)
            for c in entry.candidates
        ]
        spans.append(Span(i, i + k, candidates, mode))
        i += k
    return AnnotatedInput(tokens, spans)
