"""Byte-pair-encoding subword segmentation: learning, applying, reversing."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EmptyCorpusError, SubwordFormatError

END_OF_WORD = "</w>"
DEFAULT_MARKER = "@@"


@dataclass
class BpeModel:
    """Ordered merge list; rank 0 is the first (most frequent) merge."""

    merges: list[tuple[str, str]]
    marker: str = DEFAULT_MARKER
    _cache: dict[str, tuple[str, ...]] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def num_merges(self) -> int:
        return len(self.merges)


def _pair_counts(vocab: dict[tuple[str, ...], int]) -> Counter:
    counts: Counter = Counter()
    for symbols, freq in vocab.items():
        for left, right in zip(symbols, symbols[1:]):
            if right != END_OF_WORD:  # the boundary itself is not mergeable
                counts[(left, right)] += freq
    return counts


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    left, right = pair
    merged = left + right
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i < len(symbols) - 1 and symbols[i] == left and symbols[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def learn_bpe(
    corpus: Mapping[str, int] | Iterable[Sequence[str]],
    num_merges: int,
    marker: str = DEFAULT_MARKER,
) -> BpeModel:
    """Learn merges from a word-frequency map or an iterable of token sequences.

    Each word is a character sequence plus an end-of-word symbol; every merge
    is the currently most frequent adjacent pair, ties broken by lexicographic
    order of (left, right), which makes learning fully deterministic.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    if isinstance(corpus, Mapping):
        freqs = dict(corpus)
    else:
        freqs = {}
        for sent in corpus:
            for tok in sent:
                freqs[tok] = freqs.get(tok, 0) + 1
    if not freqs:
        raise EmptyCorpusError("cannot learn BPE from an empty vocabulary")

    vocab = {tuple(word) + (END_OF_WORD,): f for word, f in freqs.items()}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        counts = _pair_counts(vocab)
        if not counts:
            break
        best_count = max(counts.values())
        best = min(p for p, c in counts.items() if c == best_count)
        merges.append(best)
        vocab = {_merge_word(sym, best): f for sym, f in vocab.items()}
    return BpeModel(merges, marker=marker)


def _segment_word(model: BpeModel, word: str) -> tuple[str, ...]:
    cached = model._cache.get(word)
    if cached is not None:
        return cached
    symbols = tuple(word) + (END_OF_WORD,)
    # Replay merges in rank order until a full pass changes nothing.
    changed = True
    while changed and len(symbols) > 1:
        changed = False
        for pair in model.merges:
            if len(symbols) < 2:
                break
            merged = _merge_word(symbols, pair)
            if merged != symbols:
                symbols = merged
                changed = True
    pieces = list(symbols)
    if pieces[-1] == END_OF_WORD:
        pieces.pop()
    elif pieces[-1].endswith(END_OF_WORD):
        pieces[-1] = pieces[-1][: -len(END_OF_WORD)]
    out = tuple(
        piece + model.marker if i < len(pieces) - 1 else piece
        for i, piece in enumerate(pieces)
    )
    model._cache[word] = out
    return out


def apply_bpe(model: BpeModel, tokens: Sequence[str]) -> tuple[str, ...]:
    """Segment each token into subwords; non-final pieces carry the marker.

    Characters unseen at learning time simply stay single-character pieces.
    """
    out: list[str] = []
    for tok in tokens:
        out.extend(_segment_word(model, tok))
    return tuple(out)


def decode_bpe(subwords: Sequence[str], marker: str = DEFAULT_MARKER) -> tuple[str, ...]:
    """Invert :func:`apply_bpe` by joining marker-suffixed pieces.

    Raises :class:`SubwordFormatError` if the sequence ends on a continuation.
    """
    out: list[str] = []
    pending = ""
    for sub in subwords:
        if sub.endswith(marker):
            pending += sub[: -len(marker)]
        else:
            out.append(pending + sub)
            pending = ""
    if pending:
        raise SubwordFormatError("dangling continuation marker at end of sequence")
    return tuple(out)


def save_bpe(model: BpeModel, path) -> None:
    """Write the merge file: header line, then one ``left right`` pair per rank."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#bpe v1 merges={model.num_merges} marker={model.marker}\n")
        for left, right in model.merges:
            f.write(f"{left} {right}\n")


def load_bpe(path) -> BpeModel:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if not header.startswith("#bpe v1 "):
            raise SubwordFormatError(f"bad merge file header: {header!r}")
        fields = dict(
            part.split("=", 1) for part in header[len("#bpe v1 "):].split() if "=" in part
        )
        marker = fields.get("marker", DEFAULT_MARKER)
        merges = []
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise SubwordFormatError(f"line {lineno}: expected 'left right'")
            merges.append((parts[0], parts[1]))
        declared = fields.get("merges")
        if declared is not None and int(declared) != len(merges):
            raise SubwordFormatError(
                f"header declares {declared} merges, file has {len(merges)}"
            )
    return BpeModel(merges, marker=marker)
