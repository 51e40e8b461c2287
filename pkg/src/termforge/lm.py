"""N-gram language model with interpolated Kneser-Ney smoothing.

Per-context distributions sum to one by construction: the discounted mass
at each order is exactly the interpolation weight handed to the next order
down, and the unigram level interpolates with a uniform distribution over
the prediction set (vocabulary + end-of-sentence + unknown), so unknown
tokens always receive finite probability.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyCorpusError, ModelFormatError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

_LOG10 = math.log(10.0)


@dataclass
class NgramLanguageModel:
    """ARPA-style tables: natural-log probabilities and backoff weights."""

    order: int
    logprob: dict[tuple[str, ...], float]
    backoff: dict[tuple[str, ...], float]
    vocab: frozenset[str]
    prediction_set: frozenset[str]

    def cond_logprob(self, word: str, context: Sequence[str]) -> float:
        """log P(word | context) with standard backoff recursion."""
        if word not in self.prediction_set:
            word = UNK
        ctx = tuple(
            tok if tok in self.vocab else UNK
            for tok in context[max(0, len(context) - (self.order - 1)):]
        )
        acc = 0.0
        while True:
            prob = self.logprob.get(ctx + (word,))
            if prob is not None:
                return acc + prob
            if not ctx:
                # Every prediction-set member has a unigram, including UNK.
                return acc + self.logprob[(word,)]
            acc += self.backoff.get(ctx, 0.0)
            ctx = ctx[1:]

    def score(self, tokens: Sequence[str]) -> float:
        """Sentence log-probability including the end-of-sentence event."""
        history: list[str] = [BOS]
        total = 0.0
        for tok in tokens:
            total += self.cond_logprob(tok, history)
            history.append(tok)
        total += self.cond_logprob(EOS, history)
        return total


def _discount(values: Iterable[int]) -> float:
    """Absolute discount from count-of-counts, clamped inside (0, 1)."""
    n1 = n2 = 0
    for v in values:
        if v == 1:
            n1 += 1
        elif v == 2:
            n2 += 1
    if n1 + 2 * n2 == 0:
        return 0.5
    return min(max(n1 / (n1 + 2 * n2), 1e-3), 1.0 - 1e-3)


def train_lm(sentences: Iterable[Sequence[str]], order: int = 5) -> NgramLanguageModel:
    """Train an interpolated Kneser-Ney model of the given order.

    Sentences shorter than the order simply contribute no high-order grams;
    scoring backs off to whatever orders exist, so small corpora degrade
    gracefully instead of failing.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    counts: list[Counter] = [Counter() for _ in range(order + 1)]  # index = n
    n_sents = 0
    for sent in sentences:
        n_sents += 1
        seq = (BOS,) + tuple(sent) + (EOS,)
        for n in range(1, order + 1):
            for i in range(len(seq) - n + 1):
                counts[n][seq[i:i + n]] += 1
    if n_sents == 0:
        raise EmptyCorpusError("cannot train a language model on an empty corpus")

    words = {g[0] for g in counts[1]} - {BOS, EOS}
    prediction_set = frozenset(words | {EOS, UNK})
    uniform = 1.0 / len(prediction_set)

    # Continuation counts (distinct left extensions) drive every order below
    # the top one, except grams anchored at <s>, which keep raw counts since
    # nothing can precede a sentence start.
    continuation: list[Counter] = [Counter() for _ in range(order)]
    for n in range(2, order + 1):
        for gram in counts[n]:
            continuation[n - 1][gram[1:]] += 1

    def numerator(n: int, gram: tuple[str, ...]) -> int:
        if n == order or gram[0] == BOS:
            return counts[n][gram]
        return continuation[n][gram]

    by_context: list[dict[tuple[str, ...], list[str]]] = [
        defaultdict(list) for _ in range(order + 1)
    ]
    for n in range(1, order + 1):
        for gram in counts[n]:
            if n == 1 and gram[0] == BOS:
                continue  # <s> is context-only, never a predicted event
            by_context[n][gram[:-1]].append(gram[-1])

    discounts = [0.0] * (order + 1)
    for n in range(1, order + 1):
        nums = [
            numerator(n, ctx + (w,))
            for ctx, ws in by_context[n].items()
            for w in ws
        ]
        discounts[n] = _discount(v for v in nums if v > 0)

    prob: dict[tuple[str, ...], float] = {}
    backoff: dict[tuple[str, ...], float] = {}

    # Unigram level, interpolated with the uniform distribution.
    d1 = discounts[1]
    followers1 = by_context[1][()]
    denom1 = sum(numerator(1, (w,)) for w in followers1)
    if denom1 > 0:
        types1 = sum(1 for w in followers1 if numerator(1, (w,)) > 0)
        lam1 = d1 * types1 / denom1
    else:
        lam1 = 1.0
    for w in sorted(prediction_set):
        num = numerator(1, (w,)) if (w,) in counts[1] else 0
        base = max(num - d1, 0.0) / denom1 if denom1 > 0 else 0.0
        prob[(w,)] = math.log(base + lam1 * uniform)

    # Higher orders, bottom-up so lower-order probabilities are available.
    for n in range(2, order + 1):
        dn = discounts[n]
        for context, followers in by_context[n].items():
            denom = sum(numerator(n, context + (w,)) for w in followers)
            if denom <= 0:
                backoff[context] = 0.0
                continue
            types = sum(1 for w in followers if numerator(n, context + (w,)) > 0)
            lam = dn * types / denom
            for w in followers:
                num = numerator(n, context + (w,))
                base = max(num - dn, 0.0) / denom
                lower = math.exp(prob[context[1:] + (w,)])
                prob[context + (w,)] = math.log(base + lam * lower)
            backoff[context] = math.log(lam)

    vocab = frozenset(words | {BOS, EOS, UNK})
    return NgramLanguageModel(
        order=order,
        logprob=prob,
        backoff=backoff,
        vocab=vocab,
        prediction_set=prediction_set,
    )


def save_arpa(model: NgramLanguageModel, path) -> None:
    """Write the model in the textual ARPA format (log10 values)."""
    grams_by_order: list[list[tuple[str, ...]]] = [[] for _ in range(model.order + 1)]
    for gram in model.logprob:
        grams_by_order[len(gram)].append(gram)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\\data\\\n")
        for n in range(1, model.order + 1):
            count = len(grams_by_order[n]) + (1 if n == 1 else 0)  # +1 for <s>
            f.write(f"ngram {n}={count}\n")
        f.write("\n")
        for n in range(1, model.order + 1):
            f.write(f"\\{n}-grams:\n")
            entries = sorted(grams_by_order[n])
            if n == 1:
                entries = [(BOS,)] + entries
            for gram in entries:
                if n == 1 and gram == (BOS,):
                    lp10 = -99.0  # placeholder: <s> is never predicted
                else:
                    lp10 = model.logprob[gram] / _LOG10
                line = f"{lp10!r}\t{' '.join(gram)}"
                bow = model.backoff.get(gram)
                if bow is not None and n < model.order:
                    line += f"\t{bow / _LOG10!r}"
                f.write(line + "\n")
            f.write("\n")
        f.write("\\end\\\n")


def load_arpa(path) -> NgramLanguageModel:
    """Read a tab-separated textual ARPA file (as written by :func:`save_arpa`)."""
    logprob: dict[tuple[str, ...], float] = {}
    backoff: dict[tuple[str, ...], float] = {}
    order = 0
    section = 0
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if "\\data\\" not in lines:
        raise ModelFormatError(f"{path}: not an ARPA file")
    for line in lines:
        line = line.strip("\n")
        if not line.strip() or line == "\\data\\" or line.startswith("ngram "):
            continue
        if line.strip() == "\\end\\":
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            section = int(line[1:-len("-grams:")])
            order = max(order, section)
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise ModelFormatError(f"{path}: malformed n-gram line {line!r}")
        gram = tuple(parts[1].split(" "))
        if len(gram) != section:
            raise ModelFormatError(f"{path}: {parts[1]!r} is not a {section}-gram")
        value = float(parts[0])
        if not (section == 1 and gram == (BOS,) and value <= -99.0):
            logprob[gram] = value * _LOG10
        if len(parts) >= 3 and parts[2]:
            backoff[gram] = float(parts[2]) * _LOG10
    if order == 0:
        raise ModelFormatError(f"{path}: no n-gram sections found")
    unigrams = {g[0] for g in logprob if len(g) == 1}
    vocab = frozenset(unigrams | {BOS, EOS, UNK})
    prediction_set = frozenset(unigrams - {BOS})
    return NgramLanguageModel(
        order=order,
        logprob=logprob,
        backoff=backoff,
        vocab=vocab,
        prediction_set=prediction_set,
    )
