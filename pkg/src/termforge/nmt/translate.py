"""Beam-search translation, attention traces, and unknown-word replacement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bpe import apply_bpe
from ..corpus import Lexicon
from .model import BOS_ID, EOS_ID, UNK, Seq2SeqModel
from .network import decoder_step, encode


@dataclass
class AttentionTrace:
    """Attention weights: one row per emitted target token, one column per
    source position (model space, i.e. subwords for BPE models)."""

    weights: np.ndarray

    @property
    def steps(self) -> int:
        return self.weights.shape[0]


@dataclass
class _Beam:
    tokens: list[int]
    logprob: float
    h_layers: list[np.ndarray]
    c_layers: list[np.ndarray]
    hbar: np.ndarray
    attn_rows: list[np.ndarray]
    finished: bool = False

    def norm_score(self) -> float:
        length = max(len(self.tokens) - 1, 1)  # exclude the BOS seed
        return self.logprob / length


def translate(
    model: Seq2SeqModel,
    tokens,
    beam_width: int = 5,
    max_len: int | None = None,
    min_len: int = 1,
) -> tuple[tuple[str, ...], AttentionTrace, float]:
    """Length-normalized beam search until end-of-sentence.

    Input tokens are segmented per the model (BPE models receive subwords
    internally); the returned tokens are in model space, so BPE outputs
    still carry continuation markers.  Predicted unknowns surface as the
    unk symbol for downstream replacement.  ``min_len`` blocks the
    end-of-sentence token until that many tokens have been emitted.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    if model.src_bpe is not None:
        tokens = apply_bpe(model.src_bpe, tuple(tokens))
    tokens = tuple(tokens)
    if not tokens:
        return (), AttentionTrace(np.zeros((0, 0))), 0.0
    if max_len is None:
        max_len = 2 * len(tokens) + 5

    src_ids = np.array([model.src_vocab.encode(tokens)], dtype=np.int64)
    enc_top, enc_finals, _ = encode(model, src_ids)
    init = _Beam(
        tokens=[BOS_ID],
        logprob=0.0,
        h_layers=[h.copy() for h, _ in enc_finals],
        c_layers=[c.copy() for _, c in enc_finals],
        hbar=np.zeros((1, model.config.hidden)),
        attn_rows=[],
    )
    beams = [init]
    for _ in range(max_len):
        if all(b.finished for b in beams):
            break
        candidates: list[tuple[float, int, _Beam]] = []
        for beam in beams:
            if beam.finished:
                candidates.append((beam.logprob, -1, beam))
                continue
            emb = model.params["dec_E"][np.array([beam.tokens[-1]])]
            x_in = np.concatenate([emb, beam.hbar], axis=1)
            h_layers = [h.copy() for h in beam.h_layers]
            c_layers = [c.copy() for c in beam.c_layers]
            hbar, attn = decoder_step(model, x_in, h_layers, c_layers, enc_top)
            logits = (hbar @ model.params["out_W"] + model.params["out_b"])[0]
            logits -= logits.max()
            logprobs = logits - np.log(np.exp(logits).sum())
            if len(beam.tokens) - 1 < min_len:
                logprobs[EOS_ID] = -np.inf
            order = np.argsort(-logprobs, kind="stable")[:beam_width]
            for tok_id in order:
                tok_id = int(tok_id)
                candidates.append(
                    (
                        beam.logprob + float(logprobs[tok_id]),
                        tok_id,
                        _Beam(
                            tokens=beam.tokens + [tok_id],
                            logprob=beam.logprob + float(logprobs[tok_id]),
                            h_layers=h_layers,
                            c_layers=c_layers,
                            hbar=hbar,
                            attn_rows=beam.attn_rows + [attn[0].copy()],
                            finished=tok_id == EOS_ID,
                        ),
                    )
                )
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beams = [c[2] for c in candidates[:beam_width]]
    best = max(beams, key=lambda b: (b.norm_score(), tuple(b.tokens)))
    out_ids = best.tokens[1:]
    attn_rows = best.attn_rows
    if out_ids and out_ids[-1] == EOS_ID:
        out_ids = out_ids[:-1]
        attn_rows = attn_rows[:-1]
    trace = AttentionTrace(
        np.vstack(attn_rows) if attn_rows else np.zeros((0, len(tokens)))
    )
    return model.tgt_vocab.decode(out_ids), trace, best.norm_score()


def replace_unk(
    output_tokens,
    trace: AttentionTrace,
    source_tokens,
    lexicon: Lexicon | None = None,
) -> tuple[str, ...]:
    """Replace each unk by the lexicon translation of its highest-attention
    source token, falling back to copying the source token itself.

    Attention argmax ties resolve to the lowest source index.  A lexicon
    entry may be multi-token; its tokens splice in place of the unk.
    """
    output_tokens = tuple(output_tokens)
    source_tokens = tuple(source_tokens)
    if trace.weights.shape[0] != len(output_tokens):
        raise ValueError(
            f"trace has {trace.weights.shape[0]} rows for "
            f"{len(output_tokens)} output tokens"
        )
    out: list[str] = []
    for j, tok in enumerate(output_tokens):
        if tok != UNK:
            out.append(tok)
            continue
        src_pos = int(np.argmax(trace.weights[j]))
        src_tok = source_tokens[src_pos]
        replacement = None
        if lexicon is not None:
            candidate = lexicon.best_candidate((src_tok,))
            if candidate is not None:
                replacement = candidate.tokens
        out.extend(replacement if replacement is not None else (src_tok,))
    return tuple(out)
