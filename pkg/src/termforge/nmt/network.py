"""Forward and backward passes for the residual-LSTM encoder-decoder.

The layer recurrence is ``state_l[i] = state_{l-1}[i] + cell(state_{l-1}[i],
state_l[i-1])``: the cell consumes the previous layer's state at the same
position and the *post-residual* state of its own layer at the previous
position.  The residual sum is skipped only where dimensions differ (encoder
layer 1 when embed != hidden, and decoder layer 1, whose input is the
embedding concatenated with the previous attentional vector - input feeding).

Everything is plain float64 numpy; the per-step matrix products are
BLAS-bound, which profiling showed beats both numba loop kernels and jitted
np.dot at these sizes.
"""

from __future__ import annotations

import numpy as np

from .model import Seq2SeqModel


def _sigmoid(x):
    with np.errstate(over="ignore"):  # saturated gates flush to exactly 0/1
        return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_forward(x, h_prev, c_prev, W, U, b):
    """One LSTM step for a batch; returns (cell_output, new_memory, cache)."""
    n = h_prev.shape[1]
    z = x @ W + h_prev @ U + b
    i = _sigmoid(z[:, :n])
    f = _sigmoid(z[:, n:2 * n])
    g = np.tanh(z[:, 2 * n:3 * n])
    o = _sigmoid(z[:, 3 * n:])
    c = f * c_prev + i * g
    hout = o * np.tanh(c)
    return hout, c, (x, h_prev, c_prev, i, f, g, o, c)


def lstm_cell_backward(dhout, dc_in, cache, W, U, grads, names):
    """Backward through one step; accumulates into grads[names] = (W, U, b)."""
    x, h_prev, c_prev, i, f, g, o, c = cache
    wname, uname, bname = names
    tc = np.tanh(c)
    do = dhout * tc
    dc = dc_in + dhout * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dc_prev = dc * f
    dz = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=1,
    )
    grads[wname] += x.T @ dz
    grads[uname] += h_prev.T @ dz
    grads[bname] += dz.sum(axis=0)
    dx = dz @ W.T
    dh_prev = dz @ U.T
    return dx, dh_prev, dc_prev


def _dropout_mask(rng, shape, rate):
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def encode(model: Seq2SeqModel, src_ids: np.ndarray, rng=None):
    """Run the encoder stack over a batch of equal-length sources.

    Returns (top_states (Ts,B,n), per-layer final (state, memory), cache).
    ``rng`` enables dropout between layers (training mode).
    """
    params = model.params
    cfg = model.config
    B, Ts = src_ids.shape
    n = cfg.hidden
    x = params["enc_E"][src_ids].transpose(1, 0, 2).copy()  # (Ts, B, m)
    if cfg.positional:
        if Ts > cfg.max_positions:
            raise ValueError(f"source length {Ts} exceeds positional table")
        x = x + params["pos_E"][:Ts][:, None, :]
    inputs = x
    layer_caches = []
    finals = []
    for l in range(1, cfg.layers + 1):
        residual = model.encoder_residual(l)
        mask = _dropout_mask(rng, inputs.shape, cfg.dropout) if l > 1 else None
        if mask is not None:
            inputs = inputs * mask
        states = np.empty((Ts, B, n))
        h = np.zeros((B, n))
        c = np.zeros((B, n))
        cell_caches = []
        for t in range(Ts):
            hout, c, cache = lstm_cell_forward(
                inputs[t], h, c,
                params[f"enc_W_{l}"], params[f"enc_U_{l}"], params[f"enc_b_{l}"],
            )
            h = inputs[t] + hout if residual else hout
            states[t] = h
            cell_caches.append(cache)
        layer_caches.append((inputs, cell_caches, mask, residual))
        finals.append((states[-1].copy(), c.copy()))
        inputs = states
    return inputs, finals, (src_ids, layer_caches)


def encode_backward(model, cache, d_top, d_finals, grads):
    """Backpropagate attention and decoder-init gradients through the encoder."""
    params = model.params
    cfg = model.config
    src_ids, layer_caches = cache
    Ts = d_top.shape[0]
    d_states = d_top.copy()
    for l in range(cfg.layers, 0, -1):
        inputs, cell_caches, mask, residual = layer_caches[l - 1]
        dh_final, dc_final = d_finals[l - 1]
        d_states[-1] += dh_final
        dh_carry = np.zeros_like(d_states[0])
        dc_carry = dc_final.copy()
        d_inputs = np.empty_like(inputs)
        W = params[f"enc_W_{l}"]
        U = params[f"enc_U_{l}"]
        names = (f"enc_W_{l}", f"enc_U_{l}", f"enc_b_{l}")
        for t in range(Ts - 1, -1, -1):
            ds_t = d_states[t] + dh_carry
            dx, dh_carry, dc_carry = lstm_cell_backward(
                ds_t, dc_carry, cell_caches[t], W, U, grads, names
            )
            if residual:
                dx = dx + ds_t
            d_inputs[t] = dx
        if mask is not None:
            d_inputs *= mask
        d_states = d_inputs
    d_x = d_states  # (Ts, B, m)
    if cfg.positional:
        grads["pos_E"][:Ts] += d_x.sum(axis=1)
    np.add.at(grads["enc_E"], src_ids, d_x.transpose(1, 0, 2))


def _attention(params, h_top, enc_top):
    """Bilinear (general) attention: returns (weights, context, cache)."""
    q = h_top @ params["att_Wa"]                      # (B, n)
    scores = np.einsum("bn,tbn->bt", q, enc_top)      # (B, Ts)
    scores = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(scores)
    attn = exp / exp.sum(axis=1, keepdims=True)
    ctx = np.einsum("bt,tbn->bn", attn, enc_top)
    return attn, ctx, (q, attn)


def _attention_backward(params, cache, enc_top, h_top, d_attnvec, hbar, grads):
    """Backward through hbar = tanh([ctx; h_top] Wc + bc) and the attention.

    Returns (dh_top, d_enc_top_delta).
    """
    q, attn = cache
    n = h_top.shape[1]
    dz = d_attnvec * (1.0 - hbar * hbar)
    cat = np.concatenate([np.einsum("bt,tbn->bn", attn, enc_top), h_top], axis=1)
    grads["att_Wc"] += cat.T @ dz
    grads["att_bc"] += dz.sum(axis=0)
    dcat = dz @ params["att_Wc"].T
    dctx = dcat[:, :n]
    dh_top = dcat[:, n:].copy()
    d_attn = np.einsum("bn,tbn->bt", dctx, enc_top)
    d_enc = np.einsum("bt,bn->tbn", attn, dctx)
    dscores = attn * (d_attn - (d_attn * attn).sum(axis=1, keepdims=True))
    dq = np.einsum("bt,tbn->bn", dscores, enc_top)
    d_enc += np.einsum("bt,bn->tbn", dscores, q)
    dh_top += dq @ params["att_Wa"].T
    grads["att_Wa"] += h_top.T @ dq
    return dh_top, d_enc


def decoder_step(model, x_in, h_layers, c_layers, enc_top, rng=None, caches=None):
    """One decoder step over the layer stack plus attention.

    ``x_in`` is [embedding; previous attentional vector].  Mutates
    ``h_layers``/``c_layers`` in place and returns (hbar, attn_row).
    """
    params = model.params
    cfg = model.config
    x = x_in
    step_caches = []
    for l in range(1, cfg.layers + 1):
        mask = _dropout_mask(rng, x.shape, cfg.dropout) if l > 1 else None
        if mask is not None:
            x = x * mask
        hout, c, cache = lstm_cell_forward(
            x, h_layers[l - 1], c_layers[l - 1],
            params[f"dec_W_{l}"], params[f"dec_U_{l}"], params[f"dec_b_{l}"],
        )
        h = x + hout if model.decoder_residual(l) else hout
        step_caches.append((cache, mask, model.decoder_residual(l), x))
        h_layers[l - 1] = h
        c_layers[l - 1] = c
        x = h
    h_top = x
    attn, ctx, att_cache = _attention(params, h_top, enc_top)
    hbar = np.tanh(
        np.concatenate([ctx, h_top], axis=1) @ params["att_Wc"] + params["att_bc"]
    )
    if caches is not None:
        caches.append((step_caches, att_cache, h_top, hbar))
    return hbar, attn


def loss_and_grads(model, src_ids, tgt_ids, train_rng=None, with_grads=True):
    """Teacher-forced cross-entropy over a batch; optionally with gradients.

    ``src_ids`` is (B, Ts) without padding (batches bucket source lengths);
    ``tgt_ids`` is (B, Tt+1) holding BOS + target + EOS + PAD.  The loss is
    the mean negative log-likelihood per non-pad target token.
    """
    params = model.params
    cfg = model.config
    B, _ = src_ids.shape
    n = cfg.hidden
    m = cfg.embed_size
    dec_in = tgt_ids[:, :-1]
    dec_out = tgt_ids[:, 1:]
    Tt = dec_in.shape[1]
    mask = (dec_out != 0).astype(np.float64)
    total_tokens = float(mask.sum())
    if total_tokens == 0:
        raise ValueError("batch contains no target tokens")

    enc_top, enc_finals, enc_cache = encode(model, src_ids, rng=train_rng)
    h_layers = [h.copy() for h, _ in enc_finals]
    c_layers = [c.copy() for _, c in enc_finals]
    hbar = np.zeros((B, n))

    caches = []
    probs_steps = []
    loss = 0.0
    for t in range(Tt):
        emb = params["dec_E"][dec_in[:, t]]
        x_in = np.concatenate([emb, hbar], axis=1)
        hbar, _ = decoder_step(
            model, x_in, h_layers, c_layers, enc_top, rng=train_rng, caches=caches
        )
        logits = hbar @ params["out_W"] + params["out_b"]
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):  # -inf here means divergence
            logp = np.log(probs[np.arange(B), dec_out[:, t]])
        loss -= float((logp * mask[:, t]).sum())
        probs_steps.append(probs)
    loss /= total_tokens
    if not np.isfinite(loss):
        return loss, None, total_tokens
    if not with_grads:
        return loss, None, total_tokens

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_enc_top = np.zeros_like(enc_top)
    dh_time = [np.zeros((B, n)) for _ in range(cfg.layers)]
    dc_time = [np.zeros((B, n)) for _ in range(cfg.layers)]
    d_hbar_next = np.zeros((B, n))

    for t in range(Tt - 1, -1, -1):
        step_caches, att_cache, h_top, hbar_t = caches[t]
        probs = probs_steps[t]
        dlogits = probs.copy()
        dlogits[np.arange(B), dec_out[:, t]] -= 1.0
        dlogits *= (mask[:, t] / total_tokens)[:, None]
        grads["out_W"] += hbar_t.T @ dlogits
        grads["out_b"] += dlogits.sum(axis=0)
        d_hbar = dlogits @ params["out_W"].T + d_hbar_next

        dh_top, d_enc = _attention_backward(
            params, att_cache, enc_top, h_top, d_hbar, hbar_t, grads
        )
        d_enc_top += d_enc

        ds = dh_top
        for l in range(cfg.layers, 0, -1):
            cache, drop_mask, residual, _ = step_caches[l - 1]
            ds_l = ds + dh_time[l - 1]
            dx, dh_prev, dc_prev = lstm_cell_backward(
                ds_l, dc_time[l - 1], cache,
                params[f"dec_W_{l}"], params[f"dec_U_{l}"], grads,
                (f"dec_W_{l}", f"dec_U_{l}", f"dec_b_{l}"),
            )
            if residual:
                dx = dx + ds_l
            if drop_mask is not None:
                dx = dx * drop_mask
            dh_time[l - 1] = dh_prev
            dc_time[l - 1] = dc_prev
            ds = dx
        # ds is now the gradient on [embedding; previous attentional vector]
        np.add.at(grads["dec_E"], dec_in[:, t], ds[:, :m])
        d_hbar_next = ds[:, m:]

    d_finals = list(zip(dh_time, dc_time))
    encode_backward(model, enc_cache, d_enc_top, d_finals, grads)
    return loss, grads, total_tokens
