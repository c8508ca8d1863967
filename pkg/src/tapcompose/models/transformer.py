"""Encoder-decoder transformer over beats, with optional relative positions.

The encoder reads the standardized beat rows (projected to the model
width plus sinusoidal position codes) through self-attention + feed-forward
blocks.  The decoder embeds the shifted note sequence, applies causally
masked self-attention, attends over the encoder output, and projects to
per-pitch logits.  Residual connections are normalized after each sublayer
(x = norm(x + dropout(sublayer(x)))).

The relative variant adds a learned per-layer table of clipped
query-to-key distance embeddings inside the encoder and decoder
self-attention blocks; the tables start at zero, so a freshly built
relative model computes exactly what the plain one does.
"""

from __future__ import annotations

import numpy as np

from tapcompose.models.base import SequenceModel, dropout_backward, dropout_forward
from tapcompose.nn import (
    layer_norm_backward,
    layer_norm_forward,
    linear_backward,
    linear_forward,
    relative_attention_backward,
    relative_attention_forward,
    relu_backward,
    relu_forward,
    xavier_uniform,
)

__all__ = ["Transformer", "sinusoidal_positions"]


def sinusoidal_positions(n_steps: int, dim: int) -> np.ndarray:
    """Fixed position codes: even columns sin, odd columns cos."""
    if dim % 2 != 0:
        raise ValueError(f"position code width must be even, got {dim}")
    positions = np.arange(n_steps, dtype=np.float64)[:, None]
    scales = np.power(10000.0, np.arange(0, dim, 2, dtype=np.float64) / dim)
    angles = positions / scales
    codes = np.zeros((n_steps, dim))
    codes[:, 0::2] = np.sin(angles)
    codes[:, 1::2] = np.cos(angles)
    return codes


class Transformer(SequenceModel):
    """Post-norm encoder-decoder; set config.kind to pick plain vs relative."""

    @property
    def relative(self) -> bool:
        return self.config.kind == "transformer_rel"

    @property
    def head_dim(self) -> int:
        return self.config.embed_dim // self.config.num_heads

    def _add_attention_block(self, prefix: str, rng, with_table: bool) -> None:
        m = self.config.embed_dim
        for name in ("w_q", "w_k", "w_v", "w_o"):
            self.add_param(f"{prefix}.{name}", xavier_uniform((m, m), rng))
        for name in ("b_q", "b_k", "b_v", "b_o"):
            self.add_param(f"{prefix}.{name}", np.zeros(m))
        if with_table:
            n_offsets = 2 * self.config.max_rel_distance + 1
            self.add_param(
                f"{prefix}.rel",
                np.zeros((self.config.num_heads, n_offsets, self.head_dim)),
            )

    def _add_norm(self, prefix: str) -> None:
        m = self.config.embed_dim
        self.add_param(f"{prefix}.gamma", np.ones(m))
        self.add_param(f"{prefix}.beta", np.zeros(m))

    def _add_ffn(self, prefix: str, rng) -> None:
        m, f = self.config.embed_dim, self.config.hidden_dim
        self.add_param(f"{prefix}.w1", xavier_uniform((m, f), rng))
        self.add_param(f"{prefix}.b1", np.zeros(f))
        self.add_param(f"{prefix}.w2", xavier_uniform((f, m), rng))
        self.add_param(f"{prefix}.b2", np.zeros(m))

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        m = cfg.embed_dim
        self.add_param("in.w", xavier_uniform((2, m), rng))
        self.add_param("in.b", np.zeros(m))
        self.add_param("embed", xavier_uniform((cfg.vocab, m), rng))
        for i in range(cfg.num_layers):
            self._add_attention_block(f"enc.{i}.attn", rng, self.relative)
            self._add_norm(f"enc.{i}.ln1")
            self._add_ffn(f"enc.{i}.ffn", rng)
            self._add_norm(f"enc.{i}.ln2")
        for i in range(cfg.num_layers):
            self._add_attention_block(f"dec.{i}.self", rng, self.relative)
            self._add_norm(f"dec.{i}.ln1")
            self._add_attention_block(f"dec.{i}.cross", rng, False)
            self._add_norm(f"dec.{i}.ln2")
            self._add_ffn(f"dec.{i}.ffn", rng)
            self._add_norm(f"dec.{i}.ln3")
        self.add_param("out.w", xavier_uniform((m, cfg.vocab), rng))
        self.add_param("out.b", np.zeros(cfg.vocab))

    # -- heads ----------------------------------------------------------------

    def _split_heads(self, x: np.ndarray) -> np.ndarray:
        n_steps = x.shape[0]
        return x.reshape(n_steps, self.config.num_heads, self.head_dim).transpose(1, 0, 2)

    def _merge_heads(self, x: np.ndarray) -> np.ndarray:
        n_steps = x.shape[1]
        return x.transpose(1, 0, 2).reshape(n_steps, self.config.embed_dim)

    # -- sublayers --------------------------------------------------------------

    def _p(self, name: str) -> np.ndarray:
        return self.params[name].value

    def _mha_forward(self, x_q, x_kv, prefix: str, causal: bool):
        q, q_cache = linear_forward(x_q, self._p(f"{prefix}.w_q"), self._p(f"{prefix}.b_q"))
        k, k_cache = linear_forward(x_kv, self._p(f"{prefix}.w_k"), self._p(f"{prefix}.b_k"))
        v, v_cache = linear_forward(x_kv, self._p(f"{prefix}.w_v"), self._p(f"{prefix}.b_v"))
        rel_name = f"{prefix}.rel"
        rel_table = self._p(rel_name) if rel_name in self.params else None
        heads_out, att_cache = relative_attention_forward(
            self._split_heads(q), self._split_heads(k), self._split_heads(v), rel_table, causal
        )
        merged = self._merge_heads(heads_out)
        out, o_cache = linear_forward(merged, self._p(f"{prefix}.w_o"), self._p(f"{prefix}.b_o"))
        return out, (q_cache, k_cache, v_cache, att_cache, o_cache)

    def _mha_backward(self, d_out, cache, prefix: str):
        q_cache, k_cache, v_cache, att_cache, o_cache = cache
        d_merged, dw_o, db_o = linear_backward(d_out, o_cache)
        self.params[f"{prefix}.w_o"].grad += dw_o
        self.params[f"{prefix}.b_o"].grad += db_o
        dq_h, dk_h, dv_h, d_rel = relative_attention_backward(
            self._split_heads(d_merged), att_cache
        )
        if d_rel is not None:
            self.params[f"{prefix}.rel"].grad += d_rel
        dx_q, dw_q, db_q = linear_backward(self._merge_heads(dq_h), q_cache)
        dx_k, dw_k, db_k = linear_backward(self._merge_heads(dk_h), k_cache)
        dx_v, dw_v, db_v = linear_backward(self._merge_heads(dv_h), v_cache)
        self.params[f"{prefix}.w_q"].grad += dw_q
        self.params[f"{prefix}.b_q"].grad += db_q
        self.params[f"{prefix}.w_k"].grad += dw_k
        self.params[f"{prefix}.b_k"].grad += db_k
        self.params[f"{prefix}.w_v"].grad += dw_v
        self.params[f"{prefix}.b_v"].grad += db_v
        return dx_q, dx_k + dx_v

    def _ffn_forward(self, x, prefix: str):
        pre, cache1 = linear_forward(x, self._p(f"{prefix}.w1"), self._p(f"{prefix}.b1"))
        act, relu_cache = relu_forward(pre)
        out, cache2 = linear_forward(act, self._p(f"{prefix}.w2"), self._p(f"{prefix}.b2"))
        return out, (cache1, relu_cache, cache2)

    def _ffn_backward(self, d_out, cache, prefix: str):
        cache1, relu_cache, cache2 = cache
        d_act, dw2, db2 = linear_backward(d_out, cache2)
        d_pre = relu_backward(d_act, relu_cache)
        dx, dw1, db1 = linear_backward(d_pre, cache1)
        self.params[f"{prefix}.w1"].grad += dw1
        self.params[f"{prefix}.b1"].grad += db1
        self.params[f"{prefix}.w2"].grad += dw2
        self.params[f"{prefix}.b2"].grad += db2
        return dx

    def _residual_norm_forward(self, x, sub_out, prefix: str, dropout_rng):
        dropped, mask = dropout_forward(sub_out, self.config.dropout_rate, dropout_rng)
        out, ln_cache = layer_norm_forward(
            x + dropped, self._p(f"{prefix}.gamma"), self._p(f"{prefix}.beta")
        )
        return out, (mask, ln_cache)

    def _residual_norm_backward(self, d_out, cache, prefix: str):
        mask, ln_cache = cache
        d_summed, d_gamma, d_beta = layer_norm_backward(d_out, ln_cache)
        self.params[f"{prefix}.gamma"].grad += d_gamma
        self.params[f"{prefix}.beta"].grad += d_beta
        return d_summed, dropout_backward(d_summed, mask)

    # -- encoder / decoder ------------------------------------------------------

    def _encode(self, xs: np.ndarray, dropout_rng):
        x, in_cache = linear_forward(xs, self._p("in.w"), self._p("in.b"))
        x = x + sinusoidal_positions(len(xs), self.config.embed_dim)
        x, in_mask = dropout_forward(x, self.config.dropout_rate, dropout_rng)
        layer_caches = []
        for i in range(self.config.num_layers):
            attn_out, attn_cache = self._mha_forward(x, x, f"enc.{i}.attn", causal=False)
            x, ln1_cache = self._residual_norm_forward(x, attn_out, f"enc.{i}.ln1", dropout_rng)
            ffn_out, ffn_cache = self._ffn_forward(x, f"enc.{i}.ffn")
            x, ln2_cache = self._residual_norm_forward(x, ffn_out, f"enc.{i}.ln2", dropout_rng)
            layer_caches.append((attn_cache, ln1_cache, ffn_cache, ln2_cache))
        return x, (in_cache, in_mask, layer_caches)

    def _encode_backward(self, d_memory, cache):
        in_cache, in_mask, layer_caches = cache
        d_x = d_memory
        for i in reversed(range(self.config.num_layers)):
            attn_cache, ln1_cache, ffn_cache, ln2_cache = layer_caches[i]
            d_x, d_ffn = self._residual_norm_backward(d_x, ln2_cache, f"enc.{i}.ln2")
            d_x = d_x + self._ffn_backward(d_ffn, ffn_cache, f"enc.{i}.ffn")
            d_x, d_attn = self._residual_norm_backward(d_x, ln1_cache, f"enc.{i}.ln1")
            dx_q, dx_kv = self._mha_backward(d_attn, attn_cache, f"enc.{i}.attn")
            d_x = d_x + dx_q + dx_kv
        d_x = dropout_backward(d_x, in_mask)
        _, dw_in, db_in = linear_backward(d_x, in_cache)
        self.params["in.w"].grad += dw_in
        self.params["in.b"].grad += db_in

    def _decode(self, y_prev: np.ndarray, memory: np.ndarray, dropout_rng):
        x = self.embed_notes(self._p("embed"), y_prev)
        x = x + sinusoidal_positions(len(y_prev), self.config.embed_dim)
        x, in_mask = dropout_forward(x, self.config.dropout_rate, dropout_rng)
        layer_caches = []
        for i in range(self.config.num_layers):
            self_out, self_cache = self._mha_forward(x, x, f"dec.{i}.self", causal=True)
            x, ln1_cache = self._residual_norm_forward(x, self_out, f"dec.{i}.ln1", dropout_rng)
            cross_out, cross_cache = self._mha_forward(x, memory, f"dec.{i}.cross", causal=False)
            x, ln2_cache = self._residual_norm_forward(x, cross_out, f"dec.{i}.ln2", dropout_rng)
            ffn_out, ffn_cache = self._ffn_forward(x, f"dec.{i}.ffn")
            x, ln3_cache = self._residual_norm_forward(x, ffn_out, f"dec.{i}.ln3", dropout_rng)
            layer_caches.append(
                (self_cache, ln1_cache, cross_cache, ln2_cache, ffn_cache, ln3_cache)
            )
        logits, out_cache = linear_forward(x, self._p("out.w"), self._p("out.b"))
        return logits, (y_prev, in_mask, layer_caches, out_cache)

    def _decode_backward(self, d_logits, cache):
        """Returns d_memory accumulated over every cross-attention block."""
        y_prev, in_mask, layer_caches, out_cache = cache
        d_x, dw_out, db_out = linear_backward(d_logits, out_cache)
        self.params["out.w"].grad += dw_out
        self.params["out.b"].grad += db_out
        d_memory = None
        for i in reversed(range(self.config.num_layers)):
            self_cache, ln1_cache, cross_cache, ln2_cache, ffn_cache, ln3_cache = layer_caches[i]
            d_x, d_ffn = self._residual_norm_backward(d_x, ln3_cache, f"dec.{i}.ln3")
            d_x = d_x + self._ffn_backward(d_ffn, ffn_cache, f"dec.{i}.ffn")
            d_x, d_cross = self._residual_norm_backward(d_x, ln2_cache, f"dec.{i}.ln2")
            dx_q, dx_mem = self._mha_backward(d_cross, cross_cache, f"dec.{i}.cross")
            d_x = d_x + dx_q
            d_memory = dx_mem if d_memory is None else d_memory + dx_mem
            d_x, d_self = self._residual_norm_backward(d_x, ln1_cache, f"dec.{i}.ln1")
            dx_q, dx_kv = self._mha_backward(d_self, self_cache, f"dec.{i}.self")
            d_x = d_x + dx_q + dx_kv
        d_x = dropout_backward(d_x, in_mask)
        self.embed_backward(self.params["embed"].grad, y_prev, d_x)
        return d_memory

    # -- model interface ----------------------------------------------------------

    def forward_teacher_forced(self, beats, y_prev, dropout_rng=None):
        xs = self.standardize(beats)
        y_prev = self.check_teacher_inputs(xs, y_prev)
        memory, enc_cache = self._encode(xs, dropout_rng)
        logits, dec_cache = self._decode(y_prev, memory, dropout_rng)
        return logits, (enc_cache, dec_cache)

    def backward_teacher_forced(self, d_logits, cache):
        enc_cache, dec_cache = cache
        d_memory = self._decode_backward(d_logits, dec_cache)
        self._encode_backward(d_memory, enc_cache)

    def sm_init(self, beats):
        xs = self.standardize(beats)
        if len(xs) == 0:
            raise ValueError("need at least one beat")
        memory, _ = self._encode(xs, None)
        return memory, ()

    def sm_step(self, constants, state, prev_note):
        memory = constants
        prefix = state + (int(prev_note),)
        position = len(prefix) - 1
        self.check_position(position, len(memory))
        y_prev = np.asarray(prefix, dtype=np.int64)
        logits, _ = self._decode(y_prev, memory, None)
        return prefix, self.distribution_from_logits(logits[position])
