"""Two encoder–decoder LSTMs over beats: full additive attention vs. local.

Both run a bidirectional LSTM over the whole beat sequence first, so the
decoder can react to beats that haven't happened yet.  They differ in how
the decoder reads the encoder output at step t:

* full attention — a learned scorer weighs every annotation row against
  the previous decoder hidden state and feeds the weighted sum (plus the
  previous note's embedding) into the decoder cell;

* local attention — beats and notes line up one-to-one, so the decoder
  simply takes annotation row t directly (plus the previous note's
  embedding), and its initial hidden state is a learned projection of the
  encoder's final states.
"""

from __future__ import annotations

import numpy as np

from tapcompose.models.base import SequenceModel, dropout_backward, dropout_forward
from tapcompose.nn import (
    additive_attention_backward,
    additive_attention_forward,
    bilstm_backward,
    bilstm_forward,
    linear_backward,
    linear_forward,
    lstm_cell_backward,
    lstm_cell_forward,
    xavier_uniform,
)

__all__ = ["LstmFullAttention", "LstmLocalAttention"]

FORGET_GATE_BIAS = 1.0


def _lstm_param_block(model: SequenceModel, prefix: str, n_in: int, n_hidden: int, rng):
    model.add_param(f"{prefix}.w_x", xavier_uniform((n_in, 4 * n_hidden), rng))
    model.add_param(f"{prefix}.w_h", xavier_uniform((n_hidden, 4 * n_hidden), rng))
    bias = np.zeros(4 * n_hidden)
    bias[n_hidden : 2 * n_hidden] = FORGET_GATE_BIAS
    model.add_param(f"{prefix}.b", bias)


def _lstm_values(model: SequenceModel, prefix: str):
    return (
        model.params[f"{prefix}.w_x"].value,
        model.params[f"{prefix}.w_h"].value,
        model.params[f"{prefix}.b"].value,
    )


def _add_lstm_grads(model: SequenceModel, prefix: str, grads):
    dw_x, dw_h, db = grads
    model.params[f"{prefix}.w_x"].grad += dw_x
    model.params[f"{prefix}.w_h"].grad += dw_h
    model.params[f"{prefix}.b"].grad += db


class LstmFullAttention(SequenceModel):
    """biLSTM encoder + additive attention + single LSTM decoder."""

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        d = cfg.hidden_dim
        self.add_param("embed", xavier_uniform((cfg.vocab, cfg.embed_dim), rng))
        _lstm_param_block(self, "enc.fwd", 2, d, rng)
        _lstm_param_block(self, "enc.bwd", 2, d, rng)
        # scorer input: decoder hidden (d) + annotation row (2d)
        self.add_param("att.w", xavier_uniform((3 * d, d), rng))
        self.add_param("att.b", np.zeros(d))
        self.add_param("att.v", xavier_uniform((d, 1), rng)[:, 0])
        _lstm_param_block(self, "dec", 2 * d + cfg.embed_dim, d, rng)
        self.add_param("out.w", xavier_uniform((d, cfg.vocab), rng))
        self.add_param("out.b", np.zeros(cfg.vocab))

    def _attention_values(self):
        return (
            self.params["att.w"].value,
            self.params["att.b"].value,
            self.params["att.v"].value,
        )

    def forward_teacher_forced(self, beats, y_prev, dropout_rng=None):
        cfg = self.config
        d = cfg.hidden_dim
        xs = self.standardize(beats)
        y_prev = self.check_teacher_inputs(xs, y_prev)
        n_steps = len(xs)

        annotations, _, _, enc_cache = bilstm_forward(
            xs, _lstm_values(self, "enc.fwd"), _lstm_values(self, "enc.bwd")
        )
        annotations_used, ann_mask = dropout_forward(annotations, cfg.dropout_rate, dropout_rng)

        embed_table = self.params["embed"].value
        h = np.zeros(d)
        c = np.zeros(d)
        hiddens = np.zeros((n_steps, d))
        att_caches = []
        cell_caches = []
        for t in range(n_steps):
            context, _, att_cache = additive_attention_forward(
                h, annotations_used, *self._attention_values()
            )
            step_in = np.concatenate([context, embed_table[y_prev[t]]])
            h, c, cell_cache = lstm_cell_forward(step_in, h, c, *_lstm_values(self, "dec"))
            hiddens[t] = h
            att_caches.append(att_cache)
            cell_caches.append(cell_cache)

        hiddens_used, hid_mask = dropout_forward(hiddens, cfg.dropout_rate, dropout_rng)
        logits, out_cache = linear_forward(
            hiddens_used, self.params["out.w"].value, self.params["out.b"].value
        )
        cache = (y_prev, enc_cache, ann_mask, att_caches, cell_caches, hid_mask, out_cache)
        return logits, cache

    def backward_teacher_forced(self, d_logits, cache):
        cfg = self.config
        d = cfg.hidden_dim
        y_prev, enc_cache, ann_mask, att_caches, cell_caches, hid_mask, out_cache = cache
        n_steps = len(y_prev)

        d_hiddens, dw_out, db_out = linear_backward(d_logits, out_cache)
        self.params["out.w"].grad += dw_out
        self.params["out.b"].grad += db_out
        d_hiddens = dropout_backward(d_hiddens, hid_mask)

        d_annotations = np.zeros((n_steps, 2 * d))
        d_embed_rows = np.zeros((n_steps, cfg.embed_dim))
        dec_grads = [np.zeros_like(g) for g in _lstm_values(self, "dec")]
        dw_att = np.zeros_like(self.params["att.w"].value)
        db_att = np.zeros_like(self.params["att.b"].value)
        dv_att = np.zeros_like(self.params["att.v"].value)

        dh_carry = np.zeros(d)
        dc_carry = np.zeros(d)
        for t in reversed(range(n_steps)):
            dh = d_hiddens[t] + dh_carry
            dx, dh_prev, dc_prev, g_wx, g_wh, g_b = lstm_cell_backward(dh, dc_carry, cell_caches[t])
            dec_grads[0] += g_wx
            dec_grads[1] += g_wh
            dec_grads[2] += g_b
            d_embed_rows[t] = dx[2 * d :]
            ds_prev, d_ann_t, g_aw, g_ab, g_av = additive_attention_backward(
                dx[: 2 * d], att_caches[t]
            )
            d_annotations += d_ann_t
            dw_att += g_aw
            db_att += g_ab
            dv_att += g_av
            dh_carry = dh_prev + ds_prev
            dc_carry = dc_prev

        _add_lstm_grads(self, "dec", dec_grads)
        self.params["att.w"].grad += dw_att
        self.params["att.b"].grad += db_att
        self.params["att.v"].grad += dv_att
        self.embed_backward(self.params["embed"].grad, y_prev, d_embed_rows)

        d_annotations = dropout_backward(d_annotations, ann_mask)
        _, fwd_grads, bwd_grads = bilstm_backward(
            d_annotations, np.zeros(d), np.zeros(d), enc_cache
        )
        _add_lstm_grads(self, "enc.fwd", fwd_grads)
        _add_lstm_grads(self, "enc.bwd", bwd_grads)

    def sm_init(self, beats):
        xs = self.standardize(beats)
        if len(xs) == 0:
            raise ValueError("need at least one beat")
        annotations, _, _, _ = bilstm_forward(
            xs, _lstm_values(self, "enc.fwd"), _lstm_values(self, "enc.bwd")
        )
        d = self.config.hidden_dim
        return annotations, (0, np.zeros(d), np.zeros(d))

    def sm_step(self, constants, state, prev_note):
        annotations = constants
        position, h, c = state
        self.check_position(position, len(annotations))
        context, _, _ = additive_attention_forward(h, annotations, *self._attention_values())
        step_in = np.concatenate([context, self.params["embed"].value[prev_note]])
        h_next, c_next, _ = lstm_cell_forward(step_in, h, c, *_lstm_values(self, "dec"))
        logits = h_next @ self.params["out.w"].value + self.params["out.b"].value
        return (position + 1, h_next, c_next), self.distribution_from_logits(logits)


class LstmLocalAttention(SequenceModel):
    """biLSTM encoder; decoder reads the aligned annotation row directly."""

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        d = cfg.hidden_dim
        self.add_param("embed", xavier_uniform((cfg.vocab, cfg.embed_dim), rng))
        _lstm_param_block(self, "enc.fwd", 2, d, rng)
        _lstm_param_block(self, "enc.bwd", 2, d, rng)
        self.add_param("init.w", xavier_uniform((2 * d, d), rng))
        self.add_param("init.b", np.zeros(d))
        _lstm_param_block(self, "dec", cfg.embed_dim + 2 * d, d, rng)
        self.add_param("out.w", xavier_uniform((d, cfg.vocab), rng))
        self.add_param("out.b", np.zeros(cfg.vocab))

    def forward_teacher_forced(self, beats, y_prev, dropout_rng=None):
        cfg = self.config
        d = cfg.hidden_dim
        xs = self.standardize(beats)
        y_prev = self.check_teacher_inputs(xs, y_prev)
        n_steps = len(xs)

        annotations, final_fwd, final_bwd, enc_cache = bilstm_forward(
            xs, _lstm_values(self, "enc.fwd"), _lstm_values(self, "enc.bwd")
        )
        annotations_used, ann_mask = dropout_forward(annotations, cfg.dropout_rate, dropout_rng)

        finals = np.concatenate([final_fwd, final_bwd])
        h = finals @ self.params["init.w"].value + self.params["init.b"].value
        c = np.zeros(d)

        embed_table = self.params["embed"].value
        hiddens = np.zeros((n_steps, d))
        cell_caches = []
        for t in range(n_steps):
            step_in = np.concatenate([embed_table[y_prev[t]], annotations_used[t]])
            h, c, cell_cache = lstm_cell_forward(step_in, h, c, *_lstm_values(self, "dec"))
            hiddens[t] = h
            cell_caches.append(cell_cache)

        hiddens_used, hid_mask = dropout_forward(hiddens, cfg.dropout_rate, dropout_rng)
        logits, out_cache = linear_forward(
            hiddens_used, self.params["out.w"].value, self.params["out.b"].value
        )
        cache = (y_prev, enc_cache, ann_mask, finals, cell_caches, hid_mask, out_cache)
        return logits, cache

    def backward_teacher_forced(self, d_logits, cache):
        cfg = self.config
        d = cfg.hidden_dim
        y_prev, enc_cache, ann_mask, finals, cell_caches, hid_mask, out_cache = cache
        n_steps = len(y_prev)

        d_hiddens, dw_out, db_out = linear_backward(d_logits, out_cache)
        self.params["out.w"].grad += dw_out
        self.params["out.b"].grad += db_out
        d_hiddens = dropout_backward(d_hiddens, hid_mask)

        d_annotations = np.zeros((n_steps, 2 * d))
        d_embed_rows = np.zeros((n_steps, cfg.embed_dim))
        dec_grads = [np.zeros_like(g) for g in _lstm_values(self, "dec")]

        dh_carry = np.zeros(d)
        dc_carry = np.zeros(d)
        for t in reversed(range(n_steps)):
            dh = d_hiddens[t] + dh_carry
            dx, dh_carry, dc_carry, g_wx, g_wh, g_b = lstm_cell_backward(
                dh, dc_carry, cell_caches[t]
            )
            dec_grads[0] += g_wx
            dec_grads[1] += g_wh
            dec_grads[2] += g_b
            d_embed_rows[t] = dx[: cfg.embed_dim]
            d_annotations[t] += dx[cfg.embed_dim :]

        _add_lstm_grads(self, "dec", dec_grads)
        self.embed_backward(self.params["embed"].grad, y_prev, d_embed_rows)

        # dh_carry now holds the gradient at the decoder's initial hidden state
        self.params["init.w"].grad += np.outer(finals, dh_carry)
        self.params["init.b"].grad += dh_carry
        d_finals = self.params["init.w"].value @ dh_carry

        d_annotations = dropout_backward(d_annotations, ann_mask)
        _, fwd_grads, bwd_grads = bilstm_backward(
            d_annotations, d_finals[:d], d_finals[d:], enc_cache
        )
        _add_lstm_grads(self, "enc.fwd", fwd_grads)
        _add_lstm_grads(self, "enc.bwd", bwd_grads)

    def sm_init(self, beats):
        xs = self.standardize(beats)
        if len(xs) == 0:
            raise ValueError("need at least one beat")
        annotations, final_fwd, final_bwd, _ = bilstm_forward(
            xs, _lstm_values(self, "enc.fwd"), _lstm_values(self, "enc.bwd")
        )
        finals = np.concatenate([final_fwd, final_bwd])
        h0 = finals @ self.params["init.w"].value + self.params["init.b"].value
        return annotations, (0, h0, np.zeros(self.config.hidden_dim))

    def sm_step(self, constants, state, prev_note):
        annotations = constants
        position, h, c = state
        self.check_position(position, len(annotations))
        step_in = np.concatenate(
            [self.params["embed"].value[prev_note], annotations[position]]
        )
        h_next, c_next, _ = lstm_cell_forward(step_in, h, c, *_lstm_values(self, "dec"))
        logits = h_next @ self.params["out.w"].value + self.params["out.b"].value
        return (position + 1, h_next, c_next), self.distribution_from_logits(logits)
