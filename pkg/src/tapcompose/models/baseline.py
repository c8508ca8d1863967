"""Decoder-only vanilla RNN over (beat, previous-note-embedding) inputs.

Per step: concat(beat features, embedding of the previous note) feeds a
dense layer, whose output runs through a stack of tanh RNN layers; the
dense output is then added back onto the stack output (residual path)
before the final projection to note logits.  No encoder — the model never
sees future beats.
"""

from __future__ import annotations

import numpy as np

from tapcompose.models.base import SequenceModel, dropout_backward, dropout_forward
from tapcompose.nn import linear_backward, linear_forward, xavier_uniform

__all__ = ["BaselineRnn"]


class BaselineRnn(SequenceModel):
    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        n_in = 2 + cfg.embed_dim
        self.add_param("embed", xavier_uniform((cfg.vocab, cfg.embed_dim), rng))
        self.add_param("in.w", xavier_uniform((n_in, cfg.hidden_dim), rng))
        self.add_param("in.b", np.zeros(cfg.hidden_dim))
        for layer in range(cfg.num_layers):
            self.add_param(
                f"rnn.{layer}.w_x", xavier_uniform((cfg.hidden_dim, cfg.hidden_dim), rng)
            )
            self.add_param(
                f"rnn.{layer}.w_h", xavier_uniform((cfg.hidden_dim, cfg.hidden_dim), rng)
            )
            self.add_param(f"rnn.{layer}.b", np.zeros(cfg.hidden_dim))
        self.add_param("out.w", xavier_uniform((cfg.hidden_dim, cfg.vocab), rng))
        self.add_param("out.b", np.zeros(cfg.vocab))

    # -- teacher forcing ----------------------------------------------------

    def forward_teacher_forced(self, beats, y_prev, dropout_rng=None):
        cfg = self.config
        xs = self.standardize(beats)
        y_prev = self.check_teacher_inputs(xs, y_prev)
        n_steps = len(xs)

        embedded = self.embed_notes(self.params["embed"].value, y_prev)
        joined = np.concatenate([xs, embedded], axis=1)
        dense, dense_cache = linear_forward(
            joined, self.params["in.w"].value, self.params["in.b"].value
        )
        rnn_in, in_mask = dropout_forward(dense, cfg.dropout_rate, dropout_rng)

        layer_inputs = rnn_in
        hidden_layers = []  # per layer: (T, H) of post-tanh states
        for layer in range(cfg.num_layers):
            w_x = self.params[f"rnn.{layer}.w_x"].value
            w_h = self.params[f"rnn.{layer}.w_h"].value
            b = self.params[f"rnn.{layer}.b"].value
            states = np.zeros((n_steps, cfg.hidden_dim))
            h = np.zeros(cfg.hidden_dim)
            for t in range(n_steps):
                h = np.tanh(layer_inputs[t] @ w_x + h @ w_h + b)
                states[t] = h
            hidden_layers.append(states)
            layer_inputs = states

        top, top_mask = dropout_forward(hidden_layers[-1], cfg.dropout_rate, dropout_rng)
        summed = top + dense  # residual from the dense layer output
        logits, out_cache = linear_forward(
            summed, self.params["out.w"].value, self.params["out.b"].value
        )
        cache = (y_prev, joined, dense_cache, rnn_in, in_mask, hidden_layers, top_mask, out_cache)
        return logits, cache

    def backward_teacher_forced(self, d_logits, cache):
        cfg = self.config
        y_prev, joined, dense_cache, rnn_in, in_mask, hidden_layers, top_mask, out_cache = cache
        n_steps = len(y_prev)

        d_summed, dw_out, db_out = linear_backward(d_logits, out_cache)
        self.params["out.w"].grad += dw_out
        self.params["out.b"].grad += db_out
        d_dense = d_summed.copy()  # residual branch
        d_layer = dropout_backward(d_summed, top_mask)

        for layer in reversed(range(cfg.num_layers)):
            w_x = self.params[f"rnn.{layer}.w_x"].value
            w_h = self.params[f"rnn.{layer}.w_h"].value
            states = hidden_layers[layer]
            inputs = hidden_layers[layer - 1] if layer > 0 else rnn_in
            d_inputs = np.zeros_like(inputs)
            dw_x = np.zeros_like(w_x)
            dw_h = np.zeros_like(w_h)
            db = np.zeros(cfg.hidden_dim)
            carry = np.zeros(cfg.hidden_dim)
            for t in reversed(range(n_steps)):
                d_h = d_layer[t] + carry
                d_pre = d_h * (1.0 - states[t] ** 2)
                h_prev = states[t - 1] if t > 0 else np.zeros(cfg.hidden_dim)
                dw_x += np.outer(inputs[t], d_pre)
                dw_h += np.outer(h_prev, d_pre)
                db += d_pre
                d_inputs[t] = w_x @ d_pre
                carry = w_h @ d_pre
            self.params[f"rnn.{layer}.w_x"].grad += dw_x
            self.params[f"rnn.{layer}.w_h"].grad += dw_h
            self.params[f"rnn.{layer}.b"].grad += db
            d_layer = d_inputs

        d_dense += dropout_backward(d_layer, in_mask)
        d_joined, dw_in, db_in = linear_backward(d_dense, dense_cache)
        self.params["in.w"].grad += dw_in
        self.params["in.b"].grad += db_in
        self.embed_backward(self.params["embed"].grad, y_prev, d_joined[:, 2:])

    # -- state machine ------------------------------------------------------

    def sm_init(self, beats):
        xs = self.standardize(beats)
        if len(xs) == 0:
            raise ValueError("need at least one beat")
        state = (0, np.zeros((self.config.num_layers, self.config.hidden_dim)))
        return xs, state

    def sm_step(self, constants, state, prev_note):
        cfg = self.config
        xs = constants
        position, h_stack = state
        self.check_position(position, len(xs))

        row = np.concatenate([xs[position], self.params["embed"].value[prev_note]])
        dense = row @ self.params["in.w"].value + self.params["in.b"].value
        new_stack = np.zeros_like(h_stack)
        layer_in = dense
        for layer in range(cfg.num_layers):
            h = np.tanh(
                layer_in @ self.params[f"rnn.{layer}.w_x"].value
                + h_stack[layer] @ self.params[f"rnn.{layer}.w_h"].value
                + self.params[f"rnn.{layer}.b"].value
            )
            new_stack[layer] = h
            layer_in = h
        logits = (layer_in + dense) @ self.params["out.w"].value + self.params["out.b"].value
        return (position + 1, new_stack), self.distribution_from_logits(logits)
