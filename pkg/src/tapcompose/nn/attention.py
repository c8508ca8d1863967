"""Multi-head scaled dot-product attention with optional relative positions.

The relative term scores each query against a learned embedding of the
clipped signed distance to the key:

    logits[h, i, j] = (q[h,i] . k[h,j] + q[h,i] . rel_table[h, clip(i-j)]) / sqrt(d)

where clip maps i-j into [-max_rel, max_rel] and indexes a
(heads, 2*max_rel+1, head_dim) table.  Passing ``rel_table=None`` gives
plain attention, so the relative variant can be diffed against it exactly.
"""

from __future__ import annotations

import numpy as np

from tapcompose.nn.layers import softmax

__all__ = [
    "relative_index_grid",
    "relative_attention_forward",
    "relative_attention_backward",
]

MAX_REL_DEFAULT = 64


def relative_index_grid(n_queries: int, max_rel: int, n_keys: int | None = None) -> np.ndarray:
    """Table row for each (query i, key j): clip(i - j, ±max_rel) + max_rel."""
    if n_keys is None:
        n_keys = n_queries
    offsets = np.arange(n_queries)[:, None] - np.arange(n_keys)[None, :]
    return np.clip(offsets, -max_rel, max_rel) + max_rel


def relative_attention_forward(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    rel_table: np.ndarray | None,
    causal: bool,
):
    """Attention of q (heads, Tq, d) over k/v (heads, Tk, d); returns (out, cache).

    Tq and Tk may differ (queries from one sequence attending over another).
    """
    if q.ndim != 3 or k.shape != v.shape or q.shape[0] != k.shape[0] or q.shape[2] != k.shape[2]:
        raise ValueError(f"q/k/v must share (heads, ., d); got {q.shape}, {k.shape}, {v.shape}")
    for name, arr in (("q", q), ("k", k), ("v", v), ("rel_table", rel_table)):
        if arr is not None and not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name}")
    n_heads, n_queries, head_dim = q.shape
    n_keys = k.shape[1]

    logits = np.einsum("hid,hjd->hij", q, k)
    rel_idx = None
    if rel_table is not None:
        if rel_table.ndim != 3 or rel_table.shape[0] != n_heads or rel_table.shape[2] != head_dim:
            raise ValueError(
                f"relative table shape {rel_table.shape} incompatible with q {q.shape}"
            )
        max_rel = (rel_table.shape[1] - 1) // 2
        rel_idx = relative_index_grid(n_queries, max_rel, n_keys)
        per_offset = np.einsum("hid,hrd->hir", q, rel_table)  # (h, Tq, 2R+1)
        logits = logits + np.take_along_axis(
            per_offset, np.broadcast_to(rel_idx, (n_heads, n_queries, n_keys)), axis=2
        )
    logits = logits / np.sqrt(head_dim)

    if causal:
        mask = np.triu(np.ones((n_queries, n_keys), dtype=bool), k=1)
        logits = np.where(mask, -np.inf, logits)

    weights = softmax(logits, axis=2)
    out = np.einsum("hij,hjd->hid", weights, v)
    cache = (q, k, v, rel_table, rel_idx, weights)
    return out, cache


def relative_attention_backward(d_out: np.ndarray, cache):
    """Gradients for relative_attention_forward.

    Returns (dq, dk, dv, d_rel_table); the last is None when the forward
    ran without a relative table.
    """
    q, k, v, rel_table, rel_idx, weights = cache
    n_heads, n_queries, head_dim = q.shape

    dv = np.einsum("hij,hid->hjd", weights, d_out)
    d_weights = np.einsum("hid,hjd->hij", d_out, v)
    # softmax backward per row; masked entries have weight 0, so they drop out
    row_dot = np.sum(d_weights * weights, axis=2, keepdims=True)
    d_logits = weights * (d_weights - row_dot)
    d_logits = d_logits / np.sqrt(head_dim)

    dq = np.einsum("hij,hjd->hid", d_logits, k)
    dk = np.einsum("hij,hid->hjd", d_logits, q)
    d_rel_table = None
    if rel_table is not None:
        n_offsets = rel_table.shape[1]
        d_per_offset = np.zeros((n_heads, n_queries, n_offsets))
        head_idx = np.arange(n_heads)[:, None, None]
        query_idx = np.arange(n_queries)[None, :, None]
        np.add.at(
            d_per_offset,
            (
                np.broadcast_to(head_idx, d_logits.shape),
                np.broadcast_to(query_idx, d_logits.shape),
                np.broadcast_to(rel_idx, d_logits.shape),
            ),
            d_logits,
        )
        dq += np.einsum("hir,hrd->hid", d_per_offset, rel_table)
        d_rel_table = np.einsum("hir,hid->hrd", d_per_offset, q)
    return dq, dk, dv, d_rel_table
