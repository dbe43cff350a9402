"""Candidate-set pre-image search.

Every candidate is scored with the expanded squared feature-space distance;
the query-constant term ||P h(x)||^2 is dropped, so scores are comparable
only within one query and the reported score is

    score(c) = ||psi(y_c)||^2 - 2 <embedding of h(x), embedding of y_c>.

The same machinery serves the full-dimensional decoder (inner products
through n output-kernel columns, O(n) per candidate) and the learned
low-rank decoder (inner products in R^p, O(p) per candidate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Ranking:
    """Candidates of one query ordered by ascending score; ties broken by
    ascending candidate index."""

    indices: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return self.indices.size


def _select_topk(scores: np.ndarray, ids: np.ndarray, k: int) -> Ranking:
    """k smallest scores as if the whole list were sorted by (score, id),
    but with bounded partial selection when k << N."""
    n = scores.size
    kk = min(k, n)
    if kk < n:
        part = np.argpartition(scores, kk - 1)[:kk]
        # keep every candidate tied with the selection boundary so that the
        # final (score, id) sort sees all tie contenders
        pool = np.flatnonzero(scores <= scores[part].max())
    else:
        pool = np.arange(n)
    order = np.lexsort((ids[pool], scores[pool]))[:kk]
    pool = pool[order]
    return Ranking(indices=ids[pool], scores=scores[pool])


def _topk_rows_id_ordered(scores: np.ndarray, ids: np.ndarray, kk: int):
    """Rowwise kk smallest of (score, id) pairs, vectorized across rows.

    The columns of (scores, ids) must already be in ascending id order per
    row; the returned t x kk selection keeps that invariant (the final
    score-ordering happens once, after all merges)."""
    t, w = scores.shape
    if kk >= w:
        return ids, scores
    part = np.argpartition(scores, kk - 1, axis=1)[:, :kk]
    part.sort(axis=1)        # column order = id order by the invariant
    sel_ids = np.take_along_axis(ids, part, axis=1)
    sel_vals = np.take_along_axis(scores, part, axis=1)
    # a tie straddling the partition boundary may have kept the wrong ids;
    # redo those rows exactly over the full width
    spill = np.flatnonzero((scores <= sel_vals.max(axis=1, keepdims=True))
                           .sum(axis=1) > kk)
    for j in spill:
        r = _select_topk(scores[j], ids[j], kk)
        order = np.argsort(r.indices)
        sel_ids[j], sel_vals[j] = r.indices[order], r.scores[order]
    return sel_ids, sel_vals


# candidate-axis block width: keeps every scoring intermediate a few MB so
# the allocator reuses buffers instead of faulting fresh pages at large N
_BLOCK = 8192


def _decode_global(E_test: np.ndarray, E_cand: np.ndarray, self_norms: np.ndarray,
                   k: int) -> list[Ranking]:
    """All-candidates decoding with a bounded running top-k: candidates are
    scored in blocks and merged into the per-query best lists, so memory
    stays O(queries x block) however large N grows."""
    t = E_test.shape[1]
    n_cand = E_cand.shape[1]
    kk = min(k, n_cand)
    Et = np.ascontiguousarray(E_test.T)
    best_ids = np.empty((t, 0), dtype=np.int64)
    best_vals = np.empty((t, 0))
    for start in range(0, n_cand, _BLOCK):
        stop = min(start + _BLOCK, n_cand)
        blk_vals = self_norms[None, start:stop] - 2.0 * (Et @ E_cand[:, start:stop])
        blk_ids = np.broadcast_to(np.arange(start, stop), blk_vals.shape)
        # running best ids all precede this block's ids, so the merged
        # columns stay id-ordered
        merged_vals = np.hstack([best_vals, blk_vals])
        merged_ids = np.hstack([best_ids, blk_ids])
        best_ids, best_vals = _topk_rows_id_ordered(merged_vals, merged_ids, kk)
    order = np.argsort(best_vals, axis=1, kind="stable")   # ties keep id order
    best_ids = np.take_along_axis(best_ids, order, axis=1)
    best_vals = np.take_along_axis(best_vals, order, axis=1)
    return [Ranking(indices=best_ids[j], scores=best_vals[j]) for j in range(t)]


def _decode(E_test: np.ndarray, E_cand: np.ndarray, self_norms: np.ndarray,
            k: int, query_cands) -> list[Ranking]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    E_test = np.asarray(E_test, dtype=np.float64)
    E_cand = np.asarray(E_cand, dtype=np.float64)
    self_norms = np.asarray(self_norms, dtype=np.float64)
    if E_test.ndim == 1:
        E_test = E_test[:, None]
    if E_test.shape[0] != E_cand.shape[0]:
        raise ValueError(f"embedding dims differ: test {E_test.shape[0]}, "
                         f"candidates {E_cand.shape[0]}")
    n_queries, n_cand = E_test.shape[1], E_cand.shape[1]
    if n_cand == 0:
        raise ValueError("candidate set is empty")
    if self_norms.shape != (n_cand,):
        raise ValueError(f"self_norms has shape {self_norms.shape}, expected ({n_cand},)")

    if query_cands is None:
        return _decode_global(E_test, E_cand, self_norms, k)

    if len(query_cands) != n_queries:
        raise ValueError(f"{len(query_cands)} candidate lists for {n_queries} queries")
    out = []
    for j, ids in enumerate(query_cands):
        ids = np.asarray(ids)
        if ids.size == 0:
            raise ValueError(f"query {j} has an empty candidate list")
        if ids.min() < 0 or ids.max() >= n_cand:
            raise ValueError(f"query {j} candidate ids out of range [0, {n_cand})")
        scores = self_norms[ids] - 2.0 * (E_cand[:, ids].T @ E_test[:, j])
        out.append(_select_topk(scores, ids, k))
    return out


def decode_oel(Z_test, Z_cand, self_norms, k: int = 1, query_cands=None) -> list[Ranking]:
    """Rank candidates for each test column of the p x t embedded predictions
    Z_test against the p x N embedded candidates Z_cand.

    query_cands optionally restricts query j to an index list into the
    candidate columns; otherwise all N candidates are scored. Returns one
    Ranking of length min(k, #candidates) per query.
    """
    return _decode(Z_test, Z_cand, self_norms, k, query_cands)


def decode_iokr(A_test, C_s, self_norms, k: int = 1, query_cands=None) -> list[Ranking]:
    """Full-dimensional decoding: alpha columns against output-kernel columns.

    A_test is n x t (alpha(x_j) in column j), C_s is n x N with
    k_y(y_i^train, y_c); the inner product <h(x_j), psi(y_c)> is
    alpha(x_j)^T C_s[:, c]."""
    return _decode(A_test, C_s, self_norms, k, query_cands)
