"""Streaming forgetting attention over fixed-size tiles.

Computes the same O as the reference path without ever materializing the
L x L score matrix. The forward walks key tiles per query tile keeping a
running row max m, normalizer l, and output accumulator; when a new tile
raises the max, previous contributions are rescaled by exp(m_old - m_new).
Per query row it also emits lse_i = m + log l, which the backward uses to
reconstruct probabilities tile by tile (P = exp(S - lse)) without a second
normalization pass.

The backward runs two passes so every output slice is written by exactly one
loop iteration: a key-block pass producing dK, dV, and the key share of dc,
then a query-block pass producing dQ and the query share. No reduction is
shared across iterations, so the passes could run their blocks in parallel
without atomics.

Peak transient memory per call is O(B_r * B_c + B_r * d), independent of L.
Pass a BufferMeter to have each tile's scratch allocations recorded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionGrads, AttentionInputs, ForwardAux
from .errors import ConfigError, ShapeError
from .kernels import cumsum_fwd, cumsum_rev, neg_inf


@dataclass(frozen=True)
class TileConfig:
    """Tile shape: q_block rows of queries by k_block columns of keys."""

    q_block: int = 64
    k_block: int = 64

    def __post_init__(self) -> None:
        if self.q_block < 1 or self.k_block < 1:
            raise ConfigError(f"tile sizes must be >= 1, got {self}")


class BufferMeter:
    """Records per-iteration scratch allocations; peak_bytes is the largest
    simultaneously-live set recorded by a single call site."""

    def __init__(self) -> None:
        self.peak_bytes = 0
        self.calls = 0

    def record(self, *arrays: np.ndarray) -> None:
        self.calls += 1
        total = sum(int(a.nbytes) for a in arrays)
        if total > self.peak_bytes:
            self.peak_bytes = total


def _blocks(length: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, length)) for s in range(0, length, size)]


def _masked_scores(
    inp: AttentionInputs,
    c: np.ndarray,
    r0: int,
    r1: int,
    c0: int,
    c1: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Score tile S[r0:r1, c0:c1] with decay bias and causal mask applied.

    Returns (S, valid). The bias difference is taken in float64 before the
    cast to working precision, matching the reference path's construction.
    """
    dtype = inp.q.dtype
    s = inp.q[r0:r1] @ inp.k[c0:c1].T
    s *= np.asarray(inp.scale, dtype=dtype)
    s += (c[r0:r1, None] - c[None, c0:c1]).astype(dtype)
    valid = np.arange(r0, r1)[:, None] >= np.arange(c0, c1)[None, :]
    s = np.where(valid, s, neg_inf(dtype)).astype(dtype, copy=False)
    return s, valid


def tiled_fwd(
    inp: AttentionInputs, cfg: TileConfig, meter: BufferMeter | None = None
) -> tuple[np.ndarray, ForwardAux]:
    """Streaming forward; returns (O, aux) with aux = per-row lse and c."""
    n, d = inp.q.shape
    dtype = inp.q.dtype
    c = cumsum_fwd(inp.logf)
    out = np.empty((n, d), dtype=dtype)
    lse = np.empty(n, dtype=dtype)
    for r0, r1 in _blocks(n, cfg.q_block):
        rows = r1 - r0
        m = np.full(rows, -np.inf, dtype=dtype)
        ell = np.zeros(rows, dtype=dtype)
        acc = np.zeros((rows, d), dtype=dtype)
        for c0, c1 in _blocks(n, cfg.k_block):
            if c0 > r1 - 1:
                break  # tile is entirely above the diagonal, as are all later ones
            s, valid = _masked_scores(inp, c, r0, r1, c0, c1)
            tile_max = s.max(axis=1)
            has_valid = valid.any(axis=1)
            # Rows with no valid key in this tile must not pull the finite
            # mask sentinel into the running max: exp(sentinel - m) would be
            # exp(0) = 1 on the next tile.
            m_new = np.where(has_valid, np.maximum(m, tile_max), m)
            with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                # exp(-inf - anything) = 0 covers the first tile for a row.
                alpha = np.where(m == -np.inf, 0.0, np.exp(m - m_new)).astype(dtype)
                p = np.exp(s - m_new[:, None])
            p = np.where(valid, p, 0.0).astype(dtype, copy=False)
            ell = alpha * ell + p.sum(axis=1)
            acc = alpha[:, None] * acc + p @ inp.v[c0:c1]
            m = m_new
            if meter is not None:
                meter.record(s, valid, p, acc, alpha, ell, m, tile_max)
        out[r0:r1] = acc / ell[:, None]
        lse[r0:r1] = m + np.log(ell)
    return out, ForwardAux(lse=lse, c=c)


def _tile_probs(
    inp: AttentionInputs,
    aux: ForwardAux,
    r0: int,
    r1: int,
    c0: int,
    c1: int,
) -> np.ndarray:
    """Probability tile P = exp(S - lse) with masked entries exactly zero."""
    s, valid = _masked_scores(inp, aux.c, r0, r1, c0, c1)
    with np.errstate(over="ignore", under="ignore"):
        p = np.exp(s - aux.lse[r0:r1, None])
    return np.where(valid, p, 0.0).astype(s.dtype, copy=False)


def tiled_bwd(
    inp: AttentionInputs,
    out: np.ndarray,
    aux: ForwardAux,
    d_out: np.ndarray,
    cfg: TileConfig,
    meter: BufferMeter | None = None,
) -> AttentionGrads:
    """Streaming backward from saved (O, lse, c); recomputes score tiles only."""
    n, d = inp.q.shape
    if out.shape != (n, d) or d_out.shape != (n, d):
        raise ShapeError("out/d_out must match q's shape")
    if aux.lse.shape != (n,) or aux.c.shape != (n,):
        raise ShapeError("aux statistics must have one entry per row")
    dtype = inp.q.dtype
    scale = np.asarray(inp.scale, dtype=dtype)
    delta = np.sum(d_out * out, axis=1)

    dk = np.zeros((n, d), dtype=dtype)
    dv = np.zeros((n, d), dtype=dtype)
    dc_k = np.zeros(n, dtype=np.float64)
    for c0, c1 in _blocks(n, cfg.k_block):
        dk_j = np.zeros((c1 - c0, d), dtype=dtype)
        dv_j = np.zeros((c1 - c0, d), dtype=dtype)
        dc_j = np.zeros(c1 - c0, dtype=np.float64)
        for r0, r1 in _blocks(n, cfg.q_block):
            if r1 - 1 < c0:
                continue  # whole query block precedes this key block
            p = _tile_probs(inp, aux, r0, r1, c0, c1)
            dp = d_out[r0:r1] @ inp.v[c0:c1].T
            ds = p * (dp - delta[r0:r1, None])
            dv_j += p.T @ d_out[r0:r1]
            dk_j += scale * (ds.T @ inp.q[r0:r1])
            dc_j -= ds.sum(axis=0)
            if meter is not None:
                meter.record(p, dp, ds, dk_j, dv_j, dc_j)
        dk[c0:c1] = dk_j
        dv[c0:c1] = dv_j
        dc_k[c0:c1] = dc_j

    dq = np.zeros((n, d), dtype=dtype)
    dc_q = np.zeros(n, dtype=np.float64)
    for r0, r1 in _blocks(n, cfg.q_block):
        dq_i = np.zeros((r1 - r0, d), dtype=dtype)
        dc_i = np.zeros(r1 - r0, dtype=np.float64)
        for c0, c1 in _blocks(n, cfg.k_block):
            if c0 > r1 - 1:
                break
            p = _tile_probs(inp, aux, r0, r1, c0, c1)
            dp = d_out[r0:r1] @ inp.v[c0:c1].T
            ds = p * (dp - delta[r0:r1, None])
            dq_i += scale * (ds @ inp.k[c0:c1])
            dc_i += ds.sum(axis=1)
            if meter is not None:
                meter.record(p, dp, ds, dq_i, dc_i)
        dq[r0:r1] = dq_i
        dc_q[r0:r1] = dc_i

    dlogf = cumsum_rev(dc_q + dc_k).astype(np.asarray(inp.logf).dtype)
    dlogf[0] = 0.0  # exact: a common shift of c never changes the bias
    return AttentionGrads(dq=dq, dk=dk, dv=dv, dlogf=dlogf)
