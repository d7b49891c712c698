"""Cross-route equivalence checks used by the CLI and demos.

Every check compares two independently implemented routes to the same
mathematical object (streaming vs materialized attention, recurrent vs
closed-form gated linear attention, gate degenerations vs their classical
equivalents) and reports the worst observed error.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionInputs,
    fgattn_bwd,
    fgattn_fwd,
    fixed_gate_from_alibi_slope,
)
from .gla import gla_parallel, gla_recurrent
from .kernels import matmul, neg_inf, row_softmax
from .rng import rng_stream
from .tiled import BufferMeter, TileConfig, tiled_bwd, tiled_fwd


@dataclass
class EquivResult:
    label: str
    worst: float
    tol: float
    cases: int

    @property
    def ok(self) -> bool:
        return self.worst <= self.tol


def _random_case(rng: np.random.Generator, length: int, d: int, dtype):
    q = rng.normal(size=(length, d)).astype(dtype)
    k = rng.normal(size=(length, d)).astype(dtype)
    v = rng.normal(size=(length, d)).astype(dtype)
    logf = (-0.02 - np.abs(rng.normal(scale=0.7, size=length))).astype(dtype)
    return AttentionInputs(q=q, k=k, v=v, logf=logf)


def tiled_vs_naive_fwd(
    seed: int = 0, cases: int = 40, dtype=np.float32
) -> EquivResult:
    """Max abs output difference between streaming and materialized forward."""
    rng = rng_stream(seed, f"equiv/fwd/{np.dtype(dtype).name}")
    tol = 1e-5 if np.dtype(dtype) == np.float32 else 1e-10
    tiles = [1, 2, 16, 64]
    worst = 0.0
    for _ in range(cases):
        length = int(rng.integers(1, 130))
        d = int(rng.choice([1, 4, 16]))
        inp = _random_case(rng, length, d, dtype)
        cfg = TileConfig(
            int(rng.choice(tiles + [length])), int(rng.choice(tiles + [length]))
        )
        ref = fgattn_fwd(inp)
        out, _ = tiled_fwd(inp, cfg)
        worst = max(worst, float(np.abs(out - ref).max()))
    return EquivResult(f"tiled fwd == naive ({np.dtype(dtype).name})", worst, tol, cases)


def tiled_vs_naive_bwd(
    seed: int = 0, cases: int = 20, dtype=np.float32
) -> EquivResult:
    """Relative gradient difference between the two backward routes."""
    rng = rng_stream(seed, f"equiv/bwd/{np.dtype(dtype).name}")
    tol = 1e-4 if np.dtype(dtype) == np.float32 else 1e-8
    tiles = [1, 2, 16, 64]
    worst = 0.0
    for _ in range(cases):
        length = int(rng.integers(1, 100))
        d = int(rng.choice([1, 4, 16]))
        inp = _random_case(rng, length, d, dtype)
        cfg = TileConfig(
            int(rng.choice(tiles + [length])), int(rng.choice(tiles + [length]))
        )
        cot = rng.normal(size=(length, d)).astype(dtype)
        ref_out = fgattn_fwd(inp)
        ref = fgattn_bwd(inp, ref_out, cot)
        out, aux = tiled_fwd(inp, cfg)
        got = tiled_bwd(inp, out, aux, cot, cfg)
        for a, b in (
            (got.dq, ref.dq),
            (got.dk, ref.dk),
            (got.dv, ref.dv),
            (got.dlogf, ref.dlogf),
        ):
            denom = max(float(np.abs(np.asarray(b, np.float64)).max(initial=0.0)), 1e-12)
            worst = max(worst, float(np.abs(np.asarray(a - b, np.float64)).max(initial=0.0)) / denom)
    return EquivResult(f"tiled bwd == naive ({np.dtype(dtype).name})", worst, tol, cases)


def gla_recurrent_vs_parallel(seed: int = 0, trials: int = 25) -> EquivResult:
    """Relative output difference of the two gated-linear-attention forms."""
    rng = rng_stream(seed, "equiv/gla")
    worst = 0.0
    for _ in range(trials):
        length = int(rng.choice([1, 7, 32, 128]))
        d = int(rng.choice([2, 4, 8]))
        k = rng.normal(size=(length, d))
        q = rng.normal(size=(length, d))
        v = rng.normal(size=(length, d))
        f = rng.uniform(0.2, 1.0, size=length)
        a = gla_recurrent(k, q, v, f)
        b = gla_parallel(k, q, v, f)
        denom = max(float(np.abs(a).max()), 1e-12)
        worst = max(worst, float(np.abs(a - b).max()) / denom)
    return EquivResult("gla recurrent == parallel", worst, 1e-10, trials)


def no_gate_vs_softmax(seed: int = 0, cases: int = 10) -> EquivResult:
    """logf = 0 must reduce to plain causal softmax attention."""
    rng = rng_stream(seed, "equiv/nogate")
    worst = 0.0
    for _ in range(cases):
        length = int(rng.integers(2, 64))
        d = 8
        inp = _random_case(rng, length, d, np.float64)
        inp.logf = np.zeros(length)
        got = fgattn_fwd(inp)
        s = matmul(inp.q, inp.k, transpose_b=True) * inp.scale
        s[np.triu_indices(length, k=1)] = neg_inf(np.float64)
        ref = row_softmax(s) @ inp.v
        worst = max(worst, float(np.abs(got - ref).max()))
    return EquivResult("no gate == causal softmax", worst, 1e-6, cases)


def fixed_gate_vs_linear_bias(seed: int = 0, cases: int = 10) -> EquivResult:
    """A constant gate logf = -m must equal an additive -m(i-j) score bias."""
    rng = rng_stream(seed, "equiv/alibi")
    worst = 0.0
    for _ in range(cases):
        length = int(rng.integers(2, 64))
        d = 8
        slope = float(rng.uniform(0.05, 1.0))
        inp = _random_case(rng, length, d, np.float64)
        inp.logf = np.full(length, fixed_gate_from_alibi_slope(slope))
        got = fgattn_fwd(inp)
        s = matmul(inp.q, inp.k, transpose_b=True) * inp.scale
        idx = np.arange(length)
        s = s - slope * (idx[:, None] - idx[None, :])
        s[np.triu_indices(length, k=1)] = neg_inf(np.float64)
        ref = row_softmax(s) @ inp.v
        worst = max(worst, float(np.abs(got - ref).max()))
    return EquivResult("fixed gate == linear bias", worst, 1e-6, cases)


def standard_suite(seed: int = 0) -> list[EquivResult]:
    return [
        tiled_vs_naive_fwd(seed, dtype=np.float32),
        tiled_vs_naive_fwd(seed, dtype=np.float64),
        tiled_vs_naive_bwd(seed, dtype=np.float32),
        tiled_vs_naive_bwd(seed, dtype=np.float64),
        gla_recurrent_vs_parallel(seed),
        no_gate_vs_softmax(seed),
        fixed_gate_vs_linear_bias(seed),
    ]


@dataclass
class BenchRow:
    length: int
    backend: str
    tile: int
    peak_bytes: int
    seconds: float


def naive_fwd_metered(inp: AttentionInputs, meter: BufferMeter) -> np.ndarray:
    """Reference forward with its transient L x L buffers recorded."""
    from .attention import attention_scores

    s = attention_scores(inp)
    p = row_softmax(s)
    meter.record(s, p)
    return matmul(p, inp.v)


def bench_attention(
    lengths: list[int], tile: int, d: int = 16, seed: int = 0
) -> list[BenchRow]:
    """Wall time and peak transient scratch for naive vs tiled forward."""
    rows = []
    for length in lengths:
        rng = rng_stream(seed, f"bench/{length}")
        inp = _random_case(rng, length, d, np.float32)
        meter = BufferMeter()
        t0 = time.perf_counter()
        naive_fwd_metered(inp, meter)
        t_naive = time.perf_counter() - t0
        rows.append(BenchRow(length, "naive", 0, meter.peak_bytes, t_naive))
        meter = BufferMeter()
        cfg = TileConfig(tile, tile)
        t0 = time.perf_counter()
        tiled_fwd(inp, cfg, meter=meter)
        t_tiled = time.perf_counter() - t0
        rows.append(BenchRow(length, "tiled", tile, meter.peak_bytes, t_tiled))
    return rows
