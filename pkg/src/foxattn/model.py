"""Desk-scale decoder: pre-norm residual blocks over one attention flavor.

Each block is x + attn(norm(x)) followed by x + mlp(norm(x)); the MLP is the
gated form hidden = (W_in x) * silu(W_gate x) projected back by W_out. The
token embedding and the output head are separate matrices (not tied). When
the gated ("pro") layer is selected, its MLP hidden width is solved so the
block's parameter count matches the plain ("llama") block at the same width,
making architecture comparisons parameter-for-parameter fair.

All parameters are reachable through named_parameters(), which defines the
canonical flat names used by the optimizer and the checkpoint format.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .kernels import rmsnorm, sigmoid
from .layer import (
    GateMode,
    HeadParams,
    LayerActivations,
    LayerConfig,
    LayerParams,
    init_layer_params,
    layer_bwd,
    llama_layer_fwd,
    pro_layer_fwd,
    rmsnorm_bwd,
    zeros_like_layer,
)
from .rng import rng_stream
from .tiled import TileConfig

ARCHS = ("pro", "llama")


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_head: int = 16
    vocab_size: int = 64
    max_train_len: int = 256
    arch: str = "pro"
    gate_mode: GateMode = field(default_factory=GateMode)
    mlp_ratio: float = 8.0 / 3.0
    rope: bool = False
    rope_theta: float = 500000.0
    runtime_len_cap: int = 8192
    backend: str = "tiled"
    tile: int = 64
    eps: float = 1e-6

    def __post_init__(self) -> None:
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}; one of {ARCHS}")
        if self.n_heads * self.d_head != self.d_model:
            raise ConfigError(
                f"n_heads * d_head = {self.n_heads * self.d_head} != d_model {self.d_model}"
            )
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if self.rope and self.arch == "pro":
            raise ConfigError("rope applies to the plain layer only")

    def layer_config(self) -> LayerConfig:
        tile = TileConfig(self.tile, self.tile)
        if self.arch == "pro":
            return LayerConfig.pro(
                self.d_model,
                self.n_heads,
                self.d_head,
                backend=self.backend,
                tile=tile,
                eps=self.eps,
            )
        return LayerConfig.llama(
            self.d_model,
            self.n_heads,
            self.d_head,
            rope=self.rope,
            rope_theta=self.rope_theta,
            backend=self.backend,
            tile=tile,
            eps=self.eps,
        )


def _attn_param_count(cfg: ModelConfig, arch: str) -> int:
    d, dh, nh = cfg.d_model, cfg.d_head, cfg.n_heads
    per_head = 3 * dh * d  # q, k, v projections
    if arch == "pro":
        per_head += dh * d  # output gate
        per_head += 2 * d  # shift weights
        per_head += 3 * dh  # q/k/out norm scales
    if cfg.gate_mode.kind == "data_dependent":
        per_head += d + 1
    elif cfg.gate_mode.kind in ("data_independent", "fixed"):
        per_head += 1
    return nh * per_head + d * nh * dh  # heads + w_o


def mlp_hidden(cfg: ModelConfig) -> int:
    """Hidden width of the block MLP.

    The plain arch uses round(mlp_ratio * d_model). The gated arch solves
    for the width that equates its block parameter count with the plain
    block's, absorbing the extra attention parameters.
    """
    llama_hidden = round(cfg.mlp_ratio * cfg.d_model)
    if cfg.arch == "llama":
        return max(1, llama_hidden)
    llama_block = _attn_param_count(cfg, "llama") + 3 * cfg.d_model * llama_hidden
    pro_attn = _attn_param_count(cfg, "pro")
    return max(1, round((llama_block - pro_attn) / (3 * cfg.d_model)))


@dataclass
class BlockParams:
    attn_gamma: np.ndarray
    attn: LayerParams
    mlp_gamma: np.ndarray
    w_in: np.ndarray
    w_gate: np.ndarray
    w_out: np.ndarray


@dataclass
class ModelParams:
    embed: np.ndarray
    blocks: list[BlockParams]
    final_gamma: np.ndarray
    head_w: np.ndarray


@dataclass
class BlockActs:
    x_in: np.ndarray
    a_in: np.ndarray
    layer: LayerActivations
    x_mid: np.ndarray
    m_in: np.ndarray
    z_in: np.ndarray
    z_gate: np.ndarray
    hidden: np.ndarray


@dataclass
class ModelActs:
    tokens: np.ndarray
    blocks: list[BlockActs]
    x_final: np.ndarray
    h_final: np.ndarray


def init_model_params(cfg: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """All linear weights and the embedding are N(0, 0.02^2); norm scales 1."""
    lcfg = cfg.layer_config()
    hidden = mlp_hidden(cfg)
    d = cfg.d_model
    blocks = []
    for i in range(cfg.n_layers):
        rng = rng_stream(seed, f"init/block{i}")
        attn = init_layer_params(lcfg, cfg.gate_mode, rng, dtype=dtype)
        blocks.append(
            BlockParams(
                attn_gamma=np.ones(d, dtype=dtype),
                attn=attn,
                mlp_gamma=np.ones(d, dtype=dtype),
                w_in=rng.normal(0.0, 0.02, size=(hidden, d)).astype(dtype),
                w_gate=rng.normal(0.0, 0.02, size=(hidden, d)).astype(dtype),
                w_out=rng.normal(0.0, 0.02, size=(d, hidden)).astype(dtype),
            )
        )
    rng = rng_stream(seed, "init/embed")
    return ModelParams(
        embed=rng.normal(0.0, 0.02, size=(cfg.vocab_size, d)).astype(dtype),
        blocks=blocks,
        final_gamma=np.ones(d, dtype=dtype),
        head_w=rng.normal(0.0, 0.02, size=(d, cfg.vocab_size)).astype(dtype),
    )


def _head_named(h: int, head: HeadParams):
    for field_name in (
        "w_q",
        "w_k",
        "w_v",
        "w_g",
        "shift_k",
        "shift_v",
        "gate_w",
        "gate_b",
        "q_gamma",
        "k_gamma",
        "out_gamma",
    ):
        a = getattr(head, field_name)
        if a is not None:
            yield f"heads.{h}.{field_name}", a


def named_parameters(params: ModelParams):
    """Yield (name, array) for every parameter, in a fixed canonical order."""
    yield "embed", params.embed
    for i, blk in enumerate(params.blocks):
        yield f"blocks.{i}.attn_norm.gamma", blk.attn_gamma
        for h, head in enumerate(blk.attn.heads):
            for name, a in _head_named(h, head):
                yield f"blocks.{i}.attn.{name}", a
        yield f"blocks.{i}.attn.w_o", blk.attn.w_o
        yield f"blocks.{i}.mlp_norm.gamma", blk.mlp_gamma
        yield f"blocks.{i}.mlp.w_in", blk.w_in
        yield f"blocks.{i}.mlp.w_gate", blk.w_gate
        yield f"blocks.{i}.mlp.w_out", blk.w_out
    yield "final_norm.gamma", params.final_gamma
    yield "head.w", params.head_w


def param_count(params: ModelParams) -> int:
    return sum(a.size for _, a in named_parameters(params))


def zeros_like_model(params: ModelParams) -> ModelParams:
    return ModelParams(
        embed=np.zeros_like(params.embed),
        blocks=[
            BlockParams(
                attn_gamma=np.zeros_like(b.attn_gamma),
                attn=zeros_like_layer(b.attn),
                mlp_gamma=np.zeros_like(b.mlp_gamma),
                w_in=np.zeros_like(b.w_in),
                w_gate=np.zeros_like(b.w_gate),
                w_out=np.zeros_like(b.w_out),
            )
            for b in params.blocks
        ],
        final_gamma=np.zeros_like(params.final_gamma),
        head_w=np.zeros_like(params.head_w),
    )


def _silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def model_fwd(
    tokens: np.ndarray,
    params: ModelParams,
    cfg: ModelConfig,
    logf_cap: float | None = None,
) -> tuple[np.ndarray, ModelActs]:
    """Token ids to logits. logf_cap is an eval-only decay clamp."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 1:
        raise ShapeError(f"tokens must be 1-D, got ndim={tokens.ndim}")
    n = tokens.shape[0]
    if n < 1:
        raise ValueError("empty token sequence")
    if n > cfg.runtime_len_cap:
        raise ValueError(f"sequence length {n} exceeds runtime cap {cfg.runtime_len_cap}")
    if np.any(tokens < 0) or np.any(tokens >= cfg.vocab_size):
        raise ValueError("token id out of range")
    lcfg = cfg.layer_config()
    if logf_cap is not None:
        lcfg = replace(lcfg, logf_cap=float(logf_cap))
    layer_fn = pro_layer_fwd if cfg.arch == "pro" else llama_layer_fwd

    x = params.embed[tokens]
    blocks: list[BlockActs] = []
    for blk in params.blocks:
        a_in = rmsnorm(x, blk.attn_gamma, cfg.eps)
        y, layer_acts = layer_fn(a_in, blk.attn, cfg.gate_mode, lcfg)
        x_mid = x + y
        m_in = rmsnorm(x_mid, blk.mlp_gamma, cfg.eps)
        z_in = m_in @ blk.w_in.T
        z_gate = m_in @ blk.w_gate.T
        hidden = z_in * _silu(z_gate)
        x_next = x_mid + hidden @ blk.w_out.T
        blocks.append(
            BlockActs(
                x_in=x,
                a_in=a_in,
                layer=layer_acts,
                x_mid=x_mid,
                m_in=m_in,
                z_in=z_in,
                z_gate=z_gate,
                hidden=hidden,
            )
        )
        x = x_next
    h_final = rmsnorm(x, params.final_gamma, cfg.eps)
    logits = h_final @ params.head_w
    return logits, ModelActs(tokens=tokens, blocks=blocks, x_final=x, h_final=h_final)


def cross_entropy(
    logits: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean and per-position next-token loss via logsumexp.

    loss_i = logsumexp(logits_i) - logits_i[target_i]; the mean is weighted
    when a weight vector is given (weights that are all zero are an error).
    """
    if logits.ndim != 2:
        raise ShapeError("logits must be 2-D")
    targets = np.asarray(targets)
    if targets.shape != (logits.shape[0],):
        raise ShapeError(f"targets shape {targets.shape} != ({logits.shape[0]},)")
    if np.any(targets < 0) or np.any(targets >= logits.shape[1]):
        raise ValueError("target id out of range")
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    per_pos = lse - logits[np.arange(logits.shape[0]), targets]
    if weights is None:
        return float(per_pos.mean()), per_pos
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if not total > 0:
        raise ValueError("weights sum to zero")
    return float((per_pos * weights).sum() / total), per_pos


def cross_entropy_bwd(
    logits: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """d(mean loss)/d(logits): (softmax - onehot) scaled by each weight share."""
    n, v = logits.shape
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    p = e / e.sum(axis=1, keepdims=True)
    p[np.arange(n), np.asarray(targets)] -= 1.0
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
    return (p * w[:, None]).astype(logits.dtype)


def model_bwd(
    acts: ModelActs,
    d_logits: np.ndarray,
    params: ModelParams,
    cfg: ModelConfig,
) -> ModelParams:
    """End-to-end backward; returns gradients in the params structure."""
    lcfg = cfg.layer_config()
    grads = zeros_like_model(params)
    grads.head_w[...] = acts.h_final.T @ d_logits
    dh = d_logits @ params.head_w.T
    dx, dfg = rmsnorm_bwd(acts.x_final, params.final_gamma, dh, cfg.eps)
    grads.final_gamma[...] = dfg
    for blk, ba, bg in zip(
        reversed(params.blocks), reversed(acts.blocks), reversed(grads.blocks)
    ):
        # MLP half: x_next = x_mid + (z_in * silu(z_gate)) @ w_out.T
        bg.w_out[...] = dx.T @ ba.hidden
        d_hidden = dx @ blk.w_out
        sg = sigmoid(ba.z_gate)
        silu_g = ba.z_gate * sg
        d_zin = d_hidden * silu_g
        d_zgate = d_hidden * ba.z_in * (sg * (1.0 + ba.z_gate * (1.0 - sg)))
        bg.w_in[...] = d_zin.T @ ba.m_in
        bg.w_gate[...] = d_zgate.T @ ba.m_in
        d_min = d_zin @ blk.w_in + d_zgate @ blk.w_gate
        d_xmid, dmg = rmsnorm_bwd(ba.x_mid, blk.mlp_gamma, d_min, cfg.eps)
        bg.mlp_gamma[...] = dmg
        d_xmid = d_xmid + dx
        # Attention half: x_mid = x_in + layer(rmsnorm(x_in))
        d_ain, layer_grads = layer_bwd(ba.layer, d_xmid, blk.attn, cfg.gate_mode, lcfg)
        bg.attn.w_o[...] = layer_grads.w_o
        for hg_dst, hg_src in zip(bg.attn.heads, layer_grads.heads):
            for name in (
                "w_q",
                "w_k",
                "w_v",
                "w_g",
                "shift_k",
                "shift_v",
                "gate_w",
                "gate_b",
                "q_gamma",
                "k_gamma",
                "out_gamma",
            ):
                src = getattr(hg_src, name)
                if src is not None:
                    getattr(hg_dst, name)[...] = src
        d_xin, dag = rmsnorm_bwd(ba.x_in, blk.attn_gamma, d_ain, cfg.eps)
        bg.attn_gamma[...] = dag
        dx = d_xin + d_xmid
    np.add.at(grads.embed, acts.tokens, dx)
    return grads
