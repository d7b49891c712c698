"""Attention layers around the gated core: projections, gates, norms, shifts.

Two layer flavors share one code path, differing only in which features are
enabled:

* "pro": RMSNorm on queries and on shifted keys, a one-step data-dependent
  key/value shift, a sigmoid output gate, and RMSNorm on the attention
  output before the out-projection. No positional rotation: the forget
  gate's decay bias carries position.
* "llama": plain q/k/v projections straight into attention, optionally with
  rotary position embeddings, then the out-projection.

Forget gates come in four modes. "data_dependent" computes
f_t = sigmoid(w_f . x_t + b_f) per position; "data_independent" uses a
learnable per-head constant sigmoid(b); "fixed" freezes that constant (its
gradient is reported as exactly zero and it never enters an optimizer);
"none" removes decay entirely (f = 1), leaving standard causal attention.

The backward pass is hand-written and exact. It consumes the activations
saved by the forward and recomputes nothing except attention score tiles
(when the tiled backend is selected).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attention import (
    AttentionInputs,
    ForwardAux,
    fgattn_bwd,
    fgattn_fwd,
    rope_apply,
    rope_unapply,
)
from .errors import ConfigError, ShapeError
from .kernels import log_sigmoid, rmsnorm, sigmoid
from .tiled import TileConfig, tiled_bwd, tiled_fwd

GATE_KINDS = ("data_dependent", "data_independent", "fixed", "none")


@dataclass(frozen=True)
class GateMode:
    """Forget-gate flavor plus the timescale grid used to init constant gates.

    t_min/t_max set the geometric grid of decay timescales for the
    data_independent and fixed modes (and are ignored by the others). A
    timescale T means the gate value satisfies sigmoid(b)^T = 1/e.
    """

    kind: str = "data_dependent"
    t_min: float = 2.0
    t_max: float = 128.0

    def __post_init__(self) -> None:
        if self.kind not in GATE_KINDS:
            raise ConfigError(f"unknown gate kind {self.kind!r}; one of {GATE_KINDS}")
        if self.kind in ("data_independent", "fixed"):
            if self.t_min <= 0:
                raise ValueError(f"timescales must be positive, got t_min={self.t_min}")
            if self.t_min > self.t_max:
                raise ValueError(f"t_min {self.t_min} > t_max {self.t_max}")

    @property
    def has_gate_vector(self) -> bool:
        return self.kind == "data_dependent"

    @property
    def has_gate_bias(self) -> bool:
        return self.kind in ("data_dependent", "data_independent", "fixed")


@dataclass(frozen=True)
class LayerConfig:
    d_model: int
    n_heads: int
    d_head: int
    qk_norm: bool = True
    kv_shift: bool = True
    output_gate: bool = True
    output_norm: bool = True
    rope: bool = False
    rope_theta: float = 500000.0
    eps: float = 1e-6
    backend: str = "tiled"
    tile: TileConfig = field(default_factory=TileConfig)
    logf_cap: float | None = None

    def __post_init__(self) -> None:
        if self.d_model < 1 or self.n_heads < 1 or self.d_head < 1:
            raise ConfigError("d_model, n_heads, d_head must all be >= 1")
        if self.backend not in ("tiled", "naive"):
            raise ConfigError(f"unknown attention backend {self.backend!r}")

    @classmethod
    def pro(cls, d_model: int, n_heads: int, d_head: int, **kw) -> "LayerConfig":
        return cls(d_model, n_heads, d_head, **kw)

    @classmethod
    def llama(
        cls, d_model: int, n_heads: int, d_head: int, rope: bool = False, **kw
    ) -> "LayerConfig":
        return cls(
            d_model,
            n_heads,
            d_head,
            qk_norm=False,
            kv_shift=False,
            output_gate=False,
            output_norm=False,
            rope=rope,
            **kw,
        )


@dataclass
class HeadParams:
    """One head's parameters; unused features hold None."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_g: np.ndarray | None = None
    shift_k: np.ndarray | None = None
    shift_v: np.ndarray | None = None
    gate_w: np.ndarray | None = None
    gate_b: np.ndarray | None = None
    q_gamma: np.ndarray | None = None
    k_gamma: np.ndarray | None = None
    out_gamma: np.ndarray | None = None


@dataclass
class LayerParams:
    heads: list[HeadParams]
    w_o: np.ndarray


@dataclass
class HeadActs:
    q_pre: np.ndarray
    q: np.ndarray
    k_proj: np.ndarray
    k_mix: np.ndarray
    k: np.ndarray
    v_proj: np.ndarray
    v: np.ndarray
    alpha_k: np.ndarray | None
    alpha_v: np.ndarray | None
    f: np.ndarray
    logf: np.ndarray
    o: np.ndarray
    o_norm: np.ndarray
    g: np.ndarray | None
    aux: ForwardAux | None


@dataclass
class LayerActivations:
    x: np.ndarray
    heads: list[HeadActs]


def gate_timescales(t_min: float, t_max: float, n_heads: int) -> np.ndarray:
    """Geometric grid of decay timescales from t_min to t_max (float64)."""
    if t_min <= 0:
        raise ValueError(f"timescales must be positive, got t_min={t_min}")
    if t_min > t_max:
        raise ValueError(f"t_min {t_min} > t_max {t_max}")
    if n_heads < 1:
        raise ValueError("need at least one head")
    if n_heads == 1:
        return np.array([t_min], dtype=np.float64)
    steps = np.arange(n_heads, dtype=np.float64) / (n_heads - 1)
    # base-2 logs keep power-of-two grids exact, e.g. (2, 128, 4) -> 2,8,32,128
    return np.exp2(np.log2(t_min) + (np.log2(t_max) - np.log2(t_min)) * steps)


def forget_gate_init(t_min: float, t_max: float, n_heads: int) -> np.ndarray:
    """Per-head gate biases b with sigmoid(b)^T = 1/e on the timescale grid.

    Solving sigmoid(b) = exp(-1/T) gives b = log(p / (1 - p)) with
    p = exp(-1/T). Larger T means slower decay and a larger bias.
    """
    t = gate_timescales(t_min, t_max, n_heads)
    p = np.exp(-1.0 / t)
    return np.log(p / (1.0 - p))


def bias_timescale(b: float) -> float:
    """Inverse of forget_gate_init for one head: T = 1 / (-log sigmoid(b))."""
    return float(1.0 / np.logaddexp(0.0, -b))


def forget_gates(
    x: np.ndarray, mode: GateMode, head: HeadParams
) -> tuple[np.ndarray, np.ndarray]:
    """Per-position gates (f, logf) for one head.

    logf is computed as -softplus(-z), never as log(sigmoid(z)), so strongly
    negative pre-activations cannot round the gate to exactly zero before
    the log.
    """
    n = x.shape[0]
    dtype = x.dtype
    if mode.kind == "none":
        return np.ones(n, dtype=dtype), np.zeros(n, dtype=dtype)
    if mode.kind == "data_dependent":
        z = x @ head.gate_w + head.gate_b[0]
    else:
        z = np.full(n, head.gate_b[0], dtype=dtype)
    return sigmoid(z).astype(dtype), log_sigmoid(z).astype(dtype)


def _shift_mix(proj: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """mix_t = alpha_t * proj_{t-1} + (1 - alpha_t) * proj_t, with proj_0 = 0."""
    prev = np.vstack([np.zeros((1, proj.shape[1]), dtype=proj.dtype), proj[:-1]])
    return alpha[:, None] * prev + (1.0 - alpha[:, None]) * proj


def kv_shift(
    proj: np.ndarray,
    x: np.ndarray,
    w: np.ndarray,
    normalize: bool,
    gamma: np.ndarray | None = None,
    eps: float = 1e-6,
) -> np.ndarray:
    """Data-dependent one-step shift of a projected sequence.

    alpha_t = sigmoid(w . x_t) blends each row with its predecessor (a zero
    vector before the first position). With normalize=True the mix passes
    through RMSNorm (gamma defaults to ones).
    """
    if proj.shape[0] != x.shape[0]:
        raise ShapeError(f"proj rows {proj.shape[0]} != x rows {x.shape[0]}")
    if w.shape != (x.shape[1],):
        raise ShapeError(f"w shape {w.shape} != ({x.shape[1]},)")
    alpha = sigmoid(x @ w)
    mix = _shift_mix(proj, alpha)
    if not normalize:
        return mix
    if gamma is None:
        gamma = np.ones(proj.shape[1], dtype=proj.dtype)
    return rmsnorm(mix, gamma, eps)


def rmsnorm_bwd(
    x: np.ndarray, gamma: np.ndarray, d_y: np.ndarray, eps: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise RMSNorm backward: returns (dx, dgamma)."""
    d = x.shape[1]
    r = np.sqrt(np.mean(x * x, axis=1, keepdims=True) + eps)
    gdy = gamma * d_y
    dgamma = (d_y * x / r).sum(axis=0)
    dx = gdy / r - x * ((gdy * x).sum(axis=1, keepdims=True) / (d * r * r * r))
    return dx, dgamma


def _check_head_params(head: HeadParams, mode: GateMode, cfg: LayerConfig) -> None:
    if cfg.output_gate and head.w_g is None:
        raise ConfigError("output gate enabled but w_g is missing")
    if cfg.kv_shift and (head.shift_k is None or head.shift_v is None):
        raise ConfigError("kv shift enabled but shift weights are missing")
    if cfg.qk_norm and (head.q_gamma is None or head.k_gamma is None):
        raise ConfigError("qk norm enabled but norm scales are missing")
    if cfg.output_norm and head.out_gamma is None:
        raise ConfigError("output norm enabled but out_gamma is missing")
    if mode.has_gate_bias and head.gate_b is None:
        raise ConfigError(f"gate mode {mode.kind} needs gate_b")
    if mode.has_gate_vector and head.gate_w is None:
        raise ConfigError("data_dependent gate needs gate_w")


def _head_forward(
    x: np.ndarray, head: HeadParams, mode: GateMode, cfg: LayerConfig
) -> HeadActs:
    _check_head_params(head, mode, cfg)
    q_pre = x @ head.w_q.T
    k_proj = x @ head.w_k.T
    v_proj = x @ head.w_v.T

    if cfg.rope:
        q_pre = rope_apply(q_pre, cfg.rope_theta)
        k_proj = rope_apply(k_proj, cfg.rope_theta)

    q = rmsnorm(q_pre, head.q_gamma, cfg.eps) if cfg.qk_norm else q_pre

    if cfg.kv_shift:
        alpha_k = sigmoid(x @ head.shift_k)
        alpha_v = sigmoid(x @ head.shift_v)
        k_mix = _shift_mix(k_proj, alpha_k)
        v = _shift_mix(v_proj, alpha_v)
    else:
        alpha_k = alpha_v = None
        k_mix = k_proj
        v = v_proj
    k = rmsnorm(k_mix, head.k_gamma, cfg.eps) if cfg.qk_norm else k_mix

    f, logf = forget_gates(x, mode, head)
    logf_used = logf if cfg.logf_cap is None else np.minimum(logf, cfg.logf_cap)
    inp = AttentionInputs(q=q, k=k, v=v, logf=logf_used.astype(x.dtype))
    if cfg.backend == "tiled":
        o, aux = tiled_fwd(inp, cfg.tile)
    else:
        o = fgattn_fwd(inp)
        aux = None

    o_norm = rmsnorm(o, head.out_gamma, cfg.eps) if cfg.output_norm else o
    g = sigmoid(x @ head.w_g.T) if cfg.output_gate else None
    return HeadActs(
        q_pre=q_pre,
        q=q,
        k_proj=k_proj,
        k_mix=k_mix,
        k=k,
        v_proj=v_proj,
        v=v,
        alpha_k=alpha_k,
        alpha_v=alpha_v,
        f=f,
        logf=logf_used.astype(x.dtype),
        o=o,
        o_norm=o_norm,
        g=g,
        aux=aux,
    )


def _forward(
    x: np.ndarray, params: LayerParams, mode: GateMode, cfg: LayerConfig
) -> tuple[np.ndarray, LayerActivations]:
    if x.ndim != 2 or x.shape[1] != cfg.d_model:
        raise ShapeError(f"x must be L x {cfg.d_model}, got {x.shape}")
    if len(params.heads) != cfg.n_heads:
        raise ShapeError(f"{len(params.heads)} head params for {cfg.n_heads} heads")
    dh = cfg.d_head
    y = np.zeros((x.shape[0], cfg.d_model), dtype=x.dtype)
    acts: list[HeadActs] = []
    for h, head in enumerate(params.heads):
        ha = _head_forward(x, head, mode, cfg)
        u = ha.o_norm * ha.g if cfg.output_gate else ha.o_norm
        y += u @ params.w_o[:, h * dh : (h + 1) * dh].T
        acts.append(ha)
    return y, LayerActivations(x=x, heads=acts)


def pro_layer_fwd(
    x: np.ndarray, params: LayerParams, mode: GateMode, cfg: LayerConfig
) -> tuple[np.ndarray, LayerActivations]:
    """Gated layer forward. Position is carried by decay, so rope must be off."""
    if cfg.rope:
        raise ConfigError("the gated layer does not use rotary embeddings")
    return _forward(x, params, mode, cfg)


def llama_layer_fwd(
    x: np.ndarray, params: LayerParams, mode: GateMode, cfg: LayerConfig
) -> tuple[np.ndarray, LayerActivations]:
    """Plain-projection layer forward: q/k/v straight into attention."""
    if cfg.qk_norm or cfg.kv_shift or cfg.output_gate or cfg.output_norm:
        raise ConfigError("plain layer config must have the gated extras off")
    return _forward(x, params, mode, cfg)


def zeros_like_head(head: HeadParams) -> HeadParams:
    def z(a):
        return None if a is None else np.zeros_like(a)

    return HeadParams(
        w_q=z(head.w_q),
        w_k=z(head.w_k),
        w_v=z(head.w_v),
        w_g=z(head.w_g),
        shift_k=z(head.shift_k),
        shift_v=z(head.shift_v),
        gate_w=z(head.gate_w),
        gate_b=z(head.gate_b),
        q_gamma=z(head.q_gamma),
        k_gamma=z(head.k_gamma),
        out_gamma=z(head.out_gamma),
    )


def zeros_like_layer(params: LayerParams) -> LayerParams:
    return LayerParams(
        heads=[zeros_like_head(h) for h in params.heads],
        w_o=np.zeros_like(params.w_o),
    )


def _shift_bwd(
    proj: np.ndarray, alpha: np.ndarray, d_mix: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward of _shift_mix: returns (d_proj, d_alpha)."""
    d_proj = (1.0 - alpha[:, None]) * d_mix
    d_proj[:-1] += alpha[1:, None] * d_mix[1:]
    prev = np.vstack([np.zeros((1, proj.shape[1]), dtype=proj.dtype), proj[:-1]])
    d_alpha = (d_mix * (prev - proj)).sum(axis=1)
    return d_proj, d_alpha


def layer_bwd(
    acts: LayerActivations,
    d_y: np.ndarray,
    params: LayerParams,
    mode: GateMode,
    cfg: LayerConfig,
) -> tuple[np.ndarray, LayerParams]:
    """Exact layer backward; returns (dX, grads) with grads mirroring params.

    Fixed-mode gate biases keep an exactly-zero gradient: they are frozen by
    contract, not merely unlikely to move.
    """
    if cfg.logf_cap is not None:
        raise ConfigError("logf_cap is an eval-only override; backward refuses it")
    x = acts.x
    if d_y.shape != (x.shape[0], cfg.d_model):
        raise ShapeError(f"d_y shape {d_y.shape} != {(x.shape[0], cfg.d_model)}")
    dh = cfg.d_head
    grads = zeros_like_layer(params)
    dx = np.zeros_like(x)
    for h, (head, ha, hg) in enumerate(zip(params.heads, acts.heads, grads.heads)):
        blk = params.w_o[:, h * dh : (h + 1) * dh]
        u = ha.o_norm * ha.g if cfg.output_gate else ha.o_norm
        grads.w_o[:, h * dh : (h + 1) * dh] = d_y.T @ u
        du = d_y @ blk

        if cfg.output_gate:
            dg = du * ha.o_norm
            d_on = du * ha.g
            dzg = dg * ha.g * (1.0 - ha.g)
            hg.w_g[...] = dzg.T @ x
            dx += dzg @ head.w_g
        else:
            d_on = du

        if cfg.output_norm:
            do, dog = rmsnorm_bwd(ha.o, head.out_gamma, d_on, cfg.eps)
            hg.out_gamma[...] = dog
        else:
            do = d_on

        inp = AttentionInputs(q=ha.q, k=ha.k, v=ha.v, logf=ha.logf)
        if cfg.backend == "tiled":
            ag = tiled_bwd(inp, ha.o, ha.aux, do, cfg.tile)
        else:
            ag = fgattn_bwd(inp, ha.o, do)

        if mode.kind == "data_dependent":
            dz = ag.dlogf * (1.0 - ha.f)
            hg.gate_w[...] = x.T @ dz
            hg.gate_b[...] = dz.sum()
            dx += np.outer(dz, head.gate_w)
        elif mode.kind == "data_independent":
            hg.gate_b[...] = (ag.dlogf * (1.0 - ha.f)).sum()
        # fixed: frozen, gradient stays zero; none: no gate parameters

        dq = ag.dq
        if cfg.qk_norm:
            dq_pre, dqg = rmsnorm_bwd(ha.q_pre, head.q_gamma, dq, cfg.eps)
            hg.q_gamma[...] = dqg
        else:
            dq_pre = dq
        if cfg.rope:
            dq_pre = rope_unapply(dq_pre, cfg.rope_theta)
        hg.w_q[...] = dq_pre.T @ x
        dx += dq_pre @ head.w_q

        dk = ag.dk
        if cfg.qk_norm:
            d_kmix, dkg = rmsnorm_bwd(ha.k_mix, head.k_gamma, dk, cfg.eps)
            hg.k_gamma[...] = dkg
        else:
            d_kmix = dk
        if cfg.kv_shift:
            d_kproj, d_alpha_k = _shift_bwd(ha.k_proj, ha.alpha_k, d_kmix)
            dza = d_alpha_k * ha.alpha_k * (1.0 - ha.alpha_k)
            hg.shift_k[...] = x.T @ dza
            dx += np.outer(dza, head.shift_k)
        else:
            d_kproj = d_kmix
        if cfg.rope:
            d_kproj = rope_unapply(d_kproj, cfg.rope_theta)
        hg.w_k[...] = d_kproj.T @ x
        dx += d_kproj @ head.w_k

        dv = ag.dv
        if cfg.kv_shift:
            d_vproj, d_alpha_v = _shift_bwd(ha.v_proj, ha.alpha_v, dv)
            dzb = d_alpha_v * ha.alpha_v * (1.0 - ha.alpha_v)
            hg.shift_v[...] = x.T @ dzb
            dx += np.outer(dzb, head.shift_v)
        else:
            d_vproj = dv
        hg.w_v[...] = d_vproj.T @ x
        dx += d_vproj @ head.w_v

    return dx, grads


def init_layer_params(
    cfg: LayerConfig,
    mode: GateMode,
    rng: np.random.Generator,
    dtype=np.float32,
    init_std: float = 0.02,
) -> LayerParams:
    """Fresh layer parameters: N(0, init_std^2) weights, unit norm scales,
    zero data-dependent gate bias, timescale-grid constant-gate biases."""
    d, dh = cfg.d_model, cfg.d_head

    def w(*shape):
        return rng.normal(0.0, init_std, size=shape).astype(dtype)

    const_bias = (
        forget_gate_init(mode.t_min, mode.t_max, cfg.n_heads)
        if mode.kind in ("data_independent", "fixed")
        else None
    )
    heads = []
    for h in range(cfg.n_heads):
        if mode.kind == "data_dependent":
            gate_w, gate_b = w(d), np.zeros(1, dtype=dtype)
        elif mode.kind in ("data_independent", "fixed"):
            gate_w, gate_b = None, np.array([const_bias[h]], dtype=dtype)
        else:
            gate_w, gate_b = None, None
        heads.append(
            HeadParams(
                w_q=w(dh, d),
                w_k=w(dh, d),
                w_v=w(dh, d),
                w_g=w(dh, d) if cfg.output_gate else None,
                shift_k=w(d) if cfg.kv_shift else None,
                shift_v=w(d) if cfg.kv_shift else None,
                gate_w=gate_w,
                gate_b=gate_b,
                q_gamma=np.ones(dh, dtype=dtype) if cfg.qk_norm else None,
                k_gamma=np.ones(dh, dtype=dtype) if cfg.qk_norm else None,
                out_gamma=np.ones(dh, dtype=dtype) if cfg.output_norm else None,
            )
        )
    return LayerParams(heads=heads, w_o=w(d, cfg.n_heads * dh))
