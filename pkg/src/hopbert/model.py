"""BERT-style encoder whose last blocks use Hopfield association.

Blocks are post-norm (sublayer -> residual add -> layer norm). Blocks
0..L-X-1 run one-step untied association with beta = 1/sqrt(d_head), which
is exactly multi-head self-attention; the last X blocks run the configured
Hopfield retrieval with values tied to keys by default, which removes one
d_model^2 projection per block. Classification reads either a Hopfield
pooling vector or the first-token representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import LN_EPS, Tensor, add, embedding, gelu, layer_norm, matmul
from .hopfield import (
    HopfieldConfig,
    HopfieldWeights,
    PoolingWeights,
    hopfield_associate,
    hopfield_pool,
)

INIT_SCALE = 0.02

N_CLASSES = 6

# FLOP accounting constants (per element): documented cost model, see
# flops_estimate. A matmul (m, k) @ (k, n) costs 2*m*k*n.
SOFTMAX_FLOPS_PER_ELEM = 5
LAYERNORM_FLOPS_PER_ELEM = 8
GELU_FLOPS_PER_ELEM = 8


def matmul_flops(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


@dataclass
class ModelConfig:
    """Architecture descriptor; num_hf_layers == 0 with pooling off is the
    pure-attention baseline."""

    vocab_size: int
    max_len: int = 128
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 64
    num_hf_layers: int = 1
    use_hopfield_pool: bool = True
    pool_num_heads: int = 1
    n_classes: int = N_CLASSES
    seed: int = 0
    hopfield_update_steps: int = 3
    hopfield_update_tol: float = 1e-4
    hopfield_beta: float | None = None   # None -> 1/sqrt(d_head)
    tie_value_to_key: bool = True

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ValueError("vocab_size must cover [PAD], [CLS], [UNK]")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.n_layers < 1 or self.d_model < 1 or self.d_ff < 1:
            raise ValueError("layer and width dimensions must be positive")
        if not 0 <= self.num_hf_layers <= self.n_layers:
            raise ValueError(
                f"num_hf_layers={self.num_hf_layers} outside 0..{self.n_layers}")
        if self.n_classes != N_CLASSES:
            raise ValueError(f"n_classes is fixed at {N_CLASSES}")
        if self.d_model % self.n_heads != 0:
            raise ValueError("n_heads must divide d_model")
        if self.pool_num_heads < 1:
            raise ValueError("pool_num_heads must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def attention_cfg(self) -> HopfieldConfig:
        return HopfieldConfig(d_model=self.d_model, n_heads=self.n_heads, beta=None,
                              update_steps=1, tie_value_to_key=False)

    def hopfield_cfg(self) -> HopfieldConfig:
        return HopfieldConfig(d_model=self.d_model, n_heads=self.n_heads,
                              beta=self.hopfield_beta,
                              update_steps=self.hopfield_update_steps,
                              update_tol=self.hopfield_update_tol,
                              tie_value_to_key=self.tie_value_to_key)

    def pooling_cfg(self) -> HopfieldConfig:
        # Pooling projections stay untied so the parameter delta between the
        # baseline and the Hopfield variant is exactly num_hf_layers * d_model^2.
        return HopfieldConfig(d_model=self.d_model, n_heads=self.n_heads,
                              beta=self.hopfield_beta,
                              update_steps=self.hopfield_update_steps,
                              update_tol=self.hopfield_update_tol,
                              tie_value_to_key=False)


@dataclass
class Block:
    kind: str  # "attention" | "hopfield"
    assoc: HopfieldWeights
    assoc_cfg: HopfieldConfig
    ln1_gain: Tensor
    ln1_bias: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    def parameters(self) -> list[Tensor]:
        return self.assoc.parameters() + [
            self.ln1_gain, self.ln1_bias, self.ff_w1, self.ff_b1,
            self.ff_w2, self.ff_b2, self.ln2_gain, self.ln2_bias,
        ]


@dataclass
class Model:
    cfg: ModelConfig
    token_embedding: Tensor
    position_embedding: Tensor
    emb_ln_gain: Tensor
    emb_ln_bias: Tensor
    blocks: list[Block] = field(default_factory=list)
    pool_weights: PoolingWeights | None = None
    pool_cfg: HopfieldConfig | None = None
    cls_w: Tensor = None
    cls_b: Tensor = None

    def named_parameters(self) -> dict[str, Tensor]:
        """Canonical name -> tensor map; tied weights appear once (as w_k)."""
        named: dict[str, Tensor] = {
            "embeddings.token": self.token_embedding,
            "embeddings.position": self.position_embedding,
            "embeddings.ln.gain": self.emb_ln_gain,
            "embeddings.ln.bias": self.emb_ln_bias,
        }
        for i, blk in enumerate(self.blocks):
            pre = f"blocks.{i}"
            named[f"{pre}.assoc.w_q"] = blk.assoc.w_q
            named[f"{pre}.assoc.w_k"] = blk.assoc.w_k
            if not blk.assoc.tied:
                named[f"{pre}.assoc.w_v"] = blk.assoc.w_v
            named[f"{pre}.assoc.w_o"] = blk.assoc.w_o
            named[f"{pre}.ln1.gain"] = blk.ln1_gain
            named[f"{pre}.ln1.bias"] = blk.ln1_bias
            named[f"{pre}.ff.w1"] = blk.ff_w1
            named[f"{pre}.ff.b1"] = blk.ff_b1
            named[f"{pre}.ff.w2"] = blk.ff_w2
            named[f"{pre}.ff.b2"] = blk.ff_b2
            named[f"{pre}.ln2.gain"] = blk.ln2_gain
            named[f"{pre}.ln2.bias"] = blk.ln2_bias
        if self.pool_weights is not None:
            named["pooling.state_patterns"] = self.pool_weights.state_patterns
            named["pooling.w_k"] = self.pool_weights.w_k
            if not self.pool_weights.tied:
                named["pooling.w_v"] = self.pool_weights.w_v
            named["pooling.w_o"] = self.pool_weights.w_o
        named["classifier.w"] = self.cls_w
        named["classifier.b"] = self.cls_b
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


def build(cfg: ModelConfig) -> Model:
    """Deterministically initialize a model from cfg.seed (normal, scale 0.02;
    layer-norm gains one, biases zero). Block i is Hopfield iff i >= L - X."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d_model

    def normal(*shape):
        return Tensor(rng.normal(0.0, INIT_SCALE, size=shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    model = Model(
        cfg=cfg,
        token_embedding=normal(cfg.vocab_size, d),
        position_embedding=normal(cfg.max_len, d),
        emb_ln_gain=ones(d),
        emb_ln_bias=zeros(d),
    )
    first_hopfield = cfg.n_layers - cfg.num_hf_layers
    for i in range(cfg.n_layers):
        is_hopfield = i >= first_hopfield
        assoc_cfg = cfg.hopfield_cfg() if is_hopfield else cfg.attention_cfg()
        model.blocks.append(Block(
            kind="hopfield" if is_hopfield else "attention",
            assoc=HopfieldWeights.create(assoc_cfg, rng, INIT_SCALE),
            assoc_cfg=assoc_cfg,
            ln1_gain=ones(d), ln1_bias=zeros(d),
            ff_w1=normal(d, cfg.d_ff), ff_b1=zeros(cfg.d_ff),
            ff_w2=normal(cfg.d_ff, d), ff_b2=zeros(d),
            ln2_gain=ones(d), ln2_bias=zeros(d),
        ))
    if cfg.use_hopfield_pool:
        model.pool_cfg = cfg.pooling_cfg()
        model.pool_weights = PoolingWeights.create(
            model.pool_cfg, cfg.pool_num_heads, rng, INIT_SCALE)
        pooled_dim = cfg.pool_num_heads * d
    else:
        pooled_dim = d
    model.cls_w = normal(pooled_dim, cfg.n_classes)
    model.cls_b = zeros(cfg.n_classes)
    return model


def forward(model: Model, token_ids, mask=None) -> Tensor:
    """Run a [batch, seq] id matrix through the encoder; returns logits [batch, 6].

    ``mask`` marks real (non-padding) positions; padded positions are
    excluded from association scores and pooling. Position 0 must be real
    (the [CLS] slot) for first-token classification to be meaningful.
    """
    cfg = model.cfg
    ids = np.asarray(token_ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.dtype.kind not in "iu":
        raise ValueError("token ids must be integers")
    seq_len = ids.shape[1]
    if seq_len > cfg.max_len:
        raise ValueError(f"sequence length {seq_len} exceeds max_len {cfg.max_len}")
    if ids.size and ids.max() >= cfg.vocab_size:
        raise ValueError(f"out-of-vocabulary id {int(ids.max())} (vocab {cfg.vocab_size})")
    if mask is None:
        mask = np.ones(ids.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != ids.shape:
            raise ValueError(f"mask shape {mask.shape} does not match ids {ids.shape}")

    x = add(embedding(model.token_embedding, ids),
            model.position_embedding[0:seq_len])
    x = layer_norm(x, model.emb_ln_gain, model.emb_ln_bias, LN_EPS)
    for blk in model.blocks:
        sub = hopfield_associate(x, x, blk.assoc, blk.assoc_cfg, mask=mask)
        x = layer_norm(add(x, sub), blk.ln1_gain, blk.ln1_bias, LN_EPS)
        h = gelu(add(matmul(x, blk.ff_w1), blk.ff_b1))
        h = add(matmul(h, blk.ff_w2), blk.ff_b2)
        x = layer_norm(add(x, h), blk.ln2_gain, blk.ln2_bias, LN_EPS)
    if model.pool_weights is not None:
        pooled = hopfield_pool(x, model.pool_weights, model.pool_cfg, mask=mask)
    else:
        pooled = x[:, 0, :]
    return add(matmul(pooled, model.cls_w), model.cls_b)


def param_count(model: Model) -> int:
    """Exact scalar parameter count; tied weights count once."""
    return sum(int(p.size) for p in model.parameters())


@dataclass
class FlopsEstimate:
    """Analytic per-sample forward cost at a fixed sequence length."""

    forward_flops: int
    breakdown: dict[str, dict[str, int]]

    def component_total(self, name: str) -> int:
        return sum(self.breakdown[name].values())


def _association_flops(t_state: int, t_stored: int, cfg: HopfieldConfig,
                       project_queries: bool) -> dict[str, int]:
    d, h, s = cfg.d_model, cfg.n_heads, cfg.update_steps
    comp = {
        "q_proj": matmul_flops(t_state, d, d) if project_queries else 0,
        "kv_proj": matmul_flops(t_stored, d, d) * (1 if cfg.tie_value_to_key else 2),
        "scores": s * matmul_flops(t_state, d, t_stored),
        "softmax": s * SOFTMAX_FLOPS_PER_ELEM * h * t_state * t_stored,
        "retrieve": s * matmul_flops(t_state, d, t_stored),
        "out_proj": matmul_flops(t_state, d, d),
    }
    return comp


def flops_estimate(cfg: ModelConfig, seq_len: int) -> FlopsEstimate:
    """Count forward FLOPs at seq_len assuming no early stop in retrieval.

    Cost model: matmul (m, k) @ (k, n) = 2*m*k*n; softmax 5/elem;
    layer norm 8/elem; gelu 8/elem; adds 1/elem. Additive over components.
    """
    if seq_len > cfg.max_len:
        raise ValueError(f"seq_len {seq_len} exceeds max_len {cfg.max_len}")
    t, d, f = seq_len, cfg.d_model, cfg.d_ff
    breakdown: dict[str, dict[str, int]] = {
        "embeddings": {
            "position_add": t * d,
            "layer_norm": LAYERNORM_FLOPS_PER_ELEM * t * d,
        }
    }
    first_hopfield = cfg.n_layers - cfg.num_hf_layers
    for i in range(cfg.n_layers):
        assoc_cfg = cfg.hopfield_cfg() if i >= first_hopfield else cfg.attention_cfg()
        comp = _association_flops(t, t, assoc_cfg, project_queries=True)
        comp["ffn"] = (matmul_flops(t, d, f) + t * f + GELU_FLOPS_PER_ELEM * t * f
                       + matmul_flops(t, f, d) + t * d)
        comp["residual_norms"] = 2 * (t * d + LAYERNORM_FLOPS_PER_ELEM * t * d)
        breakdown[f"block_{i}"] = comp
    if cfg.use_hopfield_pool:
        pool_cfg = cfg.pooling_cfg()
        pcomp = _association_flops(cfg.pool_num_heads, t, pool_cfg, project_queries=False)
        breakdown["pooling"] = pcomp
        pooled_dim = cfg.pool_num_heads * d
    else:
        pooled_dim = d
    breakdown["classifier"] = {
        "project": matmul_flops(1, pooled_dim, cfg.n_classes),
        "bias": cfg.n_classes,
    }
    total = sum(sum(comp.values()) for comp in breakdown.values())
    return FlopsEstimate(forward_flops=total, breakdown=breakdown)
