"""Modern Hopfield association and pooling layers.

Association retrieves a softmax-weighted mixture of stored patterns for each
state pattern. One application with untied value weights and inverse
temperature 1/sqrt(d_head) is exactly scaled dot-product attention; extra
update steps re-feed the retrieved pattern as the next query, iterating
toward a fixed point of the stored-pattern mixture.

Gradient contract: refinement iterations run detached from the autodiff
graph. Gradients flow through the final retrieval step only, so with
update_steps > 1 the query-side parameters (w_q, pooling state patterns)
receive no gradient; with update_steps == 1 the layer is fully
differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .autodiff import MASK_FILL, Array, Tensor, matmul, softmax_rows


@dataclass
class HopfieldConfig:
    """Shape and retrieval hyperparameters shared by association and pooling."""

    d_model: int
    n_heads: int = 1
    beta: float | None = None        # None -> 1/sqrt(d_head)
    update_steps: int = 3            # total retrieval applications, incl. the value step
    update_tol: float = 1e-4
    tie_value_to_key: bool = False

    def __post_init__(self):
        if self.d_model < 1 or self.d_model % self.n_heads != 0:
            raise ValueError(f"n_heads={self.n_heads} must divide d_model={self.d_model}")
        if self.update_steps < 1:
            raise ValueError("update_steps must be >= 1")
        if self.update_tol <= 0:
            raise ValueError("update_tol must be > 0")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be > 0")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def scaling(self) -> float:
        return self.beta if self.beta is not None else 1.0 / sqrt(self.d_head)


def _square(rng: np.random.Generator, d: int, scale: float) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=(d, d)), requires_grad=True)


@dataclass
class HopfieldWeights:
    """Projection matrices for one association layer.

    w_v is the same Tensor object as w_k when values are tied to keys;
    parameter listings count it once.
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor

    @classmethod
    def create(cls, cfg: HopfieldConfig, rng: np.random.Generator,
               scale: float = 0.02) -> "HopfieldWeights":
        d = cfg.d_model
        w_q, w_k = _square(rng, d, scale), _square(rng, d, scale)
        w_v = w_k if cfg.tie_value_to_key else _square(rng, d, scale)
        w_o = _square(rng, d, scale)
        return cls(w_q, w_k, w_v, w_o)

    @property
    def tied(self) -> bool:
        return self.w_v is self.w_k

    def parameters(self) -> list[Tensor]:
        params = [self.w_q, self.w_k]
        if not self.tied:
            params.append(self.w_v)
        params.append(self.w_o)
        return params


@dataclass
class PoolingWeights:
    """Learnable state patterns plus projections for Hopfield pooling.

    The state patterns act as the queries directly (a separate query
    projection would compose two learnable maps into one).
    """

    state_patterns: Tensor  # [pool_num_heads, d_model]
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor

    @classmethod
    def create(cls, cfg: HopfieldConfig, pool_num_heads: int, rng: np.random.Generator,
               scale: float = 0.02) -> "PoolingWeights":
        if pool_num_heads < 1:
            raise ValueError("pool_num_heads must be >= 1")
        d = cfg.d_model
        state = Tensor(rng.normal(0.0, scale, size=(pool_num_heads, d)), requires_grad=True)
        w_k = _square(rng, d, scale)
        w_v = w_k if cfg.tie_value_to_key else _square(rng, d, scale)
        w_o = _square(rng, d, scale)
        return cls(state, w_k, w_v, w_o)

    @property
    def tied(self) -> bool:
        return self.w_v is self.w_k

    @property
    def pool_num_heads(self) -> int:
        return self.state_patterns.shape[0]

    def parameters(self) -> list[Tensor]:
        params = [self.state_patterns, self.w_k]
        if not self.tied:
            params.append(self.w_v)
        params.append(self.w_o)
        return params


# -- shape helpers -------------------------------------------------------------


def _batched(t, name: str) -> tuple[Tensor, bool]:
    t = t if isinstance(t, Tensor) else Tensor(t)
    if t.ndim == 2:
        return t.reshape(1, *t.shape), True
    if t.ndim == 3:
        return t, False
    raise ValueError(f"{name} must be [t, d] or [batch, t, d], got shape {t.shape}")


def _split_heads(t: Tensor, n_heads: int) -> Tensor:
    b, n, d = t.shape
    return t.reshape(b, n, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(t: Tensor) -> Tensor:
    b, h, n, dh = t.shape
    return t.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def _np_softmax(z: Array) -> Array:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _mask4(mask, batch: int) -> Array | None:
    if mask is None:
        return None
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 1:
        m = np.broadcast_to(m, (batch, m.shape[0]))
    return m[:, None, None, :]  # broadcast over heads and state rows


# -- retrieval -------------------------------------------------------------------


def retrieval_iterate(q: Array, k: Array, beta: float, max_steps: int, tol: float,
                      mask: Array | None = None) -> tuple[Array, int, float]:
    """Iterate q <- softmax(beta q k^T) k on plain arrays until the max-abs
    change drops below tol or max_steps is reached.

    Returns (q, steps_run, last_delta). Runs outside the autodiff graph;
    non-convergence is not an error, the caller sees the step count.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    kt = np.swapaxes(k, -1, -2)
    fill = None
    if mask is not None:
        fill = np.where(np.asarray(mask, dtype=bool), 0.0, MASK_FILL)
    steps = 0
    delta = float("inf")
    for _ in range(max_steps):
        z = beta * (q @ kt)
        if fill is not None:
            z = z + fill
        q_next = _np_softmax(z) @ k
        delta = float(np.max(np.abs(q_next - q)))
        q = q_next
        steps += 1
        if delta < tol:
            break
    return q, steps, delta


def _associate_core(q: Tensor, k: Tensor, v: Tensor, w_o: Tensor, cfg: HopfieldConfig,
                    mask: Array | None, info: dict | None) -> Tensor:
    """Shared association path on head-split tensors [B, H, t, d_head]."""
    beta = cfg.scaling
    steps_run, delta = 0, float("nan")
    q_used = q
    if cfg.update_steps > 1:
        refined, steps_run, delta = retrieval_iterate(
            q.data, k.data, beta, cfg.update_steps - 1, cfg.update_tol, mask)
        q_used = Tensor(refined)  # constant: gradients flow through the final step only
    scores = matmul(q_used, k.transpose(0, 1, 3, 2))
    assoc = softmax_rows(scores, beta=beta, mask=mask)
    out = matmul(assoc, v)
    if info is not None:
        info["refinement_steps"] = steps_run
        info["final_delta"] = delta
        info["association"] = assoc.data
    return matmul(_merge_heads(out), w_o)


def hopfield_associate(state, stored, weights: HopfieldWeights, cfg: HopfieldConfig,
                       mask=None, info: dict | None = None) -> Tensor:
    """Multi-head Hopfield association of state patterns over stored patterns.

    state is [t_r, d_model] or [batch, t_r, d_model]; stored likewise with
    t_y rows. ``mask`` is a boolean array over stored positions ([t_y] or
    [batch, t_y]); masked positions are excluded from the association.
    """
    r, squeeze = _batched(state, "state")
    y, _ = _batched(stored, "stored")
    if y.shape[-2] < 1:
        raise ValueError("stored pattern set is empty")
    if r.shape[-1] != cfg.d_model or y.shape[-1] != cfg.d_model:
        raise ValueError(
            f"pattern width mismatch: state {r.shape[-1]}, stored {y.shape[-1]}, "
            f"config {cfg.d_model}")
    h = cfg.n_heads
    q = _split_heads(matmul(r, weights.w_q), h)
    k = _split_heads(matmul(y, weights.w_k), h)
    v = k if weights.tied else _split_heads(matmul(y, weights.w_v), h)
    out = _associate_core(q, k, v, weights.w_o, cfg, _mask4(mask, y.shape[0]), info)
    return out.reshape(*out.shape[1:]) if squeeze else out


def hopfield_pool(stored, weights: PoolingWeights, cfg: HopfieldConfig,
                  mask=None, info: dict | None = None) -> Tensor:
    """Pool a stored-pattern set into one vector via learnable state patterns.

    Returns [pool_num_heads * d_model] (with a leading batch axis when the
    input has one). Invariant under permutations of the stored patterns.
    """
    y, squeeze = _batched(stored, "stored")
    if y.shape[-2] < 1:
        raise ValueError("cannot pool an empty sequence")
    if y.shape[-1] != cfg.d_model:
        raise ValueError(f"pattern width mismatch: stored {y.shape[-1]}, config {cfg.d_model}")
    h = cfg.n_heads
    p = weights.pool_num_heads
    q = _split_heads(weights.state_patterns.reshape(1, p, cfg.d_model), h)
    k = _split_heads(matmul(y, weights.w_k), h)
    v = k if weights.tied else _split_heads(matmul(y, weights.w_v), h)
    out = _associate_core(q, k, v, weights.w_o, cfg, _mask4(mask, y.shape[0]), info)
    out = out.reshape(out.shape[0], p * cfg.d_model)
    return out.reshape(*out.shape[1:]) if squeeze else out


def attention_reference(q, k, v) -> Tensor:
    """Plain scaled dot-product attention softmax(q k^T / sqrt(d)) v.

    Reference oracle used in tests: an independent numpy path with no graph,
    no masking and no head handling.
    """
    qa = q.data if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)
    ka = k.data if isinstance(k, Tensor) else np.asarray(k, dtype=np.float64)
    va = v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)
    if qa.shape[-1] != ka.shape[-1]:
        raise ValueError(f"query/key width mismatch: {qa.shape} vs {ka.shape}")
    if ka.shape[-2] != va.shape[-2]:
        raise ValueError(f"key/value count mismatch: {ka.shape} vs {va.shape}")
    scores = qa @ np.swapaxes(ka, -1, -2) / sqrt(qa.shape[-1])
    return Tensor(_np_softmax(scores) @ va)
