"""Sparse refinement network: a two-level 3-D conv encoder/decoder with a
spectral self-attention block and a Top-K channel bottleneck.

The encoder downsamples the spatial axes only (the spectral axis keeps its
full length, so any band count works); attention treats spectral positions
as tokens with channels as the embedding.  The Top-K selection sits after
attention, immediately before the decoder.  The final 1x1x1 convolution is
zero-initialized so a fresh network maps everything to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter, Tape
from .errors import ShapeMismatch


@dataclass
class SparseNetConfig:
    base_channels: int = 8
    levels: int = 2
    attention_heads: int = 1
    topk_ratio_init: float = 0.5

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.levels != 2:
            raise ValueError("only the two-level layout is supported")
        if self.attention_heads != 1:
            raise ValueError("only single-head attention is supported")
        if not 1.0 / self.base_channels < self.topk_ratio_init <= 1.0:
            raise ValueError(
                f"topk_ratio_init must lie in (1/{self.base_channels}, 1]"
            )


@dataclass
class SparseNetWeights:
    """Named parameter collection for one sparse module instance."""

    stem_w: Parameter
    stem_b: Parameter
    down_w: Parameter
    down_b: Parameter
    q_w: Parameter
    q_b: Parameter
    k_w: Parameter
    k_b: Parameter
    v_w: Parameter
    v_b: Parameter
    o_w: Parameter
    o_b: Parameter
    ln_gain: Parameter
    ln_bias: Parameter
    topk_raw: Parameter
    up_w: Parameter
    up_b: Parameter
    out_w: Parameter
    out_b: Parameter
    use_topk: bool = True

    def params(self) -> list[Parameter]:
        return [v for v in vars(self).values() if isinstance(v, Parameter)]

    def named(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.params()}


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_sparse_weights(
    cfg: SparseNetConfig, rng: np.random.Generator, prefix: str = "sparse"
) -> SparseNetWeights:
    """Centered-uniform fan-in init; the output conv starts at exactly zero."""
    c = cfg.base_channels
    c2 = 2 * c
    raw = float(np.log(cfg.topk_ratio_init / (1.0 - cfg.topk_ratio_init))) if (
        cfg.topk_ratio_init < 1.0
    ) else 16.0  # sigmoid(16) is 1.0 to double precision

    def p(name, value):
        return Parameter(f"{prefix}.{name}", value)

    return SparseNetWeights(
        stem_w=p("stem_w", _uniform(rng, (c, 1, 3, 3, 3), 27)),
        stem_b=p("stem_b", np.zeros(c)),
        down_w=p("down_w", _uniform(rng, (c2, c, 3, 3, 3), 27 * c)),
        down_b=p("down_b", np.zeros(c2)),
        q_w=p("q_w", _uniform(rng, (c2, c2, 1, 1, 1), c2)),
        q_b=p("q_b", np.zeros(c2)),
        k_w=p("k_w", _uniform(rng, (c2, c2, 1, 1, 1), c2)),
        k_b=p("k_b", np.zeros(c2)),
        v_w=p("v_w", _uniform(rng, (c2, c2, 1, 1, 1), c2)),
        v_b=p("v_b", np.zeros(c2)),
        o_w=p("o_w", _uniform(rng, (c2, c2, 1, 1, 1), c2)),
        o_b=p("o_b", np.zeros(c2)),
        ln_gain=p("ln_gain", np.ones(c2)),
        ln_bias=p("ln_bias", np.zeros(c2)),
        topk_raw=p("topk_raw", np.array(raw)),
        up_w=p("up_w", _uniform(rng, (c2, c, 3, 3, 3), 27 * c2)),
        up_b=p("up_b", np.zeros(c)),
        out_w=p("out_w", np.zeros((1, c, 1, 1, 1))),
        out_b=p("out_b", np.zeros(1)),
    )


def attention_block(tokens: Node, weights: SparseNetWeights, tape: Tape) -> Node:
    """Scaled dot-product self-attention over the spectral axis.

    tokens: (C, h, w, d) features; each spectral position is one token with
    the C channels as its embedding, batched over the spatial grid.  Output
    is the post-attention residual followed by layer normalization.
    """
    c, h, w, d = tokens.value.shape
    q = ad.conv3d(tokens, weights.q_w.bind(tape), weights.q_b.bind(tape))
    k = ad.conv3d(tokens, weights.k_w.bind(tape), weights.k_b.bind(tape))
    v = ad.conv3d(tokens, weights.v_w.bind(tape), weights.v_b.bind(tape))

    def as_tokens(x):
        # (C, h, w, d) -> (h*w, d, C)
        return ad.reshape(ad.transpose(x, (1, 2, 3, 0)), (h * w, d, c))

    q2, k2, v2 = as_tokens(q), as_tokens(k), as_tokens(v)
    scores = ad.scale(ad.matmul(q2, ad.transpose(k2, (0, 2, 1))), 1.0 / np.sqrt(c))
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.matmul(attn, v2)
    ctx4 = ad.transpose(ad.reshape(ctx, (h, w, d, c)), (3, 0, 1, 2))
    proj = ad.conv3d(ctx4, weights.o_w.bind(tape), weights.o_b.bind(tape))
    res = ad.add(tokens, proj)
    return ad.layer_norm(res, weights.ln_gain.bind(tape), weights.ln_bias.bind(tape))


def attention_matrix(tokens: np.ndarray, weights: SparseNetWeights) -> np.ndarray:
    """Row-stochastic attention weights for inspection, (h*w, d, d)."""
    tape = Tape()
    c, h, w, d = tokens.shape
    x = tape.constant(tokens)
    q = ad.conv3d(x, weights.q_w.bind(tape), weights.q_b.bind(tape))
    k = ad.conv3d(x, weights.k_w.bind(tape), weights.k_b.bind(tape))
    qm = q.value.transpose(1, 2, 3, 0).reshape(h * w, d, c)
    km = k.value.transpose(1, 2, 3, 0).reshape(h * w, d, c)
    logits = qm @ km.transpose(0, 2, 1) / np.sqrt(c)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def topk_ratio_node(weights: SparseNetWeights, tape: Tape) -> Node:
    """Learnable Top-K rate in (0, 1): sigmoid of the unconstrained scalar."""
    return ad.sigmoid(weights.topk_raw.bind(tape))


def sparse_forward(residual, weights: SparseNetWeights, tape: Tape) -> Node:
    """Run the refinement network on an (n1, n2, n3) residual cube.

    Spatial dims must be even (one stride-2 level); the spectral dim is
    unconstrained.  Returns a node of the input shape, in data units.
    """
    if not isinstance(residual, Node):
        residual = tape.constant(residual)
    if residual.value.ndim != 3:
        raise ShapeMismatch(f"residual must be 3-way, got {residual.value.shape}")
    n1, n2, n3 = residual.value.shape
    if n1 % 2 or n2 % 2:
        raise ShapeMismatch(f"spatial dims must be even, got {n1}x{n2}")

    x0 = ad.reshape(residual, (1, n1, n2, n3))
    e1 = ad.leaky_relu(
        ad.conv3d(x0, weights.stem_w.bind(tape), weights.stem_b.bind(tape))
    )
    e2 = ad.leaky_relu(
        ad.conv3d(
            e1, weights.down_w.bind(tape), weights.down_b.bind(tape), stride=(2, 2, 1)
        )
    )
    bott = attention_block(e2, weights, tape)
    if weights.use_topk:
        bott = ad.topk_channels(bott, topk_ratio_node(weights, tape))
    d1 = ad.leaky_relu(
        ad.conv3d_transpose(
            bott, weights.up_w.bind(tape), weights.up_b.bind(tape), stride=(2, 2, 1)
        )
    )
    skip = ad.add(d1, e1)
    out = ad.conv3d(skip, weights.out_w.bind(tape), weights.out_b.bind(tape))
    return ad.reshape(out, (n1, n2, n3))
