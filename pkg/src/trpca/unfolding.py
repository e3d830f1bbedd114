"""Unfolded low-rank / sparse alternation network.

Each stage applies, with the noisy input held fixed,

    L = X - r_L * (X - P_rank(X - S_prev))     (hard tubal truncation)
    S = X - r_S * (X - N(X - L))               (sparse refinement net)

and emits L as its clean-image estimate.  Stage 1 owns private parameters;
stages 2..K share a second set ("1+N" sharing), so the trainable parameter
count is twice one stage's regardless of depth.  Training minimizes the sum
of squared errors of every stage output against the clean cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter, Tape
from .errors import DataShapeMismatch, ShapeMismatch
from .metrics import psnr
from .sparse_net import SparseNetConfig, SparseNetWeights, init_sparse_weights, sparse_forward


@dataclass
class StageParams:
    """Per-stage trainables: residual weights, truncation rank, sparse net.

    rank_r = None disables the truncation branch (identity projection),
    which is the no-low-rank ablation toggle.
    """

    r_l: Parameter
    r_s: Parameter
    rank_r: int | None
    sparse_weights: SparseNetWeights

    def params(self) -> list[Parameter]:
        return [self.r_l, self.r_s] + self.sparse_weights.params()


@dataclass
class UnfoldingNet:
    stage0: StageParams
    shared: StageParams
    stages: int = 4

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError("stages must be >= 1")

    def stage_for(self, k: int) -> StageParams:
        return self.stage0 if k == 0 else self.shared

    def parameters(self) -> list[Parameter]:
        seen: dict[int, Parameter] = {}
        for stage in (self.stage0, self.shared):
            for p in stage.params():
                seen.setdefault(id(p), p)
        return list(seen.values())

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}


def default_rank(n1: int, n2: int) -> int:
    return math.ceil(min(n1, n2) / 3)


def build_unfolding_net(
    patch_shape: tuple[int, int, int],
    cfg: SparseNetConfig | None = None,
    stages: int = 4,
    rank_r: int | None = None,
    seed: int = 0,
    use_tsvd: bool = True,
    use_topk: bool = True,
) -> UnfoldingNet:
    """Construct a net for cubes of patch_shape with residual weights at 1
    and zeroed output convs, so the untrained K=1 net is exactly the hard
    truncation of its input."""
    cfg = cfg or SparseNetConfig()
    n1, n2, _ = patch_shape
    if rank_r is None:
        rank_r = default_rank(n1, n2)
    if not 1 <= rank_r <= min(n1, n2):
        raise ValueError(f"rank_r must be in [1, {min(n1, n2)}], got {rank_r}")
    rng = np.random.default_rng(seed)
    effective_rank = rank_r if use_tsvd else None

    def make_stage(prefix: str) -> StageParams:
        weights = init_sparse_weights(cfg, rng, prefix=prefix)
        weights.use_topk = use_topk
        return StageParams(
            r_l=Parameter(f"{prefix}.r_l", np.array(1.0)),
            r_s=Parameter(f"{prefix}.r_s", np.array(1.0)),
            rank_r=effective_rank,
            sparse_weights=weights,
        )

    return UnfoldingNet(
        stage0=make_stage("stage0"), shared=make_stage("shared"), stages=stages
    )


def low_rank_update(x: Node, s_prev: Node, stage: StageParams, tape: Tape) -> Node:
    """L = X - r_L * (X - P(X - S_prev))."""
    if x.value.shape != s_prev.value.shape:
        raise ShapeMismatch("x and s_prev shapes differ")
    y = ad.sub(x, s_prev)
    proj = ad.tsvd_project(y, stage.rank_r) if stage.rank_r is not None else y
    corr = ad.sub(x, proj)
    return ad.sub(x, ad.scale(corr, stage.r_l.bind(tape)))


def sparse_update(x: Node, l_new: Node, stage: StageParams, tape: Tape) -> Node:
    """S = X - r_S * (X - N(X - L))."""
    if x.value.shape != l_new.value.shape:
        raise ShapeMismatch("x and l_new shapes differ")
    resid = ad.sub(x, l_new)
    refined = sparse_forward(resid, stage.sparse_weights, tape)
    corr = ad.sub(x, refined)
    return ad.sub(x, ad.scale(corr, stage.r_s.bind(tape)))


def forward(net: UnfoldingNet, y, tape: Tape) -> list[Node]:
    """Run all stages on a noisy cube; returns the K stage estimates."""
    x = y if isinstance(y, Node) else tape.constant(np.asarray(y, dtype=np.float64))
    s = tape.constant(np.zeros(x.value.shape))
    outputs: list[Node] = []
    for k in range(net.stages):
        stage = net.stage_for(k)
        l = low_rank_update(x, s, stage, tape)
        s = sparse_update(x, l, stage, tape)
        outputs.append(l)
    return outputs


def stage_loss(outputs: list[Node], clean) -> Node:
    """Sum over stages of the squared Frobenius error against the clean cube."""
    if not outputs:
        raise ValueError("no stage outputs")
    tape = outputs[0].tape
    c = clean if isinstance(clean, Node) else tape.constant(np.asarray(clean, float))
    total: Node | None = None
    for out in outputs:
        if out.value.shape != c.value.shape:
            raise ShapeMismatch(
                f"stage output {out.value.shape} vs clean {c.value.shape}"
            )
        term = ad.frob_sq(ad.sub(c, out))
        total = term if total is None else ad.add(total, term)
    return total


def denoise(net: UnfoldingNet, y: np.ndarray) -> np.ndarray:
    """Final-stage estimate for a noisy cube."""
    return forward(net, y, Tape())[-1].value


@dataclass
class TrainingSample:
    noisy: np.ndarray
    clean: np.ndarray

    def __post_init__(self):
        self.noisy = np.asarray(self.noisy, dtype=np.float64)
        self.clean = np.asarray(self.clean, dtype=np.float64)
        if self.noisy.shape != self.clean.shape:
            raise DataShapeMismatch(
                f"noisy {self.noisy.shape} vs clean {self.clean.shape}"
            )


@dataclass
class TrainLogRow:
    step: int
    loss: float
    lr: float
    val_psnr: float | None = None


@dataclass
class TrainLog:
    rows: list[TrainLogRow] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.rows]

    def final_loss(self) -> float:
        return self.rows[-1].loss


def train(
    net: UnfoldingNet,
    samples: list[TrainingSample],
    epochs: int = 1,
    batch_size: int = 4,
    lr: float = 1e-3,
    seed: int = 0,
    val_samples: list[TrainingSample] | None = None,
    shuffle: bool = True,
) -> TrainLog:
    """Mini-batch Adam on the stage-wise loss; deterministic given seed.

    Logs the per-step batch loss and, at each epoch end, the mean validation
    PSNR of the final-stage estimate.
    """
    if not samples:
        raise ValueError("training set is empty")
    shape = samples[0].noisy.shape
    for s in samples:
        if s.noisy.shape != shape:
            raise DataShapeMismatch("training samples disagree in shape")
    rng = np.random.default_rng(seed)
    params = net.parameters()
    log = TrainLog()
    step = 0
    n = len(samples)
    for _ in range(epochs):
        order = rng.permutation(n) if shuffle else np.arange(n)
        for start in range(0, n, batch_size):
            batch = [samples[i] for i in order[start : start + batch_size]]
            tape = Tape()
            total: Node | None = None
            for sample in batch:
                outs = forward(net, sample.noisy, tape)
                loss = stage_loss(outs, sample.clean)
                total = loss if total is None else ad.add(total, loss)
            total = ad.scale(total, 1.0 / len(batch))
            ad.backward(total)
            adam_params = [p for p in params if p.grad is not None]
            ad.adam_step(adam_params, lr=lr)
            step += 1
            log.rows.append(TrainLogRow(step=step, loss=float(total.value), lr=lr))
        if val_samples:
            log.rows[-1].val_psnr = validation_psnr(net, val_samples)
    return log


def validation_psnr(net: UnfoldingNet, samples: list[TrainingSample]) -> float:
    return float(
        np.mean([psnr(s.clean, denoise(net, s.noisy)) for s in samples])
    )
