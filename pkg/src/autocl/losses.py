"""Contrastive objective, correlation penalty, and their combination.

``nt_xent`` is the temperature-scaled normalized cross entropy over cosine
similarities. ``pearson_term`` is the mean Pearson correlation between each
original window and its generated counterpart; the combined loss penalizes its
magnitude, pushing generated samples away from plain copies *and* from sign
flips (an anti-copy is just as trivial an augmentation). ``autocl_loss``
combines the two and owns the stop-gradient rule: the first-branch projection
enters the contrastive term as a constant, so encoder gradients from that term
arrive only through the generator branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .models import ForwardTrace

DENOMINATOR_MODES = ("symmetric", "first_view_only")
CORRELATION_MODES = ("per_sample", "whole_batch")


@dataclass
class LossConfig:
    tau: float = 0.1
    cr_enabled: bool = True
    cr_weight: float = 1.0
    sg_enabled: bool = True
    denominator_mode: str = "symmetric"
    correlation_mode: str = "per_sample"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.cr_weight < 0:
            raise ValueError("cr_weight must be non-negative")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ValueError(f"denominator_mode must be one of {DENOMINATOR_MODES}")
        if self.correlation_mode not in CORRELATION_MODES:
            raise ValueError(f"correlation_mode must be one of {CORRELATION_MODES}")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "cr_enabled": self.cr_enabled,
            "cr_weight": self.cr_weight,
            "sg_enabled": self.sg_enabled,
            "denominator_mode": self.denominator_mode,
            "correlation_mode": self.correlation_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


def _normalize_rows(y: torch.Tensor, which: str) -> torch.Tensor:
    norms = torch.linalg.vector_norm(y, dim=1)
    if (norms < 1e-12).any():
        idx = int(torch.argmin(norms))
        raise ValueError(f"zero-norm embedding row {idx} in {which}")
    return y / norms.unsqueeze(1)


def nt_xent(
    y1: torch.Tensor,
    y2: torch.Tensor,
    tau: float = 0.1,
    denominator_mode: str = "symmetric",
) -> torch.Tensor:
    """Normalized temperature-scaled cross entropy between two aligned batches.

    Row i of ``y1`` and row i of ``y2`` form the positive pair. In the default
    "symmetric" mode all 2N embeddings serve as anchors and every other
    embedding is a candidate, so each anchor's denominator has 2N - 1 terms.
    The "first_view_only" mode restricts anchors to ``y1`` rows and negatives
    to the remaining ``y1`` rows.
    """
    if y1.shape != y2.shape:
        raise ValueError(f"shape mismatch: {tuple(y1.shape)} vs {tuple(y2.shape)}")
    if y1.ndim != 2:
        raise ValueError("embeddings must be [N, D]")
    n = y1.shape[0]
    if n < 2:
        raise ValueError("need at least 2 pairs for negatives")
    if tau <= 0:
        raise ValueError("tau must be positive")
    if denominator_mode not in DENOMINATOR_MODES:
        raise ValueError(f"denominator_mode must be one of {DENOMINATOR_MODES}")
    u1 = _normalize_rows(y1, "first batch")
    u2 = _normalize_rows(y2, "second batch")
    if denominator_mode == "symmetric":
        u = torch.cat([u1, u2], dim=0)  # [2N, D]
        sim = (u @ u.T) / tau
        self_mask = torch.eye(2 * n, dtype=torch.bool, device=y1.device)
        sim = sim.masked_fill(self_mask, float("-inf"))  # an anchor never matches itself
        targets = torch.cat(
            [torch.arange(n, 2 * n, device=y1.device), torch.arange(n, device=y1.device)]
        )
        return F.cross_entropy(sim, targets)
    # first_view_only: positives from the pair, negatives from the first view.
    pos = (u1 * u2).sum(dim=1, keepdim=True) / tau  # [N, 1]
    within = (u1 @ u1.T) / tau
    mask = ~torch.eye(n, dtype=torch.bool, device=y1.device)
    negatives = within[mask].reshape(n, n - 1)
    logits = torch.cat([pos, negatives], dim=1)
    targets = torch.zeros(n, dtype=torch.long, device=y1.device)
    return F.cross_entropy(logits, targets)


def _pearson_flat(a: torch.Tensor, b: torch.Tensor, label: str) -> torch.Tensor:
    """Row-wise Pearson correlation of two [N, M] tensors."""
    am = a - a.mean(dim=1, keepdim=True)
    bm = b - b.mean(dim=1, keepdim=True)
    va = (am * am).sum(dim=1)
    vb = (bm * bm).sum(dim=1)
    eps = torch.finfo(a.dtype).eps
    thresh_a = (eps * (a.abs().amax(dim=1) + 1.0)) ** 2 * a.shape[1]
    thresh_b = (eps * (b.abs().amax(dim=1) + 1.0)) ** 2 * b.shape[1]
    bad = (va <= thresh_a) | (vb <= thresh_b)
    if bad.any():
        idx = int(torch.nonzero(bad)[0])
        raise ValueError(f"zero-variance sample at index {idx} in {label}")
    return (am * bm).sum(dim=1) / torch.sqrt(va * vb)


def pearson_term(
    x: torch.Tensor, x_gen: torch.Tensor, mode: str = "per_sample"
) -> torch.Tensor:
    """Pearson correlation between original and generated windows.

    "per_sample" flattens each window over time and channels, computes one
    coefficient per pair, and averages over the batch; "whole_batch" flattens
    everything into two vectors and computes a single coefficient.
    """
    if x.shape != x_gen.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_gen.shape)}")
    if mode not in CORRELATION_MODES:
        raise ValueError(f"mode must be one of {CORRELATION_MODES}")
    if mode == "per_sample":
        a = x.reshape(x.shape[0], -1)
        b = x_gen.reshape(x.shape[0], -1)
        return _pearson_flat(a, b, "pearson_term").mean()
    a = x.reshape(1, -1)
    b = x_gen.reshape(1, -1)
    return _pearson_flat(a, b, "pearson_term")[0]


def autocl_loss(
    trace: ForwardTrace, x: torch.Tensor, cfg: LossConfig
) -> tuple[torch.Tensor, dict[str, float]]:
    """Total pretraining loss for one batch plus its detached components.

    With ``sg_enabled`` the first-branch projection is detached before the
    contrastive term, leaving the generator branch as the only gradient route
    into the encoder from that term. The generator itself still receives the
    live projection upstream, so this changes gradients, never values.
    """
    y_for_contrast = trace.y.detach() if cfg.sg_enabled else trace.y
    nt = nt_xent(y_for_contrast, trace.y_gen, cfg.tau, cfg.denominator_mode)
    parts = {"nt_xent": float(nt.detach())}
    loss = nt
    if cfg.cr_enabled:
        corr = pearson_term(x, trace.x_gen, cfg.correlation_mode)
        # penalize |corr|, not corr: minimizing the signed value would reward
        # driving the generator into an equally trivial anti-correlated copy
        loss = loss + cfg.cr_weight * corr.abs()
        parts["pearson"] = float(corr.detach())
    return loss, parts
