"""Reference implementations and finite-difference machinery shared by tests.

Everything here is written the slow, obvious way on purpose: double loops in
float64 numpy, so the fast library code has something independent to match.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import torch

from autocl import LossConfig, ModelSpec, autocl_loss


def nt_xent_reference(y1: np.ndarray, y2: np.ndarray, tau: float) -> float:
    """Symmetric-denominator contrastive loss via explicit double loops."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    n = y1.shape[0]
    u = np.concatenate([y1, y2])
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    losses = []
    for i in range(2 * n):
        pos = (i + n) % (2 * n)
        num = np.exp(float(u[i] @ u[pos]) / tau)
        den = 0.0
        for k in range(2 * n):
            if k != i:
                den += np.exp(float(u[i] @ u[k]) / tau)
        losses.append(-np.log(num / den))
    return float(np.mean(losses))


def nt_xent_first_view_reference(y1: np.ndarray, y2: np.ndarray, tau: float) -> float:
    """First-view-negatives variant: anchors are y1 rows only."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    n = y1.shape[0]
    u1 = y1 / np.linalg.norm(y1, axis=1, keepdims=True)
    u2 = y2 / np.linalg.norm(y2, axis=1, keepdims=True)
    losses = []
    for i in range(n):
        num = np.exp(float(u1[i] @ u2[i]) / tau)
        den = num
        for k in range(n):
            if k != i:
                den += np.exp(float(u1[i] @ u1[k]) / tau)
        losses.append(-np.log(num / den))
    return float(np.mean(losses))


def pearson_reference(a: np.ndarray, b: np.ndarray) -> float:
    """Single Pearson coefficient of two flattened arrays via np.corrcoef."""
    return float(np.corrcoef(np.asarray(a, np.float64).ravel(),
                             np.asarray(b, np.float64).ravel())[0, 1])


def pearson_per_sample_reference(x: np.ndarray, x_gen: np.ndarray) -> float:
    vals = [pearson_reference(x[i], x_gen[i]) for i in range(x.shape[0])]
    return float(np.mean(vals))


def tiny_spec(**overrides) -> ModelSpec:
    """Smallest architecture worth differentiating: W=16, C=2, narrow everywhere."""
    base = dict(
        window_size=16,
        in_channels=2,
        conv_channels=(4, 4, 4),
        proj_hidden=8,
        proj_out=8,
        dropout=0.0,
    )
    base.update(overrides)
    return ModelSpec(**base)


def loss_at(net, x: torch.Tensor, cfg: LossConfig, frozen_y: torch.Tensor | None = None) -> float:
    """Evaluate the combined loss; optionally pin the contrastive slot to frozen_y.

    Pinning reproduces what the stop-gradient makes autograd differentiate: the
    first-branch projection enters the contrastive term at its base value while
    everything else (including the generator's input) follows the parameters.
    """
    with torch.no_grad():
        trace = net.forward_trace(x)
    if frozen_y is not None:
        trace = replace(trace, y=frozen_y)
    loss, _ = autocl_loss(trace, x, cfg)
    return float(loss)


def analytic_gradients(net, x: torch.Tensor, cfg: LossConfig) -> dict[str, np.ndarray]:
    for p in net.parameters():
        p.grad = None
    trace = net.forward_trace(x)
    loss, _ = autocl_loss(trace, x, cfg)
    loss.backward()
    out = {}
    for name, p in net.named_parameters():
        grad = p.grad
        out[name] = (
            np.zeros(p.shape, dtype=np.float64)
            if grad is None
            else grad.detach().numpy().astype(np.float64).copy()
        )
    return out


def fd_gradients(
    net,
    x: torch.Tensor,
    cfg: LossConfig,
    h: float = 1e-5,
    max_elements_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, np.ndarray]:
    """Central finite differences over (a subset of) every parameter element.

    With sg enabled the contrastive slot is held at its base-parameter value,
    matching the gradient the stop-gradient defines. Entries not probed (when
    subsampling) are returned as NaN.
    """
    frozen_y = None
    if cfg.sg_enabled:
        with torch.no_grad():
            frozen_y = net.forward_trace(x).y.clone()
    out = {}
    for name, p in net.named_parameters():
        flat = p.data.view(-1)
        n = flat.numel()
        if max_elements_per_tensor is not None and n > max_elements_per_tensor:
            assert rng is not None
            idx = rng.choice(n, size=max_elements_per_tensor, replace=False)
        else:
            idx = np.arange(n)
        grads = np.full(n, np.nan)
        for i in idx:
            orig = float(flat[i])
            flat[i] = orig + h
            plus = loss_at(net, x, cfg, frozen_y)
            flat[i] = orig - h
            minus = loss_at(net, x, cfg, frozen_y)
            flat[i] = orig
            grads[i] = (plus - minus) / (2.0 * h)
        out[name] = grads.reshape(p.shape)
    return out


def max_relative_error(
    analytic: dict[str, np.ndarray], fd: dict[str, np.ndarray], floor: float = 1e-4
) -> float:
    """Worst-case |a - f| / max(|a|, |f|, floor) over all probed elements."""
    worst = 0.0
    for name, f in fd.items():
        a = analytic[name]
        mask = ~np.isnan(f)
        if not mask.any():
            continue
        denom = np.maximum(np.maximum(np.abs(a[mask]), np.abs(f[mask])), floor)
        worst = max(worst, float(np.max(np.abs(a[mask] - f[mask]) / denom)))
    return worst
