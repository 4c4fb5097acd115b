"""Pretraining loops: generated positives or hand-crafted augmentation pairs.

Both loops share the same skeleton: seeded shuffling with full batches only,
joint Adam over every trainable parameter, an epoch loss that is the mean of
batch losses, and early stopping on strict epoch-loss decrease with the best
epoch's weights snapshotted into the returned checkpoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import torch

from .augment import make_views, parse_aug_pair
from .checkpoint import Checkpoint, state_from_net
from .data import WindowedDataset
from .losses import LossConfig, autocl_loss, nt_xent, pearson_term
from .models import ModelSpec, init_model

METHODS = ("autocl", "simclr")


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr: float = 1e-3
    weight_decay: float = 1e-3
    patience: int = 5
    max_epochs: int = 200
    seed: int = 0
    method: str = "autocl"
    variant: str = "E"
    aug_pair: str | None = None  # two-letter code, simclr only
    grad_clip: float | None = 5.0  # generator gradient norm cap, None disables
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive or None")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "method": self.method,
            "variant": self.variant,
            "aug_pair": self.aug_pair,
            "grad_clip": self.grad_clip,
            "loss": self.loss.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossConfig.from_dict(d["loss"])
        return cls(**d)


@dataclass
class TrainState:
    epoch: int = 0
    best_loss: float = math.inf
    epochs_since_best: int = 0
    history: list[dict] = field(default_factory=list)
    best_state: dict | None = None


def early_stop_update(
    state: TrainState,
    epoch_loss: float,
    patience: int,
    snapshot: Callable[[], dict] | None = None,
) -> str:
    """Advance the early-stopping counters; returns "continue" or "stop".

    Only a strict decrease below the best loss counts as improvement; on
    improvement the snapshot callable (if given) is invoked and its result
    kept as the best weights.
    """
    state.epoch += 1
    if epoch_loss < state.best_loss:
        state.best_loss = epoch_loss
        state.epochs_since_best = 0
        if snapshot is not None:
            state.best_state = snapshot()
    else:
        state.epochs_since_best += 1
    return "stop" if state.epochs_since_best >= patience else "continue"


def build_optimizer(params, lr: float, weight_decay: float) -> torch.optim.AdamW:
    """Adam with decoupled weight decay, the update rule used everywhere here."""
    return torch.optim.AdamW(
        params, lr=lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=weight_decay
    )


def _full_batches(
    n: int, batch_size: int, rng: np.random.Generator
) -> Iterator[np.ndarray]:
    """Shuffled index batches, dropping the trailing partial batch."""
    perm = rng.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield perm[start : start + batch_size]


def _default_spec(dataset: WindowedDataset, variant: str) -> ModelSpec:
    return ModelSpec(
        window_size=dataset.window_size,
        in_channels=dataset.num_channels,
        variant=variant,
    )


class _EpochLog:
    """Optional JSONL sink; one record per line, flushed as written."""

    def __init__(self, path: str | Path | None):
        self._fh = None
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w", encoding="utf-8")

    def write(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def _check_loss_finite(loss: torch.Tensor, epoch: int, batch: int, parts: dict) -> None:
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss at epoch {epoch}, batch {batch}: "
            f"loss={float(loss)}, components={parts}"
        )


def pretrain_autocl(
    dataset: WindowedDataset,
    cfg: TrainConfig,
    model_spec: ModelSpec | None = None,
    log_path: str | Path | None = None,
) -> Checkpoint:
    """Pretrain encoder, projector, and generator jointly on unlabeled windows.

    Each step embeds the batch, generates a paired batch from it, embeds that
    through the same weights, and applies the combined loss. Batch norm runs in
    training mode for both passes, so its statistics see generated samples too.
    """
    if cfg.method != "autocl":
        raise ValueError(f"config method is {cfg.method!r}, expected 'autocl'")
    if cfg.aug_pair is not None:
        raise ValueError("aug_pair is only meaningful for simclr pretraining")
    if dataset.num_windows < cfg.batch_size:
        raise ValueError(
            f"dataset has {dataset.num_windows} windows, fewer than one "
            f"batch of {cfg.batch_size}"
        )
    spec = model_spec if model_spec is not None else _default_spec(dataset, cfg.variant)
    torch.manual_seed(cfg.seed)
    net = init_model(spec, seed=cfg.seed, with_generator=True)
    net.train()
    opt = build_optimizer(net.parameters(), cfg.lr, cfg.weight_decay)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    state = TrainState()
    log = _EpochLog(log_path)
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            losses, nts, pearsons, corr_abs = [], [], [], []
            for b, idx in enumerate(
                _full_batches(dataset.num_windows, cfg.batch_size, shuffle_rng)
            ):
                x = torch.from_numpy(dataset.samples[idx])
                trace = net.forward_trace(x)
                loss, parts = autocl_loss(trace, x, cfg.loss)
                _check_loss_finite(loss, epoch, b, parts)
                opt.zero_grad()
                loss.backward()
                if cfg.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(net.xi_parameters(), cfg.grad_clip)
                opt.step()
                losses.append(float(loss.detach()))
                nts.append(parts["nt_xent"])
                if "pearson" in parts:
                    corr = parts["pearson"]
                else:
                    with torch.no_grad():
                        corr = float(
                            pearson_term(x, trace.x_gen.detach(), cfg.loss.correlation_mode)
                        )
                pearsons.append(corr)
                corr_abs.append(abs(corr))
            epoch_loss = float(np.mean(losses))
            components = {"nt_xent": float(np.mean(nts))}
            if cfg.loss.cr_enabled:
                components["pearson"] = float(np.mean(pearsons))
            decision = early_stop_update(
                state, epoch_loss, cfg.patience, snapshot=lambda: state_from_net(net)
            )
            record = {
                "epoch": epoch,
                "loss": epoch_loss,
                "components": components,
                "gen_corr_abs": float(np.mean(corr_abs)),
                "epochs_since_best": state.epochs_since_best,
            }
            state.history.append(record)
            log.write(record)
            if decision == "stop":
                break
    finally:
        log.close()
    return Checkpoint(
        model_spec=spec,
        method="autocl",
        state=state.best_state,
        history=state.history,
        config=cfg.to_dict(),
    )


def pretrain_simclr(
    dataset: WindowedDataset,
    cfg: TrainConfig,
    model_spec: ModelSpec | None = None,
    log_path: str | Path | None = None,
) -> Checkpoint:
    """Contrastive pretraining with a fixed pair of hand-crafted augmentations."""
    if cfg.method != "simclr":
        raise ValueError(f"config method is {cfg.method!r}, expected 'simclr'")
    if cfg.aug_pair is None:
        raise ValueError("simclr pretraining needs an aug_pair code such as 'SP'")
    op_a, op_b = parse_aug_pair(cfg.aug_pair)
    if dataset.num_windows < cfg.batch_size:
        raise ValueError(
            f"dataset has {dataset.num_windows} windows, fewer than one "
            f"batch of {cfg.batch_size}"
        )
    spec = model_spec if model_spec is not None else _default_spec(dataset, cfg.variant)
    torch.manual_seed(cfg.seed)
    net = init_model(spec, seed=cfg.seed, with_generator=False)
    net.train()
    opt = build_optimizer(net.parameters(), cfg.lr, cfg.weight_decay)
    seed_a, seed_b = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seed_a)
    aug_rng = np.random.default_rng(seed_b)
    state = TrainState()
    log = _EpochLog(log_path)
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            losses = []
            for b, idx in enumerate(
                _full_batches(dataset.num_windows, cfg.batch_size, shuffle_rng)
            ):
                view_a, view_b = make_views(dataset.samples[idx], op_a, op_b, aug_rng)
                _, y1 = net.embed(torch.from_numpy(view_a))
                _, y2 = net.embed(torch.from_numpy(view_b))
                loss = nt_xent(y1, y2, cfg.loss.tau, cfg.loss.denominator_mode)
                _check_loss_finite(loss, epoch, b, {"nt_xent": float(loss.detach())})
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(float(loss.detach()))
            epoch_loss = float(np.mean(losses))
            decision = early_stop_update(
                state, epoch_loss, cfg.patience, snapshot=lambda: state_from_net(net)
            )
            record = {
                "epoch": epoch,
                "loss": epoch_loss,
                "components": {"nt_xent": epoch_loss},
                "epochs_since_best": state.epochs_since_best,
            }
            state.history.append(record)
            log.write(record)
            if decision == "stop":
                break
    finally:
        log.close()
    return Checkpoint(
        model_spec=spec,
        method="simclr",
        state=state.best_state,
        history=state.history,
        config=cfg.to_dict(),
    )
