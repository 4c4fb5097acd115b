"""Few-shot evaluation on a frozen encoder, plus CSV exports for inspection.

The pretrained encoder is loaded from a checkpoint and frozen completely
(gradients off, batch norm in inference mode), a fresh classification head is
trained on the small labeled split, and test accuracy is recorded after every
epoch. The headline number is the mean of the ten best epoch accuracies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import Checkpoint, build_model
from .data import WindowedDataset
from .models import PredictionHead, init_prediction_head
from .training import build_optimizer

ENCODE_CHUNK = 512


@dataclass
class EvalReport:
    test_accuracy_history: list[float]
    top10_mean_accuracy: float
    confusion: np.ndarray  # [num_classes, num_classes], rows = true class
    per_class_recall: list[float]

    def to_dict(self) -> dict:
        return {
            "test_accuracy_history": self.test_accuracy_history,
            "top10_mean_accuracy": self.top10_mean_accuracy,
            "confusion": self.confusion.tolist(),
            "per_class_recall": self.per_class_recall,
        }


def top10_average(history: list[float]) -> float:
    """Mean of the ten largest values; needs at least ten entries."""
    if len(history) < 10:
        raise ValueError(f"need at least 10 accuracy values, got {len(history)}")
    return float(np.mean(sorted(history, reverse=True)[:10]))


def confusion_matrix(
    predictions: np.ndarray, labels: np.ndarray, num_classes: int
) -> np.ndarray:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have the same length")
    for name, arr in (("predictions", predictions), ("labels", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} contain values outside [0, {num_classes})")
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (labels, predictions), 1)
    return out


def _encode_dataset(net, samples: np.ndarray) -> torch.Tensor:
    """Embed every window with the frozen encoder; returns [N, D] float32."""
    chunks = []
    with torch.no_grad():
        for start in range(0, samples.shape[0], ENCODE_CHUNK):
            x = torch.from_numpy(samples[start : start + ENCODE_CHUNK])
            chunks.append(net.encoder(x))
    return torch.cat(chunks)


def finetune(
    ckpt: Checkpoint,
    tune: WindowedDataset,
    test: WindowedDataset,
    *,
    epochs: int = 100,
    batch_size: int = 128,
    lr: float = 1e-3,
    weight_decay: float = 1e-4,
    seed: int = 0,
) -> tuple[PredictionHead, EvalReport]:
    """Train a head on frozen features and track test accuracy per epoch.

    The returned head (and the confusion matrix) belong to the epoch with the
    highest test accuracy. Since the encoder stays in inference mode, features
    are computed once up front.
    """
    if tune.labels is None or test.labels is None:
        raise ValueError("finetune needs labeled tune and test datasets")
    tune_classes = set(np.unique(tune.labels).tolist())
    test_classes = set(np.unique(test.labels).tolist())
    if tune_classes != test_classes:
        raise ValueError(
            f"label sets differ between tune {sorted(tune_classes)} "
            f"and test {sorted(test_classes)}"
        )
    num_classes = tune.manifest.num_classes or (max(tune_classes) + 1)

    net = build_model(ckpt)
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)

    z_tune = _encode_dataset(net, tune.samples)
    z_test = _encode_dataset(net, test.samples)
    labels_tune = torch.from_numpy(tune.labels.astype(np.int64))
    labels_test_np = test.labels.astype(np.int64)

    torch.manual_seed(seed)
    head = init_prediction_head(net.encoder.out_features, num_classes, seed)
    opt = build_optimizer(head.parameters(), lr, weight_decay)
    rng = np.random.default_rng(seed)

    history: list[float] = []
    best_acc = -1.0
    best_head_state = None
    n_tune = z_tune.shape[0]
    for _ in range(epochs):
        head.train()
        perm = rng.permutation(n_tune)
        for start in range(0, n_tune, batch_size):  # partial batches kept here
            idx = perm[start : start + batch_size]
            logits = head.logits(z_tune[idx])
            loss = F.cross_entropy(logits, labels_tune[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        head.eval()
        with torch.no_grad():
            preds = head.logits(z_test).argmax(dim=1).numpy()
        acc = float(np.mean(preds == labels_test_np))
        history.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_head_state = {k: v.clone() for k, v in head.state_dict().items()}

    head.load_state_dict(best_head_state)
    head.eval()
    with torch.no_grad():
        preds = head.logits(z_test).argmax(dim=1).numpy()
    confusion = confusion_matrix(preds, labels_test_np, num_classes)
    row_totals = confusion.sum(axis=1)
    recall = [
        float(confusion[i, i] / row_totals[i]) if row_totals[i] else 0.0
        for i in range(num_classes)
    ]
    report = EvalReport(
        test_accuracy_history=history,
        top10_mean_accuracy=top10_average(history),
        confusion=confusion,
        per_class_recall=recall,
    )
    return head, report


def export_embeddings(
    ckpt: Checkpoint,
    dataset: WindowedDataset,
    out_path: str | Path,
    use_projection: bool = False,
) -> None:
    """Write one CSV row per window: label (or -1), then the embedding values."""
    net = build_model(ckpt)
    net.eval()
    with torch.no_grad():
        feats = _encode_dataset(net, dataset.samples)
        if use_projection:
            feats = net.projector(feats)
    feats = feats.numpy()
    labels = dataset.labels if dataset.labels is not None else np.full(
        dataset.num_windows, -1, dtype=np.int32
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"e{i}" for i in range(feats.shape[1])])
        for lbl, row in zip(labels, feats):
            writer.writerow([int(lbl)] + [f"{v:.9g}" for v in row])


def export_augmentation_views(
    ckpt: Checkpoint,
    dataset: WindowedDataset,
    k: int,
    out_path: str | Path,
    seed: int = 0,
) -> None:
    """Dump k windows and their generated counterparts as long-format CSV.

    Columns: window (index into the dataset), channel, t, original, generated.
    """
    if k < 1 or k > dataset.num_windows:
        raise ValueError(f"k must be in [1, {dataset.num_windows}], got {k}")
    net = build_model(ckpt)
    if net.generator is None:
        raise ValueError("checkpoint has no generator; nothing to visualize")
    net.eval()
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(dataset.num_windows, size=k, replace=False))
    x = torch.from_numpy(dataset.samples[chosen])
    with torch.no_grad():
        trace = net.forward_trace(x)
    original = x.numpy()
    generated = trace.x_gen.numpy()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "channel", "t", "original", "generated"])
        for i, win in enumerate(chosen):
            for c in range(dataset.num_channels):
                for t in range(dataset.window_size):
                    writer.writerow(
                        [
                            int(win),
                            c,
                            t,
                            f"{original[i, t, c]:.9g}",
                            f"{generated[i, t, c]:.9g}",
                        ]
                    )
