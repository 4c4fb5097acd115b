"""Dataset ingestion, windowing, synthetic generation, and the on-disk container.

Everything downstream consumes a ``WindowedDataset``: a float32 array of shape
[num_windows, window_size, channels], optional integer labels, and a manifest
describing provenance. Datasets round-trip bit-exactly through a directory
container (manifest.json + raw little-endian binaries).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONTAINER_FORMAT = "windowed-dataset-v1"

UCIHAR_WINDOW = 128
UCIHAR_SAMPLE_RATE_HZ = 50.0
UCIHAR_SIGNALS = (
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
)
UCIHAR_CLASSES = (
    "WALKING",
    "WALKING_UPSTAIRS",
    "WALKING_DOWNSTAIRS",
    "SITTING",
    "STANDING",
    "LAYING",
)

# Relative frequency offset between consecutive classes in synthetic data,
# and the template amplitude relative to unit noise at noise_sigma=1. Both are
# kept small on purpose: class templates should be close enough (and faint
# enough against the noise) that random untrained encoder features do not
# separate them trivially, while a trained encoder can.
SYNTHETIC_CLASS_SPACING = 0.02
SYNTHETIC_AMPLITUDE = 0.3


class IngestionError(RuntimeError):
    """A source file required for import is missing or unreadable."""


class FormatError(ValueError):
    """A source file exists but its contents are malformed."""


class IntegrityError(ValueError):
    """A stored container is internally inconsistent."""


@dataclass
class DatasetManifest:
    """Provenance and geometry for a windowed dataset."""

    name: str
    sample_rate_hz: float
    num_classes: int
    num_subjects: int
    window_size: int
    overlap_fraction: float
    class_names: list[str] = field(default_factory=list)
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.window_size < 2:
            raise ValueError("window_size must be at least 2")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError("overlap_fraction must be in [0, 1)")
        if self.num_classes < 0 or self.num_subjects < 0:
            raise ValueError("num_classes and num_subjects must be non-negative")
        if self.class_names and len(self.class_names) != self.num_classes:
            raise ValueError("class_names length must match num_classes")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sample_rate_hz": self.sample_rate_hz,
            "num_classes": self.num_classes,
            "num_subjects": self.num_subjects,
            "window_size": self.window_size,
            "overlap_fraction": self.overlap_fraction,
            "class_names": list(self.class_names),
            "seed": self.seed,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            name=d["name"],
            sample_rate_hz=d["sample_rate_hz"],
            num_classes=d["num_classes"],
            num_subjects=d["num_subjects"],
            window_size=d["window_size"],
            overlap_fraction=d["overlap_fraction"],
            class_names=list(d.get("class_names", [])),
            seed=d.get("seed"),
            extra=dict(d.get("extra", {})),
        )


@dataclass
class WindowedDataset:
    """Fixed-length windows [num_windows, window_size, channels] with optional labels."""

    samples: np.ndarray
    labels: np.ndarray | None
    manifest: DatasetManifest

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be 3-d, got shape {self.samples.shape}")
        if not np.isfinite(self.samples).all():
            raise ValueError("samples contain NaN or Inf")
        if self.samples.shape[1] != self.manifest.window_size:
            raise IntegrityError(
                f"samples window size {self.samples.shape[1]} does not match "
                f"manifest window_size {self.manifest.window_size}"
            )
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
            if self.labels.shape != (self.samples.shape[0],):
                raise ValueError("labels must be one integer per window")
            if self.labels.size and (
                self.labels.min() < 0 or self.labels.max() >= self.manifest.num_classes
            ):
                raise ValueError("labels out of range [0, num_classes)")

    @property
    def num_windows(self) -> int:
        return self.samples.shape[0]

    @property
    def window_size(self) -> int:
        return self.samples.shape[1]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[2]


@dataclass
class SyntheticSpec:
    """Recipe for a labeled synthetic multichannel dataset."""

    num_classes: int = 3
    windows_per_class: int = 100
    window_size: int = 128
    channels: int = 6
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.windows_per_class < 1:
            raise ValueError("num_classes and windows_per_class must be positive")
        if self.window_size < 2 or self.channels < 1:
            raise ValueError("window_size must be >= 2 and channels >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def window_series(
    stream: np.ndarray,
    window_size: int,
    overlap_fraction: float,
    *,
    sample_rate_hz: float = 1.0,
    name: str = "stream",
) -> WindowedDataset:
    """Slice a continuous [T, C] stream into overlapping windows.

    The hop between window starts is round(window_size * (1 - overlap_fraction)),
    clamped to at least one step; a trailing partial window is dropped.
    """
    stream = np.asarray(stream)
    if stream.ndim != 2:
        raise ValueError(f"stream must be [T, channels], got shape {stream.shape}")
    if window_size < 2:
        raise ValueError("window_size must be at least 2")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must be in [0, 1)")
    t_len = stream.shape[0]
    if t_len < window_size:
        raise ValueError(f"stream of length {t_len} is shorter than one window ({window_size})")
    stride = max(1, round(window_size * (1.0 - overlap_fraction)))
    count = (t_len - window_size) // stride + 1
    starts = [i * stride for i in range(count)]
    windows = np.stack([stream[s : s + window_size] for s in starts]).astype(np.float32)
    manifest = DatasetManifest(
        name=name,
        sample_rate_hz=sample_rate_hz,
        num_classes=0,
        num_subjects=0,
        window_size=window_size,
        overlap_fraction=overlap_fraction,
    )
    return WindowedDataset(samples=windows, labels=None, manifest=manifest)


def generate_synthetic(spec: SyntheticSpec) -> WindowedDataset:
    """Build a balanced labeled dataset of noisy class-specific sinusoid templates.

    Each class has one fixed template: per channel a sinusoid whose amplitude
    and phase are shared by every class, so classes differ only by a small
    frequency ratio. That keeps the task from being separable through any
    fixed random filter bank while leaving it learnable. Windows are the
    template plus i.i.d. Gaussian noise, so with noise_sigma=0 all windows of
    a class are identical. Fully determined by the seed.
    """
    rng = np.random.default_rng(spec.seed)
    k, c, w = spec.num_classes, spec.channels, spec.window_size
    base_freq = rng.uniform(2.0, 8.0, size=c)
    freq = base_freq[None, :] * (1.0 + SYNTHETIC_CLASS_SPACING * np.arange(k)[:, None])
    amp = SYNTHETIC_AMPLITUDE * rng.uniform(0.9, 1.1, size=c)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=c)
    t = np.arange(w, dtype=np.float64)[None, :, None]
    # templates[k, w, c]
    templates = amp[None, None, :] * np.sin(
        2.0 * np.pi * freq[:, None, :] * t / w + phase[None, None, :]
    )
    labels = np.repeat(np.arange(k, dtype=np.int32), spec.windows_per_class)
    samples = templates[labels]
    if spec.noise_sigma > 0:
        samples = samples + rng.normal(0.0, spec.noise_sigma, size=samples.shape)
    manifest = DatasetManifest(
        name="synthetic",
        sample_rate_hz=50.0,
        num_classes=k,
        num_subjects=0,
        window_size=w,
        overlap_fraction=0.0,
        class_names=[f"class_{i}" for i in range(k)],
        seed=spec.seed,
    )
    return WindowedDataset(samples=samples.astype(np.float32), labels=labels, manifest=manifest)


def _read_signal_file(path: Path) -> np.ndarray:
    if not path.is_file():
        raise IngestionError(f"missing signal file: {path}")
    rows = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != UCIHAR_WINDOW:
                raise FormatError(
                    f"{path}: row {i} has {len(parts)} values, expected {UCIHAR_WINDOW}"
                )
            rows.append(np.asarray(parts, dtype=np.float32))
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.stack(rows)


def _read_int_column(path: Path) -> np.ndarray:
    if not path.is_file():
        raise IngestionError(f"missing file: {path}")
    values = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            token = line.strip()
            if not token:
                continue
            try:
                values.append(int(token))
            except ValueError as exc:
                raise FormatError(f"{path}: row {i} is not an integer: {token!r}") from exc
    return np.asarray(values, dtype=np.int64)


def _load_ucihar_partition(root: Path, split: str) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    split_dir = root / split
    if not split_dir.is_dir():
        raise IngestionError(f"missing partition directory: {split_dir}")
    signals = []
    for sig in UCIHAR_SIGNALS:
        signals.append(_read_signal_file(split_dir / "Inertial Signals" / f"{sig}_{split}.txt"))
    counts = {s.shape[0] for s in signals}
    if len(counts) != 1:
        raise FormatError(f"{split_dir}: signal files disagree on row count: {sorted(counts)}")
    samples = np.stack(signals, axis=-1)  # [rows, 128, 9]
    raw_labels = _read_int_column(split_dir / f"y_{split}.txt")
    if raw_labels.shape[0] != samples.shape[0]:
        raise FormatError(
            f"{split_dir}: {raw_labels.shape[0]} labels for {samples.shape[0]} windows"
        )
    if raw_labels.min() < 1 or raw_labels.max() > len(UCIHAR_CLASSES):
        raise FormatError(f"{split_dir}: labels outside 1..{len(UCIHAR_CLASSES)}")
    labels = (raw_labels - 1).astype(np.int32)
    subject_path = split_dir / f"subject_{split}.txt"
    subjects = _read_int_column(subject_path) if subject_path.is_file() else None
    if subjects is not None and subjects.shape[0] != samples.shape[0]:
        raise FormatError(f"{subject_path}: subject count does not match window count")
    return samples, labels, subjects


def import_ucihar(root: str | Path) -> WindowedDataset:
    """Load the published UCI HAR smartphone archive (train and test concatenated).

    Windows come pre-segmented as 128-sample rows across 9 inertial signal
    files; channel order follows ``UCIHAR_SIGNALS``. The original partition of
    each window is kept as index ranges in the manifest's extra field.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"dataset root is not a directory: {root}")
    train_x, train_y, train_subj = _load_ucihar_partition(root, "train")
    test_x, test_y, test_subj = _load_ucihar_partition(root, "test")
    samples = np.concatenate([train_x, test_x])
    labels = np.concatenate([train_y, test_y])
    if train_subj is not None and test_subj is not None:
        num_subjects = int(np.unique(np.concatenate([train_subj, test_subj])).size)
    else:
        num_subjects = 0
    n_train = train_x.shape[0]
    manifest = DatasetManifest(
        name="ucihar",
        sample_rate_hz=UCIHAR_SAMPLE_RATE_HZ,
        num_classes=len(UCIHAR_CLASSES),
        num_subjects=num_subjects,
        window_size=UCIHAR_WINDOW,
        overlap_fraction=0.5,
        class_names=list(UCIHAR_CLASSES),
        extra={
            "channels": list(UCIHAR_SIGNALS),
            "partitions": {
                "train": [0, n_train],
                "test": [n_train, n_train + test_x.shape[0]],
            },
        },
    )
    return WindowedDataset(samples=samples, labels=labels, manifest=manifest)


def split_few_shot(
    dataset: WindowedDataset, fraction: float, seed: int
) -> tuple[WindowedDataset, WindowedDataset]:
    """Stratified (tune, test) split: round(fraction * per-class count) windows per class.

    The draw is seeded and recorded in both manifests; every window lands in
    exactly one side. A class whose tune share rounds to zero is an error.
    """
    if dataset.labels is None:
        raise ValueError("split_few_shot needs a labeled dataset")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    tune_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in np.unique(dataset.labels):
        cls_idx = np.flatnonzero(dataset.labels == cls)
        n_take = round(fraction * cls_idx.size)
        if n_take < 1:
            raise ValueError(
                f"class {int(cls)} has {cls_idx.size} windows; "
                f"fraction {fraction} rounds to an empty tune set"
            )
        if n_take >= cls_idx.size:
            raise ValueError(f"class {int(cls)}: tune fraction leaves no test windows")
        perm = rng.permutation(cls_idx)
        tune_idx.append(perm[:n_take])
        test_idx.append(perm[n_take:])
    tune_sel = np.sort(np.concatenate(tune_idx))
    test_sel = np.sort(np.concatenate(test_idx))

    def _subset(sel: np.ndarray, role: str) -> WindowedDataset:
        m = DatasetManifest.from_dict(dataset.manifest.to_dict())
        m.extra = dict(m.extra)
        m.extra["split"] = {"role": role, "fraction": fraction, "seed": seed}
        return WindowedDataset(
            samples=dataset.samples[sel], labels=dataset.labels[sel], manifest=m
        )

    return _subset(tune_sel, "tune"), _subset(test_sel, "test")


def save_container(dataset: WindowedDataset, path: str | Path) -> None:
    """Write a dataset as a directory: manifest.json + samples.bin (+ labels.bin)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": CONTAINER_FORMAT,
        "num_windows": dataset.num_windows,
        "num_channels": dataset.num_channels,
        "has_labels": dataset.labels is not None,
        **dataset.manifest.to_dict(),
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    dataset.samples.astype("<f4", copy=False).tofile(path / "samples.bin")
    if dataset.labels is not None:
        dataset.labels.astype("<i4", copy=False).tofile(path / "labels.bin")


def load_container(path: str | Path) -> WindowedDataset:
    """Read a dataset directory written by :func:`save_container`, validating sizes."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise IngestionError(f"missing manifest: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != CONTAINER_FORMAT:
        raise IntegrityError(
            f"unsupported container format {meta.get('format')!r} at {path}"
        )
    manifest = DatasetManifest.from_dict(meta)
    n, w, c = meta["num_windows"], manifest.window_size, meta["num_channels"]
    samples_path = path / "samples.bin"
    if not samples_path.is_file():
        raise IngestionError(f"missing samples file: {samples_path}")
    expected = n * w * c * 4
    actual = samples_path.stat().st_size
    if actual != expected:
        raise IntegrityError(
            f"{samples_path}: size {actual} does not match manifest "
            f"({n} x {w} x {c} float32 = {expected} bytes)"
        )
    samples = np.fromfile(samples_path, dtype="<f4").reshape(n, w, c)
    labels = None
    if meta.get("has_labels"):
        labels_path = path / "labels.bin"
        if not labels_path.is_file():
            raise IngestionError(f"missing labels file: {labels_path}")
        if labels_path.stat().st_size != n * 4:
            raise IntegrityError(f"{labels_path}: size does not match {n} int32 labels")
        labels = np.fromfile(labels_path, dtype="<i4")
    return WindowedDataset(samples=samples, labels=labels, manifest=manifest)
