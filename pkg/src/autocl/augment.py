"""Manual augmentation operators for the hand-crafted contrastive baseline.

All operators take a batch [N, W, C] as a numpy array plus a numpy Generator
and return a new array of the same shape and dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JITTER_SIGMA = 0.05
SCALE_SIGMA = 0.1
PERMUTE_SEGMENTS = 4

_OP_KINDS = ("original", "jitter", "scale", "permute")
_CODE_TO_KIND = {"O": "original", "J": "jitter", "S": "scale", "P": "permute"}
AUG_PAIR_CODES = ("OJ", "OP", "OS", "PJ", "SJ", "SP")


@dataclass(frozen=True)
class AugmentationOp:
    """One augmentation with its hyperparameters."""

    kind: str
    sigma: float | None = None
    num_segments: int | None = None

    def __post_init__(self):
        if self.kind not in _OP_KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")


def _check_batch(batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim != 3:
        raise ValueError(f"batch must be [N, W, C], got shape {batch.shape}")
    return batch


def jitter(batch: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation sigma to every value."""
    batch = _check_batch(batch)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    noise = rng.normal(0.0, sigma, size=batch.shape)
    return (batch + noise).astype(batch.dtype, copy=False)


def scale(batch: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Multiply each (sample, channel) by a factor drawn from N(1, sigma^2)."""
    batch = _check_batch(batch)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    factors = rng.normal(1.0, sigma, size=(batch.shape[0], 1, batch.shape[2]))
    return (batch * factors).astype(batch.dtype, copy=False)


def segment_boundaries(length: int, num_segments: int) -> list[tuple[int, int]]:
    """Split [0, length) into num_segments contiguous near-equal spans.

    The remainder goes to the leading segments, e.g. length 10 with 4 segments
    gives sizes [3, 3, 2, 2].
    """
    if not 1 <= num_segments <= length:
        raise ValueError(f"num_segments must be in [1, {length}], got {num_segments}")
    base, rem = divmod(length, num_segments)
    sizes = [base + 1] * rem + [base] * (num_segments - rem)
    bounds = []
    start = 0
    for size in sizes:
        bounds.append((start, start + size))
        start += size
    return bounds


def apply_segment_permutation(
    sample: np.ndarray, order: np.ndarray, num_segments: int
) -> np.ndarray:
    """Reorder a [W, C] sample's time segments according to ``order``."""
    bounds = segment_boundaries(sample.shape[0], num_segments)
    return np.concatenate([sample[bounds[j][0] : bounds[j][1]] for j in order])


def permute(batch: np.ndarray, num_segments: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffle each sample's time segments; one permutation per sample, all channels."""
    batch = _check_batch(batch)
    out = np.empty_like(batch)
    for n in range(batch.shape[0]):
        order = rng.permutation(num_segments)
        out[n] = apply_segment_permutation(batch[n], order, num_segments)
    return out


def apply_op(batch: np.ndarray, op: AugmentationOp, rng: np.random.Generator) -> np.ndarray:
    if op.kind == "original":
        return _check_batch(batch).copy()
    if op.kind == "jitter":
        return jitter(batch, JITTER_SIGMA if op.sigma is None else op.sigma, rng)
    if op.kind == "scale":
        return scale(batch, SCALE_SIGMA if op.sigma is None else op.sigma, rng)
    if op.kind == "permute":
        segs = PERMUTE_SEGMENTS if op.num_segments is None else op.num_segments
        return permute(batch, segs, rng)
    raise ValueError(f"unknown augmentation kind {op.kind!r}")


def make_views(
    batch: np.ndarray,
    op_a: AugmentationOp,
    op_b: AugmentationOp,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Produce the two augmented views of a batch with fresh randomness for each."""
    return apply_op(batch, op_a, rng), apply_op(batch, op_b, rng)


def parse_aug_pair(code: str) -> tuple[AugmentationOp, AugmentationOp]:
    """Turn a two-letter code like "SP" into its pair of default-parameter ops.

    Letters: O=original, J=jitter, S=scale, P=permute.
    """
    if not isinstance(code, str) or len(code) != 2:
        raise ValueError(f"augmentation pair must be two letters, got {code!r}")
    ops = []
    for letter in code.upper():
        kind = _CODE_TO_KIND.get(letter)
        if kind is None:
            raise ValueError(
                f"unknown augmentation letter {letter!r} in {code!r}; expected O/J/S/P"
            )
        ops.append(AugmentationOp(kind=kind))
    return ops[0], ops[1]
