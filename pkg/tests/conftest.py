"""Shared fixtures: small datasets, quick checkpoints, criterion reporting."""

from __future__ import annotations

import numpy as np
import pytest

from autocl import (
    SyntheticSpec,
    TrainConfig,
    generate_synthetic,
    pretrain_autocl,
    pretrain_simclr,
)

# One line per acceptance criterion, printed in the terminal summary so the
# pass/fail record survives output capturing.
_CRITERION_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    _CRITERION_LINES.append(f"{status} {name}{suffix}")


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_dataset():
    """60 labeled windows, 3 classes, W=32, C=3; big enough for a few batches."""
    return generate_synthetic(
        SyntheticSpec(
            num_classes=3,
            windows_per_class=20,
            window_size=32,
            channels=3,
            noise_sigma=0.1,
            seed=5,
        )
    )


@pytest.fixture(scope="session")
def small_autocl_checkpoint(small_dataset):
    cfg = TrainConfig(batch_size=16, max_epochs=3, seed=11)
    return pretrain_autocl(small_dataset, cfg)


@pytest.fixture(scope="session")
def small_simclr_checkpoint(small_dataset):
    cfg = TrainConfig(batch_size=16, max_epochs=2, seed=11, method="simclr", aug_pair="SP")
    return pretrain_simclr(small_dataset, cfg)


def write_ucihar_fixture(root, rows_per_split=1, seed=0, value_for_signal=None):
    """Lay out a miniature copy of the published archive structure.

    ``value_for_signal`` fills each signal's windows with a constant derived
    from the signal index, which makes channel-order checks trivial.
    """
    from autocl.data import UCIHAR_SIGNALS

    rng = np.random.default_rng(seed)
    for split in ("train", "test"):
        sig_dir = root / split / "Inertial Signals"
        sig_dir.mkdir(parents=True, exist_ok=True)
        for s_idx, sig in enumerate(UCIHAR_SIGNALS):
            rows = []
            for r in range(rows_per_split):
                if value_for_signal is not None:
                    row = np.full(128, value_for_signal(s_idx, split, r))
                else:
                    row = rng.normal(size=128)
                rows.append(" ".join(f"{v: .7e}" for v in row))
            (sig_dir / f"{sig}_{split}.txt").write_text("\n".join(rows) + "\n")
        labels = rng.integers(1, 7, size=rows_per_split)
        (root / split / f"y_{split}.txt").write_text(
            "\n".join(str(int(v)) for v in labels) + "\n"
        )
        subjects = rng.integers(1, 4, size=rows_per_split)
        (root / split / f"subject_{split}.txt").write_text(
            "\n".join(str(int(v)) for v in subjects) + "\n"
        )
