"""Checkpoint archive: one zip holding the model spec, named arrays, and history.

Layout inside the archive:

* ``meta.json``: format tag and version, method, model spec, config snapshot,
  training history, and an index of every array (name, dtype, shape).
* ``arrays/<state-dict-key>``: raw little-endian bytes of that array. Float
  parameters and buffers are stored as float32; integer buffers (batch-norm
  step counters) as int64.

Round-trips are bit-exact for float32 state.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .models import AutoCLNet, ModelSpec

CHECKPOINT_FORMAT = "autocl-checkpoint"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {"float32": "<f4", "int64": "<i8"}


@dataclass
class Checkpoint:
    """In-memory checkpoint: spec + numpy state arrays + history + config."""

    model_spec: ModelSpec
    method: str  # "autocl" or "simclr"
    state: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def has_generator(self) -> bool:
        return any(k.startswith("generator.") for k in self.state)


def state_from_net(net: torch.nn.Module) -> dict[str, np.ndarray]:
    """Copy a module's parameters and buffers out to plain numpy arrays."""
    out = {}
    for name, tensor in net.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        if np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        else:
            arr = arr.astype(np.int64)
        # not ascontiguousarray: that would widen 0-d step counters to shape (1,)
        out[name] = arr.copy(order="C")
    return out


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    index = []
    for name, arr in ckpt.state.items():
        kind = "float32" if np.issubdtype(arr.dtype, np.floating) else "int64"
        index.append({"name": name, "dtype": kind, "shape": list(arr.shape)})
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "method": ckpt.method,
        "model_spec": ckpt.model_spec.to_dict(),
        "config": ckpt.config,
        "history": ckpt.history,
        "arrays": index,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=2))
        for name, arr in ckpt.state.items():
            kind = "float32" if np.issubdtype(arr.dtype, np.floating) else "int64"
            data = arr.astype(_DTYPE_CODES[kind]).tobytes()
            zf.writestr(f"arrays/{name}", data)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no checkpoint at {path}")
    with zipfile.ZipFile(path) as zf:
        with zf.open("meta.json") as fh:
            meta = json.load(io.TextIOWrapper(fh, encoding="utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
        state = {}
        for entry in meta["arrays"]:
            raw = zf.read(f"arrays/{entry['name']}")
            arr = np.frombuffer(raw, dtype=_DTYPE_CODES[entry["dtype"]])
            state[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(
        model_spec=ModelSpec.from_dict(meta["model_spec"]),
        method=meta["method"],
        state=state,
        history=list(meta.get("history", [])),
        config=dict(meta.get("config", {})),
    )


def build_model(ckpt: Checkpoint) -> AutoCLNet:
    """Reconstruct the network and load the checkpoint's weights into it."""
    net = AutoCLNet(ckpt.model_spec, with_generator=ckpt.has_generator)
    tensors = {}
    for name, ref in net.state_dict().items():
        if name not in ckpt.state:
            raise ValueError(f"checkpoint is missing array {name!r}")
        arr = ckpt.state[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise ValueError(
                f"checkpoint array {name!r} has shape {tuple(arr.shape)}, "
                f"model expects {tuple(ref.shape)}"
            )
        tensors[name] = torch.from_numpy(arr.copy(order="C")).to(ref.dtype)
    net.load_state_dict(tensors)
    return net
