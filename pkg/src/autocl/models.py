"""Networks: convolutional encoder, projector, recurrent sample generator, head.

The encoder and projector are shared by both branches of the pretraining graph
(one module instance, called twice). The generator turns either the projection
(variant "E") or the raw window (variant "D") into a synthetic window of the
input shape, which then passes through the same encoder/projector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import chain

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class ModelSpec:
    """Hyperparameters that fully determine the network architecture."""

    window_size: int
    in_channels: int
    conv_channels: tuple[int, int, int] = (32, 64, 128)
    conv_kernel: int = 8
    pool: int = 2
    dropout: float = 0.1
    proj_hidden: int = 256
    proj_out: int = 128
    gru_layers: int = 3
    gru_hidden: int | None = None  # default: 4 * in_channels
    projector_softmax: bool = True
    bigru_merge: str = "sum"  # "sum" or "concat"
    variant: str = "E"  # "E": generator eats the projection, "D": the raw window

    def __post_init__(self):
        self.conv_channels = tuple(self.conv_channels)
        if self.window_size < 8:
            raise ValueError("window_size must be at least 8")
        if self.in_channels < 1:
            raise ValueError("in_channels must be positive")
        if len(self.conv_channels) != 3 or any(c < 1 for c in self.conv_channels):
            raise ValueError("conv_channels must be three positive widths")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.variant not in ("E", "D"):
            raise ValueError(f"variant must be 'E' or 'D', got {self.variant!r}")
        if self.bigru_merge not in ("sum", "concat"):
            raise ValueError("bigru_merge must be 'sum' or 'concat'")
        if self.proj_hidden < 1 or self.proj_out < 1 or self.gru_layers < 1:
            raise ValueError("projector and recurrent sizes must be positive")
        if self.hidden_size % self.in_channels != 0:
            raise ValueError("gru_hidden must be a multiple of in_channels")

    @property
    def hidden_size(self) -> int:
        return self.gru_hidden if self.gru_hidden is not None else 4 * self.in_channels

    @property
    def embedding_dim(self) -> int:
        return self.conv_channels[-1]

    def to_dict(self) -> dict:
        return {
            "window_size": self.window_size,
            "in_channels": self.in_channels,
            "conv_channels": list(self.conv_channels),
            "conv_kernel": self.conv_kernel,
            "pool": self.pool,
            "dropout": self.dropout,
            "proj_hidden": self.proj_hidden,
            "proj_out": self.proj_out,
            "gru_layers": self.gru_layers,
            "gru_hidden": self.gru_hidden,
            "projector_softmax": self.projector_softmax,
            "bigru_merge": self.bigru_merge,
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)


@dataclass
class ForwardTrace:
    """Intermediate tensors of one pretraining forward pass."""

    z: torch.Tensor  # encoder output for the original batch [N, D]
    y: torch.Tensor  # projection of z [N, proj_out]
    x_gen: torch.Tensor  # generated window [N, W, C]
    z_gen: torch.Tensor  # encoder output for the generated batch [N, D]
    y_gen: torch.Tensor  # projection of z_gen [N, proj_out]


def _check_finite(x: torch.Tensor, where: str) -> None:
    if not torch.isfinite(x).all():
        raise ValueError(f"non-finite values in {where} input")


class Encoder(nn.Module):
    """Three conv blocks (conv, batch norm, ReLU, max pool, dropout) + global max pool.

    Input [N, W, C], output [N, conv_channels[-1]]. Convolutions use stride 1
    with same padding; each max pool halves the time axis (flooring odd lengths).
    """

    def __init__(self, spec: ModelSpec):
        super().__init__()
        blocks = []
        in_ch = spec.in_channels
        k = spec.conv_kernel
        for out_ch in spec.conv_channels:
            blocks += [
                # length-preserving padding, split (k-1)//2 left / k//2 right
                nn.ConstantPad1d(((k - 1) // 2, k // 2), 0.0),
                nn.Conv1d(in_ch, out_ch, k, stride=1),
                nn.BatchNorm1d(out_ch),
                nn.ReLU(),
                nn.MaxPool1d(spec.pool),
                nn.Dropout(spec.dropout),
            ]
            in_ch = out_ch
        self.blocks = nn.Sequential(*blocks)
        self.out_features = spec.conv_channels[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 3:
            raise ValueError(f"encoder expects [N, W, C], got shape {tuple(x.shape)}")
        _check_finite(x, "encoder")
        h = self.blocks(x.transpose(1, 2))  # [N, channels, W'] after pooling
        return h.amax(dim=2)


class Projector(nn.Module):
    """Two-layer MLP head on the embedding; optionally ends in a softmax."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.fc1 = nn.Linear(spec.embedding_dim, spec.proj_hidden)
        self.bn = nn.BatchNorm1d(spec.proj_hidden)
        self.fc2 = nn.Linear(spec.proj_hidden, spec.proj_out)
        self.use_softmax = spec.projector_softmax

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = self.fc2(F.relu(self.bn(self.fc1(z))))
        return F.softmax(h, dim=1) if self.use_softmax else h


class Generator(nn.Module):
    """Stacked bidirectional GRU that emits a window shaped like the input data.

    Variant "E" normalizes the projection (batch norm + ReLU) and repeats it at
    every time step; variant "D" batch-normalizes the raw window per channel.
    Forward and backward GRU states are merged (sum by default), then a grouped
    pointwise linear map assigns each output channel its own slice of hidden
    units.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.variant = spec.variant
        self.window_size = spec.window_size
        self.out_channels = spec.in_channels
        self.hidden_size = spec.hidden_size
        self.merge = spec.bigru_merge
        in_size = spec.proj_out if spec.variant == "E" else spec.in_channels
        self.input_size = in_size
        self.input_norm = nn.BatchNorm1d(in_size)
        self.gru = nn.GRU(
            input_size=in_size,
            hidden_size=self.hidden_size,
            num_layers=spec.gru_layers,
            batch_first=True,
            bidirectional=True,
        )
        head_in = self.hidden_size if self.merge == "sum" else 2 * self.hidden_size
        self.head = nn.Conv1d(head_in, self.out_channels, 1, groups=self.out_channels)

    def forward(self, inp: torch.Tensor) -> torch.Tensor:
        if self.variant == "E":
            if inp.ndim != 2 or inp.shape[1] != self.input_size:
                raise ValueError(
                    f"variant E generator expects [N, {self.input_size}], "
                    f"got shape {tuple(inp.shape)}"
                )
            h = F.relu(self.input_norm(inp))
            seq = h.unsqueeze(1).expand(-1, self.window_size, -1).contiguous()
        else:
            if inp.ndim != 3 or inp.shape[2] != self.input_size:
                raise ValueError(
                    f"variant D generator expects [N, W, {self.input_size}], "
                    f"got shape {tuple(inp.shape)}"
                )
            seq = self.input_norm(inp.transpose(1, 2)).transpose(1, 2)
        out, _ = self.gru(seq)  # [N, W, 2 * hidden]
        fwd, bwd = out[..., : self.hidden_size], out[..., self.hidden_size :]
        merged = fwd + bwd if self.merge == "sum" else torch.cat([fwd, bwd], dim=2)
        return self.head(merged.transpose(1, 2)).transpose(1, 2)


class PredictionHead(nn.Module):
    """Classifier used during fine-tuning: FC, batch norm, ReLU, FC, softmax."""

    def __init__(self, in_features: int, num_classes: int, hidden: int = 128):
        super().__init__()
        if num_classes < 1:
            raise ValueError("num_classes must be positive")
        self.fc1 = nn.Linear(in_features, hidden)
        self.bn = nn.BatchNorm1d(hidden)
        self.fc2 = nn.Linear(hidden, num_classes)

    def logits(self, z: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.relu(self.bn(self.fc1(z))))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.logits(z), dim=1)


class AutoCLNet(nn.Module):
    """Shared-weight encoder/projector with an optional embedded generator.

    ``forward_trace`` runs the full two-branch pass: embed the batch, generate
    a synthetic batch from it, and embed that through the very same modules.
    """

    def __init__(self, spec: ModelSpec, with_generator: bool = True):
        super().__init__()
        self.spec = spec
        self.encoder = Encoder(spec)
        self.projector = Projector(spec)
        self.generator = Generator(spec) if with_generator else None

    def embed(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z = self.encoder(x)
        return z, self.projector(z)

    def forward_trace(self, x: torch.Tensor) -> ForwardTrace:
        if self.generator is None:
            raise ValueError("this model has no generator")
        z, y = self.embed(x)
        gen_input = y if self.generator.variant == "E" else x
        x_gen = self.generator(gen_input)
        z_gen, y_gen = self.embed(x_gen)
        return ForwardTrace(z=z, y=y, x_gen=x_gen, z_gen=z_gen, y_gen=y_gen)

    def theta_parameters(self):
        """Encoder + projector parameters (the weights shared by both branches)."""
        return chain(self.encoder.parameters(), self.projector.parameters())

    def xi_parameters(self):
        """Generator parameters; empty iterator when there is no generator."""
        return iter(()) if self.generator is None else self.generator.parameters()


def _init_weight(w: torch.Tensor, fan_in: int, gen: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        w.uniform_(-bound, bound, generator=gen)


def reset_parameters(module: nn.Module, gen: torch.Generator) -> None:
    """Re-initialize: fan-in scaled uniform weights, zero biases, identity batch norm."""
    for m in module.modules():
        if isinstance(m, nn.Conv1d):
            _init_weight(m.weight, m.weight.shape[1] * m.weight.shape[2], gen)
            if m.bias is not None:
                with torch.no_grad():
                    m.bias.zero_()
        elif isinstance(m, nn.Linear):
            _init_weight(m.weight, m.weight.shape[1], gen)
            if m.bias is not None:
                with torch.no_grad():
                    m.bias.zero_()
        elif isinstance(m, nn.GRU):
            for name, p in m.named_parameters():
                if name.startswith("weight"):
                    _init_weight(p, p.shape[1], gen)
                else:
                    with torch.no_grad():
                        p.zero_()
        elif isinstance(m, nn.BatchNorm1d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
            m.reset_running_stats()


def init_model(spec: ModelSpec, seed: int, with_generator: bool = True) -> AutoCLNet:
    """Build and deterministically initialize a network from its spec and a seed."""
    net = AutoCLNet(spec, with_generator=with_generator)
    gen = torch.Generator().manual_seed(seed)
    reset_parameters(net, gen)
    return net


def init_prediction_head(in_features: int, num_classes: int, seed: int) -> PredictionHead:
    head = PredictionHead(in_features, num_classes)
    gen = torch.Generator().manual_seed(seed)
    reset_parameters(head, gen)
    return head
