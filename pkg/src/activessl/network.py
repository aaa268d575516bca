"""LeNet-style backbone with deterministic seeded initialization.

The classifier maps (B, 1, 28, 28) inputs to C logits; the penultimate
fully-connected activation (84-d by default) doubles as the embedding used
by coverage/representative acquisition.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class NetworkConfig:
    num_classes: int = 10
    input_shape: tuple[int, int, int] = (28, 28, 1)
    conv_blocks: tuple[tuple[int, int, int], ...] = ((6, 5, 2), (16, 5, 2))
    fc_sizes: tuple[int, ...] = (120, 84)

    @property
    def embedding_dim(self) -> int:
        return self.fc_sizes[-1]


class LeNet(nn.Module):
    """Conv blocks (filters, kernel, pool) + ReLU fc stack + linear head.

    The first conv pads by 2 (the classic 28->32 arrangement); later convs
    are unpadded.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        h, w, in_ch = cfg.input_shape
        convs = []
        for i, (filters, kernel, pool) in enumerate(cfg.conv_blocks):
            pad = 2 if i == 0 else 0
            convs.append(nn.Conv2d(in_ch, filters, kernel, padding=pad))
            h = (h + 2 * pad - kernel + 1) // pool
            w = (w + 2 * pad - kernel + 1) // pool
            in_ch = filters
        self.convs = nn.ModuleList(convs)
        self.pools = [pool for _, _, pool in cfg.conv_blocks]
        flat = in_ch * h * w
        fcs = []
        for size in cfg.fc_sizes:
            fcs.append(nn.Linear(flat, size))
            flat = size
        self.fcs = nn.ModuleList(fcs)
        self.head = nn.Linear(flat, cfg.num_classes)

    def embed_logits(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        for conv, pool in zip(self.convs, self.pools):
            x = F.max_pool2d(F.relu(conv(x)), pool)
        x = x.flatten(1)
        for fc in self.fcs:
            x = F.relu(fc(x))
        return x, self.head(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.embed_logits(x)[1]


@dataclass
class ModelState:
    """A network plus the bookkeeping of the run that produced it."""

    config: NetworkConfig
    net: LeNet
    seed: int
    train_log: list[tuple[float, float]] = field(default_factory=list)  # (loss, train_acc)

    def parameter_vector(self) -> np.ndarray:
        with torch.no_grad():
            return torch.cat([p.detach().reshape(-1) for p in self.net.parameters()]).numpy().copy()

    def layer_map(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(p.shape)) for name, p in self.net.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name, p in self.net.named_parameters():
            h.update(name.encode())
            h.update(p.detach().numpy().astype(np.float32).tobytes())
        return h.hexdigest()

    def clone(self) -> "ModelState":
        other = ModelState(config=self.config, net=LeNet(self.config), seed=self.seed,
                           train_log=list(self.train_log))
        other.net.load_state_dict(self.net.state_dict())
        return other


def init_model(cfg: NetworkConfig, seed: int) -> ModelState:
    """Seed-deterministic initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    for weights and biases (torch's default scheme, explicit generator)."""
    net = LeNet(cfg)
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in net.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                fan_in = m.weight.shape[1:].numel() if isinstance(m, nn.Conv2d) \
                    else m.weight.shape[1]
                bound = 1.0 / float(np.sqrt(fan_in))
                m.weight.uniform_(-bound, bound, generator=g)
                m.bias.uniform_(-bound, bound, generator=g)
    return ModelState(config=cfg, net=net, seed=int(seed))


def _as_batch_tensor(images: np.ndarray | torch.Tensor,
                     shape: tuple[int, int, int]) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    h, w, _ = shape
    if x.ndim == 3:
        x = x.unsqueeze(1)
    if x.ndim != 4 or x.shape[2:] != (h, w):
        raise ValueError(f"expected images shaped (B, {h}, {w}), got {tuple(x.shape)}")
    return x


def predict_logits(m: ModelState, images, batch_size: int = 2048) -> np.ndarray:
    x = _as_batch_tensor(images, m.config.input_shape)
    outs = []
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            outs.append(m.net(x[start:start + batch_size]))
    return torch.cat(outs).numpy()


def predict_proba(m: ModelState, images, batch_size: int = 2048) -> np.ndarray:
    """Row-stochastic class probabilities: softmax over the logits."""
    x = _as_batch_tensor(images, m.config.input_shape)
    outs = []
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            outs.append(F.softmax(m.net(x[start:start + batch_size]), dim=1))
    return torch.cat(outs).numpy()


def embed(m: ModelState, images, batch_size: int = 2048) -> np.ndarray:
    """Penultimate-layer activations, (B, embedding_dim)."""
    x = _as_batch_tensor(images, m.config.input_shape)
    outs = []
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            outs.append(m.net.embed_logits(x[start:start + batch_size])[0])
    return torch.cat(outs).numpy()


# ---------------------------------------------------------------------------
# Numerical-correctness gate
# ---------------------------------------------------------------------------

TINY_CONFIG = NetworkConfig(num_classes=3, conv_blocks=((2, 5, 2), (4, 5, 2)),
                            fc_sizes=(8,))


def gradient_pair(cfg: NetworkConfig = TINY_CONFIG, seed: int = 0,
                  batch: int = 4, h: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """(autograd, central-finite-difference) gradients of the mean cross-entropy
    on one random batch, both as flat float64 vectors."""
    torch_state = init_model(cfg, seed)
    net = torch_state.net.double()
    g = torch.Generator().manual_seed(seed + 1)
    x = torch.rand((batch, 1) + cfg.input_shape[:2], generator=g, dtype=torch.float64)
    y = torch.randint(0, cfg.num_classes, (batch,), generator=g)

    def loss_fn() -> torch.Tensor:
        return F.cross_entropy(net(x), y)

    loss = loss_fn()
    loss.backward()
    analytic = torch.cat([p.grad.reshape(-1) for p in net.parameters()]).numpy().copy()
    numeric = np.empty_like(analytic)
    pos = 0
    with torch.no_grad():
        for p in net.parameters():
            flat = p.reshape(-1)
            for j in range(flat.numel()):
                orig = flat[j].item()
                flat[j] = orig + h
                up = loss_fn().item()
                flat[j] = orig - h
                down = loss_fn().item()
                flat[j] = orig
                numeric[pos] = (up - down) / (2.0 * h)
                pos += 1
    return analytic, numeric


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


def gradient_check(cfg: NetworkConfig = TINY_CONFIG, seed: int = 0) -> float:
    """Max relative disagreement between autograd and finite differences."""
    analytic, numeric = gradient_pair(cfg, seed)
    return max_relative_error(analytic, numeric)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(m: ModelState, path: str | Path) -> None:
    """Layer-mapped parameters + config + seed in one .npz."""
    header = {
        "version": CHECKPOINT_VERSION,
        "seed": m.seed,
        "config": {
            "num_classes": m.config.num_classes,
            "input_shape": list(m.config.input_shape),
            "conv_blocks": [list(b) for b in m.config.conv_blocks],
            "fc_sizes": list(m.config.fc_sizes),
        },
        "train_log": m.train_log,
    }
    arrays = {f"param/{name}": p.detach().numpy() for name, p in m.net.named_parameters()}
    np.savez(Path(path), header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path: str | Path) -> ModelState:
    with np.load(Path(path)) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        c = header["config"]
        cfg = NetworkConfig(
            num_classes=c["num_classes"],
            input_shape=tuple(c["input_shape"]),
            conv_blocks=tuple(tuple(b) for b in c["conv_blocks"]),
            fc_sizes=tuple(c["fc_sizes"]),
        )
        m = init_model(cfg, header["seed"])
        m.train_log = [tuple(entry) for entry in header["train_log"]]
        with torch.no_grad():
            for name, p in m.net.named_parameters():
                p.copy_(torch.as_tensor(z[f"param/{name}"]))
    return m
