"""Glorot initialization, Adam, and binary parameter checkpoints."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Parameter

CHECKPOINT_MAGIC = b"CONCH-CKPT v1\n"


def glorot_init(shape: tuple[int, ...], seed: int) -> np.ndarray:
    """Uniform samples in [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    if len(shape) != 2:
        raise ValueError(f"glorot_init expects a 2-D shape, got {shape}")
    fan_out, fan_in = shape
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=shape)


class Adam:
    """Adam with bias correction and optional coupled L2 weight decay.

    ``weight_decay`` adds 2*wd*w to each gradient, i.e. the gradient of a
    wd*||w||^2 loss term. Leave it at 0 when the penalty is already part of
    the loss graph, otherwise it would be counted twice.
    """

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.weight_decay != 0.0:
                g = g + 2.0 * self.weight_decay * p.data
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / (1.0 - self.beta1**t)
            v_hat = self._v[i] / (1.0 - self.beta2**t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def save_checkpoint(params: list[Parameter], path: str | Path) -> None:
    """Write named parameters: text magic header, then little-endian binary."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", p.data.ndim))
            for dim in p.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint into a name -> array mapping."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad header)")
        (count,) = struct.unpack("<I", fh.read(4))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n_items = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n_items), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)
        return out


def restore_parameters(params: list[Parameter], state: dict[str, np.ndarray]) -> None:
    """Load checkpoint arrays into matching parameters (by name and shape)."""
    for p in params:
        if p.name not in state:
            raise ValueError(f"checkpoint is missing parameter {p.name!r}")
        value = state[p.name]
        if value.shape != p.data.shape:
            raise ValueError(
                f"checkpoint parameter {p.name!r} has shape {value.shape}, "
                f"model expects {p.data.shape}"
            )
        p.data = value.copy()
