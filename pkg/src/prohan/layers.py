"""Parameter storage and the recurrent cell shared by encoders and the slot decoder."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor, lstm_cell, lstm_sequence, matmul


class ParamStore:
    """Named, ordered collection of trainable tensors.

    Names are stable dotted paths such as ``graph.W_left.layer0``; matrices are
    stored ``(in, out)`` so that row vectors are multiplied on the left.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.tensors: dict[str, Tensor] = {}
        self.flat: np.ndarray | None = None
        self.flat_grad: np.ndarray | None = None

    def add(self, name: str, shape: tuple[int, ...], init: str = "glorot", value=None) -> Tensor:
        if self.flat is not None:
            raise RuntimeError("parameter store is frozen")
        if name in self.tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        if value is not None:
            data = np.array(value, dtype=np.float64).reshape(shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "glorot":
            fan_in, fan_out = (shape[0], shape[-1]) if len(shape) > 1 else (shape[0], 1)
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            data = self.rng.uniform(-bound, bound, size=shape)
        elif init == "normal":
            data = self.rng.normal(0.0, 0.1, size=shape)
        elif init.startswith("uniform:"):
            bound = float(init.split(":", 1)[1])
            data = self.rng.uniform(-bound, bound, size=shape)
        else:
            raise ValueError(f"unknown initialiser {init!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def freeze(self) -> None:
        """Move all values and grads into two contiguous buffers; tensors keep views."""
        self.flat = np.empty(self.size())
        self.flat_grad = np.zeros(self.size())
        offset = 0
        for t in self.tensors.values():
            n, shape = t.value.size, t.value.shape
            self.flat[offset:offset + n] = t.value.ravel()
            t.value = self.flat[offset:offset + n].reshape(shape)
            t.grad = self.flat_grad[offset:offset + n].reshape(shape)
            offset += n

    def zero_grad(self) -> None:
        if self.flat_grad is not None:
            self.flat_grad.fill(0.0)
        else:
            for t in self.tensors.values():
                t.zero_grad()

    def size(self) -> int:
        return sum(t.value.size for t in self.tensors.values())

    def state(self) -> dict[str, dict]:
        return {
            name: {"shape": list(t.value.shape), "values": t.value.ravel().tolist()}
            for name, t in self.tensors.items()
        }

    def load_state(self, state: dict[str, dict]) -> None:
        missing = set(self.tensors) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ from checkpoint: {sorted(missing)[:5]}")
        for name, t in self.tensors.items():
            entry = state[name]
            if tuple(entry["shape"]) != t.value.shape:
                raise ValueError(f"{name}: checkpoint shape {entry['shape']} != {list(t.value.shape)}")
            t.value[...] = np.asarray(entry["values"], dtype=np.float64).reshape(t.value.shape)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.state()), encoding="utf-8")


class LSTM:
    """Single-direction LSTM over ``(..., T, d)`` inputs with gate order i, f, o, g."""

    def __init__(self, store: ParamStore, prefix: str, input_dim: int, hidden: int):
        self.hidden = hidden
        bound = 1.0 / np.sqrt(hidden)
        self.W_x = store.add(f"{prefix}.W_x", (input_dim, 4 * hidden), init=f"uniform:{bound}")
        self.W_h = store.add(f"{prefix}.W_h", (hidden, 4 * hidden), init=f"uniform:{bound}")
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0
        self.b = store.add(f"{prefix}.b", (4 * hidden,), value=bias)

    def project(self, x: Tensor) -> Tensor:
        """Input contribution to the gates for every timestep at once."""
        return matmul(x, self.W_x) + self.b

    def step(self, xw: Tensor, state: tuple[Tensor, Tensor] | None) -> tuple[Tensor, Tensor]:
        H = self.hidden
        h, c = (None, None) if state is None else state
        hc = lstm_cell(xw, h, c, self.W_h)
        return hc[..., :H], hc[..., H:]

    def run(self, x: Tensor, reverse: bool = False) -> Tensor:
        """Hidden states for every step; ``x`` is ``(T, d)`` or ``(B, T, d)``."""
        return lstm_sequence(self.project(x), self.W_h, reverse)
