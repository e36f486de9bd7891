"""Flat registry of named trainable tensors with gradients and Adam updates."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


class Param:
    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.trainable = bool(trainable)


class ParameterStore:
    """Named f64 tensors. Names are unique; grad always matches value shape."""

    def __init__(self):
        self._params: dict[str, Param] = {}
        self._adam_m: dict[str, np.ndarray] = {}
        self._adam_v: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Param:
        if name in self._params:
            raise InvalidInputError(f"duplicate parameter name: {name}")
        p = Param(name, value, trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def trainable_items(self):
        for name, p in self.items():
            if p.trainable:
                yield name, p

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def num_values(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def snapshot(self) -> "ParameterStore":
        """Deep copy; mutating the live store never touches the snapshot."""
        out = ParameterStore()
        for name, p in self.items():
            out.add(name, p.value.copy(), p.trainable)
        return out

    def load_values(self, other: "ParameterStore") -> None:
        for name, p in self.items():
            src = other[name]
            if src.value.shape != p.value.shape:
                raise InvalidInputError(f"shape mismatch loading {name}")
            p.value[...] = src.value


def adam_step(store: ParameterStore, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, t: int = 1) -> None:
    """One Adam update (bias-corrected) on every trainable entry, in place."""
    if t < 1:
        raise InvalidInputError(f"adam step index must be >= 1, got {t}")
    for name, p in store.trainable_items():
        m = store._adam_m.get(name)
        if m is None:
            m = store._adam_m[name] = np.zeros_like(p.value)
        v = store._adam_v.get(name)
        if v is None:
            v = store._adam_v[name] = np.zeros_like(p.value)
        m[...] = beta1 * m + (1.0 - beta1) * p.grad
        v[...] = beta2 * v + (1.0 - beta2) * p.grad * p.grad
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.value[...] -= lr * m_hat / (np.sqrt(v_hat) + eps)
