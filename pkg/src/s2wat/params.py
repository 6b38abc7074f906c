"""Named parameter containers and initializers."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigurationError
from .tensor import Tensor


class ParameterStore:
    """Ordered mapping from dotted hierarchical names to trainable tensors.

    Iteration order is insertion order, which is also the on-disk order of
    a weights file.
    """

    def __init__(self, dtype=np.float32) -> None:
        self._items: "OrderedDict[str, Tensor]" = OrderedDict()
        self.dtype = np.dtype(dtype)

    def add(self, name: str, value, requires_grad: bool = True) -> Tensor:
        if name in self._items:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.array(value, dtype=self.dtype), requires_grad=requires_grad)
        self._items[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._items[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def get(self, name: str, default: Optional[Tensor] = None) -> Optional[Tensor]:
        return self._items.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def items(self):
        return self._items.items()

    def names(self) -> list[str]:
        return list(self._items)

    def tensors(self) -> list[Tensor]:
        return list(self._items.values())

    def num_scalars(self) -> int:
        return sum(t.size for t in self._items.values())

    def zero_grad(self) -> None:
        for t in self._items.values():
            t.grad = None

    def freeze(self) -> "ParameterStore":
        for t in self._items.values():
            t.requires_grad = False
        return self

    def astype(self, dtype) -> "ParameterStore":
        out = ParameterStore(dtype)
        for name, t in self._items.items():
            out.add(name, t.data, requires_grad=t.requires_grad)
        return out

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self._items.items())

    def load_state(self, state, strict: bool = True) -> None:
        """Copy arrays into existing tensors, checking names and extents."""
        if strict:
            missing = [k for k in self._items if k not in state]
            extra = [k for k in state if k not in self._items]
            if missing or extra:
                raise ConfigurationError(f"parameter names differ: missing={missing[:5]} unexpected={extra[:5]}")
        for name, arr in state.items():
            if name not in self._items:
                continue
            target = self._items[name]
            arr = np.asarray(arr)
            if arr.shape != target.shape:
                raise ConfigurationError(f"{name}: stored extents {arr.shape} != model extents {target.shape}")
            target.data = arr.astype(self.dtype, copy=True)

    def subset(self, prefix: str) -> dict:
        return {k: v for k, v in self._items.items() if k.startswith(prefix)}


def uniform_fan_in(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def trunc_normal(rng: np.random.Generator, shape: tuple, std: float = 0.02) -> np.ndarray:
    """Normal samples redrawn until they fall inside two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def add_linear(store: ParameterStore, rng: np.random.Generator, name: str, fan_in: int, fan_out: int) -> None:
    store.add(f"{name}.weight", uniform_fan_in(rng, (fan_in, fan_out), fan_in))
    store.add(f"{name}.bias", np.zeros(fan_out))


def add_layer_norm(store: ParameterStore, name: str, dim: int) -> None:
    store.add(f"{name}.weight", np.ones(dim))
    store.add(f"{name}.bias", np.zeros(dim))


def add_conv(store: ParameterStore, rng: np.random.Generator, name: str, cin: int, cout: int, k: int = 3) -> None:
    store.add(f"{name}.weight", uniform_fan_in(rng, (cout, cin, k, k), cin * k * k))
    store.add(f"{name}.bias", np.zeros(cout))
