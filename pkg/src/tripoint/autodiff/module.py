"""Parameter containers with stable dotted names."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .tensor import Tensor


class Module:
    """Holds named parameters and child modules in insertion order.

    Attribute assignment registers ``Tensor`` parameters (those with
    ``requires_grad``) and sub-modules automatically, so
    ``named_parameters`` yields names like ``up1.attn.q.weight``.
    """

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self.__dict__.setdefault("_modules", OrderedDict())[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self.__dict__.setdefault("_params", OrderedDict())[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            mods = self.__dict__.setdefault("_modules", OrderedDict())
            for i, v in enumerate(value):
                mods[f"{name}.{i}"] = v
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self.__dict__.get("_params", {}).items():
            yield prefix + name, p
        for name, m in self.__dict__.get("_modules", {}).items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data) for n, p in self.named_parameters())

    def load_state_dict(self, state) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype).copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (used for float64 gradient replay)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    @property
    def dtype(self):
        params = self.parameters()
        return params[0].dtype if params else np.dtype(np.float32)

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def parameter(array) -> Tensor:
    return Tensor(np.asarray(array, dtype=np.float32), requires_grad=True)
