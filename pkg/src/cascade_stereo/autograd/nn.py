"""Parameter containers and the few layers the network needs."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ConfigError, DimensionError
from . import functional as F
from .tensor import Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, copy=True), requires_grad=True, name=name)


class Module:
    """Attribute-registered tree of parameters and submodules."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            full = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield full, val
            elif isinstance(val, Module):
                yield from val.named_parameters(full + ".")
            elif isinstance(val, (list, tuple)) and val and all(isinstance(v, Module) for v in val):
                for i, sub in enumerate(val):
                    yield from sub.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Parameter]:
        seen: set[int] = set()
        out = []
        for _, p in self.named_parameters():
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise ConfigError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, arr in state.items():
            if name not in own:
                continue
            if own[name].shape != tuple(arr.shape):
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} != parameter {own[name].shape}")
            own[name].data = np.array(arr, dtype=own[name].dtype, copy=True)

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None, bias: bool = True, gain: float = 2.0):
        fan_in = in_ch * k * k
        bound = np.sqrt(3.0 * gain / fan_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(out_ch, in_ch, k, k)).astype(np.float32))
        self.bias = Parameter(np.zeros(out_ch, dtype=np.float32)) if bias else None
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


def zero_module(module: Module) -> Module:
    for p in module.parameters():
        p.data = np.zeros_like(p.data)
    return module
