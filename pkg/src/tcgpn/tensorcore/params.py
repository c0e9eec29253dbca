"""Named parameter storage with seeded, order-deterministic initialization."""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Learnable tensors keyed by hierarchical path (e.g. "enc.block0.attn.wq").

    Paths are unique; enumeration is lexicographic. Initialization draws
    happen in add() call order from a seeded generator, so the same seed and
    the same construction sequence give bit-identical parameters.
    """

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.rng_seed = seed
        self.dtype = np.dtype(dtype)
        self._rng = np.random.default_rng(seed)
        self._entries: dict[str, Tensor] = {}

    def add(self, path: str, shape: tuple[int, ...], init: str = "fan_in") -> Tensor:
        if path in self._entries:
            raise ValueError(f"duplicate parameter path: {path}")
        if init == "zeros":
            data = np.zeros(shape, dtype=self.dtype)
        elif init == "ones":
            data = np.ones(shape, dtype=self.dtype)
        elif init == "fan_in":
            bound = 1.0 / np.sqrt(shape[0])
            data = self._rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        else:
            raise ValueError(f"unknown init: {init}")
        t = Tensor(data, requires_grad=True)
        self._entries[path] = t
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self._entries[path]

    def __contains__(self, path: str) -> bool:
        return path in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def paths(self) -> list[str]:
        return sorted(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for path in self.paths():
            yield path, self._entries[path]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {p: tuple(t.shape) for p, t in self.items()}

    def n_values(self) -> int:
        return int(np.sum([t.data.size for t in self._entries.values()]))

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def set_trainable(self, value: bool, prefix: str = "") -> None:
        """Toggle requires_grad for every path under a prefix."""
        for path, t in self._entries.items():
            if path.startswith(prefix):
                t.requires_grad = value

    def clone(self) -> "ParamStore":
        out = ParamStore(seed=self.rng_seed, dtype=self.dtype)
        for path, t in self._entries.items():
            c = Tensor(t.data.copy(), requires_grad=t.requires_grad)
            out._entries[path] = c
        return out

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(seed=self.rng_seed, dtype=dtype)
        for path, t in self._entries.items():
            out._entries[path] = Tensor(t.data.astype(dtype), requires_grad=t.requires_grad)
        return out

    def load_values(self, values: Mapping[str, np.ndarray]) -> None:
        """Overwrite entry data in place; shapes must match."""
        for path, arr in values.items():
            if path not in self._entries:
                raise KeyError(f"unknown parameter path: {path}")
            cur = self._entries[path]
            if tuple(arr.shape) != tuple(cur.shape):
                raise ValueError(f"shape mismatch for {path}: {arr.shape} vs {cur.shape}")
            cur.data = np.ascontiguousarray(arr, dtype=cur.data.dtype)

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], seed: int = 0) -> "ParamStore":
        dtypes = {a.dtype for a in arrays.values()}
        dtype = dtypes.pop() if len(dtypes) == 1 else np.float32
        out = cls(seed=seed, dtype=dtype)
        for path in sorted(arrays):
            out._entries[path] = Tensor(np.array(arrays[path]), requires_grad=True)
        return out


def forward_backward(loss_fn, params: ParamStore) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate a scalar loss over the store and return (loss, grads by path).

    Grads contain an entry for every requires_grad parameter the loss
    actually touched; untouched parameters are absent.
    """
    params.zero_grad()
    loss = loss_fn(params)
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.backward()
    grads = {path: t.grad for path, t in params.items() if t.grad is not None}
    return float(loss.data), grads
