"""Named parameter collections.

A ParamSet is an ordered name -> Tensor mapping.  Names are stable
across runs (insertion order is the init order), which is what the
checkpoint manifest and the per-parameter optimizer state key on.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, grad_of
from .errors import ContractError


class ParamSet:
    def __init__(self, entries: dict | None = None):
        self._entries: dict[str, Tensor] = {}
        for name, value in (entries or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._entries:
            raise ContractError(f"parameter {name!r} already exists")
        t = value if isinstance(value, Tensor) else Tensor(value)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._entries.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        """Overwrite values in place; names must match exactly."""
        if set(arrays) != set(self._entries):
            missing = set(self._entries) - set(arrays)
            extra = set(arrays) - set(self._entries)
            raise ContractError(f"parameter name mismatch: missing={sorted(missing)} "
                                f"extra={sorted(extra)}")
        for name, arr in arrays.items():
            t = self._entries[name]
            new = np.ascontiguousarray(arr, dtype=np.float64)
            if new.shape != t.data.shape:
                raise ContractError(f"parameter {name!r}: shape {new.shape} != {t.data.shape}")
            t.data = new

    def replaced(self, name: str, tensor: Tensor) -> "ParamSet":
        """Shallow copy with one entry swapped; used by gradient checks
        to probe a single parameter without touching the original set."""
        if name not in self._entries:
            raise ContractError(f"no parameter named {name!r}")
        out = ParamSet()
        for key, value in self._entries.items():
            out._entries[key] = tensor if key == name else value
        return out

    def gradients(self, tape: Tape) -> dict[str, np.ndarray]:
        """Gradient per parameter from the tape's last backward; zeros
        for parameters the forward never touched."""
        return {name: grad_of(tape, t) for name, t in self._entries.items()}
