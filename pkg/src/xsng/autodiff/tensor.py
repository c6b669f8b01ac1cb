"""Dense float64 tensors and the reverse-mode differentiation tape.

The tape is define-by-run: ops executed inside a ``with Tape():`` block
append one node each, in execution order.  Node ids therefore grow
monotonically and every node's inputs have strictly smaller ids, which
is the only ordering guarantee backward() needs: a single sweep from
the highest id to the lowest visits consumers before producers.

Ops also work with no tape active, in which case they just compute
values.  That path is used for inference and for the finite-difference
probes in grad_check, which must not touch the analytic machinery.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ContractError, NumericError, ShapeError

_active = threading.local()


def current_tape():
    return getattr(_active, "tape", None)


class Tensor:
    """Row-major float64 array, optionally tracked on the active tape.

    node_id is a handle into the tape that produced this tensor; it is
    meaningless once a new tape is opened, so leaves (parameters) are
    re-registered lazily on first use in each forward pass.
    """

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data):
        # ascontiguousarray would promote 0-d scalars to 1-d; keep rank.
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if any(s < 1 for s in arr.shape):
            raise ShapeError(f"dimension sizes must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.tape = None
        self.node_id = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, tracked={self.node_id is not None})"


class Tape:
    """Append-only record of one forward pass.

    nodes[i] is (kind, input node ids, backward closure, output shape).
    The closure maps the output gradient to one gradient per input, or
    None for inputs that take no gradient.  After backward() runs,
    ``gradients`` maps every node id to its float64 gradient array;
    nodes unreachable from the loss get zeros.
    """

    def __init__(self):
        self.nodes: list[tuple] = []
        self.gradients: dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        if current_tape() is not None:
            raise ContractError("tapes do not nest; close the active tape first")
        _active.tape = self
        return self

    def __exit__(self, *exc):
        _active.tape = None
        return False

    def _record(self, kind: str, input_ids: tuple, backward_fn, shape) -> int:
        self.nodes.append((kind, input_ids, backward_fn, shape))
        return len(self.nodes) - 1

    def leaf_id(self, t: Tensor) -> int:
        """Register t as a leaf of this tape (idempotent per tape)."""
        if t.tape is not self or t.node_id is None:
            t.tape = self
            t.node_id = self._record("leaf", (), None, t.data.shape)
        return t.node_id

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        return backward(self, loss)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse sweep from a scalar loss; fills and returns tape.gradients."""
    if loss.tape is not tape or loss.node_id is None:
        raise ContractError("loss tensor was not produced on this tape")
    if loss.data.shape != ():
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise NumericError("loss is non-finite; refusing to backpropagate")

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones((), dtype=np.float64)}
    for nid in range(len(tape.nodes) - 1, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        _, input_ids, backward_fn, _ = tape.nodes[nid]
        if backward_fn is None:
            continue
        for iid, gi in zip(input_ids, backward_fn(g)):
            if gi is None:
                continue
            acc = grads.get(iid)
            grads[iid] = gi if acc is None else acc + gi
    # Unreachable nodes get explicit zeros so optimizers can treat the
    # gradient map as total over all registered parameters.
    for nid, (_, _, _, shape) in enumerate(tape.nodes):
        if nid not in grads:
            grads[nid] = np.zeros(shape, dtype=np.float64)
    tape.gradients = grads
    return grads


def grad_of(tape: Tape, t: Tensor) -> np.ndarray:
    """Gradient of the last backward() w.r.t. t; zeros if t never joined the tape."""
    if t.tape is tape and t.node_id is not None and t.node_id in tape.gradients:
        return tape.gradients[t.node_id]
    return np.zeros_like(t.data)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def track(kind: str, out_data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    """Wrap an op result, recording it when a tape is active."""
    out = Tensor(out_data)
    tape = current_tape()
    if tape is not None:
        ids = tuple(tape.leaf_id(t) for t in inputs)
        out.tape = tape
        out.node_id = tape._record(kind, ids, backward_fn, out.data.shape)
    return out
