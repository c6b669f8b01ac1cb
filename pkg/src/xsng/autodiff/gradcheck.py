"""Finite-difference verification of tape gradients.

This is the package's independent oracle: it never looks at the tape's
backward rules, only at forward evaluations, so agreement between the
two routes is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tape, Tensor, backward, current_tape

REL_FLOOR = 1e-8


def grad_check(f, x, h: float = 1e-5) -> float:
    """Max relative error between the tape gradient of f at x and
    central differences with step h.

    f maps one Tensor to a scalar Tensor; any other inputs it needs
    should be closed over.  Returns max over coordinates of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-7 <= h <= 1e-3):
        raise ContractError(f"grad_check: step h={h} outside [1e-7, 1e-3]")
    if current_tape() is not None:
        raise ContractError("grad_check must run outside any active tape")

    x0 = np.ascontiguousarray(x.data if isinstance(x, Tensor) else x,
                              dtype=np.float64)

    with Tape() as tape:
        xt = Tensor(x0.copy())
        out = f(xt)
        if not isinstance(out, Tensor) or out.data.shape != ():
            raise ContractError("grad_check: f must return a scalar Tensor")
        if not np.isfinite(out.data):
            raise NumericError("grad_check: f(x) is non-finite")
        grads = backward(tape, out)
    analytic = grads.get(xt.node_id, np.zeros_like(x0))

    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    for i in range(x0.size):
        flat[i] = (_probe(f, x0, i, h) - _probe(f, x0, i, -h)) / (2.0 * h)

    err = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return float((err / denom).max())


def _probe(f, x0: np.ndarray, i: int, delta: float) -> float:
    xp = x0.copy()
    xp.reshape(-1)[i] += delta
    out = f(Tensor(xp))
    val = float(out.data)
    if not np.isfinite(val):
        raise NumericError(f"grad_check: non-finite probe at coordinate {i}")
    return val
