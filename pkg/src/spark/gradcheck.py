"""Central-difference gradient verification for tape-built losses."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, NumericError
from .params import ParameterStore


def grad_check(loss_fn, store: ParameterStore, eps: float = 1e-5,
               rng: np.random.Generator | None = None,
               samples_per_param: int = 4) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn(store) must build its own tape, run backward, and return the
    scalar loss value; after the call store grads hold the analytic gradient.
    Relative error is |analytic - fd| / max(1, |fd|), maxed over a random
    sample of entries of every trainable parameter.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise InvalidInputError(f"grad_check eps must be in [1e-7, 1e-4], got {eps}")
    if rng is None:
        rng = np.random.default_rng(0)

    store.zero_grad()
    base = float(loss_fn(store))
    if not np.isfinite(base):
        raise NumericError("non-finite loss in grad_check")
    analytic = {name: p.grad.copy() for name, p in store.trainable_items()}

    worst = 0.0
    for name, p in store.trainable_items():
        flat = p.value.reshape(-1)
        n = flat.size
        if n <= samples_per_param:
            idxs = np.arange(n)
        else:
            idxs = rng.choice(n, size=samples_per_param, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            store.zero_grad()
            hi = float(loss_fn(store))
            flat[i] = orig - eps
            store.zero_grad()
            lo = float(loss_fn(store))
            flat[i] = orig
            fd = (hi - lo) / (2.0 * eps)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    # restore analytic grads so callers can inspect them afterwards
    store.zero_grad()
    loss_fn(store)
    return worst
