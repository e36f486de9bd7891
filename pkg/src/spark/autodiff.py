"""Minimal reverse-mode tape over numpy arrays.

One Tape per forward pass; backward() walks the recorded nodes in exact
reverse order and accumulates into Param.grad for leaves that carry a
trainable parameter. A second backward on the same tape raises.
No broadcasting: elementwise ops require identical shapes.
"""

from __future__ import annotations

import numpy as np

from . import fft, ops
from .errors import InvalidInputError, NumericError, TapeReusedError
from .params import Param, ParameterStore


class Node:
    __slots__ = ("value", "grad", "parents", "vjp", "param")

    def __init__(self, value, parents=(), vjp=None, param=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.param = param


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.used = False

    def _record(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    def leaf(self, param: Param) -> Node:
        return self._record(Node(param.value, param=param))

    def constant(self, value) -> Node:
        return self._record(Node(value))

    def leaves(self, store: ParameterStore) -> dict[str, Node]:
        return {name: self.leaf(p) for name, p in store.items()}

    # -- primitive ops -------------------------------------------------

    def _op(self, value, parents, vjp) -> Node:
        return self._record(Node(value, parents=tuple(parents), vjp=vjp))

    def add(self, a: Node, b: Node) -> Node:
        _same_shape(a, b)
        return self._op(a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a: Node, b: Node) -> Node:
        _same_shape(a, b)
        return self._op(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a: Node, b: Node) -> Node:
        _same_shape(a, b)
        av, bv = a.value, b.value
        return self._op(av * bv, (a, b), lambda g: (g * bv, g * av))

    def neg(self, a: Node) -> Node:
        return self._op(-a.value, (a,), lambda g: (-g,))

    def smul(self, a: Node, c: float) -> Node:
        c = float(c)
        return self._op(a.value * c, (a,), lambda g: (g * c,))

    def vsmul(self, v: Node, s: Node) -> Node:
        """Vector times scalar node."""
        sv = s.value.item()
        vv = v.value
        return self._op(vv * sv, (v, s),
                        lambda g: (g * sv, np.asarray(np.sum(g * vv))))

    def vsadd(self, v: Node, s: Node) -> Node:
        """Vector plus scalar node."""
        return self._op(v.value + s.value.item(), (v, s),
                        lambda g: (g, np.asarray(np.sum(g))))

    def matvec(self, W: Node, x: Node) -> Node:
        Wv, xv = W.value, x.value
        if Wv.ndim != 2 or xv.ndim != 1 or Wv.shape[1] != xv.shape[0]:
            raise InvalidInputError(f"matvec shapes {Wv.shape} x {xv.shape}")
        return self._op(Wv @ xv, (W, x), lambda g: (np.outer(g, xv), Wv.T @ g))

    def matmul(self, A: Node, B: Node) -> Node:
        Av, Bv = A.value, B.value
        if Av.ndim != 2 or Bv.ndim != 2 or Av.shape[1] != Bv.shape[0]:
            raise InvalidInputError(f"matmul shapes {Av.shape} x {Bv.shape}")
        return self._op(Av @ Bv, (A, B), lambda g: (g @ Bv.T, Av.T @ g))

    def transpose(self, A: Node) -> Node:
        return self._op(A.value.T, (A,), lambda g: (g.T,))

    def reshape(self, a: Node, shape) -> Node:
        old = a.value.shape
        return self._op(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))

    def narrow(self, a: Node, axis: int, start: int, length: int) -> Node:
        idx = [slice(None)] * a.value.ndim
        idx[axis] = slice(start, start + length)
        idx = tuple(idx)

        def vjp(g):
            out = np.zeros_like(a.value)
            out[idx] = g
            return (out,)

        return self._op(a.value[idx], (a,), vjp)

    def concat(self, parts: list[Node], axis: int = 0) -> Node:
        sizes = [p.value.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            outs = []
            for i, p in enumerate(parts):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offsets[i], offsets[i + 1])
                outs.append(g[tuple(idx)])
            return tuple(outs)

        return self._op(np.concatenate([p.value for p in parts], axis=axis),
                        tuple(parts), vjp)

    def sum(self, a: Node) -> Node:
        shape = a.value.shape
        return self._op(np.asarray(a.value.sum()), (a,),
                        lambda g: (np.broadcast_to(g, shape).copy(),))

    def mean(self, a: Node) -> Node:
        return self.smul(self.sum(a), 1.0 / a.value.size)

    def dot(self, a: Node, b: Node) -> Node:
        _same_shape(a, b)
        av, bv = a.value, b.value
        return self._op(np.asarray(av @ bv), (a, b), lambda g: (g * bv, g * av))

    def powc(self, a: Node, p: float) -> Node:
        av = a.value
        return self._op(av ** p, (a,), lambda g: (g * p * av ** (p - 1.0),))

    def silu(self, a: Node) -> Node:
        av = a.value
        sig = ops.sigmoid(av)
        return self._op(av * sig, (a,), lambda g: (g * (sig * (1.0 + av * (1.0 - sig))),))

    def tanh(self, a: Node) -> Node:
        t = np.tanh(a.value)
        return self._op(t, (a,), lambda g: (g * (1.0 - t * t),))

    def softmax(self, a: Node) -> Node:
        p = ops.softmax(a.value)
        return self._op(p, (a,), lambda g: ((g - np.sum(g * p)) * p,))

    def softmax_rows(self, a: Node) -> Node:
        p = ops.softmax(a.value)
        return self._op(p, (a,),
                        lambda g: ((g - np.sum(g * p, axis=-1, keepdims=True)) * p,))

    def log_magnitude(self, a: Node) -> Node:
        """log(1 + |DFT(x)|) of a real vector; subgradient 0 at |X[k]| = 0."""
        X = fft.dft(a.value.astype(np.complex128))
        mag = np.abs(X)
        y = np.log1p(mag)

        def vjp(g):
            with np.errstate(invalid="ignore", divide="ignore"):
                c = np.where(mag > 0.0, g / (1.0 + mag) / mag, 0.0) * np.conj(X)
            return (np.real(fft.dft(c)),)

        return self._op(y, (a,), vjp)

    def bce_with_logits(self, logit: Node, label: int) -> Node:
        loss = ops.bce_with_logits(logit.value.item(), label)
        sig = float(ops.sigmoid(logit.value.item()))
        return self._op(np.asarray(loss), (logit,),
                        lambda g: (g * (sig - float(label)),))

    def layer_norm(self, v: Node, gain: Node, bias: Node, eps: float) -> Node:
        # composed from primitives; numeric value matches ops.layer_norm
        _same_shape(v, gain)
        _same_shape(v, bias)
        m = self.mean(v)
        c = self.vsadd(v, self.neg(m))
        var = self.mean(self.mul(c, c))
        inv = self.powc(self.vsadd(var, self.constant(eps)), -0.5)
        normed = self.vsmul(c, inv)
        return self.add(self.mul(normed, gain), bias)


def _same_shape(a: Node, b: Node) -> None:
    if a.value.shape != b.value.shape:
        raise InvalidInputError(f"shape mismatch: {a.value.shape} vs {b.value.shape}")


def backward(tape: Tape, loss: Node) -> None:
    """Reverse pass from a scalar loss; accumulates into Param.grad."""
    if tape.used:
        raise TapeReusedError("backward already ran on this tape")
    tape.used = True
    if loss.value.size != 1:
        raise InvalidInputError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not np.isfinite(loss.value):
        raise NumericError("non-finite loss")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        if node.param is not None and node.param.trainable:
            node.param.grad += g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.value.shape)
            if parent.grad is None:
                parent.grad = pg.copy()
            else:
                parent.grad += pg
