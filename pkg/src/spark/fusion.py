"""Cross-attention over band tokens, weighted residual fusion, classifier.

Each spectral embedding is viewed as 4 tokens of band_dim. Queries come
from the pixel-path embedding, keys/values from the semantic-path one;
the attended tokens are flattened back to d_model and the query embedding
is added as a residual.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Node, Tape
from .errors import InvalidInputError
from .params import ParameterStore
from .spectral import N_BANDS, ModelConfig


class CrossAttention:
    def __init__(self, prefix: str, cfg: ModelConfig):
        self.prefix = prefix
        self.cfg = cfg

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        bd = self.cfg.band_dim
        scale = 1.0 / np.sqrt(bd)
        for name in ("wq", "wk", "wv", "wo"):
            store.add(f"{self.prefix}.{name}", rng.normal(0.0, scale, size=(bd, bd)))

    def forward(self, tape: Tape, leaves: dict[str, Node], z1: Node, z2: Node) -> Node:
        d = self.cfg.d_model
        if z1.value.shape != (d,) or z2.value.shape != (d,):
            raise InvalidInputError(
                f"cross_attention needs two ({d},) vectors, got {z1.value.shape} and {z2.value.shape}")
        bd = self.cfg.band_dim
        hd = bd // self.cfg.n_heads
        X1 = tape.reshape(z1, (N_BANDS, bd))
        X2 = tape.reshape(z2, (N_BANDS, bd))
        Q = tape.matmul(X1, tape.transpose(leaves[f"{self.prefix}.wq"]))
        K = tape.matmul(X2, tape.transpose(leaves[f"{self.prefix}.wk"]))
        V = tape.matmul(X2, tape.transpose(leaves[f"{self.prefix}.wv"]))
        heads = []
        for h in range(self.cfg.n_heads):
            Qh = tape.narrow(Q, 1, h * hd, hd)
            Kh = tape.narrow(K, 1, h * hd, hd)
            Vh = tape.narrow(V, 1, h * hd, hd)
            S = tape.smul(tape.matmul(Qh, tape.transpose(Kh)), 1.0 / np.sqrt(hd))
            heads.append(tape.matmul(tape.softmax_rows(S), Vh))
        attended = tape.matmul(tape.concat(heads, axis=1),
                               tape.transpose(leaves[f"{self.prefix}.wo"]))
        return tape.add(tape.reshape(attended, (d,)), z1)


def fuse(tape: Tape, h_cross: Node, z1: Node, z2: Node, residual_weight: float) -> Node:
    """h_cross + w*z1 + w*z2, elementwise."""
    if not (h_cross.value.shape == z1.value.shape == z2.value.shape):
        raise InvalidInputError("fuse operands must share one shape")
    return tape.add(tape.add(h_cross, tape.smul(z1, residual_weight)),
                    tape.smul(z2, residual_weight))


class FusionHead:
    """Projection head with a smooth nonlinearity, then a linear classifier."""

    def __init__(self, prefix: str, cfg: ModelConfig):
        self.prefix = prefix
        self.cfg = cfg

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d, p = self.cfg.d_model, self.cfg.proj_dim
        store.add(f"{self.prefix}.proj_w", rng.normal(0.0, 1.0 / np.sqrt(d), size=(p, d)))
        store.add(f"{self.prefix}.proj_b", np.zeros(p))
        store.add(f"{self.prefix}.cls_w", rng.normal(0.0, 1.0 / np.sqrt(p), size=(1, p)))
        store.add(f"{self.prefix}.cls_b", np.zeros(1))

    def forward(self, tape: Tape, leaves: dict[str, Node], h_fused: Node) -> Node:
        """Returns the scalar logit node (shape (1,))."""
        if h_fused.value.shape != (self.cfg.d_model,):
            raise InvalidInputError(f"classifier input shape {h_fused.value.shape}")
        proj = tape.silu(tape.add(tape.matvec(leaves[f"{self.prefix}.proj_w"], h_fused),
                                  leaves[f"{self.prefix}.proj_b"]))
        return tape.add(tape.matvec(leaves[f"{self.prefix}.cls_w"], proj),
                        leaves[f"{self.prefix}.cls_b"])
