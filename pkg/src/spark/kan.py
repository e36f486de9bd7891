"""Spline-parameterized expert layers with softmax mixture-of-experts gating.

Each band layer computes a linear base term plus a gate-weighted sum of
expert outputs; every expert is a per-(input,output) cubic B-spline bank
plus a silu-activated linear term. Inputs beyond the spline span are
clamped to the span boundary (zero gradient outside).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autodiff import Node, Tape
from .errors import InvalidInputError
from .params import ParameterStore


@dataclass(frozen=True)
class SplineGrid:
    degree: int = 3
    grid_size: int = 5
    span: float = 1.5
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree < 1 or self.grid_size < 1 or self.span <= 0:
            raise InvalidInputError("SplineGrid needs degree >= 1, grid_size >= 1, span > 0")
        h = 2.0 * self.span / self.grid_size
        knots = -self.span + h * np.arange(-self.degree, self.grid_size + self.degree + 1)
        object.__setattr__(self, "knots", knots)

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.degree


def _basis_and_deriv(x: np.ndarray, grid: SplineGrid):
    """Cox-de Boor basis values and derivatives at clamped points.

    x: (k,) raw inputs. Returns (phi, dphi, inside) where phi/dphi are
    (k, n_basis) and inside marks points within the span (clamp gradient
    mask).
    """
    t = grid.knots
    lo, hi = -grid.span, grid.span
    inside = (x >= lo) & (x <= hi)
    xc = np.clip(x, lo, hi)
    k = xc.size
    h = 2.0 * grid.span / grid.grid_size
    # base interval index, x == hi assigned to the last interior interval
    j = np.floor((xc - lo) / h).astype(np.int64) + grid.degree
    j = np.clip(j, grid.degree, grid.degree + grid.grid_size - 1)

    n0 = t.size - 1
    B = np.zeros((k, n0))
    B[np.arange(k), j] = 1.0
    prev = B
    xcol = xc[:, None]
    for p in range(1, grid.degree + 1):
        m = t.size - 1 - p
        denom_l = t[p:p + m] - t[:m]
        denom_r = t[p + 1:p + 1 + m] - t[1:1 + m]
        cur = ((xcol - t[:m]) / denom_l * prev[:, :m]
               + (t[p + 1:p + 1 + m] - xcol) / denom_r * prev[:, 1:m + 1])
        if p == grid.degree:
            dphi = p * (prev[:, :m] / denom_l - prev[:, 1:m + 1] / denom_r)
            return cur, dphi, inside
        prev = cur
    raise AssertionError("unreachable")


def bspline_basis(x: float, grid: SplineGrid) -> np.ndarray:
    """Basis vector at a single point (clamped to the span)."""
    phi, _, _ = _basis_and_deriv(np.asarray([float(x)]), grid)
    return phi[0]


def spline_mix(tape: Tape, h: Node, coeffs: Node, grid: SplineGrid) -> Node:
    """out[o] = sum_i sum_m coeffs[o,i,m] * B_m(clamp(h[i]))."""
    C = coeffs.value
    if C.ndim != 3 or C.shape[1] != h.value.shape[0] or C.shape[2] != grid.n_basis:
        raise InvalidInputError(f"spline coeffs shape {C.shape} vs input {h.value.shape}")
    phi, dphi, inside = _basis_and_deriv(h.value, grid)
    out = np.einsum("oim,im->o", C, phi)

    def vjp(g):
        dC = np.einsum("o,im->oim", g, phi)
        dh = np.einsum("o,oim,im->i", g, C, dphi) * inside
        return (dh, dC)

    return tape._op(out, (h, coeffs), vjp)


def clamp(tape: Tape, a: Node, lo: float, hi: float) -> Node:
    av = a.value
    mask = (av >= lo) & (av <= hi)
    return tape._op(np.clip(av, lo, hi), (a,), lambda g: (g * mask,))


class KanExpert:
    """One spline expert: base_weight @ silu(hc) + spline bank, hc clamped."""

    def __init__(self, prefix: str, dim: int, grid: SplineGrid):
        self.prefix = prefix
        self.dim = dim
        self.grid = grid

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d, nb = self.dim, self.grid.n_basis
        store.add(f"{self.prefix}.base_w", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)))
        store.add(f"{self.prefix}.coeffs", rng.normal(0.0, 0.1 / np.sqrt(nb), size=(d, d, nb)))

    def forward(self, tape: Tape, leaves: dict[str, Node], h: Node) -> Node:
        if h.value.shape != (self.dim,):
            raise InvalidInputError(f"expert input shape {h.value.shape}, want ({self.dim},)")
        hc = clamp(tape, h, -self.grid.span, self.grid.span)
        base = tape.matvec(leaves[f"{self.prefix}.base_w"], tape.silu(hc))
        return tape.add(base, spline_mix(tape, hc, leaves[f"{self.prefix}.coeffs"], self.grid))


class MoeGate:
    def __init__(self, prefix: str, dim: int, n_experts: int):
        self.prefix = prefix
        self.dim = dim
        self.n_experts = n_experts

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        store.add(f"{self.prefix}.w", rng.normal(0.0, 0.1 / np.sqrt(self.dim),
                                                 size=(self.n_experts, self.dim)))
        store.add(f"{self.prefix}.b", np.zeros(self.n_experts))

    def forward(self, tape: Tape, leaves: dict[str, Node], h: Node) -> Node:
        if h.value.shape != (self.dim,):
            raise InvalidInputError(f"gate input shape {h.value.shape}, want ({self.dim},)")
        return tape.softmax(tape.add(tape.matvec(leaves[f"{self.prefix}.w"], h),
                                     leaves[f"{self.prefix}.b"]))


class KanBandLayer:
    """Linear base plus gated expert mixture over one frequency band.

    A learnable scalar affine pre-scale maps band inputs (log-magnitudes,
    unbounded above) toward the spline span before the experts; it is
    initialized to the identity.
    """

    def __init__(self, prefix: str, dim: int, n_experts: int, grid: SplineGrid):
        if n_experts < 1:
            raise InvalidInputError("need at least one expert")
        self.prefix = prefix
        self.dim = dim
        self.grid = grid
        self.experts = [KanExpert(f"{prefix}.expert{e}", dim, grid) for e in range(n_experts)]
        self.gate = MoeGate(f"{prefix}.gate", dim, n_experts)

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d = self.dim
        store.add(f"{self.prefix}.base", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)))
        store.add(f"{self.prefix}.prescale", np.array([1.0]))
        store.add(f"{self.prefix}.preshift", np.array([0.0]))
        for ex in self.experts:
            ex.register(store, rng)
        self.gate.register(store, rng)

    def forward(self, tape: Tape, leaves: dict[str, Node], h: Node) -> Node:
        if h.value.shape != (self.dim,):
            raise InvalidInputError(f"band input shape {h.value.shape}, want ({self.dim},)")
        out = tape.matvec(leaves[f"{self.prefix}.base"], h)
        alpha = self.gate.forward(tape, leaves, h)
        hp = tape.vsadd(tape.vsmul(h, leaves[f"{self.prefix}.prescale"]),
                        leaves[f"{self.prefix}.preshift"])
        for e, ex in enumerate(self.experts):
            w_e = tape.narrow(alpha, 0, e, 1)
            out = tape.add(out, tape.vsmul(ex.forward(tape, leaves, hp), w_e))
        return out


class MlpBandLayer:
    """Ablation stand-in: dense layer + silu of matched band dimension."""

    def __init__(self, prefix: str, dim: int):
        self.prefix = prefix
        self.dim = dim

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d = self.dim
        store.add(f"{self.prefix}.mlp_w", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)))
        store.add(f"{self.prefix}.mlp_b", np.zeros(d))

    def forward(self, tape: Tape, leaves: dict[str, Node], h: Node) -> Node:
        return tape.silu(tape.add(tape.matvec(leaves[f"{self.prefix}.mlp_w"], h),
                                  leaves[f"{self.prefix}.mlp_b"]))
