"""Multi-band spectral blocks and the two feature paths.

Each block: log-magnitude spectrum -> four contiguous frequency bands ->
per-band gated KAN transform -> concat -> output projection -> layer norm.
A path stacks blocks with intermediate normalization. The pixel path is a
single affine projection of the flattened image; the semantic path is a
pluggable embedding provider (frozen-random stub or precomputed loader).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Node, Tape
from .errors import (ConfigError, CorruptStoreError, InvalidInputError,
                     NotFoundError)
from .kan import KanBandLayer, MlpBandLayer, SplineGrid
from .params import ParameterStore

N_BANDS = 4
LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 768
    n_experts: int = 4
    n_heads: int = 12
    blocks_per_path: int = 2
    image_size: int = 32
    channels: int = 3
    grid_size: int = 5
    spline_degree: int = 3
    spline_span: float = 1.5
    residual_weight: float = 0.2
    proj_dim: int = 256
    k_retrieve: int = 5

    def __post_init__(self):
        if self.d_model % N_BANDS != 0:
            raise ConfigError(f"d_model must be divisible by {N_BANDS}, got {self.d_model}")
        if self.band_dim % self.n_heads != 0:
            raise ConfigError(
                f"band_dim {self.band_dim} must be divisible by n_heads {self.n_heads}")
        if self.image_size < 4:
            raise ConfigError(f"image_size must be >= 4, got {self.image_size}")
        if self.residual_weight < 0:
            raise ConfigError("residual_weight must be >= 0")
        if self.n_experts < 1 or self.blocks_per_path < 1 or self.proj_dim < 1:
            raise ConfigError("n_experts, blocks_per_path, proj_dim must be >= 1")
        if self.channels < 1 or self.k_retrieve < 1:
            raise ConfigError("channels and k_retrieve must be >= 1")

    @property
    def band_dim(self) -> int:
        return self.d_model // N_BANDS

    @property
    def pixel_count(self) -> int:
        return self.image_size * self.image_size * self.channels

    def spline_grid(self) -> SplineGrid:
        return SplineGrid(degree=self.spline_degree, grid_size=self.grid_size,
                          span=self.spline_span)


def band_partition(h_freq: np.ndarray) -> list[np.ndarray]:
    """Four contiguous slices covering [0,0.25pi], ..., [0.75pi,pi]."""
    h_freq = np.asarray(h_freq)
    if h_freq.ndim != 1 or h_freq.size % N_BANDS != 0:
        raise ConfigError(f"band_partition needs length divisible by {N_BANDS}")
    b = h_freq.size // N_BANDS
    return [h_freq[i * b:(i + 1) * b] for i in range(N_BANDS)]


class MultiBandBlock:
    def __init__(self, prefix: str, cfg: ModelConfig, use_mlp: bool = False):
        self.prefix = prefix
        self.cfg = cfg
        bd = cfg.band_dim
        if use_mlp:
            self.bands = [MlpBandLayer(f"{prefix}.band{b}", bd) for b in range(N_BANDS)]
        else:
            grid = cfg.spline_grid()
            self.bands = [KanBandLayer(f"{prefix}.band{b}", bd, cfg.n_experts, grid)
                          for b in range(N_BANDS)]

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d = self.cfg.d_model
        for band in self.bands:
            band.register(store, rng)
        store.add(f"{self.prefix}.proj", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)))
        store.add(f"{self.prefix}.ln_gain", np.ones(d))
        store.add(f"{self.prefix}.ln_bias", np.zeros(d))

    def forward(self, tape: Tape, leaves: dict[str, Node], h: Node) -> Node:
        if h.value.shape != (self.cfg.d_model,):
            raise InvalidInputError(
                f"block input shape {h.value.shape}, want ({self.cfg.d_model},)")
        freq = tape.log_magnitude(h)
        bd = self.cfg.band_dim
        outs = [band.forward(tape, leaves, tape.narrow(freq, 0, b * bd, bd))
                for b, band in enumerate(self.bands)]
        proj = tape.matvec(leaves[f"{self.prefix}.proj"], tape.concat(outs))
        return tape.layer_norm(proj, leaves[f"{self.prefix}.ln_gain"],
                               leaves[f"{self.prefix}.ln_bias"], LN_EPS)


class SpectralPath:
    """Stack of multi-band blocks with normalization between blocks."""

    def __init__(self, prefix: str, cfg: ModelConfig, use_mlp: bool = False):
        self.prefix = prefix
        self.cfg = cfg
        self.blocks = [MultiBandBlock(f"{prefix}.block{i}", cfg, use_mlp)
                       for i in range(cfg.blocks_per_path)]

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d = self.cfg.d_model
        for i, block in enumerate(self.blocks):
            block.register(store, rng)
            if i + 1 < len(self.blocks):
                store.add(f"{self.prefix}.inorm{i}_gain", np.ones(d))
                store.add(f"{self.prefix}.inorm{i}_bias", np.zeros(d))

    def forward(self, tape: Tape, leaves: dict[str, Node], h: Node) -> Node:
        out = h
        for i, block in enumerate(self.blocks):
            if i > 0:
                out = tape.layer_norm(out, leaves[f"{self.prefix}.inorm{i-1}_gain"],
                                      leaves[f"{self.prefix}.inorm{i-1}_bias"], LN_EPS)
            out = block.forward(tape, leaves, out)
        return out


class PixelPath:
    """Affine projection of the flattened [0,1] image to d_model."""

    def __init__(self, prefix: str, cfg: ModelConfig):
        self.prefix = prefix
        self.cfg = cfg

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        n = self.cfg.pixel_count
        store.add(f"{self.prefix}.w", rng.normal(0.0, 1.0 / np.sqrt(n),
                                                 size=(self.cfg.d_model, n)))
        store.add(f"{self.prefix}.b", np.zeros(self.cfg.d_model))

    def forward(self, tape: Tape, leaves: dict[str, Node], pixels: np.ndarray) -> Node:
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.shape != (self.cfg.pixel_count,):
            raise InvalidInputError(
                f"expected {self.cfg.pixel_count} pixels, got shape {pixels.shape}")
        if np.min(pixels) < 0.0 or np.max(pixels) > 1.0:
            raise InvalidInputError("pixel values must lie in [0, 1]")
        return tape.add(tape.matvec(leaves[f"{self.prefix}.w"], tape.constant(pixels)),
                        leaves[f"{self.prefix}.b"])


class EmbeddingProvider:
    """Maps a sample to a length-d_model semantic embedding."""

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def forward(self, tape: Tape, leaves: dict[str, Node], sample) -> Node:
        raise NotImplementedError


class FrozenRandomPatchEncoder(EmbeddingProvider):
    """Frozen random per-patch projection + mean pool + two trainable layers.

    Mirrors a frozen-trunk/trainable-tail encoder: the patch projection never
    receives gradients, the two dense layers do.
    """

    def __init__(self, prefix: str, cfg: ModelConfig):
        self.prefix = prefix
        self.cfg = cfg
        self.patch = 8 if cfg.image_size % 8 == 0 else 4
        if cfg.image_size % self.patch != 0:
            raise ConfigError(f"image_size {cfg.image_size} not divisible by patch {self.patch}")

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d = self.cfg.d_model
        pdim = self.patch * self.patch * self.cfg.channels
        store.add(f"{self.prefix}.patch_w",
                  rng.normal(0.0, 1.0 / np.sqrt(pdim), size=(d, pdim)), trainable=False)
        store.add(f"{self.prefix}.tail1_w", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)))
        store.add(f"{self.prefix}.tail1_b", np.zeros(d))
        store.add(f"{self.prefix}.tail2_w", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)))
        store.add(f"{self.prefix}.tail2_b", np.zeros(d))

    def _patches(self, pixels: np.ndarray) -> np.ndarray:
        s, c, p = self.cfg.image_size, self.cfg.channels, self.patch
        img = pixels.reshape(s, s, c)
        n = s // p
        tiles = img.reshape(n, p, n, p, c).transpose(0, 2, 1, 3, 4).reshape(n * n, p * p * c)
        return tiles

    def forward(self, tape: Tape, leaves: dict[str, Node], sample) -> Node:
        pixels = np.asarray(sample.pixels, dtype=np.float64)
        if pixels.shape != (self.cfg.pixel_count,):
            raise InvalidInputError(
                f"expected {self.cfg.pixel_count} pixels, got shape {pixels.shape}")
        tiles = self._patches(pixels)
        # frozen trunk evaluated outside the tape: no gradient ever flows here
        pooled = (tiles @ leaves[f"{self.prefix}.patch_w"].value.T).mean(axis=0)
        h = tape.silu(tape.add(tape.matvec(leaves[f"{self.prefix}.tail1_w"],
                                           tape.constant(pooled)),
                               leaves[f"{self.prefix}.tail1_b"]))
        return tape.add(tape.matvec(leaves[f"{self.prefix}.tail2_w"], h),
                        leaves[f"{self.prefix}.tail2_b"])


class PrecomputedLoader(EmbeddingProvider):
    """Serves embeddings from an SPKE file keyed by sample id."""

    def __init__(self, path, d_model: int):
        self.d_model = d_model
        self.table = read_embedding_file(path, expect_dim=d_model)

    def register(self, store: ParameterStore, rng: np.random.Generator) -> None:
        pass

    def forward(self, tape: Tape, leaves: dict[str, Node], sample) -> Node:
        emb = self.table.get(sample.sample_id)
        if emb is None:
            raise NotFoundError(f"no precomputed embedding for id {sample.sample_id!r}")
        return tape.constant(emb.astype(np.float64))


# -- SPKE embedding file ------------------------------------------------

SPKE_MAGIC = b"SPKE"
SPKE_VERSION = 1


def write_embedding_file(path, d_model: int, records) -> None:
    """records: iterable of (sample_id, embedding); embeddings stored as f32."""
    records = list(records)
    with open(path, "wb") as f:
        f.write(SPKE_MAGIC)
        f.write(struct.pack("<IIQ", SPKE_VERSION, d_model, len(records)))
        for sid, emb in records:
            emb = np.asarray(emb, dtype=np.float32)
            if emb.shape != (d_model,):
                raise InvalidInputError(f"embedding for {sid!r} has shape {emb.shape}")
            sid_b = sid.encode("utf-8")
            f.write(struct.pack("<H", len(sid_b)))
            f.write(sid_b)
            f.write(emb.tobytes())


def read_embedding_file(path, expect_dim: int | None = None) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 20 or data[:4] != SPKE_MAGIC:
        raise CorruptStoreError(f"bad embedding file magic in {path}", offset=0)
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != SPKE_VERSION:
        raise CorruptStoreError(f"unsupported embedding file version {version}", offset=4)
    if expect_dim is not None and dim != expect_dim:
        raise ConfigError(f"embedding file dim {dim} != expected {expect_dim}")
    out: dict[str, np.ndarray] = {}
    off = 20
    for _ in range(count):
        if off + 2 > len(data):
            raise CorruptStoreError("truncated embedding file", offset=off)
        (idlen,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + idlen + 4 * dim > len(data):
            raise CorruptStoreError("truncated embedding file", offset=off)
        sid = data[off:off + idlen].decode("utf-8")
        off += idlen
        out[sid] = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
        off += 4 * dim
    return out
