"""Full detector assembly: paths, fusion, classifier, checkpoint IO."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Node, Tape
from .errors import CorruptStoreError, InvalidInputError
from .fusion import CrossAttention, FusionHead, fuse
from .params import ParameterStore
from .spectral import (EmbeddingProvider, FrozenRandomPatchEncoder, ModelConfig,
                       PixelPath, SpectralPath)


@dataclass(frozen=True)
class AblationFlags:
    disable_pixel_fft: bool = False
    disable_feature_fft: bool = False
    disable_retrieval: bool = False
    use_mlp_instead_of_kan: bool = False


class SparkModel:
    """Dual-path spectral detector. Owns structure, not parameter values."""

    def __init__(self, cfg: ModelConfig, flags: AblationFlags = AblationFlags(),
                 provider: EmbeddingProvider | None = None):
        self.cfg = cfg
        self.flags = flags
        self.pixel = PixelPath("px", cfg)
        self.provider = provider if provider is not None else FrozenRandomPatchEncoder("enc", cfg)
        mlp = flags.use_mlp_instead_of_kan
        self.path1 = SpectralPath("p1", cfg, use_mlp=mlp)
        self.path2 = SpectralPath("p2", cfg, use_mlp=mlp)
        self.attn = CrossAttention("attn", cfg)
        self.head = FusionHead("head", cfg)

    def init_store(self, seed: int) -> ParameterStore:
        rng = np.random.default_rng(seed)
        store = ParameterStore()
        self.pixel.register(store, rng)
        self.provider.register(store, rng)
        self.path1.register(store, rng)
        self.path2.register(store, rng)
        self.attn.register(store, rng)
        self.head.register(store, rng)
        return store

    def forward(self, tape: Tape, leaves: dict[str, Node], sample) -> tuple[Node, Node]:
        """Returns (h_fused, logit) nodes for one sample."""
        h_rgb = self.pixel.forward(tape, leaves, np.asarray(sample.pixels))
        h_sem = self.provider.forward(tape, leaves, sample)
        z1 = h_rgb if self.flags.disable_pixel_fft else self.path1.forward(tape, leaves, h_rgb)
        z2 = h_sem if self.flags.disable_feature_fft else self.path2.forward(tape, leaves, h_sem)
        h_cross = self.attn.forward(tape, leaves, z1, z2)
        h_fused = fuse(tape, h_cross, z1, z2, self.cfg.residual_weight)
        logit = self.head.forward(tape, leaves, h_fused)
        return h_fused, logit

    def embed_and_logit(self, store: ParameterStore, sample) -> tuple[np.ndarray, float]:
        """Forward pass without gradients; returns (h_fused, logit) values."""
        tape = Tape()
        h_fused, logit = self.forward(tape, tape.leaves(store), sample)
        return h_fused.value.copy(), logit.value.item()


def parameter_count(cfg: ModelConfig, flags: AblationFlags = AblationFlags()) -> dict[str, int]:
    """Analytic per-module parameter counts; no instantiation."""
    d = cfg.d_model
    bd = cfg.band_dim
    counts: dict[str, int] = {}
    counts["pixel_path"] = d * cfg.pixel_count + d
    patch = 8 if cfg.image_size % 8 == 0 else 4
    counts["encoder"] = d * patch * patch * cfg.channels + 2 * (d * d + d)
    if flags.use_mlp_instead_of_kan:
        band = bd * bd + bd
    else:
        n_basis = cfg.grid_size + cfg.spline_degree
        expert = bd * bd + bd * bd * n_basis
        # base W + prescale/preshift + gate (W and b) + experts
        band = bd * bd + 2 + cfg.n_experts * bd + cfg.n_experts + cfg.n_experts * expert
    block = 4 * band + d * d + 2 * d
    path = cfg.blocks_per_path * block + (cfg.blocks_per_path - 1) * 2 * d
    counts["spectral_path_pixel"] = path
    counts["spectral_path_semantic"] = path
    counts["cross_attention"] = 4 * bd * bd
    counts["fusion_head"] = cfg.proj_dim * d + cfg.proj_dim + cfg.proj_dim + 1
    counts["total"] = sum(v for k, v in counts.items())
    return counts


# -- checkpoint (SPKM) ---------------------------------------------------

SPKM_MAGIC = b"SPKM"
SPKM_VERSION = 1


def save_checkpoint(path, store: ParameterStore, config_text: str = "") -> None:
    """Little-endian named-tensor dump (f64) plus the run config text."""
    with open(path, "wb") as f:
        f.write(SPKM_MAGIC)
        f.write(struct.pack("<II", SPKM_VERSION, len(store)))
        for name, p in store.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", p.value.ndim))
            for dim in p.value.shape:
                f.write(struct.pack("<I", dim))
            f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
        cb = config_text.encode("utf-8")
        f.write(struct.pack("<I", len(cb)))
        f.write(cb)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    """Returns (tensors by name, config text)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != SPKM_MAGIC:
        raise CorruptStoreError(f"bad checkpoint magic in {path}", offset=0)
    version, count = struct.unpack_from("<II", data, 4)
    if version != SPKM_VERSION:
        raise CorruptStoreError(f"unsupported checkpoint version {version}", offset=4)
    off = 12
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if off + 2 > len(data):
            raise CorruptStoreError("truncated checkpoint", offset=off)
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        if off + 1 > len(data):
            raise CorruptStoreError("truncated checkpoint", offset=off)
        rank = data[off]
        off += 1
        if off + 4 * rank > len(data):
            raise CorruptStoreError("truncated checkpoint", offset=off)
        shape = struct.unpack_from(f"<{rank}I", data, off) if rank else ()
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        if off + 8 * n > len(data):
            raise CorruptStoreError("truncated checkpoint", offset=off)
        tensors[name] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    if off + 4 > len(data):
        raise CorruptStoreError("truncated checkpoint", offset=off)
    (clen,) = struct.unpack_from("<I", data, off)
    off += 4
    if off + clen > len(data):
        raise CorruptStoreError("truncated checkpoint", offset=off)
    config_text = data[off:off + clen].decode("utf-8")
    return tensors, config_text


def restore_store(model: SparkModel, path, seed: int = 0) -> ParameterStore:
    """Rebuild a store with the model's structure and checkpointed values."""
    store = model.init_store(seed)
    tensors, _ = load_checkpoint(path)
    if set(tensors) != set(store.names()):
        missing = set(store.names()) ^ set(tensors)
        raise InvalidInputError(f"checkpoint/model parameter mismatch: {sorted(missing)[:5]}")
    for name, arr in tensors.items():
        p = store[name]
        if arr.shape != p.value.shape:
            raise InvalidInputError(f"checkpoint shape mismatch for {name}")
        p.value[...] = arr
    return store
