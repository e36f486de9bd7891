"""Embedded vector store: exact cosine top-k, majority voting, persistence.

Embeddings are L2-normalized and held as f32; search is an exhaustive
scan (exact), ties broken by ascending insertion id. The on-disk format
is little-endian with a trailing CRC32 over everything after the magic.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (CorruptStoreError, EmptyStoreError, InvalidInputError)

SPKV_MAGIC = b"SPKV"
SPKV_VERSION = 1


@dataclass(frozen=True)
class Neighbor:
    id: int
    similarity: float
    label: int
    generator_id: str


def normalize_embedding(v: np.ndarray) -> np.ndarray:
    """L2-normalize to f32; rejects zero vectors."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise InvalidInputError("cannot normalize a zero or non-finite vector")
    return (v / n).astype(np.float32)


def majority_vote(labels) -> int:
    """0 (real) iff real labels form a strict majority; ties are fake."""
    labels = list(labels)
    if not labels:
        raise InvalidInputError("majority_vote over an empty label list")
    zeros = sum(1 for y in labels if y == 0)
    return 0 if zeros > len(labels) / 2 else 1


class VectorStore:
    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidInputError("store dim must be >= 1")
        self.dim = int(dim)
        self._emb: list[np.ndarray] = []
        self._labels: list[int] = []
        self._gen_ids: list[str] = []
        self._phases: list[int] = []
        self._mat: np.ndarray | None = None  # cached f64 matrix for scans

    @property
    def count(self) -> int:
        return len(self._emb)

    def insert(self, embedding: np.ndarray, label: int, generator_id: str, phase: int = 0) -> int:
        embedding = np.asarray(embedding, dtype=np.float64)
        if embedding.shape != (self.dim,):
            raise InvalidInputError(f"embedding shape {embedding.shape}, store dim {self.dim}")
        if label not in (0, 1):
            raise InvalidInputError(f"label must be 0 or 1, got {label!r}")
        self._emb.append(normalize_embedding(embedding))
        self._mat = None
        self._labels.append(int(label))
        self._gen_ids.append(str(generator_id))
        self._phases.append(int(phase))
        return self.count - 1

    def record(self, rid: int) -> tuple[np.ndarray, int, str, int]:
        return self._emb[rid], self._labels[rid], self._gen_ids[rid], self._phases[rid]

    def topk(self, query: np.ndarray, k: int) -> list[Neighbor]:
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        if self.count == 0:
            raise EmptyStoreError("vector store is empty; index embeddings first")
        q = normalize_embedding(query).astype(np.float64)
        if self._mat is None:
            self._mat = np.stack(self._emb).astype(np.float64)
        sims = self._mat @ q
        order = np.lexsort((np.arange(self.count), -sims))[:min(k, self.count)]
        return [Neighbor(int(i), float(sims[i]), self._labels[i], self._gen_ids[i])
                for i in order]

    def predict(self, query: np.ndarray, k: int) -> tuple[int, list[Neighbor]]:
        neighbors = self.topk(query, k)
        return majority_vote([n.label for n in neighbors]), neighbors

    # -- persistence ----------------------------------------------------

    def save(self, path) -> None:
        payload = bytearray()
        payload += struct.pack("<IIQ", SPKV_VERSION, self.dim, self.count)
        for rid in range(self.count):
            gid = self._gen_ids[rid].encode("utf-8")
            payload += struct.pack("<QBIH", rid, self._labels[rid],
                                   self._phases[rid], len(gid))
            payload += gid
            payload += self._emb[rid].astype("<f4").tobytes()
        with open(path, "wb") as f:
            f.write(SPKV_MAGIC)
            f.write(payload)
            f.write(struct.pack("<I", zlib.crc32(bytes(payload))))

    @classmethod
    def load(cls, path) -> "VectorStore":
        with open(path, "rb") as f:
            data = f.read()
        if len(data) < 24 or data[:4] != SPKV_MAGIC:
            raise CorruptStoreError(f"bad store magic in {path}", offset=0)
        payload = data[4:-4]
        (crc,) = struct.unpack_from("<I", data, len(data) - 4)
        if zlib.crc32(payload) != crc:
            raise CorruptStoreError("store checksum mismatch", offset=len(data) - 4)
        version, dim, count = struct.unpack_from("<IIQ", payload, 0)
        if version != SPKV_VERSION:
            raise CorruptStoreError(f"unsupported store version {version}", offset=4)
        store = cls(dim)
        off = 16
        for expect_id in range(count):
            if off + 15 > len(payload):
                raise CorruptStoreError("truncated store record", offset=off + 4)
            rid, label, phase, glen = struct.unpack_from("<QBIH", payload, off)
            off += 15
            if rid != expect_id:
                raise CorruptStoreError(f"non-monotonic record id {rid}", offset=off + 4)
            if off + glen + 4 * dim > len(payload):
                raise CorruptStoreError("truncated store record", offset=off + 4)
            gid = payload[off:off + glen].decode("utf-8")
            off += glen
            emb = np.frombuffer(payload, dtype="<f4", count=dim, offset=off).copy()
            off += 4 * dim
            store._emb.append(emb)
            store._labels.append(int(label))
            store._gen_ids.append(gid)
            store._phases.append(int(phase))
        if off != len(payload):
            raise CorruptStoreError("trailing bytes after last record", offset=off + 4)
        return store
