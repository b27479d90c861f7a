"""MNIST IDX ingestion and client partitioning."""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, RangeError
from .nn import MiniBatch

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"


@dataclass
class ImageSet:
    count: int
    rows: int
    cols: int
    pixels: np.ndarray  # (count, rows * cols) float64 in [0, 1]


@dataclass
class LabelSet:
    count: int
    labels: np.ndarray  # (count,) int64 in [0, 9]


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == GZIP_MAGIC:
        return gzip.decompress(data)
    return data


def _read_header(data: bytes, magic: int, ndims: int, kind: str):
    header_len = 4 * (1 + ndims)
    if len(data) < header_len:
        raise FormatError(f"{kind} header needs {header_len} bytes, got {len(data)}")
    found, *dims = struct.unpack(f">{1 + ndims}I", data[:header_len])
    if found != magic:
        raise FormatError(f"bad {kind} magic 0x{found:08X}, expected 0x{magic:08X}")
    expected = header_len + int(np.prod(dims, dtype=np.int64))
    if len(data) != expected:
        raise FormatError(
            f"{kind} payload length mismatch: expected {expected} bytes, got {len(data)}"
        )
    return dims, header_len


def parse_idx_images(data: bytes) -> ImageSet:
    data = _maybe_gunzip(bytes(data))
    (count, rows, cols), off = _read_header(data, IMAGE_MAGIC, 3, "image")
    raw = np.frombuffer(data, dtype=np.uint8, offset=off)
    pixels = raw.reshape(count, rows * cols).astype(np.float64) / 255.0
    return ImageSet(count, rows, cols, pixels)


def parse_idx_labels(data: bytes) -> LabelSet:
    data = _maybe_gunzip(bytes(data))
    (count,), off = _read_header(data, LABEL_MAGIC, 1, "label")
    raw = np.frombuffer(data, dtype=np.uint8, offset=off)
    if count and raw.max() > 9:
        bad = int(np.argmax(raw > 9))
        raise RangeError(f"label {raw[bad]} at index {bad} is outside [0, 9]")
    return LabelSet(count, raw.astype(np.int64))


def load_images(path) -> ImageSet:
    return parse_idx_images(Path(path).read_bytes())


def load_labels(path) -> LabelSet:
    return parse_idx_labels(Path(path).read_bytes())


def load_dataset(images_path, labels_path) -> MiniBatch:
    images, labels = load_images(images_path), load_labels(labels_path)
    if images.count != labels.count:
        raise FormatError(f"{images.count} images but {labels.count} labels")
    return MiniBatch(images.pixels, labels.labels)


@dataclass
class FederatedPartition:
    client_indices: list[np.ndarray]
    shards_per_client: int
    shard_size: int
    seed: int
    n_samples: int
    scheme: str = "shard"
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_clients(self) -> int:
        return len(self.client_indices)

    def sizes(self) -> list[int]:
        return [len(ix) for ix in self.client_indices]

    def to_manifest(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": int(self.seed),
            "n_samples": int(self.n_samples),
            "n_clients": self.n_clients,
            "shards_per_client": int(self.shards_per_client),
            "shard_size": int(self.shard_size),
            "dropped_count": int(len(self.dropped)),
            "dropped": [int(i) for i in self.dropped],
            "clients": [[int(i) for i in ix] for ix in self.client_indices],
        }

    @classmethod
    def from_manifest(cls, m: dict) -> "FederatedPartition":
        return cls(
            client_indices=[np.asarray(ix, dtype=np.int64) for ix in m["clients"]],
            shards_per_client=m["shards_per_client"],
            shard_size=m["shard_size"],
            seed=m["seed"],
            n_samples=m["n_samples"],
            scheme=m.get("scheme", "shard"),
            dropped=np.asarray(m.get("dropped", []), dtype=np.int64),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_manifest()) + "\n")

    @classmethod
    def load(cls, path) -> "FederatedPartition":
        return cls.from_manifest(json.loads(Path(path).read_text()))


def _labels_array(labels) -> np.ndarray:
    if isinstance(labels, LabelSet):
        return labels.labels
    return np.asarray(labels, dtype=np.int64)


def shard_partition(labels, n_clients: int, seed: int, shards_per_client: int = 2) -> FederatedPartition:
    """Sort by label, cut into equal shards, hand each client a random pair of shards.

    With ``|D|`` not divisible by the shard count, the tail of the label-sorted
    order is dropped and listed in ``dropped``.
    """
    y = _labels_array(labels)
    n = len(y)
    n_shards = shards_per_client * n_clients
    if n_clients < 1:
        raise ConfigError("need at least one client", "n_clients")
    if n < n_shards:
        raise ConfigError(f"{n} samples cannot fill {n_shards} shards", "n_clients")

    order = np.argsort(y, kind="stable")
    shard_size = n // n_shards
    usable = n_shards * shard_size
    shards = order[:usable].reshape(n_shards, shard_size)
    shard_ids = np.random.default_rng(seed).permutation(n_shards)
    clients = [
        np.concatenate([shards[s] for s in shard_ids[i * shards_per_client:(i + 1) * shards_per_client]])
        for i in range(n_clients)
    ]
    return FederatedPartition(
        client_indices=clients,
        shards_per_client=shards_per_client,
        shard_size=shard_size,
        seed=seed,
        n_samples=n,
        scheme="shard",
        dropped=np.sort(order[usable:]),
    )


def iid_partition(n_samples: int, n_clients: int, seed: int) -> FederatedPartition:
    """Shuffle and split into near-equal blocks (sizes differ by at most one)."""
    if n_clients < 1:
        raise ConfigError("need at least one client", "n_clients")
    if n_samples < n_clients:
        raise ConfigError(f"{n_samples} samples for {n_clients} clients", "n_clients")
    perm = np.random.default_rng(seed).permutation(n_samples)
    clients = [np.asarray(b, dtype=np.int64) for b in np.array_split(perm, n_clients)]
    return FederatedPartition(
        client_indices=clients,
        shards_per_client=1,
        shard_size=n_samples // n_clients,
        seed=seed,
        n_samples=n_samples,
        scheme="iid",
    )
