"""Datasets, non-IID partitioning and the idx file reader."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from ..errors import InvalidArgumentError

_IDX_DTYPES = {
    0x08: np.uint8, 0x09: np.int8, 0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8"),
}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise InvalidArgumentError("X must be 2-D with one row per label")
        if len(self.y) == 0:
            raise InvalidArgumentError("dataset is empty")

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1

    def __len__(self):
        return len(self.y)


def synthetic_blobs(n_samples: int, n_classes: int = 10, dim: int = 32,
                    separation: float = 1.0, noise: float = 1.0, seed=None) -> Dataset:
    """Balanced Gaussian classes around random centres.

    Centres are standard normal vectors scaled by ``separation``; samples add
    isotropic noise of scale ``noise``.
    """
    if n_samples < n_classes or n_classes < 2 or dim < 1:
        raise InvalidArgumentError("need at least one sample per class, two classes and dim >= 1")
    rng = np.random.default_rng(seed)
    centres = separation * rng.standard_normal((n_classes, dim))
    y = np.arange(n_samples) % n_classes
    y = y[rng.permutation(n_samples)]
    X = centres[y] + noise * rng.standard_normal((n_samples, dim))
    return Dataset(X, y)


def read_idx(path) -> np.ndarray:
    """Read an idx-format array (optionally gzip-compressed)."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise InvalidArgumentError(f"{path}: not an idx file")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_DTYPES:
        raise InvalidArgumentError(f"{path}: unknown idx element type 0x{code:02x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    dtype = np.dtype(_IDX_DTYPES[code])
    count = int(np.prod(dims)) if dims else 1
    body = raw[4 + 4 * ndim:]
    if len(body) != count * dtype.itemsize:
        raise InvalidArgumentError(f"{path}: payload size does not match header")
    return np.frombuffer(body, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array: np.ndarray) -> None:
    """Write an idx file; used to build fixtures and round-trip checks."""
    array = np.asarray(array)
    for code, dt in _IDX_DTYPES.items():
        if np.dtype(dt).kind == array.dtype.kind and np.dtype(dt).itemsize == array.dtype.itemsize:
            break
    else:
        raise InvalidArgumentError(f"dtype {array.dtype} has no idx code")
    header = bytes([0, 0, code, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.astype(np.dtype(dt).newbyteorder(">")).tobytes())


def load_idx_dataset(images_path, labels_path) -> Dataset:
    """Images flattened to rows and scaled to [0, 1]."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if len(images) != len(labels):
        raise InvalidArgumentError("image and label counts differ")
    X = images.reshape(len(images), -1).astype(float)
    if images.dtype == np.uint8:
        X /= 255.0
    return Dataset(X, labels.astype(np.int64))


@dataclass
class DataPartition:
    indices: List[np.ndarray]

    def __post_init__(self):
        if not self.indices or any(len(ix) == 0 for ix in self.indices):
            raise InvalidArgumentError("every device needs at least one sample")

    @property
    def n_devices(self) -> int:
        return len(self.indices)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.indices], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        """p_k = n_k / n."""
        c = self.counts.astype(float)
        return c / c.sum()

    def cluster_weights(self, serving_uav: np.ndarray, n_uavs: int) -> np.ndarray:
        """p_u = (samples held by the cluster) / n."""
        return np.bincount(serving_uav, weights=self.weights, minlength=n_uavs)

    def within_cluster_weights(self, serving_uav: np.ndarray, n_uavs: int) -> np.ndarray:
        """p_k / p_u for each device's own cluster."""
        pu = self.cluster_weights(serving_uav, n_uavs)
        return self.weights / pu[serving_uav]


def partition_noniid(y: np.ndarray, n_devices: int, labels_per_device: int,
                     rng: np.random.Generator) -> DataPartition:
    """Label-sorted shards, ``labels_per_device`` shards per device.

    Shards are cut within each class (shard counts proportional to class
    size) so a device never sees more than ``labels_per_device`` labels, and
    shards are dealt so a device's labels differ whenever the queue allows. If
    there are fewer shards than classes, shards are cut from the sorted list
    and may straddle a label boundary.
    """
    y = np.asarray(y)
    if n_devices < 1 or labels_per_device < 1:
        raise InvalidArgumentError("n_devices and labels_per_device must be >= 1")
    n_shards = n_devices * labels_per_device
    if len(y) < n_shards:
        raise InvalidArgumentError("fewer samples than shards")
    # random tie-break inside each label
    order = rng.permutation(len(y))
    order = order[np.argsort(y[order], kind="stable")]
    classes, class_counts = np.unique(y, return_counts=True)
    if n_shards >= len(classes):
        quota = class_counts / class_counts.sum() * n_shards
        per_class = np.maximum(1, np.floor(quota).astype(int))
        per_class = np.minimum(per_class, class_counts)
        while per_class.sum() < n_shards:
            room = per_class < class_counts
            gap = np.where(room, quota - per_class, -np.inf)
            per_class[np.argmax(gap)] += 1
        while per_class.sum() > n_shards:
            excess = np.where(per_class > 1, per_class - quota, -np.inf)
            per_class[np.argmax(excess)] -= 1
        shards = []
        start = 0
        for cnt, k in zip(class_counts, per_class):
            shards.extend(np.array_split(order[start:start + cnt], k))
            start += cnt
    else:
        shards = np.array_split(order, n_shards)
    # shuffled queue dealt round-robin; each pick prefers a label the device
    # does not hold yet, so labels_per_device == n_classes gives every label
    queue = list(rng.permutation(n_shards))
    shard_label = [y[sh[0]] for sh in shards]
    held = [[] for _ in range(n_devices)]
    for _ in range(labels_per_device):
        for d in range(n_devices):
            have = {shard_label[j] for j in held[d]}
            pick = next((i for i, j in enumerate(queue) if shard_label[j] not in have), 0)
            held[d].append(queue.pop(pick))
    idx = [np.sort(np.concatenate([shards[j] for j in held[d]])) for d in range(n_devices)]
    return DataPartition(idx)
