"""Sample sources: Swiss roll, Gaussian noise, MNIST (IDX) and PCA."""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyBatchError, FormatError, ShapeError

TAGS = ("real", "generated", "noise")

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

DATA_DIR_ENV = "GSWGAN_DATA_DIR"


@dataclass
class SampleBatch:
    values: np.ndarray
    tag: str = "real"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"a batch is an m x d matrix, got shape {self.values.shape}")
        if self.values.shape[0] < 1:
            raise EmptyBatchError("a batch needs at least one sample")
        if self.tag not in TAGS:
            raise ValueError(f"tag must be one of {TAGS}, got {self.tag!r}")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.m


def swiss_roll_points(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).ravel()
    angle = 4.0 * np.pi * z
    return np.stack([z * np.cos(angle), z * np.sin(angle)], axis=1)


def swiss_roll(m: int, rng: np.random.Generator, return_z: bool = False):
    """(z cos 4πz, z sin 4πz) with z ~ Uniform[0.25, 1]."""
    if m < 1:
        raise ConfigError(f"sample count must be >= 1, got {m}")
    z = rng.uniform(0.25, 1.0, size=m)
    batch = SampleBatch(swiss_roll_points(z), "real")
    return (batch, z) if return_z else batch


def gaussian_noise(m: int, r: int, rng: np.random.Generator) -> SampleBatch:
    """Standard normal m x r batch via the Box-Muller transform."""
    if m < 1 or r < 1:
        raise ConfigError(f"noise shape must be positive, got ({m}, {r})")
    count = m * r
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:count]
    return SampleBatch(z.reshape(m, r), "noise")


def _read_bytes(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse a big-endian IDX file into a uint8 array."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header at offset 0")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated dimension header at offset 4")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise FormatError(f"{path}: truncated data at offset {len(raw)}, expected {header + size} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def mnist_load(images_path, labels_path, return_labels: bool = False):
    """MNIST images flattened to 784 columns and scaled to [-1, 1]."""
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.ndim != 3:
        raise FormatError(f"{images_path}: expected 3 dimensions at offset 3, got {images.ndim}")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch at offset 4: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 127.5 - 1.0
    batch = SampleBatch(flat, "real")
    return (batch, labels.copy()) if return_labels else batch


def default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, os.path.join(os.getcwd(), "data"))


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]

    def save(self, path) -> None:
        np.savez(path, mean=self.mean, components=self.components,
                 explained_variance=self.explained_variance)

    @classmethod
    def load(cls, path) -> "PcaModel":
        with np.load(path) as f:
            return cls(f["mean"], f["components"], f["explained_variance"])


def pca_fit(data, k: int) -> PcaModel:
    X = np.asarray(getattr(data, "values", data), dtype=np.float64)
    m, d = X.shape
    if k < 1 or k > d:
        raise ConfigError(f"k must be in [1, {d}], got {k}")
    if m <= k:
        raise ConfigError(f"need more samples than components ({m} <= {k})")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (m - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    comps = evecs[:, order].T.copy()
    # sign convention: largest-magnitude entry of each component is positive
    flip = np.sign(comps[np.arange(k), np.abs(comps).argmax(axis=1)])
    comps *= flip[:, None]
    return PcaModel(mean, comps, np.maximum(evals[order], 0.0))


def pca_transform(model: PcaModel, batch) -> SampleBatch:
    X = np.asarray(getattr(batch, "values", batch), dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ShapeError(f"batch has dim {X.shape[-1]}, model expects {model.d}")
    tag = getattr(batch, "tag", "real")
    return SampleBatch((X - model.mean) @ model.components.T, tag)


def pca_inverse(model: PcaModel, batch) -> SampleBatch:
    Y = np.asarray(getattr(batch, "values", batch), dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != model.k:
        raise ShapeError(f"batch has dim {Y.shape[-1]}, model has {model.k} components")
    return SampleBatch(Y @ model.components + model.mean, getattr(batch, "tag", "real"))
