"""Datasets: IDX ingestion, corruptions, synthetic toys.

All operations return new datasets; inputs are never modified.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError, IngestionError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
DATASET_DIRS = {
    "mnist": ("mnist", "MNIST", "MNIST/raw", "mnist/raw"),
    "fashion-mnist": ("fashion-mnist", "fashion_mnist", "FashionMNIST", "FashionMNIST/raw"),
}


@dataclass(frozen=True)
class CorruptionSpec:
    gaussian_std: float = 0.0
    rotation_degrees: float = 0.0
    clamp: bool = True

    def __post_init__(self):
        if self.gaussian_std < 0:
            raise ConfigurationError(f"gaussian_std must be >= 0, got {self.gaussian_std}")

    @property
    def is_identity(self) -> bool:
        return self.gaussian_std == 0 and self.rotation_degrees == 0

    def label(self) -> str:
        return f"std={self.gaussian_std:g},rot={self.rotation_degrees:g}"


@dataclass(frozen=True, eq=False)
class ImageDataset:
    images: np.ndarray
    labels: np.ndarray
    name: str = ""
    split: str = ""
    num_classes: int = 10
    corruptions: tuple = field(default=())

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ConfigurationError("image and label counts differ")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def is_clean(self) -> bool:
        return not self.corruptions

    def subset(self, indices) -> "ImageDataset":
        indices = np.asarray(indices)
        return replace(self, images=self.images[indices], labels=self.labels[indices])

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def nchw(self) -> np.ndarray:
        return self.images[:, None, :, :]


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic: int, field: str) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"file not found: {path}", field=field)
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 8:
        raise IngestionError("truncated header", field=field)
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise IngestionError(f"magic 0x{found:08x}, expected 0x{magic:08x}", field=field)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IngestionError("truncated header", field=field)
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = int(np.prod(dims))
    if len(data) - header < count:
        raise IngestionError(f"expected {count} bytes of data, found {len(data) - header}", field=field)
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path, name: str = "", split: str = "") -> ImageDataset:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IMAGES_MAGIC, "images")
    labels = _read_idx(labels_path, LABELS_MAGIC, "labels")
    if len(images) != len(labels):
        raise IngestionError(f"{len(images)} images but {len(labels)} labels", field="count")
    return ImageDataset(images.astype(np.float64) / 255.0, labels.astype(np.int64), name, split)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images ``(N, H, W)`` and labels ``(N,)`` as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">I", IMAGES_MAGIC) + struct.pack(">3I", *images.shape) + images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">I", LABELS_MAGIC) + struct.pack(">I", len(labels)) + labels.tobytes())


def resolve_data_dir(data_dir=None) -> Optional[Path]:
    value = data_dir or os.environ.get("QPLR_DATA_DIR")
    return Path(value) if value else None


def find_idx_pair(data_dir, dataset: str = "mnist", split: str = "train"):
    """Locate the standard IDX file pair for ``dataset``/``split`` under ``data_dir``.

    Looks in the common sub-directory spellings and in ``data_dir`` itself,
    with or without a ``.gz`` suffix. Returns None when nothing matches.
    """
    if dataset not in DATASET_DIRS:
        raise ConfigurationError(f"unknown dataset {dataset!r}; choose from {sorted(DATASET_DIRS)}")
    if split not in IDX_FILES:
        raise ConfigurationError(f"unknown split {split!r}")
    root = Path(data_dir)
    candidates = [root / sub for sub in DATASET_DIRS[dataset]]
    if dataset == "mnist":
        candidates.append(root)
    img_name, lbl_name = IDX_FILES[split]
    for base in candidates:
        for suffix in ("", ".gz"):
            img, lbl = base / (img_name + suffix), base / (lbl_name + suffix)
            if img.exists() and lbl.exists():
                return img, lbl
    return None


def load_dataset(data_dir, dataset: str = "mnist", split: str = "train") -> ImageDataset:
    if data_dir is None:
        raise IngestionError("no data directory given (use --data-dir or QPLR_DATA_DIR)", field="data_dir")
    pair = find_idx_pair(data_dir, dataset, split)
    if pair is None:
        raise IngestionError(f"no {dataset} {split} IDX files under {data_dir}", field="data_dir")
    return load_idx(*pair, name=dataset, split=split)


def subsample(ds: ImageDataset, size: Optional[int], seed: int) -> ImageDataset:
    """Seeded random subset of ``size`` samples (the whole set when None)."""
    if size is None or size >= len(ds):
        return ds
    idx = np.sort(np.random.default_rng(seed).permutation(len(ds))[:size])
    return ds.subset(idx)


def add_gaussian_noise(ds: ImageDataset, std: float, seed, clamp: bool = True) -> ImageDataset:
    """Add N(0, std^2) to every pixel; clamp to [0, 1] unless ``clamp`` is False."""
    if std < 0:
        raise ConfigurationError(f"noise std must be >= 0, got {std}")
    if std == 0:
        return ds
    noisy = ds.images + np.random.default_rng(seed).normal(0.0, std, size=ds.images.shape)
    if clamp:
        np.clip(noisy, 0.0, 1.0, out=noisy)
    return replace(ds, images=noisy, corruptions=ds.corruptions + (("noise", float(std), bool(clamp)),))


def _bilinear_plan(h: int, w: int, degrees: float):
    """Source sampling plan for a counter-clockwise rotation about the image center."""
    rad = np.deg2rad(degrees)
    cos, sin = np.cos(rad), np.sin(rad)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # display coordinates: x right, y up
    x, y = cols - cx, cy - rows
    src_x = cos * x + sin * y
    src_y = -sin * x + cos * y
    src_r, src_c = cy - src_y, cx + src_x
    # snap float residue so exact multiples of 90 degrees hit pixel centres
    src_r = np.where(np.abs(src_r - np.round(src_r)) < 1e-9, np.round(src_r), src_r)
    src_c = np.where(np.abs(src_c - np.round(src_c)) < 1e-9, np.round(src_c), src_c)
    r0, c0 = np.floor(src_r).astype(np.int64), np.floor(src_c).astype(np.int64)
    fr, fc = src_r - r0, src_c - c0
    taps = []
    for dr, dc, weight in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                           (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr, cc = r0 + dr, c0 + dc
        inside = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        taps.append((np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1), np.where(inside, weight, 0.0)))
    return taps


def rotate_images(images: np.ndarray, degrees: float) -> np.ndarray:
    """Bilinear rotation of ``(N, H, W)`` images, zero fill outside."""
    if degrees == 0:
        return images.copy()
    _, h, w = images.shape
    out = np.zeros_like(images, dtype=np.float64)
    for rr, cc, weight in _bilinear_plan(h, w, degrees):
        out += images[:, rr, cc] * weight
    return out


def rotate(ds: ImageDataset, degrees: float) -> ImageDataset:
    """Rotate every image counter-clockwise by ``degrees``."""
    if degrees == 0:
        return ds
    return replace(ds, images=rotate_images(ds.images, degrees),
                   corruptions=ds.corruptions + (("rotate", float(degrees)),))


def corrupt(ds: ImageDataset, spec: CorruptionSpec, seed) -> ImageDataset:
    """Rotation first, then additive noise."""
    return add_gaussian_noise(rotate(ds, spec.rotation_degrees), spec.gaussian_std, seed, spec.clamp)


def synthetic_blobs(num_classes: int, samples_per_class: int, image_size: int = 28, seed: int = 0,
                    noise: float = 0.05) -> ImageDataset:
    """Each class lights a distinct square patch on a dark background, plus noise.

    The image is split into a ``g x g`` grid of patches (``g = ceil(sqrt(K))``);
    class ``c`` lights patch ``c``.
    """
    if min(num_classes, samples_per_class, image_size) < 1:
        raise ConfigurationError("synthetic_blobs parameters must be >= 1")
    grid = int(np.ceil(np.sqrt(num_classes)))
    if image_size < grid:
        raise ConfigurationError(f"image_size {image_size} too small for {num_classes} distinct patches")
    cell = image_size // grid
    templates = np.full((num_classes, image_size, image_size), 0.1)
    for c in range(num_classes):
        r, q = divmod(c, grid)
        templates[c, r * cell:(r + 1) * cell, q * cell:(q + 1) * cell] = 0.9
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    images = templates[labels] + rng.normal(0.0, noise, size=(len(labels), image_size, image_size))
    np.clip(images, 0.0, 1.0, out=images)
    order = rng.permutation(len(labels))
    return ImageDataset(images[order], labels[order], name="blobs", split="train", num_classes=num_classes)


def corruption_grid(stds: List[float], rotations: List[float], clamp: bool = True) -> List[CorruptionSpec]:
    return [CorruptionSpec(s, r, clamp) for r in rotations for s in stds]
