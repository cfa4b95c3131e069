"""Dataset loading for training jobs.

A request's ``dataset`` tag selects the source and optionally the subset
size: ``synthetic``, ``synthetic:5000``, ``cifar10``, ``cifar10:5000``.
The synthetic set is a deterministic 10-class image problem (one fixed
smooth pattern per class plus heavy Gaussian noise) that needs no
download and trains to well above chance within an epoch or two; CIFAR-10
is read from ``--data-root`` via torchvision and subsampled class-balanced.
"""

from __future__ import annotations

import numpy as np

IMAGE_SHAPE = (3, 32, 32)
NUM_CLASSES = 10
DEFAULT_SIZE = 5000

_PATTERN_SEED = 9001  # class patterns are a fixed property of the dataset
_SAMPLE_SEED = 4242  # as is the per-sample noise: every job sees the same data
_NOISE_SIGMA = 1.5


def parse_dataset_tag(tag: str) -> tuple[str, int]:
    name, _, size = tag.partition(":")
    name = name.strip().lower()
    if name not in ("synthetic", "cifar10"):
        raise ValueError(f"unknown dataset {tag!r} (expected synthetic[:N] or cifar10[:N])")
    if size:
        count = int(size)
        if count < NUM_CLASSES:
            raise ValueError(f"dataset subset too small: {count}")
    else:
        count = DEFAULT_SIZE
    return name, count


def _class_patterns() -> np.ndarray:
    rng = np.random.default_rng(_PATTERN_SEED)
    raw = rng.normal(size=(NUM_CLASSES, *IMAGE_SHAPE)).astype(np.float32)
    # box-blur each channel so the patterns are smooth, image-like blobs
    smooth = np.empty_like(raw)
    for c in range(NUM_CLASSES):
        for ch in range(3):
            plane = raw[c, ch]
            acc = np.zeros_like(plane)
            for dy in (-2, -1, 0, 1, 2):
                for dx in (-2, -1, 0, 1, 2):
                    acc += np.roll(np.roll(plane, dy, axis=0), dx, axis=1)
            smooth[c, ch] = acc / 25.0
    # renormalize so pattern energy is comparable across classes
    smooth /= smooth.std(axis=(1, 2, 3), keepdims=True)
    return smooth


def synthetic(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic labeled images: pattern[label] + noise."""
    patterns = _class_patterns()
    rng = np.random.default_rng(_SAMPLE_SEED)
    labels = np.arange(count, dtype=np.int64) % NUM_CLASSES
    noise = rng.normal(scale=_NOISE_SIGMA, size=(count, *IMAGE_SHAPE)).astype(np.float32)
    images = patterns[labels] + noise
    return images, labels


def cifar10(count: int, data_root: str) -> tuple[np.ndarray, np.ndarray]:
    """Class-balanced subset of the CIFAR-10 training set, normalized."""
    import torchvision  # optional dependency, only needed for this tag

    dataset = torchvision.datasets.CIFAR10(root=data_root, train=True, download=False)
    images = dataset.data.astype(np.float32) / 255.0  # (N, 32, 32, 3)
    labels = np.asarray(dataset.targets, dtype=np.int64)

    per_class = count // NUM_CLASSES
    keep: list[int] = []
    for c in range(NUM_CLASSES):
        keep.extend(np.flatnonzero(labels == c)[:per_class])
    keep = np.sort(np.asarray(keep))
    images = images[keep].transpose(0, 3, 1, 2)  # to (N, 3, 32, 32)
    mean = images.mean(axis=(0, 2, 3), keepdims=True)
    std = images.std(axis=(0, 2, 3), keepdims=True)
    return (images - mean) / std, labels[keep]


def load(tag: str, data_root: str) -> tuple[np.ndarray, np.ndarray]:
    name, count = parse_dataset_tag(tag)
    if name == "synthetic":
        return synthetic(count)
    return cifar10(count, data_root)
