"""Datasets: synthetic Gaussian blobs, synthetic digit images and MNIST-format IDX files."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .fl import Dataset

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def gaussian_blobs(
    n_samples: int,
    n_features: int,
    n_classes: int,
    rng: np.random.Generator,
    separation: float = 1.0,
    informative: int | None = None,
) -> tuple[Dataset, np.ndarray]:
    """Isotropic unit-variance clusters around random class centers.

    Only the first ``informative`` features carry class signal; the rest are
    pure noise.  Returns the dataset and the class centers so a matching test
    set can be drawn with :func:`blobs_from_centers`.
    """
    informative = n_features if informative is None else informative
    centers = np.zeros((n_classes, n_features))
    centers[:, :informative] = rng.normal(0.0, separation, (n_classes, informative))
    return blobs_from_centers(centers, n_samples, rng), centers


def blobs_from_centers(centers: np.ndarray, n_samples: int, rng: np.random.Generator) -> Dataset:
    y = rng.integers(len(centers), size=n_samples)
    x = centers[y] + rng.normal(size=(n_samples, centers.shape[1]))
    return Dataset(x, y.astype(np.int64))


def read_idx(path: str | Path) -> np.ndarray:
    """Read an IDX array (optionally gzip-compressed)."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    dtype = _IDX_TYPES.get(data[2])
    if dtype is None:
        raise ValueError(f"{path}: unknown IDX type code {data[2]:#x}")
    ndim = data[3]
    dims = struct.unpack(f">{ndim}I", data[4 : 4 + 4 * ndim])
    body = np.frombuffer(data, dtype=dtype, offset=4 + 4 * ndim)
    expected = int(np.prod(dims)) if dims else 1
    if body.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {body.size}")
    return body.reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    codes = {v.newbyteorder("=").str[1:]: k for k, v in _IDX_TYPES.items()}
    code = codes.get(array.dtype.str[1:])
    if code is None:
        raise ValueError(f"dtype {array.dtype} has no IDX code")
    head = bytes([0, 0, code, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    body = array.astype(_IDX_TYPES[code]).tobytes()
    opener = gzip.open if Path(path).suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(head + body)


def load_mnist(images: str | Path, labels: str | Path, limit: int | None = None) -> Dataset:
    """Flatten images to [0, 1] features; keep the first ``limit`` samples."""
    x = read_idx(images)
    y = read_idx(labels)
    if len(x) != len(y):
        raise ValueError("image and label counts differ")
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return Dataset(x.reshape(len(x), -1).astype(np.float64) / 255.0, y.astype(np.int64))


def synthetic_digits(
    n_samples: int,
    n_classes: int,
    rng: np.random.Generator,
    side: int = 28,
    margin: int = 4,
    strokes: int = 3,
    noise: float = 0.3,
    shift: int = 2,
) -> tuple[Dataset, np.ndarray]:
    """MNIST-shaped images: one random stroke pattern per class.

    Each class prototype draws ``strokes`` thick line segments inside the
    central ``side - 2*margin`` square, so border pixels are always zero as in
    handwritten digit scans.  Samples jitter the prototype by up to ``shift``
    pixels, add Gaussian pixel noise on the ink and clip to [0, 1].  Returns
    the dataset and the prototypes for :func:`digits_from_prototypes`.
    """
    if side <= 2 * (margin + shift):
        raise ValueError("image too small for the margin and shift")
    protos = np.zeros((n_classes, side, side))
    lo, hi = margin + shift, side - margin - shift - 1
    yy, xx = np.mgrid[0:side, 0:side]
    for c in range(n_classes):
        for _ in range(strokes):
            (y0, x0), (y1, x1) = rng.uniform(lo, hi, (2, 2))
            for s in np.linspace(0.0, 1.0, 24):
                cy, cx = y0 + s * (y1 - y0), x0 + s * (x1 - x0)
                protos[c] = np.maximum(protos[c], np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 2.0))
    return digits_from_prototypes(protos, n_samples, rng, noise, shift, margin), protos


def digits_from_prototypes(
    protos: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
    noise: float = 0.3,
    shift: int = 2,
    margin: int = 4,
) -> Dataset:
    n_classes, side, _ = protos.shape
    y = rng.integers(n_classes, size=n_samples)
    dy = rng.integers(-shift, shift + 1, size=n_samples)
    dx = rng.integers(-shift, shift + 1, size=n_samples)
    x = np.empty((n_samples, side, side))
    for i in range(n_samples):
        x[i] = np.roll(protos[y[i]], (dy[i], dx[i]), axis=(0, 1))
    ink = x > 0.05
    x = np.where(ink, x + rng.normal(0.0, noise, x.shape), 0.0)
    x = np.clip(x, 0.0, 1.0)
    x[:, :margin, :] = 0.0
    x[:, side - margin :, :] = 0.0
    x[:, :, :margin] = 0.0
    x[:, :, side - margin :] = 0.0
    return Dataset(x.reshape(n_samples, -1), y.astype(np.int64))
