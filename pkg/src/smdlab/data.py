"""Dataset generation and loading.

Synthetic regression problems are generated by a teacher of the same
architecture that will be trained, which guarantees a known interpolating
parameter vector. Real data enters through the standard IDX image/label
format (big-endian headers), subsetted to a binary class pair with labels
in {-1, +1}.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .models import Dataset, LinearModel, Model, teacher_weights

__all__ = ["generate_synthetic", "load_idx_subset"]

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801


def generate_synthetic(
    model: Model,
    n: int,
    seed: int,
    *,
    n_test: int = 0,
    noise: float = 0.0,
    teacher_output_scale: float = 1.0,
) -> tuple[Dataset, np.ndarray]:
    """Draw standard-normal inputs and teacher-generated labels.

    Requires the overparameterized regime (model.p > n). Returns the
    dataset and the teacher parameters (a known interpolating point when
    ``noise`` is zero). Deterministic under ``seed``.

    ``teacher_output_scale`` multiplies the teacher's (linear) output
    layer and hence the labels; small labels put near-zero
    initializations close to the interpolating manifold, the regime the
    closeness results live in.
    """
    if n < 1:
        raise ConfigError("need n >= 1 samples")
    if model.p <= n:
        raise ConfigError(
            f"interpolating regime requires p > n, got p = {model.p}, n = {n}"
        )
    rng = np.random.default_rng(seed)
    teacher = teacher_weights(model, rng)
    if teacher_output_scale != 1.0:
        if isinstance(model, LinearModel):
            teacher = teacher * teacher_output_scale
        else:
            w_sl, b_sl, _, _ = model._specs[-1]
            teacher = teacher.copy()
            teacher[w_sl] *= teacher_output_scale
            if b_sl is not None:
                teacher[b_sl] *= teacher_output_scale
    X = rng.standard_normal((n, model.d))
    y = model.predict_batch(teacher, X)
    X_test = y_test = None
    if n_test > 0:
        X_test = rng.standard_normal((n_test, model.d))
        y_test = model.predict_batch(teacher, X_test)
    if noise > 0.0:
        y = y + noise * rng.standard_normal(n)
    return Dataset(X, y, X_test, y_test), teacher


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


def load_idx_subset(
    images_path: str | Path,
    labels_path: str | Path,
    count: int,
    binary_class_pair: tuple[int, int],
) -> Dataset:
    """Load the first ``count`` samples of two classes from IDX files.

    Pixels are scaled to [0, 1]; the first class of the pair maps to -1
    and the second to +1. Transparently decompresses ``.gz`` files.
    """
    if count <= 0:
        raise DataError("cannot build an empty dataset (count must be >= 1)")
    a, b = binary_class_pair
    if a == b:
        raise DataError("binary class pair must contain two distinct classes")

    img = _read_bytes(images_path)
    if len(img) < 16:
        raise FormatError(f"{images_path}: truncated IDX image header")
    magic, n_img, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != _IMAGE_MAGIC:
        raise FormatError(f"{images_path}: bad IDX image magic 0x{magic:08x}")
    if len(img) != 16 + n_img * rows * cols:
        raise FormatError(f"{images_path}: IDX image payload length mismatch")

    lab = _read_bytes(labels_path)
    if len(lab) < 8:
        raise FormatError(f"{labels_path}: truncated IDX label header")
    magic, n_lab = struct.unpack(">II", lab[:8])
    if magic != _LABEL_MAGIC:
        raise FormatError(f"{labels_path}: bad IDX label magic 0x{magic:08x}")
    if len(lab) != 8 + n_lab:
        raise FormatError(f"{labels_path}: IDX label payload length mismatch")
    if n_img != n_lab:
        raise FormatError(f"image/label counts disagree: {n_img} vs {n_lab}")

    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(n_img, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8)
    mask = (labels == a) | (labels == b)
    found = int(np.count_nonzero(mask))
    if found < count:
        raise DataError(
            f"only {found} samples of classes {a}/{b} available, need {count}"
        )
    sel = np.flatnonzero(mask)[:count]
    X = pixels[sel].astype(float) / 255.0
    y = np.where(labels[sel] == a, -1.0, 1.0)
    return Dataset(X, y)
