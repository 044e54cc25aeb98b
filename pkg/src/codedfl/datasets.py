"""IDX image/label ingestion and synthetic digit-style fixtures.

The loader is bit-exact against the classic big-endian IDX layout
(magic 0x00000803 for image tensors, 0x00000801 for label vectors).
The fixture generator renders class-prototype images so experiments run
end to end on machines without the benchmark files.
"""

import math
import struct
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

__all__ = [
    "IdxFormatError",
    "load_idx_dataset",
    "write_idx_files",
    "make_synthetic_digits",
    "stratified_head",
]

_IMAGES_MAGIC = 0x00000803
_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """An IDX file is malformed; the message names the failing offset."""


def _read_header(raw: bytes, path, magic: int, n_dims: int) -> tuple[int, ...]:
    header = 4 * (1 + n_dims)
    if len(raw) < header:
        raise IdxFormatError(
            f"{path}: truncated header, {len(raw)} bytes < {header} (offset 0)"
        )
    fields = struct.unpack(f">{1 + n_dims}I", raw[:header])
    if fields[0] != magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{fields[0]:08x}, expected 0x{magic:08x} (offset 0)"
        )
    return fields[1:]


def load_idx_dataset(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Read an IDX image/label pair into ([0,1] features, one-hot labels).

    Pixels scale by 1/255; label classes are the sorted distinct values.
    """
    img_raw = Path(images_path).read_bytes()
    count, rows, cols = _read_header(img_raw, images_path, _IMAGES_MAGIC, 3)
    expected = 16 + count * rows * cols
    if len(img_raw) != expected:
        raise IdxFormatError(
            f"{images_path}: expected {expected} bytes, file ends at offset {len(img_raw)}"
        )

    lbl_raw = Path(labels_path).read_bytes()
    (lbl_count,) = _read_header(lbl_raw, labels_path, _LABELS_MAGIC, 1)
    if len(lbl_raw) != 8 + lbl_count:
        raise IdxFormatError(
            f"{labels_path}: expected {8 + lbl_count} bytes, file ends at offset {len(lbl_raw)}"
        )
    if lbl_count != count:
        raise IdxFormatError(
            f"{labels_path}: {lbl_count} labels for {count} images"
        )

    pixels = np.frombuffer(img_raw, dtype=np.uint8, offset=16)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    raw_labels = np.frombuffer(lbl_raw, dtype=np.uint8, offset=8)
    classes = np.unique(raw_labels)
    onehot = (raw_labels[:, None] == classes[None, :]).astype(np.float64)
    return features, onehot


def write_idx_files(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write a uint8 image stack (n, rows, cols) and labels (n,) as IDX files."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if images.ndim != 3 or labels.ndim != 1 or images.shape[0] != labels.shape[0]:
        raise ValueError("need images (n, rows, cols) and labels (n,) of equal count")
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", _IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", _LABELS_MAGIC, n))
        fh.write(labels.tobytes())


def make_synthetic_digits(
    n_per_class: int,
    n_classes: int = 10,
    side: int = 28,
    noise: float = 0.15,
    hard_frac: float = 0.35,
    between_d2: float = 110.0,
    mode_d2: float = 200.0,
    gamma_lo: float = 0.12,
    gamma_hi: float = 0.58,
    modes_per_pair: int = 3,
    prototype_seed: int = 7,
    sample_seed: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Render a deterministic digit-style dataset with graded difficulty.

    Easy samples sit at well-separated class prototypes (pairwise squared
    pixel distance ``between_d2``, in the range of handwritten digits).
    The ``hard_frac`` remainder lives in confusable modes, a few per class
    pair: both classes share a mode location (modes ``mode_d2`` apart, so
    each is kernel-isolated) and differ only by a thin margin whose width
    is drawn per mode from [gamma_lo, gamma_hi].  Wide-margin modes are
    learned quickly, thin ones slowly, which yields the gradual accuracy
    curves of real digit data.  Prototype geometry depends only on
    ``prototype_seed``; train and test splits drawn with different
    ``sample_seed`` values share the same classes and modes.  Returns
    shuffled (images uint8 (n, side, side), labels uint8 (n,)).
    """
    d = side * side
    pairs = list(combinations(range(n_classes), 2))
    n_modes = len(pairs) * modes_per_pair
    n_fields = n_classes + 2 * n_modes
    if n_fields > d:
        raise ValueError(
            f"{n_classes} classes need {n_fields} orthogonal fields, but "
            f"side={side} images only span {d} dimensions"
        )
    prng = np.random.default_rng(prototype_seed)
    fields = gaussian_filter(
        prng.standard_normal((n_fields, side, side)), sigma=(0, 3.0, 3.0)
    )
    flat = fields.reshape(n_fields, d)
    flat -= flat.mean(axis=1, keepdims=True)
    ortho = np.linalg.qr(flat.T)[0].T
    class_dev = (ortho[:n_classes] * math.sqrt(between_d2 / 2.0)).reshape(
        n_classes, side, side
    )
    mode_loc = (
        ortho[n_classes : n_classes + n_modes] * math.sqrt(mode_d2 / 2.0)
    ).reshape(-1, side, side)
    mode_dir = (
        ortho[n_classes + n_modes :] * math.sqrt(between_d2 / 2.0)
    ).reshape(-1, side, side)
    margins = prng.uniform(gamma_lo, gamma_hi, n_modes)
    base = gaussian_filter(prng.standard_normal((side, side)), 4.0)
    base = 0.25 + 0.5 * (base - base.min()) / (base.max() - base.min())
    class_modes: list[list[tuple[int, float]]] = [[] for _ in range(n_classes)]
    for p, (a, b) in enumerate(pairs):
        for sub in range(modes_per_pair):
            m = p * modes_per_pair + sub
            class_modes[a].append((m, 1.0))
            class_modes[b].append((m, -1.0))

    rng = np.random.default_rng(sample_seed)
    images = np.empty((n_classes * n_per_class, side, side), dtype=np.uint8)
    labels = np.empty(n_classes * n_per_class, dtype=np.uint8)
    row = 0
    for cls in range(n_classes):
        for _ in range(n_per_class):
            if rng.random() < hard_frac:
                m, sign = class_modes[cls][rng.integers(len(class_modes[cls]))]
                img = base + mode_loc[m] + sign * margins[m] * mode_dir[m]
            else:
                img = base + class_dev[cls]
            img = img + rng.normal(0.0, noise, (side, side))
            images[row] = np.clip(img, 0.0, 1.0) * 255.0
            labels[row] = cls
            row += 1
    order = rng.permutation(row)
    return images[order], labels[order]


def stratified_head(
    features: np.ndarray, onehot: np.ndarray, per_class: int
) -> tuple[np.ndarray, np.ndarray]:
    """First ``per_class`` rows of every class, concatenated in class order."""
    y = np.argmax(onehot, axis=1)
    keep = []
    for cls in range(onehot.shape[1]):
        idx = np.flatnonzero(y == cls)
        if idx.size < per_class:
            raise ValueError(
                f"class {cls} has {idx.size} rows, need {per_class}"
            )
        keep.append(idx[:per_class])
    keep = np.concatenate(keep)
    return features[keep], onehot[keep]
