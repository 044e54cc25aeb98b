"""Random linear encoding of weighted client data into parity datasets.

Each client scales its embedded rows by no-return weights, multiplies by
a private random generator matrix, and ships only the resulting parity
rows; the server sums client parities into the composite global parity.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .delays import NodeProfile, cdf_delay

__all__ = [
    "WeightSpec",
    "ParityDataset",
    "build_weight_spec",
    "generate_encoding_matrix",
    "encode_local",
    "aggregate_global",
    "write_dataset_file",
    "read_dataset_file",
    "write_parity_file",
    "read_parity_file",
]


@dataclass(frozen=True)
class WeightSpec:
    """Row weights encoding each data point's probability of no return.

    Rows the client will process carry sqrt(1 - P(T <= t*)); rows it will
    never process carry 1 (their no-return probability is one).
    """

    processed_mask: np.ndarray  # (l,) bool, True for processed rows
    pnr_processed: float
    weights: np.ndarray         # (l,) float

    def __post_init__(self):
        if self.processed_mask.shape != self.weights.shape:
            raise ValueError("mask and weights must have equal length")


@dataclass(frozen=True)
class ParityDataset:
    """Coded feature/label rows, local to one client or globally summed."""

    features: np.ndarray  # (u, q)
    labels: np.ndarray    # (u, c)

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"parity feature rows {self.features.shape[0]} != "
                f"label rows {self.labels.shape[0]}"
            )

    @property
    def u(self) -> int:
        return self.features.shape[0]


def build_weight_spec(
    profile: NodeProfile, ell_star: int, t_star: float, rng: np.random.Generator
) -> WeightSpec:
    """Sample the processed subset and derive the per-row weights."""
    ell = int(profile.ell_max)
    if ell_star > ell:
        raise ValueError(f"ell_star {ell_star} exceeds dataset size {ell}")
    if ell_star < 0:
        raise ValueError(f"ell_star must be >= 0, got {ell_star}")
    mask = np.zeros(ell, dtype=bool)
    if ell_star > 0:
        mask[rng.choice(ell, size=ell_star, replace=False)] = True
        pnr = 1.0 - cdf_delay(profile, ell_star, t_star)
    else:
        pnr = 1.0  # vacuous: no processed rows exist
    weights = np.where(mask, np.sqrt(pnr), 1.0)
    return WeightSpec(processed_mask=mask, pnr_processed=pnr, weights=weights)


def generate_encoding_matrix(
    u: int, ell: int, rng: np.random.Generator, dist: str = "rademacher"
) -> np.ndarray:
    """Private u x ell generator matrix with IID zero-mean unit-variance entries."""
    if u < 1 or ell < 1:
        raise ValueError(f"u and ell must be >= 1, got u={u}, ell={ell}")
    if dist == "gaussian":
        return rng.standard_normal((u, ell))
    if dist == "rademacher":
        return rng.integers(0, 2, size=(u, ell)).astype(np.float64) * 2.0 - 1.0
    raise ValueError(f"unknown encoding distribution {dist!r}")


def encode_local(embedded, spec: WeightSpec, G: np.ndarray) -> ParityDataset:
    """Parity rows G @ diag(weights) @ [features | labels]."""
    if G.ndim != 2 or G.shape[1] != embedded.features.shape[0]:
        raise ValueError(
            f"generator columns {G.shape} do not match "
            f"{embedded.features.shape[0]} data rows"
        )
    if spec.weights.shape[0] != embedded.features.shape[0]:
        raise ValueError("weight length does not match data rows")
    wx = embedded.features * spec.weights[:, None]
    wy = embedded.labels * spec.weights[:, None]
    return ParityDataset(features=G @ wx, labels=G @ wy)


def aggregate_global(parities: list[ParityDataset]) -> ParityDataset:
    """Elementwise sum of client parities, folded in list order.

    Callers fix the order (ascending client id) for bit-reproducibility.
    """
    if not parities:
        raise ValueError("no parity datasets to aggregate")
    shape = (parities[0].features.shape, parities[0].labels.shape)
    feats = parities[0].features.copy()
    labs = parities[0].labels.copy()
    for par in parities[1:]:
        if (par.features.shape, par.labels.shape) != shape:
            raise ValueError(
                f"parity shape {par.features.shape}/{par.labels.shape} "
                f"does not match {shape}"
            )
        feats += par.features
        labs += par.labels
    return ParityDataset(features=feats, labels=labs)


# Flat binary layout: three little-endian uint64 counts (rows, feature
# columns, label columns), then row-major float32 features, then labels.

def write_dataset_file(path, features: np.ndarray, labels: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype=np.float32)
    labels = np.ascontiguousarray(labels, dtype=np.float32)
    if features.shape[0] != labels.shape[0]:
        raise ValueError("feature and label row counts differ")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQQ", features.shape[0], features.shape[1], labels.shape[1]))
        fh.write(features.tobytes())
        fh.write(labels.tobytes())


def read_dataset_file(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes)")
    rows, q, c = struct.unpack("<QQQ", raw[:24])
    expected = 24 + 4 * rows * (q + c)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f4", offset=24)
    features = body[: rows * q].reshape(rows, q).astype(np.float64)
    labels = body[rows * q :].reshape(rows, c).astype(np.float64)
    return features, labels


def write_parity_file(path, parity: ParityDataset) -> None:
    write_dataset_file(path, parity.features, parity.labels)


def read_parity_file(path) -> ParityDataset:
    features, labels = read_dataset_file(path)
    return ParityDataset(features=features, labels=labels)
