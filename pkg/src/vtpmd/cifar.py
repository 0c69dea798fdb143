"""CIFAR-10 binary batches: 3073-byte records, one label byte then 3072 pixel bytes
(R, G, B planes of 32x32, row-major)."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadRecordSize, LabelOutOfRange

RECORD = 3073
PIXELS = 3072


@dataclass(frozen=True)
class Cifar10Batch:
    labels: np.ndarray  # uint8, (N,)
    pixels: np.ndarray  # uint8, (N, 3072)

    def __len__(self):
        return self.labels.shape[0]

    def images(self, start=0, stop=None):
        """Pixels scaled to [0, 1] as float64, shape (n, 3072)."""
        return self.pixels[start:stop].astype(np.float64) / 255.0


def parse_cifar10(buf):
    raw = np.frombuffer(buf, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD:
        raise BadRecordSize(f"{raw.size} bytes is not a positive multiple of {RECORD}")
    rec = raw.reshape(-1, RECORD)
    labels = rec[:, 0].copy()
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise LabelOutOfRange(f"record {int(bad[0])} has label {int(labels[bad[0]])}")
    return Cifar10Batch(labels, rec[:, 1:].copy())


def load_cifar10(path):
    return parse_cifar10(Path(path).read_bytes())


def write_cifar10(path, labels, pixels):
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(labels.shape[0], PIXELS)
    Path(path).write_bytes(np.hstack([labels, pixels]).tobytes())
