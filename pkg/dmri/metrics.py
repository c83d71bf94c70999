"""
Метрики: коэффициент Dice для многоканальных масок и отчеты SNR.
"""
import logging
from dataclasses import dataclass

import numpy as np

from utils.error_handler import DimensionMismatchError, InputFormatError, UsageError

logger = logging.getLogger('dmriboot.metrics')


@dataclass
class LabelVolume:
    """Булевы каналы меток (nx, ny, nz, n_labels); метка k в канале k."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[..., np.newaxis]
        if data.ndim != 4 or min(data.shape) <= 0:
            raise DimensionMismatchError(f"label volume must be 4D with positive dims, got {data.shape}")
        self.data = data.astype(bool)

    @classmethod
    def from_volume(cls, volume):
        """
        4D объем: каналы как one-hot метки (ненулевое значение = член).
        Одноканальный объем трактуется как карта целых меток 1..max.
        """
        if volume.n_channels > 1:
            return cls(volume.data != 0)
        labels = np.rint(volume.data[..., 0]).astype(np.int64)
        if labels.min() < 0:
            raise InputFormatError("label map contains negative labels")
        n_labels = max(int(labels.max()), 1)
        return cls(np.stack([labels == k for k in range(1, n_labels + 1)], axis=-1))

    @property
    def dims(self):
        return tuple(int(d) for d in self.data.shape)

    @property
    def n_labels(self):
        return self.dims[3]

    def check_compatible(self, other):
        if self.dims[:3] != other.dims[:3]:
            raise DimensionMismatchError(f"label volume dims {self.dims[:3]} != {other.dims[:3]}")

    def channel(self, label):
        if not 0 <= label < self.n_labels:
            raise UsageError(f"label {label} out of range [0, {self.n_labels})")
        return self.data[..., label]


def dice(a, b, label):
    """2|A∩B| / (|A| + |B|); два пустых множества дают 1.0."""
    a.check_compatible(b)
    left = a.channel(label)
    right = b.channel(label)
    size = int(left.sum()) + int(right.sum())
    if size == 0:
        return 1.0
    return 2.0 * int(np.logical_and(left, right).sum()) / size


def mean_dice(a, b, labels):
    labels = list(labels)
    if not labels:
        raise UsageError("mean_dice needs at least one label")
    return float(np.mean([dice(a, b, label) for label in labels]))


def dice_report(a, b, labels=None, worst=3):
    """Dice по меткам, среднее и worst меток с наименьшим значением."""
    if labels is None:
        labels = range(min(a.n_labels, b.n_labels))
    labels = list(labels)
    if a.n_labels != b.n_labels:
        logger.warning(f"label counts differ: {a.n_labels} vs {b.n_labels}")
    per_label = {int(label): dice(a, b, label) for label in labels}
    ranked = sorted(per_label.items(), key=lambda item: (item[1], item[0]))
    return {
        'per_label': per_label,
        'mean': mean_dice(a, b, labels),
        'worst': [{'label': label, 'dice': value} for label, value in ranked[:worst]],
    }


def snr_report(volume, mask, sigma):
    """SNR канала = среднее сигнала в маске / sigma."""
    if not sigma > 0:
        raise UsageError(f"sigma must be > 0, got {sigma}")
    mask.check_compatible(volume)
    if mask.count == 0:
        raise InputFormatError("SNR report needs a non-empty mask")
    means = volume.voxel_signals(mask).mean(axis=0)
    per_channel = means / sigma
    return {
        'sigma': float(sigma),
        'per_channel': [float(v) for v in per_channel],
        'mean': float(per_channel.mean()),
    }
