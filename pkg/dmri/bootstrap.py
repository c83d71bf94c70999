"""
Масштабированный остаточный бутстрап: новые DW сигналы как подогнанный
сигнал плюс r·(переотобранные скорректированные остатки), b0 каналы как
среднее b0 плюс r·(переотобранные отклонения от среднего).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np

from utils.error_handler import DimensionMismatchError, GradientFormatError, InputFormatError, UsageError
from utils.monitoring import resolve_thread_count
from dmri.streams import SUBSTREAM_B0, SUBSTREAM_DW, stream_keys, uniform_indices
from dmri.volumes import Mask, Volume4D, scatter_signals

logger = logging.getLogger('dmriboot.bootstrap')

DEFAULT_SCALES = (2.0, 3.0, 4.0)
MAX_SEED = (1 << 64) - 1


@dataclass(frozen=True)
class BootstrapPlan:
    """
    План аугментации: набор масштабов r, зерно и число повторов.

    couple_scales: если True, индекс масштаба не входит в ключ потока,
    и все масштабы используют одни и те же выборки остатков.
    """

    scales: Tuple[float, ...] = DEFAULT_SCALES
    seed: int = 0
    replicates_per_scale: int = 1
    couple_scales: bool = False

    def __post_init__(self):
        scales = tuple(float(r) for r in self.scales)
        if not scales:
            raise UsageError("bootstrap plan needs at least one scale")
        for r in scales:
            if not math.isfinite(r) or r < 0:
                raise UsageError(f"scale factors must be finite and >= 0, got {r}")
        duplicates = sorted({r for r in scales if scales.count(r) > 1})
        if duplicates:
            raise UsageError(f"scale factors must be distinct, got duplicates {duplicates}",
                             details={'scales': list(scales)})
        if int(self.replicates_per_scale) < 1:
            raise UsageError(f"replicates_per_scale must be >= 1, got {self.replicates_per_scale}")
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise UsageError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, 'scales', scales)
        object.__setattr__(self, 'seed', int(self.seed))
        object.__setattr__(self, 'replicates_per_scale', int(self.replicates_per_scale))

    def stream_scale_index(self, scale_index):
        return 0 if self.couple_scales else scale_index

    def outputs(self):
        """(индекс масштаба, r, повтор) для каждого выходного скана."""
        return [
            (index, r, replicate)
            for index, r in enumerate(self.scales)
            for replicate in range(self.replicates_per_scale)
        ]

    def to_dict(self):
        return {
            'scales': list(self.scales),
            'seed': self.seed,
            'replicates_per_scale': self.replicates_per_scale,
            'couple_scales': self.couple_scales,
        }


class BootstrapScan(NamedTuple):
    scale: float
    replicate: int
    volume: Volume4D


@dataclass(frozen=True)
class NoiseEstimate:
    pooled: float
    per_channel: np.ndarray

    def to_dict(self):
        return {'pooled': self.pooled, 'per_channel': [float(v) for v in self.per_channel]}


def bootstrap_noise(fit, r, stream):
    """r·ε̃: остатки вокселя, выбранные с возвращением."""
    residuals = np.asarray(fit.corrected_residuals, dtype=np.float64)
    n = residuals.size
    return r * residuals[stream.indices(n, n)]


def bootstrap_voxel(fit, r, stream):
    """ỹ = ŷ + r·ε̃."""
    return fit.fitted + bootstrap_noise(fit, r, stream)


def bootstrap_b0_voxel(b0_signals, r, stream):
    """
    ỹ⁰_j = ȳ⁰ + r·ε̃⁰_j, ε̃⁰ выбираются с возвращением из {y⁰_j − ȳ⁰}.

    Единственный b0 канал возвращается без изменений.
    """
    b0_signals = np.asarray(b0_signals, dtype=np.float64)
    n0 = b0_signals.size
    if n0 == 0:
        raise GradientFormatError("b0 bootstrap needs at least one b0 channel")
    if n0 == 1:
        return b0_signals.copy()
    mean = b0_signals.mean()
    residuals = b0_signals - mean
    return mean + r * residuals[stream.indices(n0, n0)]


def _resample_rows(residuals, keys, r):
    n = residuals.shape[1]
    picks = uniform_indices(keys, n, n)
    return r * np.take_along_axis(residuals, picks, axis=1)


def _bootstrap_block(fitted, residuals, b0, linear, plan, scale_index, r, replicate):
    stream_index = plan.stream_scale_index(scale_index)
    dw_keys = stream_keys(plan.seed, stream_index, replicate, linear, SUBSTREAM_DW)
    dw = fitted + _resample_rows(residuals, dw_keys, r)

    if b0.shape[1] == 1:
        b0_out = b0.copy()
    else:
        b0_keys = stream_keys(plan.seed, stream_index, replicate, linear, SUBSTREAM_B0)
        mean = b0.mean(axis=1, keepdims=True)
        b0_out = mean + _resample_rows(b0 - mean, b0_keys, r)
    return dw, b0_out


def bootstrap_scan(scan, scheme, fits, plan, mask=None, clip_at_zero=False, threads=None,
                   chunk_size=4096) -> List[BootstrapScan]:
    """
    Один аугментированный скан на каждую пару (r, повтор).

    Каналы выхода стоят на тех же местах, что и во входном скане;
    воксели вне маски копируются без изменений.
    """
    scheme.require_bootstrap_ready()
    if scan.n_channels != scheme.n_channels:
        raise DimensionMismatchError(
            f"scan has {scan.n_channels} channels, scheme describes {scheme.n_channels}"
        )
    if fits.n_channels != scheme.n_dw:
        raise DimensionMismatchError(
            f"fits have {fits.n_channels} channels, scheme has {scheme.n_dw} DW channels"
        )
    if tuple(fits.spatial_dims) != scan.spatial_dims:
        raise DimensionMismatchError(
            f"fit store dims {fits.spatial_dims} do not match scan dims {scan.spatial_dims}"
        )
    if mask is None:
        mask = Mask.full(scan.spatial_dims)
    mask.check_compatible(scan)

    linear = mask.voxel_linear_indices()
    rows = fits.rows_for(linear)
    coords = mask.voxel_coordinates()
    dw_idx = scheme.dw_indices
    b0_idx = scheme.b0_indices

    signals = scan.data[coords]
    fitted = fits.fitted[rows]
    residuals = fits.corrected_residuals[rows]
    b0 = signals[:, b0_idx]

    chunks = [(s, min(s + int(chunk_size), linear.size)) for s in range(0, linear.size, int(chunk_size))]
    workers = resolve_thread_count(threads)

    results = []
    for scale_index, r, replicate in plan.outputs():
        out_signals = np.empty_like(signals)

        def work(bounds):
            start, stop = bounds
            dw, b0_out = _bootstrap_block(
                fitted[start:stop], residuals[start:stop], b0[start:stop],
                linear[start:stop], plan, scale_index, r, replicate,
            )
            out_signals[start:stop, dw_idx] = dw
            out_signals[start:stop, b0_idx] = b0_out

        if workers == 1 or len(chunks) <= 1:
            for bounds in chunks:
                work(bounds)
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                list(executor.map(work, chunks))

        if clip_at_zero:
            np.maximum(out_signals, 0.0, out=out_signals)

        data = scan.data.copy()
        scatter_signals(data, mask, out_signals)
        results.append(BootstrapScan(scale=r, replicate=replicate, volume=scan.with_data(data)))
        logger.info(f"Bootstrap scan r={r:g} replicate={replicate}: {linear.size} voxel(s) resampled")

    return results


def estimate_noise_sigma(fits, mask=None):
    """
    σ̂ = sqrt(среднее ε′²) по вокселям и каналам; по каналам: среднее
    только по вокселям.
    """
    if mask is None:
        residuals = fits.corrected_residuals
    else:
        residuals = fits.corrected_residuals[fits.rows_for(mask.voxel_linear_indices())]
    if residuals.shape[0] == 0:
        raise InputFormatError("noise estimate needs a non-empty mask")
    squared = residuals ** 2
    return NoiseEstimate(
        pooled=float(np.sqrt(squared.mean())),
        per_channel=np.sqrt(squared.mean(axis=0)),
    )
