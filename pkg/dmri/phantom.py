"""
Синтетический многотензорный фантом с известным сигналом и шумом.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np

from utils.error_handler import UsageError
from dmri.streams import SUBSTREAM_COEFFICIENTS, SUBSTREAM_NOISE, standard_normal, stream_keys
from dmri.volumes import Mask, Volume4D

logger = logging.getLogger('dmriboot.phantom')

NOISE_MODELS = ('none', 'gaussian', 'rician')
MASK_SHAPES = ('full', 'sphere')
FRACTION_TOLERANCE = 1e-6

# Типичные диффузивности вытянутого тензора белого вещества, мм²/с
WHITE_MATTER_AXIAL = 1.7e-3
WHITE_MATTER_RADIAL = 0.3e-3

_NOISE_CHUNK = 4096


@dataclass(frozen=True)
class Compartment:
    """Аксиально-симметричный тензор: направление, диффузивности и доля."""

    direction: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    axial: float = WHITE_MATTER_AXIAL
    radial: float = WHITE_MATTER_RADIAL
    fraction: float = 1.0

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0 or not math.isfinite(norm):
            raise UsageError(f"compartment direction must be a non-zero vector, got {self.direction}")
        if not (self.axial > 0 and self.radial > 0):
            raise UsageError(f"diffusivities must be > 0, got axial={self.axial}, radial={self.radial}")
        if not 0.0 <= self.fraction <= 1.0:
            raise UsageError(f"volume fraction must be in [0, 1], got {self.fraction}")
        object.__setattr__(self, 'direction', tuple(float(c) for c in direction / norm))

    def attenuation(self, bvals, bvecs):
        """exp(−b·uᵀTu), T = λ⊥I + (λ∥ − λ⊥)vvᵀ."""
        cos2 = (bvecs @ np.asarray(self.direction)) ** 2
        apparent = self.radial + (self.axial - self.radial) * cos2
        return np.exp(-bvals * apparent)

    def to_dict(self):
        return {
            'direction': list(self.direction),
            'axial': self.axial,
            'radial': self.radial,
            'fraction': self.fraction,
        }


def _default_compartments():
    return (
        Compartment(direction=(1.0, 0.0, 0.0), fraction=0.6),
        Compartment(direction=(0.0, 1.0, 0.0), fraction=0.4),
    )


@dataclass(frozen=True)
class PhantomSpec:
    """Описание фантома; compartments одинаковы во всех вокселях маски."""

    dims: Tuple[int, int, int] = (32, 32, 32)
    compartments: Tuple[Compartment, ...] = field(default_factory=_default_compartments)
    s0: float = 100.0
    noise: str = 'none'
    sigma: float = 0.0
    seed: int = 0
    mask_shape: str = 'full'

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise UsageError(f"phantom dims must be 3 positive integers, got {self.dims}")
        object.__setattr__(self, 'dims', dims)
        if not self.compartments:
            raise UsageError("phantom needs at least one compartment")
        total = sum(c.fraction for c in self.compartments)
        if abs(total - 1.0) > FRACTION_TOLERANCE:
            raise UsageError(f"compartment fractions must sum to 1, got {total:.6f}")
        if self.noise not in NOISE_MODELS:
            raise UsageError(f"unknown noise model {self.noise!r}", details={'allowed': list(NOISE_MODELS)})
        if not self.sigma >= 0:
            raise UsageError(f"sigma must be >= 0, got {self.sigma}")
        if self.noise != 'none' and self.sigma == 0:
            logger.debug("noise model set with sigma=0; signals will equal the noise-free volume")
        if self.mask_shape not in MASK_SHAPES:
            raise UsageError(f"unknown mask shape {self.mask_shape!r}", details={'allowed': list(MASK_SHAPES)})

    def to_dict(self):
        return {
            'dims': list(self.dims),
            'compartments': [c.to_dict() for c in self.compartments],
            's0': self.s0,
            'noise': self.noise,
            'sigma': self.sigma,
            'seed': self.seed,
            'mask_shape': self.mask_shape,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if 'compartments' in data:
            data['compartments'] = tuple(Compartment(**c) for c in data['compartments'])
        return cls(**data)


class PhantomResult(NamedTuple):
    signals: Volume4D
    noise_free: Volume4D
    mask: Mask


def phantom_mask(dims, shape='full'):
    if shape == 'full':
        return Mask.full(dims)
    grid = np.indices(dims, dtype=np.float64)
    center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
    radius = min(dims) / 2.0
    distance2 = sum((grid[i] - center[i]) ** 2 for i in range(3))
    return Mask(distance2 <= radius ** 2)


def voxel_signal(spec, scheme):
    """Бесшумный сигнал одного вокселя: s0·Σ f_c·exp(−b·uᵀT_cu); b0 каналы равны s0."""
    bvals, bvecs = scheme.bvals, scheme.bvecs
    signal = np.zeros(scheme.n_channels, dtype=np.float64)
    for compartment in spec.compartments:
        signal += compartment.fraction * compartment.attenuation(bvals, bvecs)
    signal *= spec.s0
    signal[scheme.b0_mask] = spec.s0
    return signal


def _noise_draws(seed, linear, count, substream=SUBSTREAM_NOISE):
    keys = stream_keys(seed, 0, 0, linear, substream)
    return standard_normal(keys, count)


def add_noise(volume, sigma, seed, model='gaussian'):
    """
    Шум по всем вокселям объема; поток каждого вокселя задается его
    линейным индексом, поэтому результат не зависит от порядка обхода.
    """
    if model not in NOISE_MODELS:
        raise UsageError(f"unknown noise model {model!r}")
    if model == 'none' or sigma == 0:
        return volume.with_data(volume.data.copy())

    nx, ny, nz, nc = volume.dims
    flat = volume.data.reshape(-1, nc)
    # строки flat идут в C-порядке (x медленнее всех), линейный индекс в F-порядке
    c_order = np.arange(nx * ny * nz)
    linear = np.ravel_multi_index(np.unravel_index(c_order, (nx, ny, nz)), (nx, ny, nz), order='F')

    noisy = np.empty_like(flat)
    for start in range(0, flat.shape[0], _NOISE_CHUNK):
        stop = min(start + _NOISE_CHUNK, flat.shape[0])
        block = flat[start:stop]
        if model == 'gaussian':
            draws = _noise_draws(seed, linear[start:stop], nc)
            noisy[start:stop] = block + sigma * draws
        else:
            draws = _noise_draws(seed, linear[start:stop], 2 * nc)
            real = block + sigma * draws[:, :nc]
            imag = sigma * draws[:, nc:]
            noisy[start:stop] = np.sqrt(real ** 2 + imag ** 2)
    return volume.with_data(noisy.reshape(volume.dims))


def generate(spec, scheme):
    """
    Фантом по спецификации.

    Returns:
        PhantomResult(signals, noise_free, mask); вне маски сигнал равен нулю
        (плюс шум).
    """
    mask = phantom_mask(spec.dims, spec.mask_shape)
    signal = voxel_signal(spec, scheme)
    data = np.zeros(spec.dims + (scheme.n_channels,), dtype=np.float64)
    data[mask.data] = signal
    noise_free = Volume4D(data=data)

    signals = add_noise(noise_free, spec.sigma, spec.seed, model=spec.noise)
    logger.info(
        f"Generated phantom {spec.dims} x {scheme.n_channels} channels, "
        f"{mask.count} voxel(s) in mask, noise={spec.noise} sigma={spec.sigma}"
    )
    return PhantomResult(signals=signals, noise_free=noise_free, mask=mask)


def generate_in_span(dictionary, dims, seed=0, coefficient_scale=1.0):
    """Сигналы y = D·x со случайными x ~ N(0, coefficient_scale²) в каждом вокселе."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise UsageError(f"dims must be 3 positive integers, got {dims}")
    n_vox = int(np.prod(dims))
    # строки идут в порядке линейного индекса x + nx*(y + ny*z)
    linear = np.arange(n_vox)
    coefficients = np.empty((n_vox, dictionary.n_atoms), dtype=np.float64)
    for start in range(0, n_vox, _NOISE_CHUNK):
        stop = min(start + _NOISE_CHUNK, n_vox)
        coefficients[start:stop] = coefficient_scale * _noise_draws(
            seed, linear[start:stop], dictionary.n_atoms, substream=SUBSTREAM_COEFFICIENTS
        )
    signals = coefficients @ dictionary.matrix.T
    data = signals.reshape(dims + (dictionary.n_channels,), order='F')
    return Volume4D(data=data)


def embed_dw_channels(dw_volume, scheme, b0_value):
    """Полный скан по схеме: DW каналы из dw_volume, b0 каналы равны b0_value."""
    if dw_volume.n_channels != scheme.n_dw:
        raise UsageError(
            f"DW volume has {dw_volume.n_channels} channels, scheme has {scheme.n_dw} DW channels"
        )
    data = np.full(dw_volume.spatial_dims + (scheme.n_channels,), float(b0_value))
    data[..., scheme.dw_indices] = dw_volume.data
    return dw_volume.with_data(data)
