"""
Повоксельная аппроксимация методом наименьших квадратов: коэффициенты,
подогнанный сигнал, диагональ hat-матрицы и скорректированные остатки.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from cachetools import LRUCache, cached
from cachetools.keys import hashkey

from utils.error_handler import (
    DegenerateLeverageError,
    DimensionMismatchError,
    InputFormatError,
    SingularDictionaryError,
    UsageError,
)
from utils.monitoring import resolve_thread_count
from dmri.volumes import Volume4D

logger = logging.getLogger('dmriboot.fitting')

SINGULAR_CUTOFF = 1e-12
LEVERAGE_LIMIT = 1.0 - 1e-9
DEFAULT_CHUNK_SIZE = 4096

_operator_cache = LRUCache(maxsize=16)
_operator_lock = threading.RLock()


def _frozen(array):
    array = np.ascontiguousarray(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FitOperator:
    """
    Оператор аппроксимации для одного словаря.

    pinv: (N_a x N_d) = (DᵀD + λI)⁻¹Dᵀ
    hat_diag: h_ii, диагональ H = D·pinv
    ridge: λ >= 0
    """

    pinv: np.ndarray = field(repr=False)
    hat_diag: np.ndarray = field(repr=False)
    ridge: float = 0.0

    @property
    def n_atoms(self):
        return self.pinv.shape[0]

    @property
    def n_channels(self):
        return self.pinv.shape[1]

    @property
    def residual_denominator(self):
        """sqrt(1 - h_ii) по каналам."""
        return np.sqrt(1.0 - self.hat_diag)

    def __post_init__(self):
        pinv = np.asarray(self.pinv, dtype=np.float64)
        hat_diag = np.asarray(self.hat_diag, dtype=np.float64)
        if pinv.ndim != 2 or hat_diag.shape != (pinv.shape[1],):
            raise DimensionMismatchError(
                f"hat_diag shape {hat_diag.shape} does not match pinv shape {pinv.shape}"
            )
        if not np.all(np.isfinite(hat_diag)):
            raise InputFormatError("hat_diag contains non-finite values")
        worst = int(np.argmax(hat_diag))
        if hat_diag[worst] >= LEVERAGE_LIMIT:
            raise DegenerateLeverageError(
                f"channel {worst} has leverage h_ii={hat_diag[worst]:.12f} >= 1 - 1e-9; "
                f"the residual correction 1/sqrt(1 - h_ii) is undefined; lower radial_order or raise ridge",
                details={'channel': worst, 'leverage': float(hat_diag[worst])}
            )
        object.__setattr__(self, 'pinv', pinv)
        object.__setattr__(self, 'hat_diag', hat_diag)

    def __repr__(self):
        return (f'<FitOperator atoms={self.n_atoms} channels={self.n_channels} '
                f'ridge={self.ridge} trace={float(self.hat_diag.sum()):.6f}>')


@dataclass
class VoxelFit:
    """Результат аппроксимации одного вокселя."""
    coefficients: np.ndarray
    fitted: np.ndarray
    corrected_residuals: np.ndarray
    raw_residuals: Optional[np.ndarray] = None


def _pinv_unregularized(matrix):
    n_channels, n_atoms = matrix.shape
    if n_channels <= n_atoms:
        raise DegenerateLeverageError(
            f"N_d={n_channels} <= N_a={n_atoms}: leverage correction divides by "
            f"sqrt(1 - h_ii) with h_ii -> 1; lower radial_order or set ridge > 0",
            details={'n_channels': n_channels, 'n_atoms': n_atoms}
        )
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= SINGULAR_CUTOFF * s[0]:
        ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
        raise SingularDictionaryError(
            f"dictionary columns are linearly dependent (smallest/largest singular value "
            f"{ratio:.3e} <= {SINGULAR_CUTOFF:g}); check the scheme or set ridge > 0",
            details={'singular_value_ratio': ratio}
        )
    return (vt.T / s) @ u.T


def _pinv_ridge(matrix, ridge):
    gram = matrix.T @ matrix + ridge * np.eye(matrix.shape[1])
    try:
        return scipy.linalg.solve(gram, matrix.T, assume_a='pos')
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SingularDictionaryError(f"regularized normal equations are singular: {e}") from e


@cached(_operator_cache, key=lambda dictionary, ridge=0.0: hashkey(dictionary.cache_key, float(ridge)),
        lock=_operator_lock)
def build_fit_operator(dictionary, ridge=0.0):
    """
    Псевдообратная матрица и leverages словаря.

    При ridge = 0 используется SVD с отсечкой 1e-12 относительно
    наибольшего сингулярного числа; при ridge > 0 решаются
    регуляризованные нормальные уравнения.
    """
    ridge = float(ridge)
    if not ridge >= 0.0:
        raise UsageError(f"ridge must be >= 0, got {ridge}")

    matrix = dictionary.matrix
    if ridge == 0.0:
        pinv = _pinv_unregularized(matrix)
    else:
        pinv = _pinv_ridge(matrix, ridge)

    # h_ii = row_i(D) · pinv[:, i]; полная H не строится
    hat_diag = np.einsum('ij,ji->i', matrix, pinv)

    # FitOperator отклоняет h_ii >= 1 - 1e-9
    operator = FitOperator(pinv=_frozen(pinv), hat_diag=_frozen(hat_diag), ridge=ridge)
    logger.debug(f"Built {operator!r}")
    return operator


def clear_operator_cache():
    with _operator_lock:
        _operator_cache.clear()


def fit_signals(op, dictionary, signals, center_residuals=False):
    """
    Аппроксимация пачки сигналов (n, N_d).

    Returns:
        (coefficients, fitted, corrected_residuals, raw_residuals)
    """
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2 or signals.shape[1] != op.n_channels:
        raise DimensionMismatchError(
            f"signal length {signals.shape[-1]} does not match N_d={op.n_channels}"
        )
    if not np.all(np.isfinite(signals)):
        raise InputFormatError("signal contains non-finite values")

    coefficients = signals @ op.pinv.T
    fitted = coefficients @ dictionary.matrix.T
    raw = signals - fitted
    if center_residuals:
        raw = raw - raw.mean(axis=1, keepdims=True)
    corrected = raw / op.residual_denominator
    return coefficients, fitted, corrected, raw


def fit_voxel(op, dictionary, y, center_residuals=False):
    """x̂ = pinv·y; ŷ = D·x̂; ε′_i = (y_i − ŷ_i) / sqrt(1 − h_ii)."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise DimensionMismatchError(f"voxel signal must be a vector, got shape {y.shape}")
    coefficients, fitted, corrected, raw = fit_signals(op, dictionary, y[np.newaxis, :], center_residuals)
    return VoxelFit(
        coefficients=coefficients[0],
        fitted=fitted[0],
        corrected_residuals=corrected[0],
        raw_residuals=raw[0],
    )


@dataclass
class FitStore:
    """
    Результаты аппроксимации по вокселям маски.

    Строки массивов упорядочены по возрастанию линейного индекса
    x + nx*(y + ny*z); воксели вне маски не хранятся.
    """

    spatial_dims: tuple
    linear_indices: np.ndarray
    coefficients: np.ndarray
    fitted: np.ndarray
    corrected_residuals: np.ndarray
    raw_residuals: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __len__(self):
        return int(self.linear_indices.size)

    @property
    def is_empty(self):
        return len(self) == 0

    @property
    def n_channels(self):
        return self.fitted.shape[1]

    def _linear_index(self, x, y, z):
        nx, ny, nz = self.spatial_dims
        if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
            raise UsageError(f"voxel ({x}, {y}, {z}) outside volume {self.spatial_dims}")
        return x + nx * (y + ny * z)

    def get(self, x, y, z):
        """VoxelFit вокселя или None, если воксель не входил в маску."""
        linear = self._linear_index(x, y, z)
        row = int(np.searchsorted(self.linear_indices, linear))
        if row >= len(self) or self.linear_indices[row] != linear:
            return None
        return VoxelFit(
            coefficients=self.coefficients[row],
            fitted=self.fitted[row],
            corrected_residuals=self.corrected_residuals[row],
            raw_residuals=self.raw_residuals[row],
        )

    def rows_for(self, linear_indices):
        """Номера строк для линейных индексов; все они должны быть в хранилище."""
        linear_indices = np.asarray(linear_indices, dtype=np.int64)
        if linear_indices.size == 0:
            return np.empty(0, dtype=np.int64)
        if self.is_empty:
            missing = int(linear_indices.size)
        else:
            rows = np.minimum(np.searchsorted(self.linear_indices, linear_indices), len(self) - 1)
            missing = int(np.count_nonzero(self.linear_indices[rows] != linear_indices))
        if missing:
            raise DimensionMismatchError(
                f"fit store is incomplete for the mask: {missing} voxel(s) without a fit",
                details={'missing': missing}
            )
        return rows

    def _scatter(self, values):
        nx, ny, nz = self.spatial_dims
        data = np.zeros((nx, ny, nz, values.shape[1]), dtype=np.float64)
        coords = np.unravel_index(self.linear_indices, self.spatial_dims, order='F')
        data[coords] = values
        return Volume4D(data=data, spacing=self.spacing, affine=self.affine)

    def to_volumes(self):
        """Объемы коэффициентов, подогнанного сигнала и скорректированных остатков."""
        return {
            'coefficients': self._scatter(self.coefficients),
            'fitted': self._scatter(self.fitted),
            'residuals': self._scatter(self.corrected_residuals),
        }

    def residual_variance_per_channel(self, corrected=True):
        """Средний квадрат остатков по вокселям для каждого канала."""
        if self.is_empty:
            raise InputFormatError("fit store is empty: mask selects no voxels")
        residuals = self.corrected_residuals if corrected else self.raw_residuals
        return np.mean(residuals ** 2, axis=0)


def _chunks(n, chunk_size):
    return [(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]


def fit_volume(op, dictionary, dwi, mask, center_residuals=False, threads=None,
               chunk_size=DEFAULT_CHUNK_SIZE):
    """
    Аппроксимация всех вокселей маски.

    dwi содержит только DW каналы (N_d). Воксели обрабатываются блоками
    фиксированного размера в порядке линейного индекса, поэтому результат
    не зависит от числа потоков.
    """
    if dwi.n_channels != op.n_channels:
        raise DimensionMismatchError(
            f"dwi has {dwi.n_channels} channels, dictionary expects N_d={op.n_channels}"
        )
    mask.check_compatible(dwi)

    linear = mask.voxel_linear_indices()
    signals = dwi.voxel_signals(mask)
    n_vox = linear.size
    n_channels, n_atoms = op.n_channels, op.n_atoms

    coefficients = np.empty((n_vox, n_atoms), dtype=np.float64)
    fitted = np.empty((n_vox, n_channels), dtype=np.float64)
    corrected = np.empty((n_vox, n_channels), dtype=np.float64)
    raw = np.empty((n_vox, n_channels), dtype=np.float64)

    def work(bounds):
        start, stop = bounds
        c, f, e, r = fit_signals(op, dictionary, signals[start:stop], center_residuals)
        coefficients[start:stop] = c
        fitted[start:stop] = f
        corrected[start:stop] = e
        raw[start:stop] = r

    chunks = _chunks(n_vox, int(chunk_size))
    workers = resolve_thread_count(threads)
    if workers == 1 or len(chunks) <= 1:
        for bounds in chunks:
            work(bounds)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            list(executor.map(work, chunks))

    logger.info(f"Fitted {n_vox} voxel(s) in {len(chunks)} chunk(s) with {workers} thread(s)")
    return FitStore(
        spatial_dims=dwi.spatial_dims,
        linear_indices=linear,
        coefficients=coefficients,
        fitted=fitted,
        corrected_residuals=corrected,
        raw_residuals=raw,
        spacing=dwi.spacing,
        affine=dwi.affine,
    )


def fit_report(op, store):
    """Сводка для JSON отчета команды fit."""
    h = op.hat_diag
    report = {
        'n_atoms': op.n_atoms,
        'n_channels': op.n_channels,
        'ridge': op.ridge,
        'n_voxels': len(store),
        'hat_diag': {
            'min': float(h.min()),
            'mean': float(h.mean()),
            'max': float(h.max()),
            'sum': float(h.sum()),
        },
    }
    if not store.is_empty:
        corrected = store.residual_variance_per_channel(corrected=True)
        raw = store.residual_variance_per_channel(corrected=False)
        report['residual_variance_per_channel'] = [float(v) for v in corrected]
        report['pooled_variance'] = {
            'corrected': float(corrected.mean()),
            'raw': float(raw.mean()),
        }
    return report
