"""
Схемы диффузионных градиентов: чтение FSL bvals/bvecs, разделение b0/DW,
поиск оболочек и прореживание протокола.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.error_handler import GradientFormatError, UsageError

logger = logging.getLogger('dmriboot.gradients')

DEFAULT_B0_THRESHOLD = 50.0
DEFAULT_SHELL_TOLERANCE = 50.0

# Допуск нормы направления при чтении из текста
NORM_ACCEPT_LOW = 0.9
NORM_ACCEPT_HIGH = 1.1
UNIT_TOLERANCE = 1e-6

_NUMBER = re.compile(r'^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$')


@dataclass(frozen=True)
class GradientScheme:
    """Описание протокола: b-значения и единичные направления по каналам."""

    bvalues: Tuple[float, ...]
    directions: Tuple[Tuple[float, float, float], ...]
    b0_threshold: float = DEFAULT_B0_THRESHOLD

    def __post_init__(self):
        if len(self.bvalues) != len(self.directions):
            raise GradientFormatError(
                f"bvalues/directions length mismatch: {len(self.bvalues)} != {len(self.directions)}"
            )
        if len(self.bvalues) == 0:
            raise GradientFormatError("empty gradient scheme")
        for i, (b, d) in enumerate(zip(self.bvalues, self.directions)):
            if b > self.b0_threshold:
                norm = math.sqrt(sum(c * c for c in d))
                if abs(norm - 1.0) > UNIT_TOLERANCE:
                    raise GradientFormatError(
                        f"channel {i}: diffusion direction norm {norm:.6f} is not unit",
                        details={'channel': i, 'norm': norm}
                    )

    @classmethod
    def from_arrays(cls, bvalues, directions, b0_threshold=DEFAULT_B0_THRESHOLD):
        """Построить схему из массивов (N,) и (N, 3); DW направления нормируются."""
        bvalues = np.asarray(bvalues, dtype=np.float64).ravel()
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        if bvalues.shape[0] != directions.shape[0]:
            raise GradientFormatError(
                f"bvalues/directions length mismatch: {bvalues.shape[0]} != {directions.shape[0]}"
            )
        directions = _normalize_directions(bvalues, directions, b0_threshold)
        return cls(
            bvalues=tuple(float(b) for b in bvalues),
            directions=tuple(tuple(float(c) for c in d) for d in directions),
            b0_threshold=float(b0_threshold),
        )

    @property
    def bvals(self) -> np.ndarray:
        return np.asarray(self.bvalues, dtype=np.float64)

    @property
    def bvecs(self) -> np.ndarray:
        return np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)

    @property
    def b0_mask(self) -> np.ndarray:
        return self.bvals <= self.b0_threshold

    @property
    def b0_indices(self) -> np.ndarray:
        return np.flatnonzero(self.b0_mask)

    @property
    def dw_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.b0_mask)

    @property
    def n_channels(self) -> int:
        return len(self.bvalues)

    @property
    def n_b0(self) -> int:
        return int(self.b0_mask.sum())

    @property
    def n_dw(self) -> int:
        return self.n_channels - self.n_b0

    def require_bootstrap_ready(self):
        """Для бутстрапа нужны хотя бы один b0 и один DW канал."""
        if self.n_dw == 0:
            raise GradientFormatError("scheme has no diffusion-weighted channel")
        if self.n_b0 == 0:
            raise GradientFormatError("scheme has no b0 channel")
        return self

    def gather(self, indices):
        """Схема из каналов indices (в указанном порядке)."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_channels):
            raise UsageError(f"channel index out of range [0, {self.n_channels})")
        return GradientScheme(
            bvalues=tuple(self.bvalues[i] for i in indices),
            directions=tuple(self.directions[i] for i in indices),
            b0_threshold=self.b0_threshold,
        )

    def __repr__(self):
        return f'<GradientScheme channels={self.n_channels} b0={self.n_b0} dw={self.n_dw}>'


@dataclass
class Shell:
    """Оболочка: каналы с общим номинальным b-значением."""
    nominal_bvalue: float
    channel_indices: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.channel_indices)


def _normalize_directions(bvalues, directions, b0_threshold):
    directions = directions.copy()
    for i in np.flatnonzero(bvalues > b0_threshold):
        norm = float(np.linalg.norm(directions[i]))
        if not NORM_ACCEPT_LOW <= norm <= NORM_ACCEPT_HIGH:
            raise GradientFormatError(
                f"channel {i}: direction norm {norm:.4f} outside [{NORM_ACCEPT_LOW}, {NORM_ACCEPT_HIGH}]",
                details={'channel': int(i), 'norm': norm}
            )
        directions[i] = directions[i] / norm
    return directions


def _parse_rows(text, what):
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        values = []
        for token in tokens:
            if not _NUMBER.match(token):
                raise GradientFormatError(
                    f"{what}: non-numeric token {token!r} on line {line_no}"
                )
            values.append(float(token))
        rows.append(values)
    return rows


def parse_scheme(bvals_text, bvecs_text, b0_threshold=DEFAULT_B0_THRESHOLD):
    """
    Разобрать FSL таблицу градиентов.

    bvals: одна строка чисел; bvecs: три строки (x, y, z) той же длины.
    Направления DW каналов с нормой в [0.9, 1.1] нормируются.
    """
    bval_rows = _parse_rows(bvals_text, 'bvals')
    bvec_rows = _parse_rows(bvecs_text, 'bvecs')
    if not bval_rows or not bvec_rows:
        raise GradientFormatError("empty bvals or bvecs input")
    if len(bval_rows) != 1:
        # Некоторые инструменты пишут bvals столбцом
        if all(len(row) == 1 for row in bval_rows):
            bval_rows = [[row[0] for row in bval_rows]]
        else:
            raise GradientFormatError(f"bvals must be a single row, got {len(bval_rows)} rows")
    if len(bvec_rows) != 3:
        raise GradientFormatError(f"bvecs must have 3 rows, got {len(bvec_rows)}")

    bvals = bval_rows[0]
    lengths = {len(row) for row in bvec_rows}
    if len(lengths) != 1:
        raise GradientFormatError(f"bvecs rows have different lengths: {sorted(lengths)}")
    n_vecs = lengths.pop()
    if n_vecs != len(bvals):
        raise GradientFormatError(
            f"length mismatch: {len(bvals)} bvals vs {n_vecs} bvecs columns",
            details={'bvals': len(bvals), 'bvecs': n_vecs}
        )

    scheme = GradientScheme.from_arrays(
        np.asarray(bvals), np.asarray(bvec_rows).T, b0_threshold=b0_threshold
    )
    logger.debug(f"Parsed scheme: {scheme.n_b0} b0 + {scheme.n_dw} DW channels")
    return scheme


def read_scheme(bvals_path, bvecs_path, b0_threshold=DEFAULT_B0_THRESHOLD):
    """Прочитать схему из файлов *.bvals / *.bvecs."""
    try:
        bvals_text = Path(bvals_path).read_text(encoding='ascii')
        bvecs_text = Path(bvecs_path).read_text(encoding='ascii')
    except (OSError, UnicodeDecodeError) as e:
        raise GradientFormatError(f"cannot read gradient files: {e}") from e
    return parse_scheme(bvals_text, bvecs_text, b0_threshold=b0_threshold)


def write_scheme(scheme, bvals_path, bvecs_path):
    """Записать схему в FSL формате."""
    bvals_line = ' '.join(f'{b:.6g}' for b in scheme.bvalues)
    bvecs = scheme.bvecs.T
    bvecs_lines = [' '.join(f'{c:.8f}' for c in row) for row in bvecs]
    Path(bvals_path).write_text(bvals_line + '\n', encoding='ascii')
    Path(bvecs_path).write_text('\n'.join(bvecs_lines) + '\n', encoding='ascii')


def detect_shells(scheme, tolerance=DEFAULT_SHELL_TOLERANCE):
    """
    Сгруппировать DW каналы в оболочки.

    Каналы сортируются по b; новый кластер начинается, когда b отходит
    от наименьшего b текущего кластера больше чем на tolerance. Все члены
    лежат в [min, min + tolerance], поэтому каждый в пределах tolerance
    от среднего.
    """
    bvals = scheme.bvals
    dw = scheme.dw_indices
    order = dw[np.argsort(bvals[dw], kind='stable')]

    clusters = []
    for idx in order:
        b = bvals[idx]
        if clusters and b - bvals[clusters[-1][0]] <= tolerance:
            clusters[-1].append(int(idx))
        else:
            clusters.append([int(idx)])

    shells = [
        Shell(nominal_bvalue=float(np.mean(bvals[members])), channel_indices=sorted(members))
        for members in clusters
    ]
    return sorted(shells, key=lambda s: s.nominal_bvalue)


def antipodal_angles(directions, reference):
    """Угол min(θ, π−θ) между каждым направлением и reference."""
    cosines = np.abs(directions @ reference)
    return np.arccos(np.clip(cosines, 0.0, 1.0))


def farthest_point_subset(directions, count):
    """
    Жадный max-min отбор по антиподальному углу, начиная с первого направления.

    Возвращает позиции (в массиве directions) в порядке отбора; при равенстве
    выбирается меньшая позиция, поэтому результат детерминирован.
    """
    n = directions.shape[0]
    if count <= 0:
        return []
    selected = [0]
    min_dist = antipodal_angles(directions, directions[0])
    min_dist[0] = -np.inf
    while len(selected) < min(count, n):
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, antipodal_angles(directions, directions[nxt]))
        min_dist[selected] = -np.inf
    return selected


def _find_shell(shells, bvalue, tolerance):
    for shell in shells:
        if abs(shell.nominal_bvalue - bvalue) <= tolerance:
            return shell
    raise UsageError(
        f"unknown shell b-value {bvalue:g}",
        details={'available': [round(s.nominal_bvalue, 1) for s in shells]}
    )


def subsample(scheme, shell_spec, b0_count, strategy='farthest_point',
              explicit_indices=None, tolerance=DEFAULT_SHELL_TOLERANCE):
    """
    Прореживание протокола.

    Args:
        scheme: исходная схема
        shell_spec: список пар (b оболочки, число направлений)
        b0_count: сколько b0 каналов оставить (первые по порядку)
        strategy: 'farthest_point' или 'indices'
        explicit_indices: для 'indices': исходные номера каналов как есть

    Returns:
        (новая схема, карта: новый канал -> исходный канал)
    """
    if strategy == 'indices':
        if explicit_indices is None:
            raise UsageError("strategy 'indices' requires explicit indices")
        index_map = np.asarray(list(explicit_indices), dtype=np.int64)
        return scheme.gather(index_map), index_map

    if strategy != 'farthest_point':
        raise UsageError(f"unknown subsampling strategy {strategy!r}")

    b0_available = scheme.b0_indices
    if b0_count < 0 or b0_count > b0_available.size:
        raise UsageError(
            f"requested {b0_count} b0 channels, only {b0_available.size} available"
        )
    chosen = [int(i) for i in b0_available[:b0_count]]

    shells = detect_shells(scheme, tolerance)
    bvecs = scheme.bvecs
    for bvalue, count in shell_spec:
        shell = _find_shell(shells, float(bvalue), tolerance)
        if count > len(shell):
            raise UsageError(
                f"requested {count} directions from shell b={shell.nominal_bvalue:g}, "
                f"only {len(shell)} available"
            )
        members = np.asarray(shell.channel_indices)
        picks = farthest_point_subset(bvecs[members], int(count))
        chosen.extend(int(members[p]) for p in picks)

    if len(set(chosen)) != len(chosen):
        raise UsageError("shell specification selects the same shell twice")

    index_map = np.asarray(sorted(chosen), dtype=np.int64)
    logger.info(
        f"Subsampled scheme: {scheme.n_channels} -> {index_map.size} channels "
        f"({b0_count} b0, strategy={strategy})"
    )
    return scheme.gather(index_map), index_map


# Варианты протокола HCP, использованные для оценки обобщения
PROTOCOL_PRESETS: Dict[str, Tuple[List[Tuple[float, int]], Optional[int]]] = {
    'HCP_1.25mm_270': ([(1000.0, 90), (2000.0, 90), (3000.0, 90)], 18),
    'HCP_1.25mm_12': ([(1000.0, 12)], 18),
    'HCP_1.25mm_90': ([(1000.0, 90)], 18),
    'HCP_1.25mm_34': ([(1000.0, 34)], 3),
    'HCP_1.25mm_36': ([(1000.0, 18), (2000.0, 18)], 1),
}


def protocol_preset(name):
    """(shell_spec, b0_count) для именованного варианта протокола."""
    try:
        return PROTOCOL_PRESETS[name]
    except KeyError:
        raise UsageError(
            f"unknown protocol preset {name!r}",
            details={'available': sorted(PROTOCOL_PRESETS)}
        ) from None


def fibonacci_hemisphere(n, rotation=0.0):
    """n хорошо распределенных направлений на полусфере z >= 0."""
    i = np.arange(n, dtype=np.float64) + 0.5
    z = 1.0 - i / n
    radius = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i + rotation
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), z], axis=1)


def hcp_like_scheme(n_per_shell=90, shells: Sequence[float] = (1000.0, 2000.0, 3000.0),
                    n_b0=18, b0_every=15, bvalue_jitter=15.0, b0_threshold=DEFAULT_B0_THRESHOLD):
    """
    Синтетическая схема в духе HCP: оболочки по n_per_shell направлений,
    b0 вставляется каждые b0_every каналов (оставшиеся в конец).

    b-значения внутри оболочки разбросаны на ±bvalue_jitter, как в реальных
    таблицах HCP; при точно одинаковых b и исключенных b0 радиальные функции
    l=0 SHORE порядка 6 линейно зависимы на трех оболочках.
    """
    dw_b = []
    dw_dirs = []
    for k, b in enumerate(shells):
        dirs = fibonacci_hemisphere(n_per_shell, rotation=0.7 * k)
        phase = (np.arange(n_per_shell) * 0.6180339887498949 + 0.31 * k) % 1.0
        jitter = np.round(bvalue_jitter * (2.0 * phase - 1.0))
        dw_b.extend((float(b) + jitter).tolist())
        dw_dirs.extend(dirs.tolist())

    bvals, bvecs = [], []
    b0_left = n_b0
    for j, (b, d) in enumerate(zip(dw_b, dw_dirs)):
        if b0_left and j % b0_every == 0:
            bvals.append(5.0)
            bvecs.append([0.0, 0.0, 0.0])
            b0_left -= 1
        bvals.append(b)
        bvecs.append(d)
    for _ in range(b0_left):
        bvals.append(5.0)
        bvecs.append([0.0, 0.0, 0.0])

    return GradientScheme.from_arrays(bvals, bvecs, b0_threshold=b0_threshold)
