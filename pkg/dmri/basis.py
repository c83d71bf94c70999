"""
Словарь D: матрица базиса SHORE в точках q-пространства DW каналов схемы.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from scipy.special import gammaln, lpmv

from utils.error_handler import GradientFormatError, UsageError

logger = logging.getLogger('dmriboot.basis')

DEFAULT_RADIAL_ORDER = 6
DEFAULT_ZETA = 700.0
DEFAULT_TAU = 1.0 / (4.0 * math.pi ** 2)


@dataclass(frozen=True)
class Dictionary:
    """
    Матрица словаря (N_d x N_a) и описание атомов.

    atom_labels: тройки (n, l, m): радиальный порядок, угловой порядок,
    степень SH; вещественные SH без фазы Кондона–Шортли, m<0 -> синус,
    m>0 -> косинус.
    """

    matrix: np.ndarray = field(repr=False)
    atom_labels: Tuple[Tuple[int, int, int], ...]
    params: Dict = field(default_factory=dict)

    @property
    def n_channels(self):
        return self.matrix.shape[0]

    @property
    def n_atoms(self):
        return self.matrix.shape[1]

    @property
    def cache_key(self):
        """Ключ для кэша операторов: параметры и хэш матрицы."""
        digest = hash(self.matrix.tobytes())
        return (self.matrix.shape, digest, tuple(sorted(self.params.items())))

    def to_dict(self):
        return {
            'atom_labels': [list(label) for label in self.atom_labels],
            'params': dict(self.params),
            'shape': list(self.matrix.shape),
        }


def shore_atom_count(radial_order):
    """Число атомов: (R+2)(R+4)(2R+3)/24."""
    return (radial_order + 2) * (radial_order + 4) * (2 * radial_order + 3) // 24


def shore_atom_labels(radial_order):
    """Перечисление (n, l, m): l четное, l <= n <= (R + l)/2, |m| <= l."""
    labels = []
    for l in range(0, radial_order + 1, 2):
        for n in range(l, (radial_order + l) // 2 + 1):
            for m in range(-l, l + 1):
                labels.append((n, l, m))
    return labels


def evaluate_real_sh(l, m, direction):
    """
    Вещественная ортонормированная SH четного порядка.

    direction: единичный вектор (3,) или массив (N, 3).
    """
    if l < 0 or l % 2:
        raise UsageError(f"spherical harmonic order l must be even and >= 0, got {l}")
    if abs(m) > l:
        raise UsageError(f"|m| must not exceed l, got l={l}, m={m}")

    direction = np.asarray(direction, dtype=np.float64)
    single = direction.ndim == 1
    u = direction.reshape(-1, 3)
    cos_theta = np.clip(u[:, 2], -1.0, 1.0)
    phi = np.arctan2(u[:, 1], u[:, 0])

    am = abs(m)
    # lpmv содержит фазу (-1)^m, здесь она снимается
    legendre = lpmv(am, l, cos_theta) * (-1.0) ** am
    norm = math.sqrt((2 * l + 1) / (4.0 * math.pi) * math.exp(gammaln(l - am + 1) - gammaln(l + am + 1)))
    if m == 0:
        value = norm * legendre
    elif m > 0:
        value = math.sqrt(2.0) * norm * legendre * np.cos(am * phi)
    else:
        value = math.sqrt(2.0) * norm * legendre * np.sin(am * phi)
    return float(value[0]) if single else value


def evaluate_generalized_laguerre(k, alpha, x):
    """L_k^(alpha)(x) по устойчивой трехчленной рекурсии."""
    if k < 0:
        raise UsageError(f"Laguerre degree must be >= 0, got {k}")
    x = np.asarray(x, dtype=np.float64)
    previous = np.ones_like(x)
    if k == 0:
        return previous if x.ndim else float(previous)
    current = 1.0 + alpha - x
    for j in range(1, k):
        previous, current = current, ((2 * j + 1 + alpha - x) * current - (j + alpha) * previous) / (j + 1)
    return current if x.ndim else float(current)


def shore_normalization(n, l, zeta):
    """κ(n, l, ζ) = sqrt(2 (n-l)! / (ζ^{3/2} Γ(n + 3/2)))."""
    log_value = math.log(2.0) + gammaln(n - l + 1) - 1.5 * math.log(zeta) - gammaln(n + 1.5)
    return math.exp(0.5 * log_value)


def q_values(bvalues, tau=DEFAULT_TAU):
    """q = sqrt(b / (4π²τ)); при τ = 1/(4π²) получается q = sqrt(b)."""
    return np.sqrt(np.asarray(bvalues, dtype=np.float64) / (4.0 * math.pi ** 2 * tau))


def shore_dictionary(scheme, radial_order=DEFAULT_RADIAL_ORDER, zeta=DEFAULT_ZETA, tau=DEFAULT_TAU):
    """
    Матрица SHORE по DW каналам схемы (b0 исключены).

    Атом (n, l, m): κ · (q²/ζ)^{l/2} · exp(−q²/(2ζ)) · L_{n−l}^{l+1/2}(q²/ζ) · Y_l^m(u).
    """
    if radial_order < 0 or radial_order % 2:
        raise UsageError(f"radial_order must be even and >= 0, got {radial_order}")
    if not zeta > 0:
        raise UsageError(f"zeta must be > 0, got {zeta}")
    if not tau > 0:
        raise UsageError(f"tau must be > 0, got {tau}")

    dw = scheme.dw_indices
    if dw.size == 0:
        raise GradientFormatError("scheme has no diffusion-weighted channel")

    q = q_values(scheme.bvals[dw], tau)
    directions = scheme.bvecs[dw]
    s = q ** 2 / zeta
    envelope = np.exp(-s / 2.0)

    labels = shore_atom_labels(radial_order)
    matrix = np.empty((dw.size, len(labels)), dtype=np.float64)
    sh_cache = {}
    for column, (n, l, m) in enumerate(labels):
        if (l, m) not in sh_cache:
            sh_cache[(l, m)] = evaluate_real_sh(l, m, directions)
        radial = (
            shore_normalization(n, l, zeta)
            * s ** (l / 2.0)
            * envelope
            * evaluate_generalized_laguerre(n - l, l + 0.5, s)
        )
        matrix[:, column] = radial * sh_cache[(l, m)]

    if not np.all(np.isfinite(matrix)):
        raise UsageError("SHORE dictionary contains non-finite entries; check zeta and b-values")

    params = {
        'basis': 'shore',
        'radial_order': int(radial_order),
        'zeta': float(zeta),
        'tau': float(tau),
        'q_mapping': 'q = sqrt(b / (4*pi^2*tau))',
        'sh_convention': 'real, orthonormal, no Condon-Shortley phase, m<0 sine, m>0 cosine',
    }
    logger.debug(f"SHORE dictionary: {dw.size} channels x {len(labels)} atoms (order {radial_order})")
    return Dictionary(matrix=matrix, atom_labels=tuple(labels), params=params)


def dump_dictionary(dictionary, out_dir):
    """Записать D как текстовую матрицу и JSON с метками атомов и параметрами."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix_path = out_dir / 'dictionary.txt'
    sidecar_path = out_dir / 'dictionary.json'
    np.savetxt(matrix_path, dictionary.matrix, fmt='%.17g')
    sidecar_path.write_text(json.dumps(dictionary.to_dict(), indent=2), encoding='utf-8')
    return matrix_path, sidecar_path


def singular_value_ratio(dictionary):
    """Отношение наименьшего сингулярного числа D к наибольшему."""
    sv = np.linalg.svd(dictionary.matrix, compute_uv=False)
    return float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
