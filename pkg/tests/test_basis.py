"""
Тесты для словаря SHORE
"""
import json
import math

import numpy as np
import pytest

from dmri.basis import (
    dump_dictionary,
    evaluate_generalized_laguerre,
    evaluate_real_sh,
    shore_atom_count,
    shore_atom_labels,
    shore_dictionary,
    singular_value_ratio,
)
from dmri.gradients import GradientScheme
from utils.error_handler import GradientFormatError, UsageError


def _sphere_quadrature(n_theta=24, n_phi=48):
    """Гаусс–Лежандр по cos(theta) и равномерная сетка по phi."""
    nodes, weights = np.polynomial.legendre.leggauss(n_theta)
    phi = np.arange(n_phi) * 2.0 * math.pi / n_phi
    cos_theta, phi = np.meshgrid(nodes, phi, indexing='ij')
    sin_theta = np.sqrt(1.0 - cos_theta ** 2)
    points = np.stack([sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta], axis=-1)
    w = np.repeat(weights[:, None], n_phi, axis=1) * (2.0 * math.pi / n_phi)
    return points.reshape(-1, 3), w.ravel()


class TestAtomCount:
    """Тесты числа атомов"""

    @pytest.mark.parametrize('order, expected', [(0, 1), (2, 7), (4, 22), (6, 50), (8, 95)])
    def test_closed_form(self, order, expected):
        """Формула совпадает с известными значениями"""
        assert shore_atom_count(order) == expected

    @pytest.mark.parametrize('order', [0, 2, 4, 6, 8, 10])
    def test_matches_enumeration(self, order):
        """Перебор (n, l, m) дает то же число"""
        brute = sum(
            2 * l + 1
            for n in range(order + 1)
            for l in range(0, n + 1, 2)
            if 2 * n - l <= order
        )
        assert len(shore_atom_labels(order)) == brute == shore_atom_count(order)


class TestSphericalHarmonics:
    """Тесты вещественных SH"""

    def test_constant_term(self):
        """Y_0^0 = 1/(2 sqrt(pi))"""
        assert evaluate_real_sh(0, 0, [0.3, 0.4, np.sqrt(0.75)]) == pytest.approx(0.2820948, abs=1e-7)

    def test_l2_on_pole(self):
        """Y_2^0 на оси z"""
        assert evaluate_real_sh(2, 0, [0.0, 0.0, 1.0]) == pytest.approx(0.6307831, abs=1e-7)

    def test_antipodal_symmetry(self):
        """Четные порядки не различают u и -u"""
        u = np.array([0.48, -0.6, 0.64])
        for l in (2, 4, 6):
            for m in range(-l, l + 1):
                assert evaluate_real_sh(l, m, u) == pytest.approx(evaluate_real_sh(l, m, -u), abs=1e-12)

    def test_orthonormal(self):
        """Интеграл произведений по сфере дает единичную матрицу"""
        points, weights = _sphere_quadrature()
        pairs = [(l, m) for l in (0, 2, 4) for m in range(-l, l + 1)]
        values = np.stack([evaluate_real_sh(l, m, points) for l, m in pairs], axis=1)
        gram = values.T @ (values * weights[:, None])
        assert np.allclose(gram, np.eye(len(pairs)), atol=1e-10)

    def test_odd_order_rejected(self):
        """Нечетный порядок"""
        with pytest.raises(UsageError):
            evaluate_real_sh(3, 0, [0, 0, 1])

    def test_m_out_of_range(self):
        """|m| > l"""
        with pytest.raises(UsageError):
            evaluate_real_sh(2, 3, [0, 0, 1])


class TestLaguerre:
    """Тесты обобщенных многочленов Лагерра"""

    def test_degree_zero(self):
        assert evaluate_generalized_laguerre(0, 2.5, 7.0) == 1.0

    def test_degree_one(self):
        """L_1^(1.5)(2) = 1 + 1.5 - 2"""
        assert evaluate_generalized_laguerre(1, 1.5, 2.0) == pytest.approx(0.5, abs=1e-12)

    def test_matches_series(self):
        """Рекурсия совпадает с явной суммой"""
        k, alpha, x = 3, 0.5, 1.0
        series = sum(
            (-1) ** i
            * math.exp(math.lgamma(k + alpha + 1) - math.lgamma(k - i + 1) - math.lgamma(alpha + i + 1))
            * x ** i / math.factorial(i)
            for i in range(k + 1)
        )
        assert evaluate_generalized_laguerre(k, alpha, x) == pytest.approx(series, abs=1e-12)

    def test_array_argument(self):
        x = np.array([0.0, 1.0, 2.0])
        assert evaluate_generalized_laguerre(2, 0.5, x).shape == (3,)

    def test_negative_degree(self):
        with pytest.raises(UsageError):
            evaluate_generalized_laguerre(-1, 0.5, 1.0)


class TestShoreDictionary:
    """Тесты матрицы словаря"""

    def test_shape(self, shore, hcp_scheme):
        """N_d x N_a, b0 исключены"""
        assert shore.matrix.shape == (hcp_scheme.n_dw, 50)
        assert len(shore.atom_labels) == 50

    def test_well_conditioned(self, shore):
        """Словарь полного ранга на HCP-подобной схеме"""
        assert singular_value_ratio(shore) > 1e-10

    def test_finite(self, shore):
        assert np.all(np.isfinite(shore.matrix))

    def test_deterministic(self, hcp_scheme, shore):
        """Повторное построение дает ту же матрицу"""
        again = shore_dictionary(hcp_scheme, radial_order=6, zeta=700.0)
        assert np.array_equal(again.matrix, shore.matrix)
        assert again.cache_key == shore.cache_key

    def test_params_recorded(self, shore):
        assert shore.params['radial_order'] == 6
        assert shore.params['zeta'] == 700.0

    def test_odd_radial_order(self, hcp_scheme):
        with pytest.raises(UsageError):
            shore_dictionary(hcp_scheme, radial_order=5)

    def test_non_positive_zeta(self, hcp_scheme):
        with pytest.raises(UsageError):
            shore_dictionary(hcp_scheme, zeta=0.0)

    def test_b0_only_scheme(self):
        """Схема без DW каналов"""
        scheme = GradientScheme.from_arrays([0.0, 0.0], [[0, 0, 0], [0, 0, 0]])
        with pytest.raises(GradientFormatError):
            shore_dictionary(scheme)


class TestDumpDictionary:
    """Тесты выгрузки словаря"""

    def test_files_written(self, tmp_path, shore):
        matrix_path, sidecar_path = dump_dictionary(shore, tmp_path)
        loaded = np.loadtxt(matrix_path)
        assert np.array_equal(loaded, shore.matrix)
        sidecar = json.loads(sidecar_path.read_text())
        assert sidecar['shape'] == [shore.n_channels, 50]
        assert sidecar['atom_labels'][0] == [0, 0, 0]
