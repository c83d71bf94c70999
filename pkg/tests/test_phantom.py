"""
Тесты для синтетических фантомов
"""
import numpy as np
import pytest

from dmri.fitting import build_fit_operator, fit_volume
from dmri.gradients import GradientScheme
from dmri.phantom import (
    Compartment,
    PhantomSpec,
    add_noise,
    embed_dw_channels,
    generate,
    generate_in_span,
    phantom_mask,
    voxel_signal,
)
from dmri.volumes import Mask, Volume4D
from utils.error_handler import UsageError


@pytest.fixture
def isotropic_spec():
    """Изотропная диффузия D = 1e-3"""
    return PhantomSpec(
        dims=(2, 2, 2),
        compartments=(Compartment(axial=1e-3, radial=1e-3, fraction=1.0),),
        s0=100.0,
    )


class TestVoxelSignal:
    """Тесты бесшумного сигнала"""

    def test_isotropic_attenuation(self, isotropic_spec, small_scheme):
        """100·exp(−1) при b = 1000"""
        signal = voxel_signal(isotropic_spec, small_scheme)
        assert signal[0] == 100.0
        assert signal[1] == pytest.approx(36.788, abs=1e-3)
        assert signal[2] == pytest.approx(signal[1], abs=1e-12)

    def test_anisotropic_direction(self, small_scheme):
        """Вдоль волокна сигнал затухает сильнее, чем поперек"""
        spec = PhantomSpec(dims=(1, 1, 1), compartments=(Compartment(direction=(1, 0, 0)),))
        signal = voxel_signal(spec, small_scheme)
        assert signal[1] == pytest.approx(100.0 * np.exp(-1.7), rel=1e-12)
        assert signal[2] == pytest.approx(100.0 * np.exp(-0.3), rel=1e-12)

    def test_antipodal_symmetry(self):
        """Направления u и −u дают один сигнал"""
        scheme = GradientScheme.from_arrays([0, 1000, 1000], [[0, 0, 0], [0.6, 0.8, 0], [-0.6, -0.8, 0]])
        signal = voxel_signal(PhantomSpec(dims=(1, 1, 1)), scheme)
        assert signal[1] == pytest.approx(signal[2], abs=1e-12)


class TestPhantomSpec:
    """Тесты проверки описания фантома"""

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(UsageError):
            PhantomSpec(compartments=(Compartment(fraction=0.5),))

    def test_unknown_noise(self):
        with pytest.raises(UsageError):
            PhantomSpec(noise='poisson')

    def test_negative_sigma(self):
        with pytest.raises(UsageError):
            PhantomSpec(sigma=-1.0)

    def test_zero_direction(self):
        with pytest.raises(UsageError):
            Compartment(direction=(0, 0, 0))

    def test_dict_round_trip(self):
        spec = PhantomSpec(dims=(4, 3, 2), noise='rician', sigma=1.5, seed=9)
        assert PhantomSpec.from_dict(spec.to_dict()) == spec


class TestNoise:
    """Тесты шума"""

    def test_zero_sigma_bitwise(self, isotropic_spec, small_scheme):
        """σ = 0: зашумленный объем совпадает с бесшумным бит в бит"""
        spec = PhantomSpec(dims=(3, 3, 3), compartments=isotropic_spec.compartments,
                           noise='gaussian', sigma=0.0)
        result = generate(spec, small_scheme)
        assert result.signals.data.tobytes() == result.noise_free.data.tobytes()

    def test_gaussian_statistics(self):
        """Выборочное стандартное отклонение близко к σ"""
        volume = Volume4D(data=np.full((20, 20, 20, 3), 50.0))
        noisy = add_noise(volume, 2.0, seed=1, model='gaussian')
        noise = noisy.data - volume.data
        assert abs(noise.mean()) < 0.05
        assert noise.std() == pytest.approx(2.0, rel=0.03)

    def test_rician_non_negative(self):
        """Райсовский шум неотрицателен; при нулевом сигнале среднее σ·sqrt(π/2)"""
        volume = Volume4D(data=np.zeros((20, 20, 20, 2)))
        noisy = add_noise(volume, 1.0, seed=2, model='rician')
        assert noisy.data.min() >= 0.0
        assert noisy.data.mean() == pytest.approx(np.sqrt(np.pi / 2.0), rel=0.03)

    def test_seeded(self):
        volume = Volume4D(data=np.zeros((4, 4, 4, 2)))
        first = add_noise(volume, 1.0, seed=3)
        assert np.array_equal(first.data, add_noise(volume, 1.0, seed=3).data)
        assert not np.array_equal(first.data, add_noise(volume, 1.0, seed=4).data)

    def test_unknown_model(self):
        with pytest.raises(UsageError):
            add_noise(Volume4D(data=np.zeros((1, 1, 1, 1))), 1.0, seed=0, model='laplace')


class TestGenerate:
    """Тесты генерации фантома"""

    def test_sphere_mask(self, small_scheme):
        """Вне сферической маски сигнал нулевой"""
        spec = PhantomSpec(dims=(7, 7, 7), mask_shape='sphere')
        result = generate(spec, small_scheme)
        outside = ~result.mask.data
        assert outside.any()
        assert np.all(result.noise_free.data[outside] == 0.0)
        assert result.mask.data[3, 3, 3]

    def test_full_mask(self):
        assert phantom_mask((2, 3, 4)).count == 24

    def test_in_span_fits_exactly(self, shore, operator):
        """Сигналы из оболочки D аппроксимируются без остатка"""
        volume = generate_in_span(shore, (2, 2, 2), seed=4)
        store = fit_volume(operator, shore, volume, Mask.full((2, 2, 2)))
        scale = np.abs(volume.data).max()
        assert np.abs(store.raw_residuals).max() <= 1e-8 * scale
        assert np.abs(store.corrected_residuals).max() <= 1e-8 * scale

    def test_embed_dw_channels(self, shore, hcp_scheme):
        """DW каналы на местах схемы, b0 каналы постоянны"""
        dw = generate_in_span(shore, (1, 1, 2), seed=1)
        full = embed_dw_channels(dw, hcp_scheme, 1000.0)
        assert full.n_channels == hcp_scheme.n_channels
        assert np.all(full.data[..., hcp_scheme.b0_indices] == 1000.0)
        assert np.array_equal(full.data[..., hcp_scheme.dw_indices], dw.data)

    def test_embed_channel_mismatch(self, small_scheme):
        with pytest.raises(UsageError):
            embed_dw_channels(Volume4D(data=np.zeros((1, 1, 1, 5))), small_scheme, 100.0)


def test_ridge_operator_on_in_span(shore):
    """С ridge остатки по оболочке D малы, но не нулевые"""
    volume = generate_in_span(shore, (1, 1, 1), seed=2)
    store = fit_volume(build_fit_operator(shore, ridge=1e-6), shore, volume, Mask.full((1, 1, 1)))
    assert np.all(np.isfinite(store.corrected_residuals))
