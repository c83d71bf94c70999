"""
Сквозные проверки свойств конвейера на синтетических данных
"""
import numpy as np
import pytest

from dmri.bootstrap import BootstrapPlan, bootstrap_noise, bootstrap_scan, estimate_noise_sigma
from dmri.fitting import FitStore, fit_volume
from dmri.gradients import GradientScheme
from dmri.metrics import snr_report
from dmri.phantom import add_noise, embed_dw_channels, generate_in_span
from dmri.streams import VoxelStream
from dmri.volumes import Mask, Volume4D, gather_channels

SIGMA = 10.0


@pytest.fixture(scope='module')
def noisy_fit(shore, operator):
    """In-span фантом 20x20x1 (108000 значений) с гауссовым шумом σ = 10"""
    dims = (20, 20, 1)
    clean = generate_in_span(shore, dims, seed=31, coefficient_scale=100.0)
    noisy = add_noise(clean, SIGMA, seed=32, model='gaussian')
    store = fit_volume(operator, shore, noisy, Mask.full(dims), threads=2, chunk_size=64)
    return noisy, store


@pytest.mark.slow
class TestResidualOrthogonality:
    """Остатки ортогональны столбцам словаря"""

    def test_full_phantom(self, shore, operator):
        dims = (32, 32, 32)
        volume = generate_in_span(shore, dims, seed=1, coefficient_scale=100.0)
        volume = add_noise(volume, 5.0, seed=2)
        store = fit_volume(operator, shore, volume, Mask.full(dims))
        projection = np.linalg.norm(store.raw_residuals @ shore.matrix, axis=1)
        signal_norm = np.linalg.norm(volume.voxel_signals(Mask.full(dims)), axis=1)
        assert np.all(projection < 1e-6 * signal_norm)


@pytest.mark.slow
class TestVarianceCorrection:
    """Скорректированные остатки имеют дисперсию шума"""

    def test_corrected_variance(self, noisy_fit):
        _, store = noisy_fit
        assert store.corrected_residuals.size >= 100_000
        variance = float(np.mean(store.corrected_residuals ** 2))
        assert (0.95 * SIGMA) ** 2 <= variance <= (1.05 * SIGMA) ** 2

    def test_raw_variance_is_deflated(self, noisy_fit, operator):
        """Сырые остатки меньше σ² примерно в (1 − N_a/N_d) раз"""
        _, store = noisy_fit
        ratio = float(np.mean(store.raw_residuals ** 2)) / SIGMA ** 2
        expected = 1.0 - operator.n_atoms / operator.n_channels
        assert abs(ratio - expected) <= 0.02
        assert ratio < 0.9


@pytest.mark.slow
class TestScaleLinearity:
    """Разброс бутстрапа растет линейно по r"""

    def test_slope_and_intercept(self, noisy_fit, hcp_scheme):
        noisy, store = noisy_fit
        scan = embed_dw_channels(noisy, hcp_scheme, b0_value=100.0)
        plan = BootstrapPlan(scales=(1.0, 2.0, 3.0, 4.0), seed=7, couple_scales=True)
        boots = bootstrap_scan(scan, hcp_scheme, store, plan, threads=2, chunk_size=64)
        fitted = store.to_volumes()['fitted'].data
        scales = np.array([boot.scale for boot in boots])
        spreads = np.array([
            np.std(gather_channels(boot.volume, hcp_scheme.dw_indices).data - fitted) for boot in boots
        ])
        slope, intercept = np.polyfit(scales, spreads, 1)
        sigma_hat = estimate_noise_sigma(store).pooled
        assert abs(slope - sigma_hat) <= 0.05 * sigma_hat
        assert abs(intercept) < 0.05 * sigma_hat

    def test_pinned_draws_exact(self, noisy_fit):
        """(ỹ_r − ŷ) == r·(ỹ_1 − ŷ) при одинаковых выборках"""
        _, store = noisy_fit
        fit = store.get(3, 4, 0)
        base = bootstrap_noise(fit, 1.0, VoxelStream(7, voxel=83))
        for r in (2.0, 3.0, 4.0):
            assert np.array_equal(bootstrap_noise(fit, r, VoxelStream(7, voxel=83)), r * base)


class TestZeroScale:
    """r = 0 воспроизводит аппроксимацию"""

    def test_identity(self, noisy_fit, hcp_scheme):
        noisy, store = noisy_fit
        scan = embed_dw_channels(noisy, hcp_scheme, b0_value=100.0)
        boot = bootstrap_scan(scan, hcp_scheme, store, BootstrapPlan(scales=(0.0,)))[0]
        dw = gather_channels(boot.volume, hcp_scheme.dw_indices).data
        assert dw.tobytes() == store.to_volumes()['fitted'].data.tobytes()

    def test_single_b0_passthrough(self):
        """Один b0 канал копируется бит в бит"""
        scheme = GradientScheme.from_arrays([0.0, 1000.0, 1000.0], [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
        rng = np.random.default_rng(4)
        scan = Volume4D(data=rng.normal(100.0, 5.0, size=(3, 3, 3, 3)))
        n_vox = 27
        store = FitStore(
            spatial_dims=(3, 3, 3), linear_indices=np.arange(n_vox),
            coefficients=np.zeros((n_vox, 1)), fitted=np.zeros((n_vox, 2)),
            corrected_residuals=rng.normal(size=(n_vox, 2)), raw_residuals=np.zeros((n_vox, 2)),
        )
        boot = bootstrap_scan(scan, scheme, store, BootstrapPlan(scales=(3.0,)))[0]
        assert boot.volume.data[..., 0].tobytes() == scan.data[..., 0].tobytes()


class TestBootstrapSnr:
    """SNR бутстрап-скана падает в r раз"""

    def test_double_scale_halves_snr(self, shore, operator, hcp_scheme):
        """r = 2 против r = 1: отношение SNR около 1/2"""
        dims = (20, 20, 1)
        clean = generate_in_span(shore, dims, seed=41, coefficient_scale=100.0)
        # постоянный вклад атома (0, 0, 0) держит средний сигнал далеко от нуля
        atom = shore.matrix[:, 0]
        clean = clean.with_data(clean.data + 1000.0 * atom / np.abs(atom).min())
        noisy = add_noise(clean, SIGMA, seed=42, model='gaussian')
        mask = Mask.full(dims)
        store = fit_volume(operator, shore, noisy, mask, threads=2, chunk_size=64)
        scan = embed_dw_channels(noisy, hcp_scheme, b0_value=1000.0)
        boots = bootstrap_scan(scan, hcp_scheme, store, BootstrapPlan(scales=(1.0, 2.0), seed=9))
        fitted = store.to_volumes()['fitted'].data

        snr = []
        for boot in boots:
            dw = gather_channels(boot.volume, hcp_scheme.dw_indices)
            sigma = float(np.std(dw.data - fitted))
            snr.append(snr_report(dw, mask, sigma)['mean'])
        assert abs(snr[1] / snr[0] - 0.5) <= 0.05


@pytest.mark.slow
class TestB0Bootstrap:
    """Разброс b0 каналов масштабируется в r раз"""

    def test_spread(self):
        n_b0, n_dw = 18, 3
        scheme = GradientScheme.from_arrays(
            [0.0] * n_b0 + [1000.0] * n_dw,
            [[0, 0, 0]] * n_b0 + np.eye(3).tolist(),
        )
        dims = (100, 100, 10)
        n_vox = int(np.prod(dims))
        rng = np.random.default_rng(18)
        scan = Volume4D(data=rng.normal(100.0, 5.0, size=dims + (scheme.n_channels,)))
        store = FitStore(
            spatial_dims=dims, linear_indices=np.arange(n_vox),
            coefficients=np.zeros((n_vox, 1)), fitted=np.zeros((n_vox, n_dw)),
            corrected_residuals=np.zeros((n_vox, n_dw)), raw_residuals=np.zeros((n_vox, n_dw)),
        )
        boot = bootstrap_scan(scan, scheme, store, BootstrapPlan(scales=(3.0,), seed=5))[0]

        b0 = scan.data[..., :n_b0]
        mean = b0.mean(axis=-1, keepdims=True)
        spread = np.std(boot.volume.data[..., :n_b0] - mean)
        expected = 3.0 * np.std(b0 - mean)
        assert abs(spread - expected) <= 0.1 * expected


@pytest.mark.slow
class TestAugmentCommandDeterminism:
    """augment с фиксированным seed дает одинаковые байты при любом числе потоков"""

    def test_threads(self, cli_run, phantom_dir, tmp_path):
        outputs = []
        for threads in (1, 4, 8):
            out = tmp_path / f't{threads}'
            code = cli_run('--threads', threads, 'augment', '--dwi', phantom_dir / 'signals.nii',
                           '--bvals', phantom_dir / 'scheme.bvals', '--bvecs', phantom_dir / 'scheme.bvecs',
                           '--mask', phantom_dir / 'mask.nii', '--out-dir', out, '--seed', '2024')
            assert code == 0
            outputs.append(out)
        names = sorted(p.name for p in outputs[0].glob('boot_*.nii'))
        assert names == ['boot_r2_rep0.nii', 'boot_r3_rep0.nii', 'boot_r4_rep0.nii']
        for name in names:
            reference = (outputs[0] / name).read_bytes()
            assert (outputs[1] / name).read_bytes() == reference
            assert (outputs[2] / name).read_bytes() == reference
