"""
Конфигурация для pytest
"""
import numpy as np
import pytest
from click.testing import CliRunner

from app import create_cli, run
from config_env import TestingConfig
from dmri.basis import shore_dictionary
from dmri.fitting import build_fit_operator
from dmri.gradients import GradientScheme, hcp_like_scheme
from dmri.volumes import Volume4D


@pytest.fixture(scope='session')
def hcp_scheme():
    """270 DW (3 оболочки по 90) + 18 b0"""
    return hcp_like_scheme()


@pytest.fixture(scope='session')
def shore(hcp_scheme):
    """Словарь SHORE порядка 6 на HCP-подобной схеме"""
    return shore_dictionary(hcp_scheme, radial_order=6, zeta=700.0)


@pytest.fixture(scope='session')
def operator(shore):
    """Оператор аппроксимации без регуляризации"""
    return build_fit_operator(shore, ridge=0.0)


@pytest.fixture
def small_scheme():
    """1 b0 + 2 DW канала"""
    return GradientScheme.from_arrays(
        [0.0, 1000.0, 1000.0],
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    )


@pytest.fixture
def random_volume():
    """Случайный объем 3x4x5x6"""
    rng = np.random.default_rng(7)
    return Volume4D(data=rng.normal(size=(3, 4, 5, 6)).astype(np.float32), spacing=(1.25, 1.25, 1.25))


@pytest.fixture
def config():
    """Тестовая конфигурация"""
    return TestingConfig


@pytest.fixture
def cli_run():
    """Запуск CLI в тестовом окружении; возвращает код выхода"""
    def invoke(*args):
        return run(['--env', 'testing', *[str(a) for a in args]])
    return invoke


@pytest.fixture
def runner():
    """Тестовый CLI runner"""
    return CliRunner()


@pytest.fixture
def cli():
    """Группа команд"""
    return create_cli()


@pytest.fixture
def phantom_dir(tmp_path, cli_run):
    """Маленький фантом с шумом, записанный командой phantom"""
    out = tmp_path / 'phantom'
    code = cli_run('phantom', '--out-dir', out, '--dims', '6,5,4', '--noise', 'gaussian',
                   '--sigma', '2', '--seed', '11')
    assert code == 0
    return out
