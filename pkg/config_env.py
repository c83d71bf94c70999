"""
Конфигурация конвейера для разных окружений
"""
import json
import math
import os

from dotenv import load_dotenv

from utils.error_handler import InputFormatError, UsageError

load_dotenv()


class Config:
    """Базовая конфигурация."""

    # Бутстрап
    SCALES = (2.0, 3.0, 4.0)
    REPLICATES = 1
    SEED = 0
    COUPLE_SCALES = False
    CLIP_AT_ZERO = False

    # Базис SHORE
    RADIAL_ORDER = 6
    ZETA = 700.0
    TAU = 1.0 / (4.0 * math.pi ** 2)

    # Аппроксимация
    RIDGE = 0.0
    CENTER_RESIDUALS = False

    # Градиенты
    B0_THRESHOLD = 50.0
    SHELL_TOLERANCE = 50.0

    # Параллелизм: None -> число логических CPU
    THREADS = int(os.environ['DMRIBOOT_THREADS']) if os.environ.get('DMRIBOOT_THREADS') else None
    CHUNK_SIZE = 4096

    # Вывод
    OUTPUT_DTYPE = 'float32'

    # Logging
    LOG_LEVEL = os.environ.get('DMRIBOOT_LOG_LEVEL', 'INFO')
    LOG_TO_FILE = os.environ.get('DMRIBOOT_LOG_TO_FILE', 'false').lower() in ['true', 'on', '1']
    LOG_DIR = os.environ.get('DMRIBOOT_LOG_DIR') or 'logs'
    LOG_MAX_BYTES = 10 * 1024 * 1024  # 10MB
    LOG_BACKUP_COUNT = 10
    SLOW_STAGE_SECONDS = 60.0


class DevelopmentConfig(Config):
    """Конфигурация для разработки."""

    LOG_LEVEL = 'DEBUG'


class TestingConfig(Config):
    """Конфигурация для тестов."""

    LOG_LEVEL = 'WARNING'
    LOG_TO_FILE = False
    THREADS = 2
    # Маленькие блоки, чтобы тесты проходили через несколько блоков
    CHUNK_SIZE = 64


class ProductionConfig(Config):
    """Конфигурация для пакетной обработки."""

    LOG_LEVEL = 'WARNING'
    LOG_TO_FILE = True


# Словарь конфигураций
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': Config
}


def get_config(env=None):
    """
    Получить конфигурацию для окружения.

    Args:
        env: окружение (development, testing, production) или класс конфигурации

    Returns:
        класс конфигурации
    """
    if env is not None and isinstance(env, type) and issubclass(env, Config):
        return env

    if env is None:
        env = os.environ.get('DMRIBOOT_ENV', 'default')

    return config.get(env, config['default'])


# Параметры, которые каждая команда принимает из JSON конфигурации,
# и соответствующие атрибуты Config
COMMAND_PARAMETERS = {
    'phantom': {
        'dims': None, 'seed': 'SEED', 'noise': None, 'sigma': None, 's0': None,
        'radial_order': 'RADIAL_ORDER', 'zeta': 'ZETA', 'tau': 'TAU', 'in_span': None,
        'b0_threshold': 'B0_THRESHOLD',
    },
    'basis': {
        'radial_order': 'RADIAL_ORDER', 'zeta': 'ZETA', 'tau': 'TAU',
        'b0_threshold': 'B0_THRESHOLD',
    },
    'fit': {
        'radial_order': 'RADIAL_ORDER', 'zeta': 'ZETA', 'tau': 'TAU', 'ridge': 'RIDGE',
        'center_residuals': 'CENTER_RESIDUALS', 'b0_threshold': 'B0_THRESHOLD',
        'output_dtype': 'OUTPUT_DTYPE',
    },
    'augment': {
        'scales': 'SCALES', 'replicates': 'REPLICATES', 'seed': 'SEED',
        'radial_order': 'RADIAL_ORDER', 'zeta': 'ZETA', 'tau': 'TAU', 'ridge': 'RIDGE',
        'center_residuals': 'CENTER_RESIDUALS', 'clip_at_zero': 'CLIP_AT_ZERO',
        'couple_scales': 'COUPLE_SCALES', 'b0_threshold': 'B0_THRESHOLD',
        'output_dtype': 'OUTPUT_DTYPE', 'preset': None,
    },
    'subsample': {
        'shells': None, 'b0_count': None, 'strategy': None, 'indices': None,
        'preset': None, 'b0_threshold': 'B0_THRESHOLD',
        'shell_tolerance': 'SHELL_TOLERANCE',
    },
    'dice': {
        'labels': None, 'worst': None,
    },
    'stats': {
        'radial_order': 'RADIAL_ORDER', 'zeta': 'ZETA', 'tau': 'TAU', 'ridge': 'RIDGE',
        'b0_threshold': 'B0_THRESHOLD',
    },
}


def load_json_config(path):
    """Загрузить JSON конфигурацию (или манифест предыдущего запуска)."""
    if path is None:
        return {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputFormatError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise InputFormatError(f"config {path} must be a JSON object")
    return data


def resolve_parameters(command, config_class, json_config=None, flags=None):
    """
    Собрать параметры команды: флаги > JSON конфигурация > значения по умолчанию.

    JSON может быть плоским ({"scales": [2, 3, 4]}) или разбитым по командам
    ({"augment": {...}}). Манифест запуска тоже подходит: его параметры
    лежат в разделе "parameters".
    """
    allowed = COMMAND_PARAMETERS[command]
    json_config = dict(json_config or {})
    flags = flags or {}

    if 'parameters' in json_config and isinstance(json_config['parameters'], dict):
        json_config = json_config['parameters']

    section = json_config.get(command)
    if isinstance(section, dict):
        json_values = section
    else:
        json_values = {k: v for k, v in json_config.items() if k not in COMMAND_PARAMETERS}

    unknown = sorted(set(json_values) - set(allowed))
    if unknown:
        raise UsageError(
            f"unknown config keys for '{command}': {', '.join(unknown)}",
            details={'allowed': sorted(allowed)}
        )

    resolved = {}
    for key, attribute in allowed.items():
        value = getattr(config_class, attribute) if attribute else None
        if key in json_values:
            value = json_values[key]
        if flags.get(key) is not None:
            value = flags[key]
        resolved[key] = value

    if resolved.get('scales') is not None:
        resolved['scales'] = [float(s) for s in resolved['scales']]

    return resolved
