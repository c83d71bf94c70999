"""
Логирование конвейера dmriboot
"""
import logging
import logging.handlers
import time
from contextlib import contextmanager
from pathlib import Path


LOGGER_NAME = 'dmriboot'

FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def setup_logging(config, level=None):
    """Инициализация логирования по объекту конфигурации."""

    log_level = level or getattr(config, 'LOG_LEVEL', 'INFO')

    formatter = logging.Formatter(FORMAT, datefmt=DATE_FORMAT)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)
    logger.propagate = False

    # Очистка существующих handlers при повторном вызове
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers = []

    # Консоль: stderr, stdout остается для JSON отчетов
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if getattr(config, 'LOG_TO_FILE', False):
        log_dir = Path(config.LOG_DIR)
        log_dir.mkdir(parents=True, exist_ok=True)

        file_handler = logging.handlers.RotatingFileHandler(
            log_dir / 'dmriboot.log',
            maxBytes=config.LOG_MAX_BYTES,
            backupCount=config.LOG_BACKUP_COUNT
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

        error_handler = logging.handlers.RotatingFileHandler(
            log_dir / 'errors.log',
            maxBytes=config.LOG_MAX_BYTES,
            backupCount=config.LOG_BACKUP_COUNT
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(formatter)
        logger.addHandler(error_handler)

    return logger


class StageTimer:
    """Накопитель длительностей этапов для манифеста."""

    def __init__(self):
        self.durations = {}

    def record(self, name, seconds):
        self.durations[name] = self.durations.get(name, 0.0) + seconds

    def as_dict(self):
        return {name: round(seconds, 6) for name, seconds in self.durations.items()}


@contextmanager
def log_execution_time(logger, operation_name, timer=None, warn_after=60.0):
    """Контекстный менеджер для логирования времени выполнения."""
    start_time = time.perf_counter()
    try:
        yield
    finally:
        duration = time.perf_counter() - start_time
        if timer is not None:
            timer.record(operation_name, duration)
        if duration > warn_after:
            logger.warning(f"{operation_name} took {duration:.2f}s")
        else:
            logger.debug(f"{operation_name} took {duration * 1000:.2f}ms")
