"""
Сведения о хосте для манифеста запуска и число рабочих потоков
"""
import logging
from datetime import datetime, timezone

import psutil

logger = logging.getLogger('dmriboot.monitoring')


class SystemMonitor:
    """Мониторинг системных ресурсов."""

    @staticmethod
    def get_cpu_count() -> int:
        """Число логических CPU (не меньше 1)."""
        return psutil.cpu_count(logical=True) or 1

    @staticmethod
    def get_memory_usage() -> dict:
        """Получить использование памяти."""
        memory = psutil.virtual_memory()
        return {
            'total': memory.total,
            'available': memory.available,
            'percent': memory.percent,
        }

    @staticmethod
    def get_host_info() -> dict:
        """Сводка для манифеста."""
        memory = SystemMonitor.get_memory_usage()
        return {
            'cpu_count': SystemMonitor.get_cpu_count(),
            'memory_total': memory['total'],
            'timestamp': datetime.now(timezone.utc).isoformat(),
        }


def resolve_thread_count(threads=None):
    """Число рабочих потоков: явное значение или все логические CPU."""
    if threads is None:
        threads = SystemMonitor.get_cpu_count()
    threads = int(threads)
    if threads < 1:
        threads = 1
    logger.debug(f"Using {threads} worker thread(s)")
    return threads
