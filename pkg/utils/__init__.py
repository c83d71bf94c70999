"""
Утилиты общего назначения
"""

# Импортируем утилиты для удобного использования
from .error_handler import (
    DmriBootError,
    UsageError,
    InputFormatError,
    GradientFormatError,
    NiftiFormatError,
    DimensionMismatchError,
    NumericalDegeneracyError,
    DegenerateLeverageError,
    SingularDictionaryError,
    InternalError,
    ErrorLogger,
    handle_errors,
)
from .logger import setup_logging, log_execution_time, StageTimer
from .monitoring import SystemMonitor, resolve_thread_count
