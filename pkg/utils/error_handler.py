"""
Иерархия ошибок конвейера и их отображение в коды выхода CLI
"""
import logging
from functools import wraps


class DmriBootError(Exception):
    """Базовый класс для ошибок конвейера."""

    exit_code = 4

    def __init__(self, message, exit_code=None, error_code=None, details=None):
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        self.error_code = error_code or self.__class__.__name__
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self):
        """Преобразование в словарь для JSON отчета."""
        return {
            'error': self.error_code,
            'message': self.message,
            'exit_code': self.exit_code,
            'details': self.details
        }


class UsageError(DmriBootError):
    """Неверные параметры запуска."""
    exit_code = 1


class InputFormatError(DmriBootError):
    """Входной файл или массив не соответствует формату."""
    exit_code = 2


class GradientFormatError(InputFormatError):
    """Ошибка в таблице градиентов (bvals/bvecs)."""


class NiftiFormatError(InputFormatError):
    """Ошибка чтения или записи NIfTI-1."""


class DimensionMismatchError(InputFormatError):
    """Размеры объемов, маски или схемы не согласованы."""


class NumericalDegeneracyError(DmriBootError):
    """Вырожденная численная задача."""
    exit_code = 3


class DegenerateLeverageError(NumericalDegeneracyError):
    """h_ii ≈ 1: нормировка остатков делит на ноль."""


class SingularDictionaryError(NumericalDegeneracyError):
    """Столбцы словаря линейно зависимы."""


class InternalError(DmriBootError):
    """Непредвиденная внутренняя ошибка."""
    exit_code = 4


class ErrorLogger:
    """Однострочное логирование доменных ошибок."""

    def __init__(self, logger):
        self.logger = logger

    def log_error(self, error):
        """Логирование ошибки с кодом."""
        message = f"{error.error_code}: {error.message}"
        if error.details:
            message += f" | Details: {error.details}"
        if error.exit_code >= 4:
            self.logger.error(message, exc_info=True)
        else:
            self.logger.error(message)


def handle_errors(logger=None):
    """Декоратор: непредвиденные исключения превращаются в InternalError."""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except DmriBootError:
                raise
            except Exception as e:
                log = logger or logging.getLogger('dmriboot')
                log.error(f"Error in {func.__name__}: {str(e)}", exc_info=True)
                raise InternalError(
                    message=f"internal error: {e}",
                    details={'function': func.__name__}
                ) from e
        return wrapper
    return decorator
