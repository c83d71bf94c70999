"""
Валидаторы параметров командной строки (callbacks для click)
"""
import math
import re

import click


class ScaleList:
    """
    Список масштабов r через запятую: "2,3,4"
    """
    def __init__(self, message='Масштабы должны быть неотрицательными числами через запятую'):
        self.message = message

    def __call__(self, ctx, param, value):
        if value is None:
            return None
        try:
            scales = [float(token) for token in value.split(',') if token.strip()]
        except ValueError:
            raise click.BadParameter(self.message)
        if not scales or any(not math.isfinite(r) or r < 0 for r in scales):
            raise click.BadParameter(self.message)
        if len(set(scales)) != len(scales):
            raise click.BadParameter(f'{self.message}; повторы недопустимы')
        return scales


class ShellSpec:
    """
    Оболочки и число направлений: "1000:12,2000:18"
    """
    PATTERN = re.compile(r'^\s*(\d+(\.\d*)?)\s*:\s*(\d+)\s*$')

    def __init__(self, message='Ожидается список b:count через запятую, например 1000:12,2000:18'):
        self.message = message

    def __call__(self, ctx, param, value):
        if value is None:
            return None
        spec = []
        for item in value.split(','):
            match = self.PATTERN.match(item)
            if not match:
                raise click.BadParameter(self.message)
            spec.append((float(match.group(1)), int(match.group(3))))
        return spec


class IndexList:
    """
    Явный список индексов каналов: "0,5,17"
    """
    def __init__(self, message='Индексы должны быть неотрицательными целыми через запятую'):
        self.message = message

    def __call__(self, ctx, param, value):
        if value is None:
            return None
        try:
            indices = [int(token) for token in value.split(',') if token.strip()]
        except ValueError:
            raise click.BadParameter(self.message)
        if not indices or any(i < 0 for i in indices):
            raise click.BadParameter(self.message)
        return indices


class PositiveNumber:
    """
    Число > 0 (или >= 0 при allow_zero)
    """
    def __init__(self, allow_zero=False, message=None):
        self.allow_zero = allow_zero
        self.message = message or ('Значение должно быть >= 0' if allow_zero else 'Значение должно быть > 0')

    def __call__(self, ctx, param, value):
        if value is None:
            return None
        if not math.isfinite(value) or value < 0 or (value == 0 and not self.allow_zero):
            raise click.BadParameter(self.message)
        return value


class EvenRadialOrder:
    """
    Радиальный порядок SHORE: четное целое >= 0
    """
    def __init__(self, message='Радиальный порядок должен быть четным целым >= 0'):
        self.message = message

    def __call__(self, ctx, param, value):
        if value is None:
            return None
        if value < 0 or value % 2:
            raise click.BadParameter(self.message)
        return value
