"""
Инициализация тестового пакета
"""
