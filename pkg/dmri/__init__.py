"""
dmriboot: масштабированный остаточный бутстрап для аугментации dMRI
"""
__version__ = '0.1.0'
