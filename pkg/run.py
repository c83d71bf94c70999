#!/usr/bin/env python
"""
Запуск dmriboot: python run.py <команда> [опции]
"""
from app import main

if __name__ == '__main__':
    main()
