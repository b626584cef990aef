# src/__init__.py
"""Graphical (toric) models of correlated defaults and CDO tranche pricing"""

__version__ = "0.1.0"
__app_name__ = "toric-credit"
