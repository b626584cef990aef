# tests/__init__.py
"""Test suite for toric-credit"""
