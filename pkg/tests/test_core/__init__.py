# tests/test_core/__init__.py
"""Core model tests"""
