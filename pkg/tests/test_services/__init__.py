# tests/test_services/__init__.py
"""Service tests"""