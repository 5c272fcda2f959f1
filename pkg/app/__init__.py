# This file makes 'app' a Python package
__version__ = "0.1.0"
