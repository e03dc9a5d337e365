"""
cascade-bench
Cost-aware cascade agent runner and benchmark harness
"""
__version__ = "0.1.0"
