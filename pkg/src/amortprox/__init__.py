"""
amortprox - Amortized proximal optimization

Online meta-learning of learning rates and Kronecker-structured preconditioners,
with second-order reference oracles and a desk-scale benchmark harness.
"""

__version__ = "0.1.0"


__all__ = [
    "__version__",
]
