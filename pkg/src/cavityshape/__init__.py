"""Maxwell cavity eigenvalues on perturbed balls."""

__version__ = "0.1.0"
