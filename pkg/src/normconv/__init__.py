"""Normal-approximation toolkit for functionals of Gaussian and Levy-driven processes."""
__version__ = "0.1.0"
