"""Numerical lab for posterior contraction under Gaussian process priors."""

__version__ = "0.1.0"
