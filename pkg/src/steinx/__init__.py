"""Extension operators on Lipschitz domains and generalized Morrey norms."""

__version__ = "0.1.0"
