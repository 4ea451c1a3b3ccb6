"""Galerkin truncation of bosonic Lindblad equations in the Fock basis."""
__version__ = "0.1.0"
