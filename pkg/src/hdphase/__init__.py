"""Haplotype phasing with hierarchical Dirichlet process mixtures."""

__version__ = "0.1.0"
