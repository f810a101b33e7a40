"""Cepstral CCA Package
Canonical correlation analysis between subject log-spectra and static outcomes.
"""
__version__ = "0.1.0"
