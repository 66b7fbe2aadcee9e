"""Crowdsourced spectrum monitoring: virtual sensors, a coordination
backend, peer streaming, and a usage-based reward ledger."""

__version__ = "0.1.0"
