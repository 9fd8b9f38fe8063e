"""Firmware tamper detection from instruction-sequence counters, plus an
islanded microgrid simulator showing what the tampering does to the grid."""

__version__ = "0.1.0"
