"""Interval probability bounds propagation over uncertain rules."""

from ._duck import (
    DuckError,
    KnowledgeBase,
    OracleReport,
    Saturation,
    normalize,
    prc_bounds,
    prci_forward,
    prci_update,
    rc_bounds,
)

__all__ = [
    "DuckError",
    "KnowledgeBase",
    "OracleReport",
    "Saturation",
    "normalize",
    "prc_bounds",
    "prci_forward",
    "prci_update",
    "rc_bounds",
]
