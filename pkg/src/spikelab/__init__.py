"""Fluctuations of outlier eigenvalues in spiked sample covariance models.

Submodules: ``spectra`` (Marčenko–Pastur analytics), ``model`` (spiked data),
``linalg`` (eigen-solvers and resolvents), ``limits`` (limit laws),
``sesquiform`` (CLT for random forms), ``montecarlo`` (replication harness),
``infer`` (spike estimation) and ``cli``.
"""

from __future__ import annotations

from .errors import (
    CriticalIntervalError,
    DimensionError,
    DomainError,
    MomentError,
    ReplicationError,
    SpikelabError,
)

__version__ = "0.1.0"

__all__ = [
    "CriticalIntervalError",
    "DimensionError",
    "DomainError",
    "MomentError",
    "ReplicationError",
    "SpikelabError",
    "__version__",
]
