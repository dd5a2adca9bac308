"""Exception types shared across the package."""

from __future__ import annotations


class SpikelabError(Exception):
    """Base class for all package errors."""


class DomainError(SpikelabError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class CriticalIntervalError(DomainError):
    """A spike lies inside the critical interval and has no outlier limit."""

    def __init__(self, alpha: float, lo: float, hi: float):
        self.alpha = alpha
        self.interval = (lo, hi)
        super().__init__(
            f"spike alpha={alpha:g} lies inside the critical interval "
            f"[{lo:.3f}, {hi:.3f}]"
        )


class DimensionError(SpikelabError, ValueError):
    """Array shapes or model dimensions are inconsistent."""


class MomentError(SpikelabError, ValueError):
    """A moment table needed for covariance assembly is missing or invalid."""


class ReplicationError(SpikelabError, RuntimeError):
    """A Monte Carlo replication failed; carries the offending seed."""

    def __init__(self, rep: int, seed: int, cause: BaseException):
        self.rep = rep
        self.seed = seed
        super().__init__(f"replication {rep} (seed {seed}) failed: {cause!r}")
