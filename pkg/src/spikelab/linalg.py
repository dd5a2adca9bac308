"""Hermitian eigendecomposition and resolvent statistics of the bulk block."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class EigenSample:
    """Eigenvalues sorted in descending order, with optional eigenvectors as columns."""

    values: np.ndarray
    vectors: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)


def _check_hermitian(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
    if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
        raise DomainError("matrix is not Hermitian within tolerance")


def hermitian_eigs(matrix: np.ndarray, vectors: bool = False, meta: dict | None = None) -> EigenSample:
    a = np.asarray(matrix)
    _check_hermitian(a)
    if vectors:
        w, v = np.linalg.eigh(a)
        return EigenSample(w[::-1].copy(), v[:, ::-1].copy(), dict(meta or {}))
    w = np.linalg.eigvalsh(a)
    return EigenSample(w[::-1].copy(), None, dict(meta or {}))


class ResolventStats(NamedTuple):
    tr_a: float
    tr_aa: float
    sum_aii_sq: float


def resolvent_stats(x2: np.ndarray, lam: float) -> ResolventStats:
    """Normalised traces of ``A = X2* (lam I - X2 X2*)^{-1} X2``.

    Returns ``tr A / n``, ``tr A A* / n`` and ``sum_i a_ii^2 / n``. Only the
    ``p x p`` matrix ``X2 X2*`` is decomposed; ``a_ii`` is the quadratic form
    of column ``i`` in the resolvent.
    """
    x2 = np.asarray(x2)
    n = x2.shape[1]
    beta, v = np.linalg.eigh(x2 @ x2.conj().T)
    if beta[0] <= lam <= beta[-1]:
        raise DomainError(
            f"lambda={lam:g} lies inside the spectrum [{beta[0]:.6g}, {beta[-1]:.6g}] of X2 X2*"
        )
    g = 1.0 / (lam - beta)
    tr_a = float(np.sum(beta * g)) / n
    tr_aa = float(np.sum((beta * g) ** 2)) / n
    w = v.conj().T @ x2
    a_diag = np.real(np.sum(np.abs(w) ** 2 * g[:, None], axis=0))
    return ResolventStats(tr_a, tr_aa, float(np.sum(a_diag**2)) / n)


def resolvent_matrix(x2: np.ndarray, lam: float) -> np.ndarray:
    """Explicit ``n x n`` matrix ``A``; only for small problems and cross-checks."""
    x2 = np.asarray(x2)
    p = x2.shape[0]
    return x2.conj().T @ np.linalg.solve(lam * np.eye(p) - x2 @ x2.conj().T, x2)
