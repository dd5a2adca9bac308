"""CLT machinery for random sesquilinear and quadratic forms ``X* A Y``.

Moment tables follow one convention throughout: for pair index ``l`` the
form is built from ``X(l)`` and ``Y(l)``, and every table stores the
expectation of the product written in its name, e.g. ``xy[l, l'] =
E[conj(x_l) y_l']`` and ``fourth[l, l'] = E[conj(x_l) y_l conj(x_l') y_l']``.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, MomentError


class FormStats(NamedTuple):
    """Finite-n weight statistics: mean squared diagonal, ``tr A^2 / n``, ``tr A A^T / n``."""

    omega: float
    theta: float
    tau: complex


def form_stats(a: np.ndarray) -> FormStats:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"weight matrix must be square, got {a.shape}")
    n = a.shape[0]
    d = np.real(np.diag(a))
    omega = float(np.sum(d * d)) / n
    theta = float(np.sum(np.abs(a) ** 2)) / n
    tau = complex(np.sum(a * a)) / n
    if np.isrealobj(a) or abs(tau.imag) == 0.0:
        tau = tau.real
    return FormStats(omega, theta, tau)


@dataclass(frozen=True)
class ZVector:
    values: np.ndarray
    n: int
    seed: int | None = None


def z_vector(x: np.ndarray, y: np.ndarray, a: np.ndarray, rho) -> ZVector:
    """Centred, ``sqrt(n)``-scaled forms ``(X(l)* A Y(l) - rho_l tr A) / sqrt(n)``.

    ``x`` and ``y`` are ``K x n``; row ``l`` holds ``X(l)``.
    """
    x = np.atleast_2d(np.asarray(x))
    y = np.atleast_2d(np.asarray(y))
    a = np.asarray(a)
    rho = np.atleast_1d(np.asarray(rho))
    if x.shape != y.shape:
        raise DimensionError(f"X and Y shapes differ: {x.shape} vs {y.shape}")
    k, n = x.shape
    if a.shape != (n, n):
        raise DimensionError(f"A must be {n}x{n}, got {a.shape}")
    if rho.shape != (k,):
        raise DimensionError(f"rho must have length {k}, got {rho.shape}")
    forms = np.sum((x.conj() @ a) * y, axis=1)
    z = (forms - rho * np.trace(a)) / math.sqrt(n)
    if np.isrealobj(z) or not np.any(np.imag(z)):
        z = np.real(z)
    return ZVector(z, n)


Var = tuple[str, int, bool]  # ("x" | "y", pair index, conjugated)


@dataclass(frozen=True)
class MomentSpec:
    """Population moments of the pair vectors ``(x_l, y_l)``, ``l = 1..K``."""

    rho: np.ndarray
    fourth: np.ndarray
    xy: np.ndarray
    xx: np.ndarray
    yy: np.ndarray
    abs_x4: np.ndarray
    abs_y4: np.ndarray
    xbar_x: np.ndarray
    ybar_y: np.ndarray
    fourth_h: np.ndarray | None = None  # E[conj(x_l) y_l x_l' conj(y_l')]
    xbar_ybar: np.ndarray | None = None  # E[conj(x_l) conj(y_l')]
    stderr: dict[str, np.ndarray] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        k = len(self.rho)
        for name in ("fourth", "xy", "xx", "yy", "abs_x4", "abs_y4", "xbar_x", "ybar_y"):
            arr = getattr(self, name)
            if arr is None:
                raise MomentError(f"moment table {name!r} is missing")
            if np.shape(arr) != (k, k):
                raise MomentError(f"moment table {name!r} must be {k}x{k}, got {np.shape(arr)}")
            if not np.all(np.isfinite(arr)):
                raise MomentError(f"moment table {name!r} has non-finite entries")
        for name in ("fourth_h", "xbar_ybar"):
            arr = getattr(self, name)
            if arr is not None and (np.shape(arr) != (k, k) or not np.all(np.isfinite(arr))):
                raise MomentError(f"moment table {name!r} must be a finite {k}x{k} array")

    @property
    def K(self) -> int:
        return len(self.rho)

    @property
    def sigma_x2(self) -> np.ndarray:
        return np.real(np.diag(self.xbar_x))

    @property
    def sigma_y2(self) -> np.ndarray:
        return np.real(np.diag(self.ybar_y))

    @property
    def is_real(self) -> bool:
        return all(
            np.isrealobj(t) or not np.any(np.imag(t))
            for t in (self.rho, self.fourth, self.xy, self.xx, self.yy, self.xbar_x, self.ybar_y)
        )

    @classmethod
    def from_functions(
        cls,
        k: int,
        e2: Callable[[Var, Var], complex],
        e4: Callable[[Var, Var, Var, Var], complex],
    ) -> MomentSpec:
        """Tabulate the moments from second- and fourth-moment oracles on symbols."""
        X = lambda l, c=False: ("x", l, c)  # noqa: E731
        Y = lambda l, c=False: ("y", l, c)  # noqa: E731
        rng_ = range(k)

        def table(f):
            return _realify(np.array([[f(i, j) for j in rng_] for i in rng_], dtype=complex))

        return cls(
            rho=_realify(np.array([e2(X(i, True), Y(i)) for i in rng_], dtype=complex)),
            fourth=table(lambda i, j: e4(X(i, True), Y(i), X(j, True), Y(j))),
            xy=table(lambda i, j: e2(X(i, True), Y(j))),
            xx=table(lambda i, j: e2(X(i, True), X(j, True))),
            yy=table(lambda i, j: e2(Y(i), Y(j))),
            abs_x4=table(lambda i, j: e4(X(i, True), X(i), X(j, True), X(j))).real,
            abs_y4=table(lambda i, j: e4(Y(i, True), Y(i), Y(j, True), Y(j))).real,
            xbar_x=table(lambda i, j: e2(X(i, True), X(j))),
            ybar_y=table(lambda i, j: e2(Y(i, True), Y(j))),
            fourth_h=table(lambda i, j: e4(X(i, True), Y(i), X(j), Y(j, True))),
            xbar_ybar=table(lambda i, j: e2(X(i, True), Y(j, True))),
        )

    @classmethod
    def gaussian(cls, cov: np.ndarray, pseudo: np.ndarray | None = None) -> MomentSpec:
        """Moments of a zero-mean Gaussian joint vector ``w = (x_1..x_K, y_1..y_K)``.

        ``cov = E[w w^H]``; ``pseudo = E[w w^T]`` defaults to ``cov`` (real case).
        Fourth moments follow from Isserlis' theorem.
        """
        cov = np.asarray(cov)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
            raise DimensionError("joint covariance must be 2K x 2K")
        pseudo = cov if pseudo is None else np.asarray(pseudo)
        k = cov.shape[0] // 2

        def pos(v: Var) -> int:
            return v[1] + (k if v[0] == "y" else 0)

        def e2(u: Var, v: Var) -> complex:
            i, j = pos(u), pos(v)
            if not u[2] and not v[2]:
                return pseudo[i, j]
            if not u[2] and v[2]:
                return cov[i, j]
            if u[2] and not v[2]:
                return np.conj(cov[i, j])
            return np.conj(pseudo[i, j])

        def e4(a: Var, b: Var, c: Var, d: Var) -> complex:
            return e2(a, b) * e2(c, d) + e2(a, c) * e2(b, d) + e2(a, d) * e2(b, c)

        return cls.from_functions(k, e2, e4)

    @classmethod
    def from_samples(cls, x: np.ndarray, y: np.ndarray) -> MomentSpec:
        """Empirical moments from ``N`` i.i.d. draws; rows of ``x``, ``y`` are draws.

        Standard errors of every table are kept in ``stderr``.
        """
        x = np.asarray(x)
        y = np.asarray(y)
        if x.ndim != 2 or x.shape != y.shape:
            raise DimensionError("x and y must both be N x K")
        N = x.shape[0]
        xc = x.conj()
        ax = np.abs(x) ** 2
        ay = np.abs(y) ** 2
        prod = xc * y
        stderr: dict[str, np.ndarray] = {}

        def mean_outer(u: np.ndarray, v: np.ndarray, name: str) -> np.ndarray:
            m = u.T @ v / N
            second = (np.abs(u) ** 2).T @ (np.abs(v) ** 2) / N
            stderr[name] = np.sqrt(np.maximum(second - np.abs(m) ** 2, 0.0) / N)
            return _realify(m)

        rho = _realify(prod.mean(axis=0))
        stderr["rho"] = prod.std(axis=0) / math.sqrt(N)
        return cls(
            rho=rho,
            fourth=mean_outer(prod, prod, "fourth"),
            xy=mean_outer(xc, y, "xy"),
            xx=mean_outer(xc, xc, "xx"),
            yy=mean_outer(y, y, "yy"),
            abs_x4=np.real(mean_outer(ax, ax, "abs_x4")),
            abs_y4=np.real(mean_outer(ay, ay, "abs_y4")),
            xbar_x=mean_outer(xc, x, "xbar_x"),
            ybar_y=mean_outer(y.conj(), y, "ybar_y"),
            fourth_h=mean_outer(prod, prod.conj(), "fourth_h"),
            xbar_ybar=mean_outer(xc, y.conj(), "xbar_ybar"),
            stderr=stderr,
        )


def _realify(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if np.iscomplexobj(a) and not np.any(np.imag(a)):
        return np.real(a).copy()
    return a


def b_covariance(moments: MomentSpec, stats: FormStats) -> np.ndarray:
    """Limit matrix ``B = B1 + B2 + B3`` of the sesquilinear-form CLT.

    ``B`` is complex symmetric (not Hermitian); for real data it is the
    covariance matrix of the Gaussian limit.
    """
    m = moments
    omega, theta, tau = stats
    b1 = omega * (m.fourth - np.outer(m.rho, m.rho))
    b2 = (theta - omega) * (m.xy * m.xy.T)
    b3 = (tau - omega) * (m.xx * m.yy)
    return _realify(b1 + b2 + b3)


def b_ab_covariance(moments: MomentSpec, stats: FormStats) -> tuple[np.ndarray, np.ndarray]:
    """Summed real blocks ``(B_1a + B_2a + B_3a, B_1b + B_2b + B_3b)``."""
    m = moments
    omega, theta, tau = stats
    tau = float(np.real(tau))
    sx, sy = m.sigma_x2, m.sigma_y2
    ba = (
        omega * (m.abs_x4 - np.outer(sx, sx))
        + (theta - omega) * np.abs(m.xbar_x) ** 2
        + (tau - omega) * np.abs(m.xx) ** 2
    )
    bb = (
        omega * (m.abs_y4 - np.outer(sy, sy))
        + (theta - omega) * np.abs(m.ybar_y) ** 2
        + (tau - omega) * np.abs(m.yy) ** 2
    )
    return np.real(ba), np.real(bb)


def d_covariance(moments: MomentSpec, stats: FormStats) -> np.ndarray:
    """Limit covariance ``D = D1 + D2`` of real quadratic forms ``X(l)^T A X(l)``.

    Expects moments of the ``Y = X`` pairing, so ``fourth[l, l'] = E[x_l^2 x_l'^2]``
    and ``xy = (gamma_{l l'})``.
    """
    if not moments.is_real:
        raise MomentError("quadratic-form covariance needs real moments")
    gamma = np.real(moments.xy)
    g_diag = np.diag(gamma)
    omega, theta = stats.omega, stats.theta
    d1 = omega * (np.real(moments.fourth) - np.outer(g_diag, g_diag))
    d2 = (theta - omega) * (gamma * gamma.T + gamma**2)
    return d1 + d2


def gamma_from_b(b: np.ndarray, b_a: np.ndarray, b_b: np.ndarray) -> np.ndarray:
    """Covariance of ``(Re Z, Im Z)`` from the complex ``B`` and real ``B_a``, ``B_b``."""
    b = np.asarray(b, dtype=complex)
    b_a = np.asarray(b_a, dtype=float)
    b_b = np.asarray(b_b, dtype=float)
    k = b.shape[0]
    if b.shape != (k, k) or b_a.shape != (k, k) or b_b.shape != (k, k):
        raise DimensionError("B, B_a and B_b must share one K x K shape")
    g11 = 0.25 * (2 * b.real + b_a + b_b)
    g22 = 0.25 * (-2 * b.real + b_a + b_b)
    g12 = 0.5 * b.imag
    return np.block([[g11, g12], [g12.T, g22]])


def c_covariance(moments: MomentSpec, stats: FormStats) -> np.ndarray:
    """Hermitian limit covariance ``C = lim E[Z conj(Z)^T]`` for a Hermitian weight matrix.

    Together with ``B`` it fixes the law of ``(Re Z, Im Z)`` for any pairing;
    ``(B_a + B_b) / 2`` coincides with ``C`` only when ``X = Y``.
    """
    m = moments
    if m.fourth_h is None or m.xbar_ybar is None:
        raise MomentError("the Hermitian covariance needs the fourth_h and xbar_ybar tables")
    omega, theta, tau = stats
    tau = float(np.real(tau))
    c1 = omega * (m.fourth_h - np.outer(m.rho, np.conj(m.rho)))
    c2 = (theta - omega) * (m.xbar_x * np.conj(m.ybar_y))
    c3 = (tau - omega) * (m.xbar_ybar * np.conj(m.xbar_ybar.T))
    return c1 + c2 + c3


def gamma_from_bc(b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Covariance of ``(Re Z, Im Z)`` from the pseudo-covariance ``B`` and Hermitian ``C``."""
    b = np.asarray(b, dtype=complex)
    c = np.asarray(c, dtype=complex)
    if b.shape != c.shape or b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DimensionError("B and C must share one K x K shape")
    g11 = 0.5 * (c + b).real
    g22 = 0.5 * (c - b).real
    g12 = 0.5 * (b - c).imag
    return np.block([[g11, g12], [g12.T, g22]])


def gamma_covariance(moments: MomentSpec, stats: FormStats, exact: bool = False) -> np.ndarray:
    """``(Re Z, Im Z)`` covariance; ``exact`` uses ``C`` in place of the ``B_a``, ``B_b`` blocks."""
    b = b_covariance(moments, stats)
    if exact:
        return gamma_from_bc(b, c_covariance(moments, stats))
    b_a, b_b = b_ab_covariance(moments, stats)
    return gamma_from_b(b, b_a, b_b)
