"""Marčenko–Pastur analytics and their generalisation to discrete bulk spectra.

Everything here is a pure function of its arguments. Integrals against the
Marčenko–Pastur law are evaluated after the substitution
``x = ((a + b) + (b - a) sin t) / 2`` which removes the square-root endpoint
behaviour of the density and leaves a smooth periodic-like integrand.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import CriticalIntervalError, DomainError

QUAD_ABS_TOL = 1e-12
QUAD_REL_TOL = 1e-12
QUAD_LIMIT = 2**14


class SeparationWarning(UserWarning):
    """A spike is not separated from the bulk; its outlier limit is not attained."""


@dataclass(frozen=True)
class MpParams:
    """Dimension-to-sample ratio ``y = p / n`` with ``0 < y < 1``."""

    y: float

    def __post_init__(self) -> None:
        if not (0.0 < self.y < 1.0) or not math.isfinite(self.y):
            raise DomainError(f"y must lie in (0, 1), got {self.y!r}")

    @property
    def a(self) -> float:
        return (1.0 - math.sqrt(self.y)) ** 2

    @property
    def b(self) -> float:
        return (1.0 + math.sqrt(self.y)) ** 2

    @property
    def critical_interval(self) -> tuple[float, float]:
        r = math.sqrt(self.y)
        return 1.0 - r, 1.0 + r


@dataclass(frozen=True)
class BulkSpectrum:
    """Discrete limiting population spectrum ``H = sum_j w_j delta_{t_j}``."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        atoms = tuple((float(t), float(w)) for t, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise DomainError("bulk spectrum needs at least one atom")
        values = [t for t, _ in atoms]
        weights = [w for _, w in atoms]
        if any(t <= 0 or not math.isfinite(t) for t in values):
            raise DomainError("bulk atom values must be positive and finite")
        if len(set(values)) != len(values):
            raise DomainError("bulk atom values must be pairwise distinct")
        if any(w <= 0 for w in weights):
            raise DomainError("bulk atom weights must be strictly positive")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise DomainError(f"bulk weights must sum to 1, got {sum(weights)!r}")

    @classmethod
    def unit(cls) -> BulkSpectrum:
        return cls(((1.0, 1.0),))

    @property
    def values(self) -> np.ndarray:
        return np.array([t for t, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @property
    def is_unit(self) -> bool:
        return len(self.atoms) == 1 and self.atoms[0][0] == 1.0


@dataclass(frozen=True)
class SupportSet:
    """Ordered, pairwise disjoint closed intervals."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        prev = -math.inf
        for lo, hi in self.intervals:
            if not lo < hi:
                raise DomainError(f"degenerate support interval [{lo}, {hi}]")
            if lo <= prev:
                raise DomainError("support intervals must be sorted and disjoint")
            prev = hi

    def contains(self, x: float, margin: float = 0.0) -> bool:
        return any(lo - margin <= x <= hi + margin for lo, hi in self.intervals)

    @property
    def lower(self) -> float:
        return self.intervals[0][0]

    @property
    def upper(self) -> float:
        return self.intervals[-1][1]


@dataclass(frozen=True)
class MTransforms:
    m1: float
    m2: float
    m3: float


def mp_support(params: MpParams) -> tuple[float, float]:
    return params.a, params.b


def mp_density(x: float | np.ndarray, params: MpParams) -> float | np.ndarray:
    """Density of the Marčenko–Pastur law; zero outside ``[a_y, b_y]``."""
    a, b = params.a, params.b
    xs = np.asarray(x, dtype=float)
    inside = (xs > a) & (xs < b)
    safe = np.where(inside, xs, 1.0)
    out = np.where(inside, np.sqrt(np.abs((safe - a) * (b - safe))) / (2 * np.pi * safe * params.y), 0.0)
    return float(out) if out.ndim == 0 else out


def mp_integrate(f: Callable[[float], float], params: MpParams) -> float:
    """Integrate ``f`` against ``F_y(dx)`` by adaptive quadrature.

    The sine substitution makes ``sqrt((x-a)(b-x)) dx`` equal to
    ``((b-a)/2)^2 cos(t)^2 dt``, so the transformed integrand is smooth.
    """
    a, b, y = params.a, params.b, params.y
    mid, half = 0.5 * (a + b), 0.5 * (b - a)

    def g(t: float) -> float:
        x = mid + half * math.sin(t)
        c = math.cos(t)
        return f(x) * half * half * c * c / (2 * math.pi * x * y)

    val, _ = integrate.quad(
        g, -math.pi / 2, math.pi / 2, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=QUAD_LIMIT
    )
    return val


def _check_outside(lam: float, params: MpParams) -> None:
    if params.a <= lam <= params.b:
        raise DomainError(
            f"lambda={lam:g} lies inside the support [{params.a:.6g}, {params.b:.6g}]"
        )


def stieltjes(z: complex, params: MpParams) -> complex:
    """Stieltjes transform ``m(z) = int (x - z)^{-1} F_y(dx)``.

    For real ``z`` the square-root sign is fixed by continuity with the
    complex branch: ``m < 0`` right of the support and ``m > 0`` left of it.
    """
    y = params.y
    zc = complex(z)
    if zc.imag == 0.0:
        x = zc.real
        _check_outside(x, params)
        s = math.sqrt((y + 1 - x) ** 2 - 4 * y)
        # rationalised roots avoid cancellation and the removable pole at 0
        if x > params.b:
            return complex(2.0 / (1 - y - x - s))
        return complex(2.0 / (1 - y - x + s))
    s = np.sqrt(complex((y + 1 - zc) ** 2 - 4 * y))
    roots = ((1 - y - zc + s) / (2 * y * zc), (1 - y - zc - s) / (2 * y * zc))
    sign = 1.0 if zc.imag > 0 else -1.0
    return max(roots, key=lambda r: sign * r.imag)


def m_transforms(lam: float, params: MpParams) -> MTransforms:
    """Resolvent moments ``m1, m2, m3`` of ``F_y`` at a real point off the support."""
    _check_outside(lam, params)
    m1 = -1.0 - lam * stieltjes(lam, params).real
    m2 = mp_integrate(lambda x: x * x / (lam - x) ** 2, params)
    m3 = mp_integrate(lambda x: x / (lam - x) ** 2, params)
    return MTransforms(m1, m2, m3)


def _check_spike(alpha: float, params: MpParams) -> None:
    if not math.isfinite(alpha) or alpha <= 0:
        raise DomainError(f"spike must be positive and finite, got {alpha!r}")
    lo, hi = params.critical_interval
    if lo <= alpha <= hi:
        raise CriticalIntervalError(alpha, lo, hi)


def m_closed_forms(alpha: float, params: MpParams) -> MTransforms:
    """Closed forms of ``m1, m2, m3`` evaluated at ``phi(alpha)``."""
    _check_spike(alpha, params)
    y = params.y
    d = alpha - 1.0
    m1 = 1.0 / d
    m2 = (d + y * (alpha + 1.0)) / (d * (d * d - y))
    m3 = 1.0 / (d * d - y)
    return MTransforms(m1, m2, m3)


def phi(alpha: float, params: MpParams) -> float:
    """Almost-sure limit of the sample eigenvalues attached to spike ``alpha``."""
    _check_spike(alpha, params)
    return alpha + params.y * alpha / (alpha - 1.0)


def phi_inverse(lam: float, params: MpParams, side: str = "above") -> float:
    """Invert ``phi`` on the requested side of the bulk."""
    y = params.y
    if side == "above":
        if not lam > params.b:
            raise DomainError(f"lambda={lam:g} is not above b_y={params.b:.6g}")
    elif side == "below":
        if not 0 < lam < params.a:
            raise DomainError(f"lambda={lam:g} is not in (0, a_y={params.a:.6g})")
    else:
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    c = lam + 1.0 - y
    disc = math.sqrt(max(c * c - 4.0 * lam, 0.0))
    if side == "above":
        return 0.5 * (c + disc)
    # product of roots is lam; this avoids cancellation in (c - disc)
    return 2.0 * lam / (c + disc)


def _psi_terms(alpha: float, bulk: BulkSpectrum) -> tuple[np.ndarray, np.ndarray]:
    t, w = bulk.values, bulk.weights
    if np.any(t == alpha):
        raise DomainError(f"psi is singular: alpha={alpha:g} equals a bulk atom")
    return t, w


def psi(alpha: float, params: MpParams, bulk: BulkSpectrum | None = None) -> float:
    """Outlier limit for spike ``alpha`` over a general bulk ``H``.

    Emits :class:`SeparationWarning` when the spike is not separated from the
    bulk; the algebraic value is still returned.
    """
    bulk = bulk or BulkSpectrum.unit()
    t, w = _psi_terms(alpha, bulk)
    val = alpha * (1.0 + params.y * float(np.sum(w * t / (alpha - t))))
    if psi_prime(alpha, params, bulk) <= 0:
        warnings.warn(
            f"spike {alpha:g} is not separated from the bulk (psi'(alpha) <= 0)",
            SeparationWarning,
            stacklevel=2,
        )
    return val


def psi_prime(alpha: float, params: MpParams, bulk: BulkSpectrum | None = None) -> float:
    bulk = bulk or BulkSpectrum.unit()
    t, w = _psi_terms(alpha, bulk)
    return 1.0 - params.y * float(np.sum(w * t * t / (alpha - t) ** 2))


def is_separated(alpha: float, params: MpParams, bulk: BulkSpectrum | None = None) -> bool:
    """True when ``alpha`` produces outliers: ``psi' > 0`` and ``psi`` lies off supp F.

    For the unit bulk this is exactly ``alpha`` outside the critical interval.
    """
    bulk = bulk or BulkSpectrum.unit()
    if alpha <= 0 or np.any(bulk.values == alpha):
        return False
    if bulk.is_unit:
        lo, hi = params.critical_interval
        return not lo <= alpha <= hi
    if psi_prime(alpha, params, bulk) <= 0:
        return False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        val = psi(alpha, params, bulk)
    return not general_support(params, bulk).contains(val)


# -- support of the generalised law -------------------------------------------------

_SCAN_POINTS = 4096


def _inverse_map(m: np.ndarray, y: float, t: np.ndarray, w: np.ndarray) -> np.ndarray:
    return -1.0 / m + y * np.sum(w * t / (1.0 + np.multiply.outer(m, t)), axis=-1)


def _inverse_map_slope(m: np.ndarray, y: float, t: np.ndarray, w: np.ndarray) -> np.ndarray:
    return 1.0 / m**2 - y * np.sum(w * t * t / (1.0 + np.multiply.outer(m, t)) ** 2, axis=-1)


def _clustered(lo: float, hi: float, n: int) -> np.ndarray:
    # dense near both ends, where the poles sit
    s = np.concatenate([np.logspace(-12, math.log10(0.5), n // 2), [0.5]])
    u = np.unique(np.concatenate([s, 1.0 - s]))
    return lo + (hi - lo) * u


def _segments(t: np.ndarray) -> list[tuple[float, float, str]]:
    poles = sorted(-1.0 / t)
    segs: list[tuple[float, float, str]] = [(-math.inf, poles[0], "left")]
    for p0, p1 in zip(poles[:-1], poles[1:]):
        segs.append((p0, p1, "inner"))
    segs.append((poles[-1], 0.0, "right"))
    return segs


def general_support(params: MpParams, bulk: BulkSpectrum | None = None) -> SupportSet:
    """Support of the limiting spectral law for bulk ``H`` and ratio ``y``.

    Scans the inverse of the companion Stieltjes transform on the negative
    real axis; stretches where it is increasing map onto gaps of the support.
    """
    bulk = bulk or BulkSpectrum.unit()
    y, t, w = params.y, bulk.values, bulk.weights
    lam = lambda m: float(_inverse_map(np.array([m]), y, t, w)[0])  # noqa: E731
    slope = lambda m: float(_inverse_map_slope(np.array([m]), y, t, w)[0])  # noqa: E731

    gaps: list[tuple[float, float]] = []
    for lo, hi, kind in _segments(t):
        if kind == "left":
            # m -> -inf is the lambda -> 0+ end; parametrise by distance to the pole
            u = np.logspace(-12, 12, 2 * _SCAN_POINTS)
            grid = np.sort(hi - u)
        else:
            grid = _clustered(lo, hi, _SCAN_POINTS)[1:-1]
        sl = _inverse_map_slope(grid, y, t, w)
        pos = sl > 0
        if not pos.any():
            continue
        edges = np.flatnonzero(np.diff(pos.astype(int)))
        # boundaries of each increasing run, polished to a root of the slope
        runs: list[list[float]] = []
        start = grid[0] if pos[0] else None
        for e in edges:
            root = optimize.brentq(slope, grid[e], grid[e + 1], xtol=1e-15, rtol=1e-15)
            if pos[e]:
                runs.append([start, root])
                start = None
            else:
                start = root
        if start is not None:
            runs.append([start, grid[-1]])
        for m_lo, m_hi in runs:
            l_lo = 0.0 if (kind == "left" and m_lo == grid[0]) else lam(m_lo)
            l_hi = math.inf if (kind == "right" and m_hi == grid[-1]) else lam(m_hi)
            gaps.append((l_lo, l_hi))

    gaps = [(max(lo, 0.0), hi) for lo, hi in gaps if hi > 0]
    gaps.sort()
    merged: list[list[float]] = []
    for lo, hi in gaps:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    intervals = []
    for (_, left_end), (right_start, _) in zip(merged[:-1], merged[1:]):
        intervals.append((left_end, right_start))
    return SupportSet(tuple(intervals))


def spike_center(alpha: float, params: MpParams, bulk: BulkSpectrum | None = None) -> float:
    """``phi(alpha)`` for the unit bulk, ``psi(alpha)`` otherwise."""
    if bulk is None or bulk.is_unit:
        return phi(alpha, params)
    return psi(alpha, params, bulk)


def support_of(params: MpParams, bulk: BulkSpectrum | None = None) -> SupportSet:
    if bulk is None or bulk.is_unit:
        return SupportSet(((params.a, params.b),))
    return general_support(params, bulk)


def alphas_grid(values: Sequence[float], params: MpParams) -> list[float]:
    """Keep only the spikes that sit outside the critical interval."""
    lo, hi = params.critical_interval
    return [a for a in values if a > 0 and not lo <= a <= hi]
