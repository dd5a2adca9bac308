"""Limiting fluctuation laws of the packed outlier eigenvalues.

For a spike ``alpha`` of multiplicity ``n_k`` the vector
``sqrt(n) (lambda_{n,j} - phi(alpha))`` converges to the eigenvalues of
``R_kk / (1 + y m3 alpha)`` where ``R`` is the Gaussian limit of the random
form matrix. Covariances of ``R`` are assembled through the sesquilinear-form
CLT in :mod:`spikelab.sesquiform`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy import integrate

from .errors import DomainError, MomentError
from .model import EntryLaw
from .sesquiform import FormStats, MomentSpec, b_covariance, gamma_covariance
from .spectra import MpParams, m_closed_forms, m_transforms, phi


@dataclass(frozen=True)
class ThetaOmega:
    theta: float
    omega: float
    tau: float | None = None
    lam: float | None = None

    def form_stats(self) -> FormStats:
        tau = self.theta if self.tau is None else self.tau
        return FormStats(self.omega, self.theta, tau)


def theta_omega(alpha: float, params: MpParams, tau: float | None = None) -> ThetaOmega:
    """Closed-form ``theta`` and ``omega`` at ``lambda = phi(alpha)``.

    ``tau`` only matters for complex data and must come from the caller.
    """
    lam = phi(alpha, params)
    y, d = params.y, alpha - 1.0
    theta = (d + y) ** 2 / (d * d - y)
    omega = (1.0 + y / d) ** 2
    return ThetaOmega(theta, omega, tau, lam)


def theta_omega_at(lam: float, params: MpParams, tau: float | None = None) -> ThetaOmega:
    """``theta`` and ``omega`` at an arbitrary ``lambda`` off the support, by quadrature."""
    m = m_transforms(lam, params)
    y = params.y
    ratio = y * (1.0 + m.m1) / (lam - y * (1.0 + m.m1))
    theta = 1.0 + 2.0 * y * m.m1 + y * m.m2
    omega = 1.0 + 2.0 * y * m.m1 + ratio**2
    return ThetaOmega(theta, omega, tau, lam)


def scale_factor(alpha: float, params: MpParams) -> float:
    """``1 / (1 + y m3(phi(alpha)) alpha)``."""
    return 1.0 / (1.0 + params.y * m_closed_forms(alpha, params).m3 * alpha)


def sigma2(alpha: float, params: MpParams) -> float:
    """Limit variance of a simple outlier under Gaussian entries."""
    m_closed_forms(alpha, params)  # domain check
    d2 = (alpha - 1.0) ** 2
    return 2.0 * alpha**2 * (d2 - params.y) / d2


def s2_binary(alpha: float, params: MpParams) -> float:
    """Limit variance of a simple outlier under symmetric +-1 entries."""
    return sigma2(alpha, params) * params.y / (alpha - 1.0) ** 2


# -- moments of the spike coordinates ---------------------------------------------

Coord = tuple[int, bool]  # (coordinate index, conjugated)


@dataclass(frozen=True)
class CoordinateMoments:
    """Moments of ``xi = L eps`` with ``eps`` i.i.d. standardised entries.

    ``L = U diag(sqrt(d)) U*`` is the symmetric root of ``Sigma``; ``U`` defaults to the identity.
    """

    loading: np.ndarray
    entry: EntryLaw = field(default_factory=EntryLaw)

    @classmethod
    def independent(cls, variances, entry: EntryLaw | None = None, rotation=None) -> CoordinateMoments:
        load = np.diag(np.sqrt(np.asarray(variances, dtype=float))).astype(complex)
        if rotation is not None:
            u = np.asarray(rotation)
            load = u @ load @ u.conj().T
        return cls(load, entry or EntryLaw())

    @property
    def M(self) -> int:
        return self.loading.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return np.real_if_close(self.loading @ self.loading.conj().T)

    def _l(self, c: Coord) -> np.ndarray:
        row = self.loading[c[0]]
        return row.conj() if c[1] else row

    def _eps2(self, s: bool, t: bool) -> complex:
        q = self.entry.moments()["q"]
        if s == t:
            return np.conj(q) if s else q
        return 1.0

    def e2(self, a: Coord, b: Coord) -> complex:
        return complex(np.sum(self._l(a) * self._l(b)) * self._eps2(a[1], b[1]))

    def e4(self, a: Coord, b: Coord, c: Coord, d: Coord) -> complex:
        gauss = self.e2(a, b) * self.e2(c, d) + self.e2(a, c) * self.e2(b, d) + self.e2(a, d) * self.e2(b, c)
        conj = (a[1], b[1], c[1], d[1])
        mom = self.entry.moments()
        raw = {0: mom["m40"], 1: mom["m31"], 2: mom["m22"], 3: np.conj(mom["m31"]), 4: np.conj(mom["m40"])}
        pairings = (
            self._eps2(conj[0], conj[1]) * self._eps2(conj[2], conj[3])
            + self._eps2(conj[0], conj[2]) * self._eps2(conj[1], conj[3])
            + self._eps2(conj[0], conj[3]) * self._eps2(conj[1], conj[2])
        )
        cumulant = raw[sum(conj)] - pairings
        cross = np.sum(self._l(a) * self._l(b) * self._l(c) * self._l(d))
        return complex(gauss + cumulant * cross)


def upper_pairs(M: int) -> list[tuple[int, int]]:
    return list(combinations_with_replacement(range(M), 2))


def pair_moments(coords: CoordinateMoments, is_complex: bool = False) -> MomentSpec:
    """Moment tables for the forms ``u(i) (I + A) u(j)^T`` (``^*`` when complex), ``i <= j``."""
    pairs = upper_pairs(coords.M)

    def to_coord(v) -> Coord:
        i, j = pairs[v[1]]
        idx = i if v[0] == "x" else j
        return idx, v[2] != is_complex

    return MomentSpec.from_functions(
        len(pairs),
        lambda u, v: coords.e2(to_coord(u), to_coord(v)),
        lambda a, b, c, d: coords.e4(to_coord(a), to_coord(b), to_coord(c), to_coord(d)),
    )


@dataclass(frozen=True)
class RCovariance:
    """Covariance of the upper-triangle entries of ``R`` (real) or of ``(Re, Im)`` (complex)."""

    pairs: list[tuple[int, int]]
    matrix: np.ndarray
    is_complex: bool = False

    @property
    def M(self) -> int:
        return max(j for _, j in self.pairs) + 1

    def cov(self, i: int, j: int, i2: int, j2: int) -> float:
        if self.is_complex:
            raise DomainError("use the (Re, Im) blocks of matrix for complex covariances")
        a = self.pairs.index((min(i, j), max(i, j)))
        b = self.pairs.index((min(i2, j2), max(i2, j2)))
        return float(self.matrix[a, b])


def r_covariance_real(coords: CoordinateMoments, to: ThetaOmega) -> RCovariance:
    if coords.entry.is_complex:
        raise MomentError("real covariance assembly needs a real entry law")
    spec = pair_moments(coords, is_complex=False)
    b = b_covariance(spec, FormStats(to.omega, to.theta, to.theta))
    return RCovariance(upper_pairs(coords.M), np.real(b), False)


def gamma_complex(coords: CoordinateMoments, to: ThetaOmega, exact: bool = True) -> RCovariance:
    """``2K x 2K`` covariance of the real and imaginary parts of ``R``'s upper triangle.

    ``exact=False`` assembles the Hermitian part from the ``B_a``, ``B_b`` blocks,
    which is only right on the pairs ``(i, i)``.
    """
    if to.tau is None:
        raise MomentError("complex covariance assembly needs tau (the limit of tr(I+A)(I+A)^T / n)")
    spec = pair_moments(coords, is_complex=True)
    g = gamma_covariance(spec, FormStats(to.omega, to.theta, to.tau), exact)
    return RCovariance(upper_pairs(coords.M), g, True)


# -- limit laws --------------------------------------------------------------------


@dataclass(frozen=True)
class LimitLaw:
    """Law of ``sqrt(n)(lambda_{n,j} - phi(alpha))`` over one packed group.

    ``size == 1`` is a centred normal; otherwise the ordered eigenvalues of
    ``scale * G`` with ``G`` symmetric (Hermitian) Gaussian, independent
    entries, ``var G_ii = diag_var`` and ``E|G_ij|^2 = offdiag_var``.
    """

    size: int
    diag_var: float
    offdiag_var: float
    scale: float
    is_complex: bool = False
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.size < 1:
            raise DomainError("law size must be positive")
        if not self.diag_var > 0 or not self.offdiag_var > 0:
            raise DomainError("limit variances must be positive")

    @property
    def kind(self) -> str:
        return "scalar_gaussian" if self.size == 1 else "matrix_eig_law"

    @property
    def variance(self) -> float:
        """Variance of a diagonal entry of the scaled matrix (the scalar variance)."""
        return self.scale**2 * self.diag_var

    def scaled(self, factor: float) -> LimitLaw:
        return LimitLaw(
            self.size, self.diag_var * factor, self.offdiag_var * factor, self.scale, self.is_complex,
            dict(self.provenance, variance_factor=factor),
        )


def limit_law(alpha: float, multiplicity: int, params: MpParams, entry: EntryLaw | None = None) -> LimitLaw:
    """Limit law for a spike with independent coordinates and diagonal ``Sigma``."""
    entry = entry or EntryLaw()
    to = theta_omega(alpha, params)
    beta = float(entry.beta)
    a2 = alpha * alpha
    if entry.is_complex:
        diag = (to.theta + beta * to.omega) * a2
    else:
        diag = (2.0 * to.theta + beta * to.omega) * a2
    return LimitLaw(
        int(multiplicity), diag, to.theta * a2, scale_factor(alpha, params), entry.is_complex,
        {"alpha": alpha, "y": params.y, "beta": beta, "family": entry.family},
    )


def _symmetric_batch(law: LimitLaw, count: int, rng: np.random.Generator) -> np.ndarray:
    k = law.size
    g = np.zeros((count, k, k), dtype=complex if law.is_complex else float)
    idx = np.arange(k)
    g[:, idx, idx] = rng.standard_normal((count, k)) * math.sqrt(law.diag_var)
    iu, ju = np.triu_indices(k, 1)
    if len(iu):
        if law.is_complex:
            off = (rng.standard_normal((count, len(iu))) + 1j * rng.standard_normal((count, len(iu))))
            off *= math.sqrt(law.offdiag_var / 2.0)
        else:
            off = rng.standard_normal((count, len(iu))) * math.sqrt(law.offdiag_var)
        g[:, iu, ju] = off
        g[:, ju, iu] = off.conj()
    return g * law.scale


def sample_limit_law(law: LimitLaw, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count x size`` draws, each row in descending order."""
    if law.size == 1:
        return (rng.standard_normal(count) * math.sqrt(law.variance))[:, None]
    g = _symmetric_batch(law, count, rng)
    return np.linalg.eigvalsh(g)[:, ::-1]


def sample_rotated_block(
    alphas,
    multiplicities,
    k: int,
    params: MpParams,
    entry: EntryLaw,
    rotation: np.ndarray,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draws from the limit law of spike ``k`` when ``Sigma = U diag(alpha) U*``.

    ``R`` is sampled in the coordinates of ``xi`` from its full covariance,
    rotated to ``U* R U`` and restricted to the block of spike ``k``.
    """
    if entry.is_complex:
        raise DomainError("rotated limit laws are implemented for real entries only")
    diag = np.repeat(np.asarray(alphas, dtype=float), multiplicities)
    coords = CoordinateMoments.independent(diag, entry, rotation)
    alpha = float(alphas[k])
    cov = r_covariance_real(coords, theta_omega(alpha, params))
    w, v = np.linalg.eigh(cov.matrix)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    draws = rng.standard_normal((count, len(cov.pairs))) @ root.T
    M = len(diag)
    r = np.zeros((count, M, M))
    iu = np.array(cov.pairs)
    r[:, iu[:, 0], iu[:, 1]] = draws
    r[:, iu[:, 1], iu[:, 0]] = draws
    u = np.real_if_close(np.asarray(rotation))
    rt = np.einsum("ai,nab,bj->nij", u.conj(), r, u)
    start = int(np.sum(multiplicities[:k]))
    block = rt[:, start : start + multiplicities[k], start : start + multiplicities[k]]
    return np.linalg.eigvalsh(block * scale_factor(alpha, params))[:, ::-1]


def wigner_pair_density(delta, gamma, sigma: float):
    """Unordered joint density of the eigenvalues of ``sigma * W``, ``W`` 2x2 Gaussian–Wigner."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    d = np.asarray(delta, dtype=float)
    g = np.asarray(gamma, dtype=float)
    out = np.abs(d - g) * np.exp(-(d * d + g * g) / (2 * sigma * sigma)) / (4 * sigma**3 * math.sqrt(math.pi))
    return float(out) if out.ndim == 0 else out


def pair_gap_cdf(gap: float, sigma: float) -> float:
    """CDF of ``|delta - gamma|`` implied by :func:`wigner_pair_density`, by quadrature."""
    if gap <= 0:
        return 0.0
    lim = 12.0 * sigma
    # along the diagonal the density is a smooth Gaussian, so a fixed rule is exact to rounding
    nodes, weights = np.polynomial.legendre.leggauss(160)
    v, w = lim * nodes, lim * weights

    def strip(u: float) -> float:
        return float(w @ wigner_pair_density((v + u) / math.sqrt(2), (v - u) / math.sqrt(2), sigma))

    # the strip density is even in u with a kink at 0
    val = 2.0 * integrate.quad(strip, 0.0, gap / math.sqrt(2), epsabs=1e-13, epsrel=1e-11)[0]
    return min(max(val, 0.0), 1.0)
