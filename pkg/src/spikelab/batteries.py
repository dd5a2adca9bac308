"""Oracle suites shared by ``spikelab verify`` and the acceptance tests.

Each suite returns a list of :class:`Check` rows; a suite passes when every
row does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .limits import s2_binary, scale_factor, sigma2, theta_omega
from .linalg import resolvent_stats
from .sesquiform import MomentSpec, b_covariance, d_covariance, form_stats
from .spectra import MpParams, m_closed_forms, m_transforms, stieltjes

ALPHAS = (4.0, 3.0, 2.0, 0.2, 0.1)
YS = (0.2, 0.5, 0.9)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    reference: float
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def row(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<44} value={self.value:<14.8g} ref={self.reference:<14.8g} err={self.error:.2e} tol={self.tol:.1e}"


def abs_check(name: str, value: float, reference: float, tol: float) -> Check:
    return Check(name, float(value), float(reference), abs(float(value) - float(reference)), tol)


def rel_check(name: str, value: float, reference: float, tol: float) -> Check:
    err = abs(float(value) / float(reference) - 1.0) if reference != 0 else math.inf
    return Check(name, float(value), float(reference), err, tol)


def valid_grid() -> list[tuple[float, float]]:
    """``(alpha, y)`` pairs of the test grid lying outside the critical interval."""
    out = []
    for y in YS:
        lo, hi = MpParams(y).critical_interval
        out.extend((a, y) for a in ALPHAS if not lo <= a <= hi)
    return out


def _density_integral(f, params: MpParams) -> float:
    # algebraic endpoint weight (x - a)^1/2 (b - x)^1/2; independent of the sine substitution
    a, b, y = params.a, params.b, params.y
    g = lambda x: f(x) / (2.0 * math.pi * x * y)  # noqa: E731
    return integrate.quad(g, a, b, weight="alg", wvar=(0.5, 0.5), epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def stieltjes_points(params: MpParams, count: int = 40) -> np.ndarray:
    half = count // 2
    above = params.b + np.geomspace(1e-2, 50.0, count - half)
    below = params.a * np.linspace(0.02, 0.9, half)
    return np.concatenate([below, above])


def identities_suite(tol: float = 1e-8, ident_tol: float = 1e-10) -> list[Check]:
    """Closed forms against quadrature, Stieltjes values and the variance identities."""
    checks: list[Check] = []
    for alpha, y in valid_grid():
        params = MpParams(y)
        closed = m_closed_forms(alpha, params)
        quad = m_transforms(theta_omega(alpha, params).lam, params)
        for name in ("m1", "m2", "m3"):
            checks.append(abs_check(f"{name} a={alpha:g} y={y:g}", getattr(quad, name), getattr(closed, name), tol))
    params = MpParams(0.5)
    for lam in stieltjes_points(params):
        ref = _density_integral(lambda x, lam=lam: 1.0 / (x - lam), params)
        checks.append(abs_check(f"stieltjes lam={lam:.4g}", stieltjes(lam, params).real, ref, tol))
    for alpha, y in valid_grid():
        params = MpParams(y)
        to = theta_omega(alpha, params)
        sc = scale_factor(alpha, params)
        s2 = sigma2(alpha, params)
        checks.append(abs_check(f"sigma2 identity a={alpha:g} y={y:g}", s2, 2 * to.theta * alpha**2 * sc**2, ident_tol))
        sb = s2_binary(alpha, params)
        checks.append(abs_check(f"s2 identity a={alpha:g} y={y:g}", sb, 2 * (to.theta - to.omega) * alpha**2 * sc**2, ident_tol))
        checks.append(abs_check(f"s2 vs sigma2 a={alpha:g} y={y:g}", sb, s2 * y / (alpha - 1) ** 2, ident_tol))
    return checks


@dataclass(frozen=True)
class ResolventOracle:
    tr_a: float
    tr_aa: float
    sum_aii_sq: float


def resolvent_oracle(lam: float, params: MpParams) -> ResolventOracle:
    """Limits of the three resolvent statistics, from quadrature of the MP law."""
    m = m_transforms(lam, params)
    y = params.y
    ratio = y * (1.0 + m.m1) / (lam - y * (1.0 + m.m1))
    return ResolventOracle(y * m.m1, y * m.m2, ratio**2)


def resolvent_suite(p: int = 200, n: int = 400, lam: float = 5.0, seeds: int = 8, master_seed: int = 61) -> list[Check]:
    params = MpParams(p / n)
    oracle = resolvent_oracle(lam, params)
    stats = []
    for s in range(seeds):
        rng = np.random.default_rng([master_seed, s])
        x2 = rng.standard_normal((p, n)) / math.sqrt(n)
        stats.append(resolvent_stats(x2, lam))
    med = np.median(np.array(stats), axis=0)
    return [
        abs_check("tr A / n", med[0], 0.1492, 0.02),
        abs_check("sum a_ii^2 / n", med[2], 0.02227, 0.006),
        rel_check("tr AA* / n", med[1], oracle.tr_aa, 0.15),
        abs_check("oracle tr A / n", oracle.tr_a, 0.1492, 5e-4),
        abs_check("oracle sum a_ii^2 / n", oracle.sum_aii_sq, 0.02227, 5e-5),
    ]


# -- sesquilinear-form CLT ------------------------------------------------------------


def weight_matrix(n: int, rng: np.random.Generator, kind: str = "general") -> np.ndarray:
    """Fixed symmetric weights: ``general`` (diagonal shift plus Wigner part), ``identity`` or ``zero_diag``."""
    if kind == "identity":
        return np.eye(n)
    g = rng.standard_normal((n, n))
    w = (g + g.T) / math.sqrt(2.0 * n)
    if kind == "zero_diag":
        np.fill_diagonal(w, 0.0)
        return w
    if kind == "general":
        return 0.5 * w + np.diag(1.0 + 0.5 * rng.uniform(-1.0, 1.0, n))
    raise ValueError(f"unknown weight kind {kind!r}")


def _signs(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0


# joint loading of (x1, x2, y1, y2) on four independent standardised sources;
# pairs are strongly correlated so off-diagonal covariances are well determined
MIX = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.95, 0.3, 0.0, math.sqrt(1 - 0.95**2 - 0.3**2)],
        [0.8, 0.0, 0.6, 0.0],
        [0.75, 0.15, 0.55, math.sqrt(1 - 0.75**2 - 0.15**2 - 0.55**2)],
    ]
)


def _empirical_forms(
    source: str, a: np.ndarray, reps: int, rng: np.random.Generator, quadratic: bool
) -> np.ndarray:
    """``reps x K`` matrix of centred scaled forms, all replications in one product."""
    n = a.shape[0]
    draw = rng.standard_normal if source == "gaussian" else (lambda shape: _signs(rng, shape))
    e = draw((reps, n, 4))
    w = e @ MIX.T  # reps x n x 4
    x = w[..., :2]
    y = x if quadratic else w[..., 2:]
    rho = (MIX[:2] @ MIX[:2].T).diagonal() if quadratic else (MIX[:2] * MIX[2:]).sum(axis=1)
    xt = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(-1, n)
    xa = (xt @ a).reshape(reps, -1, n)
    forms = np.sum(xa * y.transpose(0, 2, 1), axis=2)
    return (forms - rho * np.trace(a)) / math.sqrt(n)


def _source_moments(source: str, quadratic: bool, draws: int, rng: np.random.Generator) -> MomentSpec:
    if source == "gaussian":
        cov = MIX @ MIX.T
        if quadratic:
            idx = [0, 1, 0, 1]
            cov = cov[np.ix_(idx, idx)]
        return MomentSpec.gaussian(cov)
    w = _signs(rng, (draws, 4)) @ MIX.T
    return MomentSpec.from_samples(w[:, :2], w[:, :2] if quadratic else w[:, 2:])


def sesquiform_suite(
    n: int = 2000, reps: int = 500, seed: int = 2024, moment_draws: int = 1_000_000
) -> list[Check]:
    """Empirical covariance of the scaled forms against B and D."""
    streams = iter(np.random.SeedSequence(seed).spawn(16))
    fresh = lambda: np.random.default_rng(next(streams))  # noqa: E731
    checks: list[Check] = []

    def compare(label: str, emp_z: np.ndarray, theory: np.ndarray, tol: float) -> None:
        cov = np.atleast_2d(np.cov(emp_z, rowvar=False))
        se = emp_z.std(axis=0, ddof=1) / math.sqrt(len(emp_z))
        for i in range(theory.shape[0]):
            checks.append(abs_check(f"{label} mean[{i}] / se", emp_z[:, i].mean() / se[i], 0.0, 4.0))
            for j in range(i, theory.shape[1]):
                if abs(theory[i, j]) >= 0.1:
                    checks.append(rel_check(f"{label} cov[{i},{j}]", cov[i, j], theory[i, j], tol))

    a = weight_matrix(n, fresh(), "general")
    stats = form_stats(a)
    for source in ("gaussian", "binary"):
        m = _source_moments(source, False, moment_draws, fresh())
        b = np.real(b_covariance(m, stats))
        compare(f"B {source}", _empirical_forms(source, a, reps, fresh(), False), b, 0.15)

    e = fresh().standard_normal((reps, n))
    z = (np.sum(e * e, axis=1) - n) / math.sqrt(n)
    checks.append(rel_check("identity A var", z.var(ddof=1), 2.0, 0.10))

    a = weight_matrix(n, fresh(), "zero_diag")
    stats = form_stats(a)
    m = _source_moments("binary", True, moment_draws, fresh())
    d = d_covariance(m, stats)
    gamma = np.real(m.xy)
    simplified = 2.0 * stats.theta * gamma**2
    checks.append(abs_check("zero-diag D equals 2 theta gamma^2", float(np.max(np.abs(d - simplified))), 0.0, 1e-12))
    compare("D zero-diag", _empirical_forms("binary", a, reps, fresh(), True), simplified, 0.15)
    return checks


SUITES = {
    "identities": identities_suite,
    "resolvent": resolvent_suite,
    "sesquiform": sesquiform_suite,
}


def run_suite(name: str) -> list[Check]:
    return SUITES[name]()
