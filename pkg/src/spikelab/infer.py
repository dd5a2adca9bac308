"""Recover population spikes and confidence intervals from an observed spectrum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError
from .limits import scale_factor, sigma2, s2_binary, theta_omega
from .linalg import EigenSample
from .spectra import BulkSpectrum, MpParams, phi_inverse, support_of

VARIANCE_MODELS = ("gaussian", "binary", "custom")
EDGE_MARGIN = 0.05


@dataclass(frozen=True)
class Candidate:
    lam: float
    side: str  # above | below | inter-band
    rank: int  # 1-based position in the descending spectrum


@dataclass(frozen=True)
class SpikeEstimate:
    alpha_hat: float
    lambda_observed: float
    side: str
    ci: tuple[float, float]
    ci_lambda: tuple[float, float]
    confidence: float
    variance_model: str
    variance: float
    beta: float | None = None

    def to_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "lambda_observed": self.lambda_observed,
            "side": self.side,
            "ci": list(self.ci),
            "ci_lambda": list(self.ci_lambda),
            "confidence": self.confidence,
            "variance_model": self.variance_model,
            "variance": self.variance,
            "beta": self.beta,
        }


def edge_margins(lo: float, hi: float, frac: float = EDGE_MARGIN) -> tuple[float, float]:
    """Exclusion margins below ``lo`` and above ``hi`` of one support interval.

    The upper margin is ``frac`` times the width. Fluctuations near a soft
    lower edge shrink with the edge value, so the lower margin is scaled by
    ``sqrt(lo / hi)``; otherwise it would swallow every small spike.
    """
    width = hi - lo
    return frac * width * math.sqrt(max(lo, 0.0) / hi), frac * width


def detect_spikes(
    eigs: EigenSample | np.ndarray,
    params: MpParams,
    bulk: BulkSpectrum | None = None,
    margin: float = EDGE_MARGIN,
) -> list[Candidate]:
    """Eigenvalues outside the margin-inflated limiting support, largest first."""
    values = eigs.values if isinstance(eigs, EigenSample) else np.sort(np.asarray(eigs, dtype=float))[::-1]
    support = support_of(params, bulk)
    zones = []
    for lo, hi in support.intervals:
        below, above = edge_margins(lo, hi, margin)
        zones.append((lo - below, hi + above))
    top, bottom = zones[-1][1], zones[0][0]
    out = []
    for rank, lam in enumerate(values, start=1):
        if any(lo <= lam <= hi for lo, hi in zones):
            continue
        if lam > top:
            side = "above"
        elif lam < bottom:
            if lam <= 0:
                continue  # null directions when p > n carry no spike information
            side = "below"
        else:
            side = "inter-band"
        out.append(Candidate(float(lam), side, rank))
    return out


def limit_variance(
    alpha: float, params: MpParams, variance_model: str = "gaussian", beta: float | None = None
) -> float:
    if variance_model == "gaussian":
        return sigma2(alpha, params)
    if variance_model == "binary":
        return s2_binary(alpha, params)
    if variance_model == "custom":
        if beta is None:
            raise DomainError("the custom variance model needs beta")
        to = theta_omega(alpha, params)
        var = (2.0 * to.theta + beta * to.omega) * alpha**2 * scale_factor(alpha, params) ** 2
        if not var > 0:
            raise DomainError(f"beta={beta} gives a non-positive limit variance")
        return var
    raise DomainError(f"variance model must be one of {VARIANCE_MODELS}, got {variance_model!r}")


def estimate_spike(
    lambda_obs: float,
    n: int,
    params: MpParams,
    variance_model: str = "gaussian",
    beta: float | None = None,
    confidence: float = 0.95,
    multiplicity: int = 1,
) -> SpikeEstimate:
    """Invert the spike map and build the interval in eigenvalue space first."""
    if multiplicity != 1:
        raise DomainError("scalar intervals are unsupported for packed spikes; their limit is non-Gaussian")
    if not 0 < confidence < 1:
        raise DomainError("confidence must lie in (0, 1)")
    if n < 1:
        raise DomainError("n must be positive")
    if params.a <= lambda_obs <= params.b:
        raise DomainError(f"lambda={lambda_obs:g} lies inside the support [{params.a:.6g}, {params.b:.6g}]")
    side = "above" if lambda_obs > params.b else "below"
    alpha = phi_inverse(lambda_obs, params, side)
    var = limit_variance(alpha, params, variance_model, beta)
    half = float(ndtri(0.5 + confidence / 2)) * math.sqrt(var / n)
    lam_lo, lam_hi = lambda_obs - half, lambda_obs + half
    crit_lo, crit_hi = params.critical_interval
    if side == "above":
        lo = phi_inverse(lam_lo, params, "above") if lam_lo > params.b else crit_hi
        hi = phi_inverse(lam_hi, params, "above")
    else:
        lo = phi_inverse(lam_lo, params, "below") if lam_lo > 0 else 0.0
        hi = phi_inverse(lam_hi, params, "below") if lam_hi < params.a else crit_lo
    return SpikeEstimate(
        alpha, float(lambda_obs), side, (lo, hi), (lam_lo, lam_hi), confidence, variance_model, var,
        beta if variance_model == "custom" else None,
    )


def cluster_outliers(candidates: list[Candidate], n: int, params: MpParams) -> list[tuple[Candidate, ...]]:
    """Group neighbouring outliers closer than ``3 sigma / sqrt(n)``; descriptive only."""
    groups: list[list[Candidate]] = []
    for cand in candidates:
        if cand.side not in ("above", "below"):
            groups.append([cand])
            continue
        prev = groups[-1][-1] if groups else None
        if prev is not None and prev.side == cand.side:
            alpha = phi_inverse(prev.lam, params, prev.side)
            gap = 3.0 * math.sqrt(sigma2(alpha, params) / n)
            if abs(prev.lam - cand.lam) < gap:
                groups[-1].append(cand)
                continue
        groups.append([cand])
    return [tuple(g) for g in groups]
