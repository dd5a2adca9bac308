"""Spiked population models, data sampling and packed-index bookkeeping."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .spectra import BulkSpectrum, MpParams, is_separated

FAMILIES = ("gaussian", "rademacher", "custom")


@dataclass(frozen=True)
class SpikeSpec:
    """Spike eigenvalues with multiplicities, stored in strictly descending order."""

    spikes: tuple[tuple[float, int], ...]

    def __post_init__(self) -> None:
        spikes = tuple((float(a), int(m)) for a, m in self.spikes)
        spikes = tuple(sorted(spikes, key=lambda s: -s[0]))
        alphas = [a for a, _ in spikes]
        if any(a <= 0 or not math.isfinite(a) for a in alphas):
            raise DomainError("spike values must be positive and finite")
        if len(set(alphas)) != len(alphas):
            raise DomainError("spike values must be pairwise distinct")
        if any(m < 1 for _, m in spikes):
            raise DomainError("multiplicities must be positive integers")
        object.__setattr__(self, "spikes", spikes)

    @property
    def alphas(self) -> list[float]:
        return [a for a, _ in self.spikes]

    @property
    def multiplicities(self) -> list[int]:
        return [m for _, m in self.spikes]

    @property
    def M(self) -> int:
        return sum(self.multiplicities)

    @property
    def K(self) -> int:
        return len(self.spikes)

    def diagonal(self) -> np.ndarray:
        return np.repeat(self.alphas, self.multiplicities).astype(float)


@dataclass(frozen=True)
class EntryLaw:
    """Law of the standardised entries (zero mean, unit variance).

    ``beta`` is the fourth-moment excess: ``E xi^4 - 3`` for real laws and
    ``E |xi|^4 - 2`` for complex ones. Gaussian gives 0, real Rademacher -2.
    A ``custom`` law needs both ``beta`` and a ``sampler(rng, shape)``.
    """

    family: str = "gaussian"
    is_complex: bool = False
    beta: float | None = None
    sampler: Callable[[np.random.Generator, tuple[int, ...]], np.ndarray] | None = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise DomainError(f"unknown entry family {self.family!r}")
        implied = {
            ("gaussian", False): 0.0,
            ("gaussian", True): 0.0,
            ("rademacher", False): -2.0,
            ("rademacher", True): -1.0,
        }
        if self.family == "custom":
            if self.beta is None or self.sampler is None:
                raise DomainError("custom entry law needs beta and a sampler")
        else:
            want = implied[(self.family, self.is_complex)]
            if self.beta is not None and self.beta != want:
                raise DomainError(f"{self.family} entries imply beta={want}, got {self.beta}")
            object.__setattr__(self, "beta", want)

    @classmethod
    def gaussian(cls, is_complex: bool = False) -> EntryLaw:
        return cls("gaussian", is_complex)

    @classmethod
    def rademacher(cls, is_complex: bool = False) -> EntryLaw:
        return cls("rademacher", is_complex)

    def moments(self) -> dict[str, complex]:
        """Second and fourth moments of one standardised entry ``eps``.

        Keys: ``q = E eps^2``, ``m40 = E eps^4``, ``m31 = E eps^3 conj(eps)``,
        ``m22 = E |eps|^4``. Custom complex laws are taken as circular.
        """
        if not self.is_complex:
            m4 = self.beta + 3.0
            return {"q": 1.0, "m40": m4, "m31": m4, "m22": m4}
        if self.family == "rademacher":
            # (e1 + i e2) / sqrt 2 with independent signs
            return {"q": 0.0, "m40": -1.0, "m31": 0.0, "m22": 1.0}
        return {"q": 0.0, "m40": 0.0, "m31": 0.0, "m22": self.beta + 2.0}

    def draw(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        if self.family == "custom":
            out = np.asarray(self.sampler(rng, shape))
            if out.shape != tuple(shape):
                raise DimensionError(f"custom sampler returned shape {out.shape}, wanted {shape}")
            return out
        if self.family == "gaussian":
            base = lambda: rng.standard_normal(shape)  # noqa: E731
        else:
            base = lambda: rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0  # noqa: E731
        if not self.is_complex:
            return base()
        re = base()
        im = base()
        return (re + 1j * im) / math.sqrt(2.0)


@dataclass(frozen=True)
class SpikedModel:
    """Population: spike block ``Sigma`` (diagonal, optionally rotated) and bulk ``T_p``.

    With a rotation ``U`` the spike block is ``U diag(alpha) U*`` and data are
    drawn through its symmetric square root.
    """

    spike_spec: SpikeSpec
    params: MpParams
    bulk: BulkSpectrum = field(default_factory=BulkSpectrum.unit)
    entry_law: EntryLaw = field(default_factory=EntryLaw)
    rotation: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.rotation is not None:
            u = np.asarray(self.rotation)
            M = self.spike_spec.M
            if u.shape != (M, M):
                raise DimensionError(f"rotation must be {M}x{M}, got {u.shape}")
            if not np.allclose(u.conj().T @ u, np.eye(M), atol=1e-10):
                raise DomainError("rotation must be unitary")

    def tracked(self) -> list[int]:
        """Indices of the spikes that produce outlier sample eigenvalues."""
        return [
            k for k, a in enumerate(self.spike_spec.alphas)
            if is_separated(a, self.params, self.bulk)
        ]

    def sigma(self) -> np.ndarray:
        d = np.diag(self.spike_spec.diagonal())
        if self.rotation is None:
            return d
        u = np.asarray(self.rotation)
        return u @ d @ u.conj().T


@dataclass(frozen=True)
class DataMatrix:
    """Raw observations ``x_i = (xi_i, eta_i)`` stacked as a ``p x n`` array.

    ``p`` is the full dimension: the first ``M`` rows hold the spike block.
    """

    entries: np.ndarray
    M: int

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def x1(self) -> np.ndarray:
        return self.entries[: self.M] / math.sqrt(self.n)

    @property
    def x2(self) -> np.ndarray:
        return self.entries[self.M :] / math.sqrt(self.n)


def apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` items by ``weights``."""
    raw = np.asarray(weights, dtype=float) * total
    counts = np.floor(raw).astype(int)
    short = total - int(counts.sum())
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def bulk_counts(model: SpikedModel, p: int) -> np.ndarray:
    return apportion(p - model.spike_spec.M, model.bulk.weights)


def sample_data(model: SpikedModel, p: int, n: int, rng: np.random.Generator) -> DataMatrix:
    M = model.spike_spec.M
    if p <= M:
        raise DimensionError(f"p={p} must exceed the number of spike coordinates M={M}")
    if p > n:
        raise DimensionError(f"p={p} exceeds n={n}; only the y < 1 regime is supported")
    eps = model.entry_law.draw(rng, (p, n))
    scale = np.concatenate(
        [np.sqrt(model.spike_spec.diagonal()), np.repeat(np.sqrt(model.bulk.values), bulk_counts(model, p))]
    )
    if model.rotation is not None:
        # Sigma^{1/2} = U D^{1/2} U*, so the spike coordinates are not independent
        u = np.asarray(model.rotation)
        eps = eps.astype(np.result_type(eps, u))
        eps[:M] = u.conj().T @ eps[:M]
    x = eps * scale[:, None]
    if model.rotation is not None:
        x[:M] = u @ x[:M]
    return DataMatrix(x, M)


def sample_cov(data: DataMatrix) -> np.ndarray:
    x = data.entries
    s = x @ x.conj().T / data.n
    return 0.5 * (s + s.conj().T)


def packed_index_sets(
    spec: SpikeSpec, params: MpParams, p: int, bulk: BulkSpectrum | None = None
) -> dict[int, tuple[int, ...]]:
    """Map spike ``k`` to the 1-based ranks of its packed sample eigenvalues.

    Ranks follow the population order: a spike's block starts after every
    bulk atom and every spike that exceeds it. For the unit bulk this gives
    ``{s_{k-1}+1..s_k}`` above the bulk and ``{p-t_k+1..p-t_{k-1}}`` below.
    Spikes that are not separated map to the empty tuple.
    """
    bulk = bulk or BulkSpectrum.unit()
    counts = apportion(p - spec.M, bulk.weights)
    out: dict[int, tuple[int, ...]] = {}
    for k, (alpha, mult) in enumerate(spec.spikes):
        if not is_separated(alpha, params, bulk):
            out[k] = ()
            continue
        above = int(counts[bulk.values > alpha].sum())
        above += sum(m for a, m in spec.spikes if a > alpha)
        out[k] = tuple(range(above + 1, above + mult + 1))
    return out
