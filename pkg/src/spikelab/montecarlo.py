"""Seeded replication harness and goodness-of-fit against the limit laws."""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, ReplicationError
from .limits import LimitLaw, limit_law, sample_limit_law
from .linalg import hermitian_eigs
from .model import EntryLaw, SpikedModel, SpikeSpec, packed_index_sets, sample_cov, sample_data
from .spectra import BulkSpectrum, MpParams, spike_center

MODES = ("fast", "full_scale")
KS_TERMS = 100


@dataclass(frozen=True)
class Thresholds:
    p_min: float = 0.01
    var_tol: float = 0.20
    mean_tol: float = 0.15  # in units of the limit standard deviation


@dataclass(frozen=True)
class ExperimentConfig:
    model: SpikedModel
    p: int
    n: int
    replications: int
    master_seed: int = 0
    tracked_spikes: tuple[int, ...] | None = None
    mode: str = "fast"
    thresholds: Thresholds | None = None
    limit_draws: int = 100_000

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replications < 2:
            raise DomainError("at least two replications are required")
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        separated = set(self.model.tracked())
        tracked = tuple(sorted(separated)) if self.tracked_spikes is None else tuple(self.tracked_spikes)
        for k in tracked:
            if not 0 <= k < self.model.spike_spec.K:
                raise DomainError(f"tracked spike index {k} does not exist")
            if k not in separated:
                alpha = self.model.spike_spec.alphas[k]
                raise DomainError(f"spike {alpha} (index {k}) does not separate from the bulk")
        object.__setattr__(self, "tracked_spikes", tracked)
        if self.thresholds is None:
            if self.mode == "full_scale":
                tol = 0.10
            elif self.model.entry_law.family == "rademacher":
                tol = 0.25
            else:
                tol = 0.20
            object.__setattr__(self, "thresholds", Thresholds(var_tol=tol))

    def digest(self) -> str:
        """Hash of everything that determines a replication except the replication count."""
        m = self.model
        doc = {
            "spikes": m.spike_spec.spikes,
            "y": m.params.y,
            "bulk": m.bulk.atoms,
            "entry": [m.entry_law.family, m.entry_law.is_complex, m.entry_law.beta],
            "rotation": None if m.rotation is None else np.asarray(m.rotation).round(15).tolist(),
            "p": self.p,
            "n": self.n,
            "tracked": self.tracked_spikes,
            "seed": self.master_seed,
        }
        text = json.dumps(doc, sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def preset(
    name: str,
    mode: str = "fast",
    entry: EntryLaw | None = None,
    master_seed: int = 0,
    replications: int | None = None,
) -> ExperimentConfig:
    """Named experiments.

    ``mp_mixed``: unit bulk, spikes 4, 3 (x2), 0.2 (x2), 0.1 at y = 0.5.
    ``mp_simple``: unit bulk, simple spikes 4 and 0.1 at y = 0.5.
    ``mp_double``: unit bulk, a single spike 3 of multiplicity two at y = 0.5.
    ``two_atom_bulk``: bulk 1 and 10 with equal weights, spikes 5, 4 (x2), 3 at y = 0.2.
    """
    entry = entry or EntryLaw()
    unit_spikes = {
        "mp_mixed": ((4, 1), (3, 2), (0.2, 2), (0.1, 1)),
        "mp_simple": ((4, 1), (0.1, 1)),
        "mp_double": ((3, 2),),
    }
    if name in unit_spikes:
        model = SpikedModel(SpikeSpec(unit_spikes[name]), MpParams(0.5), entry_law=entry)
        p, n, reps = (500, 1000, 1000) if mode == "full_scale" else (200, 400, 400)
    elif name == "two_atom_bulk":
        bulk = BulkSpectrum(((1.0, 0.5), (10.0, 0.5)))
        model = SpikedModel(SpikeSpec(((5, 1), (4, 2), (3, 1))), MpParams(0.2), bulk, entry)
        p, n, reps = (500, 2500, 500) if mode == "full_scale" else (500, 2500, 100)
    else:
        raise DomainError(f"unknown preset {name!r}")
    return ExperimentConfig(model, p, n, replications or reps, master_seed, mode=mode)


def replication_seed(master_seed: int, rep: int) -> int:
    """64-bit seed of replication ``rep``, hashed from ``(master_seed, rep)``."""
    ss = np.random.SeedSequence([master_seed, rep])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ReplicationSet:
    """Tracked eigenvalues per replication; columns are ``(spike k, 1-based rank j)``."""

    reps: np.ndarray
    seeds: np.ndarray
    columns: tuple[tuple[int, int], ...]
    centers: np.ndarray
    lambdas: np.ndarray
    deltas: np.ndarray
    n: int
    digest: str

    def __len__(self) -> int:
        return len(self.reps)

    @property
    def groups(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for c, (k, _) in enumerate(self.columns):
            out.setdefault(k, []).append(c)
        return out

    def label(self, c: int) -> str:
        k, j = self.columns[c]
        return f"k{k}_j{j}"

    def to_csv(self, path: str | Path) -> None:
        lines = ["rep,spike_k,j,lambda,delta"]
        for r, rep in enumerate(self.reps):
            for c, (k, j) in enumerate(self.columns):
                lines.append(f"{rep},{k},{j},{self.lambdas[r, c]:.17g},{self.deltas[r, c]:.17g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _centers(config: ExperimentConfig) -> tuple[tuple[tuple[int, int], ...], np.ndarray]:
    m = config.model
    index = packed_index_sets(m.spike_spec, m.params, config.p, m.bulk)
    cols, centers = [], []
    for k in config.tracked_spikes:
        center = spike_center(m.spike_spec.alphas[k], m.params, m.bulk)
        for j in index[k]:
            cols.append((k, j))
            centers.append(center)
    return tuple(cols), np.array(centers, dtype=float)


def _one_replication(config: ExperimentConfig, rep: int, ranks: np.ndarray) -> tuple[int, np.ndarray]:
    seed = replication_seed(config.master_seed, rep)
    try:
        rng = np.random.Generator(np.random.PCG64(seed))
        data = sample_data(config.model, config.p, config.n, rng)
        values = hermitian_eigs(sample_cov(data)).values
        lam = values[ranks - 1]
        if not np.all(np.isfinite(lam)):
            raise FloatingPointError("non-finite eigenvalue")
    except Exception as exc:  # noqa: BLE001
        raise ReplicationError(rep, seed, exc) from exc
    return seed, lam


def run_replications(
    config: ExperimentConfig, reps: range | None = None, threads: int | None = None
) -> ReplicationSet:
    """Run replications ``reps`` (default ``range(config.replications)``)."""
    reps = range(config.replications) if reps is None else reps
    cols, centers = _centers(config)
    ranks = np.array([j for _, j in cols], dtype=int)
    workers = max(1, threads or os.cpu_count() or 1)
    if workers == 1 or len(reps) < 2:
        results = [_one_replication(config, r, ranks) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: _one_replication(config, r, ranks), reps))
    seeds = np.array([s for s, _ in results], dtype=np.uint64)
    lambdas = np.array([lam for _, lam in results], dtype=float).reshape(len(reps), len(cols))
    deltas = math.sqrt(config.n) * (lambdas - centers)
    return ReplicationSet(
        np.array(list(reps), dtype=int), seeds, cols, centers, lambdas, deltas, config.n, config.digest()
    )


def merge(*sets: ReplicationSet) -> ReplicationSet:
    """Combine runs of one config over disjoint replication ranges, ordered by replication index."""
    if not sets:
        raise DomainError("nothing to merge")
    first = sets[0]
    for s in sets[1:]:
        if s.digest != first.digest or s.columns != first.columns:
            raise DomainError("replication sets come from different configurations")
    reps = np.concatenate([s.reps for s in sets])
    if len(np.unique(reps)) != len(reps):
        raise DomainError("replication index ranges overlap")
    order = np.argsort(reps, kind="stable")
    cat = lambda name: np.concatenate([getattr(s, name) for s in sets])[order]  # noqa: E731
    return ReplicationSet(
        reps[order], cat("seeds"), first.columns, first.centers, cat("lambdas"), cat("deltas"), first.n,
        first.digest,
    )


# -- summaries ----------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSummary:
    mean: float
    var: float
    skew: float | None
    mean_se: float
    var_se: float
    skew_se: float | None


def _loo_moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leave-one-out mean, unbiased variance and skewness, vectorised through power sums."""
    N = len(x)
    c = x - x.mean()
    s1, s2, s3 = c.sum(), (c * c).sum(), (c**3).sum()
    m = N - 1
    t1 = s1 - c
    t2 = s2 - c * c
    t3 = s3 - c**3
    mu = t1 / m
    cm2 = t2 / m - mu * mu
    cm3 = t3 / m - 3 * mu * t2 / m + 2 * mu**3
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = cm3 / cm2**1.5
    return mu + x.mean(), cm2 * m / (m - 1), skew


def _jackknife_se(loo: np.ndarray) -> float:
    N = len(loo)
    return float(math.sqrt((N - 1) / N * np.sum((loo - loo.mean()) ** 2)))


def column_summary(values) -> ColumnSummary:
    x = np.asarray(values, dtype=float)
    if len(x) < 3:
        raise DomainError("need at least three values")
    var = float(x.var(ddof=1))
    lm, lv, ls = _loo_moments(x)
    spread = np.ptp(x)
    if spread == 0 or var <= (1e-14 * max(abs(float(x.mean())), 1.0)) ** 2:
        return ColumnSummary(float(x.mean()), 0.0, None, 0.0, 0.0, None)
    c = x - x.mean()
    skew = float(np.mean(c**3) / np.mean(c * c) ** 1.5)
    return ColumnSummary(float(x.mean()), var, skew, _jackknife_se(lm), _jackknife_se(lv), _jackknife_se(ls))


@dataclass(frozen=True)
class SummaryReport:
    labels: tuple[str, ...]
    columns: tuple[ColumnSummary, ...]
    group_cov: dict[int, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, label: str) -> ColumnSummary:
        return self.columns[self.labels.index(label)]


MIN_SUMMARY_REPS = 30


def empirical_summary(reps: ReplicationSet | np.ndarray) -> SummaryReport:
    """Per-column moments with jackknife errors; ``reps`` may also be a plain 2-D array."""
    if isinstance(reps, ReplicationSet):
        data, labels, groups = reps.deltas, tuple(reps.label(c) for c in range(len(reps.columns))), reps.groups
    else:
        data = np.asarray(reps, dtype=float)
        data = data[:, None] if data.ndim == 1 else data
        labels = tuple(f"c{c}" for c in range(data.shape[1]))
        groups = {0: list(range(data.shape[1]))}
    if data.shape[0] < MIN_SUMMARY_REPS:
        raise DomainError(f"need at least {MIN_SUMMARY_REPS} replications, got {data.shape[0]}")
    cols = tuple(column_summary(data[:, c]) for c in range(data.shape[1]))
    cov = {k: np.atleast_2d(np.cov(data[:, idx], rowvar=False)) for k, idx in groups.items()}
    return SummaryReport(labels, cols, cov)


# -- goodness of fit ----------------------------------------------------------------


def kolmogorov_sf(lam: float) -> float:
    """``P(K > lam)`` for the Kolmogorov distribution, from its alternating series."""
    if lam < 0.2:
        return 1.0
    k = np.arange(1, KS_TERMS + 1)
    total = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam))
    return float(min(max(total, 0.0), 1.0))


def _clean(sample, name: str) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 8:
        raise DomainError(f"{name} has {x.size} values; KS needs at least 8")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} contains non-finite values")
    return np.sort(x)


def ks_test(sample, reference) -> tuple[float, float]:
    """One-sample KS against a cdf callable, or two-sample KS against an array."""
    x = _clean(sample, "sample")
    N = x.size
    if callable(reference):
        f = np.asarray(reference(x), dtype=float)
        i = np.arange(1, N + 1)
        stat = float(max(np.max(i / N - f), np.max(f - (i - 1) / N)))
        ne = float(N)
    else:
        z = _clean(reference, "reference")
        both = np.concatenate([x, z])
        fx = np.searchsorted(x, both, side="right") / N
        fz = np.searchsorted(z, both, side="right") / z.size
        stat = float(np.max(np.abs(fx - fz)))
        ne = N * z.size / (N + z.size)
    root = math.sqrt(ne)
    return stat, kolmogorov_sf((root + 0.12 + 0.11 / root) * stat)


@dataclass(frozen=True)
class KdeGrid:
    axes: tuple[np.ndarray, ...]
    density: np.ndarray
    bandwidth: tuple[float, ...]

    def integral(self) -> float:
        out = self.density
        for ax in reversed(self.axes):
            out = np.trapezoid(out, ax, axis=-1)
        return float(out)

    def to_csv(self, path: str | Path) -> None:
        if len(self.axes) == 1:
            lines = ["x,density"] + [f"{a:.17g},{d:.17g}" for a, d in zip(self.axes[0], self.density)]
        else:
            lines = ["x,y,density"]
            for i, a in enumerate(self.axes[0]):
                lines.extend(f"{a:.17g},{b:.17g},{self.density[i, j]:.17g}" for j, b in enumerate(self.axes[1]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def silverman_bandwidth(x: np.ndarray) -> float:
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) or sd
    return 0.9 * spread * len(x) ** (-0.2)


def _kernel_rows(grid: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    u = (grid[:, None] - x[None, :]) / h
    return np.exp(-0.5 * u * u) / (h * math.sqrt(2 * math.pi))


def kde(sample, bandwidth="auto", grid_size: int | None = None, chunk: int = 4096) -> KdeGrid:
    """Gaussian KDE of an ``N`` vector or an ``N x 2`` array of pairs on a regular grid."""
    x = np.asarray(sample, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    if x.ndim != 2 or x.shape[1] not in (1, 2):
        raise DomainError("kde takes a vector or an N x 2 array")
    if x.shape[0] < 30:
        raise DomainError(f"kde needs at least 30 points, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise DomainError("kde sample contains non-finite values")
    dims = x.shape[1]
    if bandwidth == "auto":
        if np.any(np.std(x, axis=0) == 0):
            raise DomainError("kde sample has zero variance")
        hs = tuple(silverman_bandwidth(x[:, d]) for d in range(dims))
    else:
        hs = tuple(float(b) for b in np.broadcast_to(np.asarray(bandwidth, dtype=float), (dims,)))
        if min(hs) <= 0:
            raise DomainError("bandwidth must be positive")
    size = grid_size or (512 if dims == 1 else 128)
    axes = tuple(
        np.linspace(x[:, d].min() - 3 * hs[d], x[:, d].max() + 3 * hs[d], size) for d in range(dims)
    )
    N = x.shape[0]
    dens = np.zeros((size,) * dims)
    for s in range(0, N, chunk):
        part = x[s : s + chunk]
        kx = _kernel_rows(axes[0], part[:, 0], hs[0])
        if dims == 1:
            dens += kx.sum(axis=1)
        else:
            dens += kx @ _kernel_rows(axes[1], part[:, 1], hs[1]).T
    return KdeGrid(axes, dens / N, hs)


@dataclass(frozen=True)
class ColumnGof:
    column: str
    spike_k: int
    j: int
    ks_stat: float
    p_value: float
    emp_mean: float
    emp_var: float
    emp_mean_se: float
    emp_var_se: float
    limit_mean: float
    limit_var: float
    verdict: str


@dataclass(frozen=True)
class GofReport:
    rows: tuple[ColumnGof, ...]
    thresholds: Thresholds
    kde: dict[str, KdeGrid] = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return all(r.verdict == "pass" for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "thresholds": vars(self.thresholds),
            "passed": self.passed,
            "columns": [vars(r) for r in self.rows],
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def default_laws(config: ExperimentConfig) -> dict[int, LimitLaw]:
    m = config.model
    if not m.bulk.is_unit:
        raise DomainError("explicit limit laws exist only for the unit bulk")
    if m.rotation is not None:
        raise DomainError("explicit limit laws assume a diagonal spike block")
    return {
        k: limit_law(m.spike_spec.alphas[k], m.spike_spec.multiplicities[k], m.params, m.entry_law)
        for k in config.tracked_spikes
    }


def compare_to_limit(
    reps: ReplicationSet,
    laws: dict[int, LimitLaw],
    rng: np.random.Generator,
    thresholds: Thresholds | None = None,
    limit_draws: int = 100_000,
) -> GofReport:
    """KS and moment checks of every tracked column against its limit law."""
    th = thresholds or Thresholds()
    rows: list[ColumnGof] = []
    for k, idx in reps.groups.items():
        if k not in laws:
            raise DomainError(f"no limit law supplied for spike {k}")
        law = laws[k]
        if law.size != len(idx):
            raise DomainError(f"law for spike {k} has size {law.size}, columns give {len(idx)}")
        if law.size == 1:
            sd = math.sqrt(law.variance)
            refs = [lambda t, sd=sd: ndtr(t / sd)]
            lim_mean, lim_var = [0.0], [law.variance]
        else:
            draws = sample_limit_law(law, limit_draws, rng)
            refs = [draws[:, i] for i in range(law.size)]
            lim_mean = list(draws.mean(axis=0))
            lim_var = list(draws.var(axis=0, ddof=1))
        for pos, c in enumerate(idx):
            col = reps.deltas[:, c]
            stat, pval = ks_test(col, refs[pos])
            summ = column_summary(col)
            ok = (
                pval >= th.p_min
                and abs(summ.var / lim_var[pos] - 1.0) <= th.var_tol
                and abs(summ.mean - lim_mean[pos]) <= th.mean_tol * math.sqrt(lim_var[pos])
            )
            rows.append(
                ColumnGof(
                    reps.label(c), k, reps.columns[c][1], stat, pval, summ.mean, summ.var, summ.mean_se,
                    summ.var_se, float(lim_mean[pos]), float(lim_var[pos]), "pass" if ok else "fail",
                )
            )
    return GofReport(tuple(rows), th)


def experiment_kdes(reps: ReplicationSet) -> dict[str, KdeGrid]:
    """1-D grids for simple spikes and a 2-D grid of the top pair of each packed group."""
    out: dict[str, KdeGrid] = {}
    for k, idx in reps.groups.items():
        if len(idx) == 1:
            out[reps.label(idx[0])] = kde(reps.deltas[:, idx[0]])
        else:
            out[f"k{k}_pair"] = kde(reps.deltas[:, idx[:2]])
    return out
