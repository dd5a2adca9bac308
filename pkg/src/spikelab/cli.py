"""Command-line entry point: ``spikelab {limits,simulate,infer,verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import batteries
from .errors import CriticalIntervalError, DomainError, SpikelabError
from .infer import cluster_outliers, detect_spikes, estimate_spike
from .limits import s2_binary, sigma2, theta_omega
from .model import EntryLaw, SpikedModel, SpikeSpec
from .montecarlo import (
    ExperimentConfig,
    GofReport,
    Thresholds,
    compare_to_limit,
    default_laws,
    experiment_kdes,
    run_replications,
)
from .spectra import (
    BulkSpectrum,
    MpParams,
    SeparationWarning,
    is_separated,
    m_closed_forms,
    spike_center,
    support_of,
)

EXIT_OK = 0
EXIT_STAT_FAIL = 1
EXIT_CRITICAL = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66

log = logging.getLogger("spikelab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atom(text: str) -> tuple[float, float]:
    try:
        value, weight = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected atom:weight, got {text!r}") from None
    return value, weight


def _entry_law(name: str, is_complex: bool = False) -> EntryLaw:
    return EntryLaw.rademacher(is_complex) if name == "binary" else EntryLaw.gaussian(is_complex)


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


# -- limits -------------------------------------------------------------------------


def cmd_limits(args: argparse.Namespace) -> int:
    try:
        params = MpParams(args.y)
        bulk = BulkSpectrum(tuple(args.bulk)) if args.bulk else BulkSpectrum.unit()
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    support = support_of(params, bulk)
    doc: dict = {"y": params.y, "bulk": [list(a) for a in bulk.atoms], "entry": args.entry}
    doc["support"] = [list(iv) for iv in support.intervals]
    if bulk.is_unit:
        doc["critical_interval"] = list(params.critical_interval)
    spikes, bad = [], []
    for alpha in args.alpha:
        if not is_separated(alpha, params, bulk):
            bad.append(alpha)
            continue
        row: dict = {"alpha": alpha}
        if bulk.is_unit:
            m = m_closed_forms(alpha, params)
            to = theta_omega(alpha, params)
            row.update(
                phi=spike_center(alpha, params),
                sigma2=sigma2(alpha, params),
                s2=s2_binary(alpha, params),
                m1=m.m1, m2=m.m2, m3=m.m3, theta=to.theta, omega=to.omega,
            )
            row["variance"] = row["s2"] if args.entry == "binary" else row["sigma2"]
        else:
            row["psi"] = spike_center(alpha, params, bulk)
        spikes.append(row)
    if bad:
        if bulk.is_unit:
            lo, hi = params.critical_interval
            err = CriticalIntervalError(bad[0], lo, hi)
            sys.stderr.write(f"spikelab limits: {err}\n")
        else:
            sys.stderr.write(f"spikelab limits: spike(s) {bad} do not separate from the bulk support\n")
        return EXIT_CRITICAL
    doc["spikes"] = spikes
    for key in ("phi", "psi", "sigma2", "s2", "variance"):
        if spikes and key in spikes[0]:
            doc[key] = [s[key] for s in spikes]
    _emit(doc)
    return EXIT_OK


# -- simulate -----------------------------------------------------------------------


class ThresholdsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    p_min: float = Field(0.01, gt=0, lt=1)
    var_tol: float = Field(0.20, gt=0)
    mean_tol: float = Field(0.15, gt=0)


class SimulateConfig(BaseModel):
    """Schema of a ``simulate`` configuration file."""

    model_config = ConfigDict(extra="forbid")
    y: float = Field(gt=0, lt=1)
    spikes: list[tuple[float, int]] = Field(min_length=1)
    bulk: list[tuple[float, float]] | None = None
    entry: Literal["gaussian", "binary"] = "gaussian"
    complex: bool = False
    p: int = Field(gt=1)
    n: int = Field(gt=1)
    replications: int = Field(ge=2)
    master_seed: int = Field(0, ge=0, lt=2**64)
    tracked_spikes: list[int] | None = None
    mode: Literal["fast", "full_scale"] = "fast"
    thresholds: ThresholdsModel | None = None
    limit_draws: int = Field(100_000, ge=1000)
    kde: bool = True

    @field_validator("n")
    @classmethod
    def _ratio(cls, n: int, info):
        p = info.data.get("p")
        if p is not None and p > n:
            raise ValueError("p must not exceed n")
        return n

    def to_experiment(self) -> ExperimentConfig:
        bulk = BulkSpectrum(tuple(map(tuple, self.bulk))) if self.bulk else BulkSpectrum.unit()
        model = SpikedModel(
            SpikeSpec(tuple(self.spikes)), MpParams(self.y), bulk, _entry_law(self.entry, self.complex)
        )
        th = Thresholds(**self.thresholds.model_dump()) if self.thresholds else None
        tracked = None if self.tracked_spikes is None else tuple(self.tracked_spikes)
        return ExperimentConfig(
            model, self.p, self.n, self.replications, self.master_seed, tracked, self.mode, th, self.limit_draws
        )


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc}") from exc


def cmd_simulate(args: argparse.Namespace) -> int:
    text = _read_text(args.config)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{args.config}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if os.environ.get("SPIKELAB_SEED"):
        try:
            raw["master_seed"] = int(os.environ["SPIKELAB_SEED"])
        except (TypeError, ValueError):
            raise UsageError("SPIKELAB_SEED must be an integer") from None
    try:
        cfg = SimulateConfig.model_validate(raw)
        experiment = cfg.to_experiment()
    except ValidationError as exc:
        raise UsageError(f"invalid config:\n{exc}") from exc
    except DomainError as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %d replications (p=%d, n=%d)", cfg.replications, cfg.p, cfg.n)
    reps = run_replications(experiment, threads=args.threads)
    reps.to_csv(out / "replications.csv")
    passed = True
    try:
        laws = default_laws(experiment)
    except DomainError as exc:
        doc = {"thresholds": vars(experiment.thresholds), "passed": None, "columns": [], "note": str(exc)}
        (out / "gof.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    else:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([experiment.master_seed, 2**32])))
        report: GofReport = compare_to_limit(reps, laws, rng, experiment.thresholds, experiment.limit_draws)
        report.to_json(out / "gof.json")
        passed = report.passed
    if cfg.kde and len(reps) >= 30:
        for name, grid in experiment_kdes(reps).items():
            grid.to_csv(out / f"kde_{name}.csv")
    _emit({"out": str(out), "replications": len(reps), "passed": passed})
    return EXIT_OK if passed else EXIT_STAT_FAIL


# -- infer --------------------------------------------------------------------------


def read_spectrum(path: str) -> np.ndarray:
    """One eigenvalue per line; blank lines and a single leading header are skipped."""
    values = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        text = line.strip().split(",")[0].strip()
        if not text:
            continue
        try:
            v = float(text)
        except ValueError:
            if lineno == 1:
                continue
            raise ValueError(f"{path}:{lineno}: not a number: {line.strip()!r}") from None
        if not math.isfinite(v):
            raise ValueError(f"{path}:{lineno}: non-finite value {line.strip()!r}")
        values.append(v)
    return np.sort(np.array(values, dtype=float))[::-1]


def cmd_infer(args: argparse.Namespace) -> int:
    values = read_spectrum(args.spectrum)
    try:
        params = MpParams(args.y)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    if args.variance_model == "custom" and args.beta is None:
        raise UsageError("--variance-model custom needs --beta")
    cands = [c for c in detect_spikes(values, params) if c.side in ("above", "below")]
    out = []
    for group in cluster_outliers(cands, args.n, params):
        for c in group:
            if len(group) == 1:
                est = estimate_spike(c.lam, args.n, params, args.variance_model, args.beta, args.confidence)
                row = est.to_dict()
            else:
                # packed outliers: point estimate only, no scalar interval
                est = estimate_spike(c.lam, args.n, params, args.variance_model, args.beta, args.confidence)
                row = est.to_dict() | {"ci": None, "ci_lambda": None}
            row.update(rank=c.rank, cluster_size=len(group))
            out.append(row)
    _emit(out)
    return EXIT_OK


# -- verify -------------------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    checks = batteries.run_suite(args.suite)
    for c in checks:
        sys.stdout.write(c.row() + "\n")
    failed = sum(not c.passed for c in checks)
    sys.stdout.write(f"{args.suite}: {len(checks) - failed}/{len(checks)} passed\n")
    return EXIT_OK if failed == 0 else EXIT_STAT_FAIL


# -- wiring -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikelab", description="Fluctuations of spiked sample eigenvalues.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("limits", help="analytic centres, variances and supports")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--alpha", type=float, action="append", default=[])
    p.add_argument("--bulk", type=_atom, action="append", default=[], metavar="ATOM:WEIGHT")
    p.add_argument("--entry", choices=("gaussian", "binary"), default="gaussian")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("simulate", help="run a seeded replication experiment")
    p.add_argument("config", help="JSON experiment file")
    p.add_argument("--out", default="spikelab_out", help="output directory (created if missing)")
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: CPU count)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", help="estimate spikes from an observed spectrum")
    p.add_argument("spectrum", help="one eigenvalue per line; an optional header line is skipped")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--variance-model", choices=("gaussian", "binary", "custom"), default="gaussian")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--confidence", type=float, default=0.95)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("verify", help="run an oracle battery")
    p.add_argument("--suite", choices=tuple(batteries.SUITES), required=True)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.verbose == 0:
        warnings.simplefilter("ignore", SeparationWarning)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"spikelab {args.command}: {exc}\n")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        sys.stderr.write(f"spikelab {args.command}: {exc}\n")
        return EXIT_NOINPUT
    except ValueError as exc:
        sys.stderr.write(f"spikelab {args.command}: {exc}\n")
        return EXIT_DATA
    except SpikelabError as exc:
        sys.stderr.write(f"spikelab {args.command}: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
