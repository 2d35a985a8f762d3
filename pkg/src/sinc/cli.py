"""Command-line entry point: ``sinc simulate|fit|grid|evaluate``.

Settings come from built-in defaults, then an optional key=value config
file, then command-line flags. Every run writes ``run.json`` recording the
resolved settings so it can be repeated exactly.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from . import __version__
from .driver import DEFAULT_NU0_GRID, DEFAULT_SPARSITY_TARGET, fit_grid, fit_once
from .errors import NonFiniteResult, ParseError, SincError, SingularBlock, ValidationError
from .io import load_matrix, write_json, write_matrix, write_outputs
from .metrics import confusion, confusion_edges, scores
from .model import CountMatrix, CovariateMatrix, FitConfig, Hyperparameters
from .synthetic import GraphSpec, generate_dataset, write_ground_truth

logger = logging.getLogger("sinc")

COMMANDS = ("simulate", "fit", "grid", "evaluate")

EXIT_OK = 0
EXIT_INPUT = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

_HP_KEYS = {f.name: f.type for f in fields(Hyperparameters)}
_CFG_KEYS = {f.name: f.type for f in fields(FitConfig)}
_SIM_KEYS = {"graph": str, "p": int, "q": int, "n": int, "bandwidth": int, "n_hubs": int,
             "edge_prob": float, "within_cluster_prob": float, "n_clusters": int,
             "v": float, "u": float, "random_sign": bool}
_RUN_KEYS = {"nu0_grid": str, "sparsity_target": float}


@dataclass
class RunManifest:
    command: str
    out: str
    counts: Optional[str] = None
    covariates: Optional[str] = None
    truth: Optional[str] = None
    estimate: Optional[str] = None
    seed: int = 0
    thread_count: int = 1
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")

    def record(self) -> dict:
        out = asdict(self)
        out["version"] = __version__
        return out


def _coerce(value: str, kind):
    if kind is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot read {value!r} as a boolean")
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    return value.strip()


def _field_kind(name):
    for table in (_HP_KEYS, _CFG_KEYS):
        if name in table:
            t = table[name]
            text = t if isinstance(t, str) else getattr(t, "__name__", str(t))
            if "bool" in text:
                return bool
            if "int" in text:
                return int
            if "float" in text:
                return float
            return str
    return _SIM_KEYS.get(name) or _RUN_KEYS.get(name) or str


def read_config(path) -> dict:
    """Parse a key=value file; '#' starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected key=value", row=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            known = set(_HP_KEYS) | set(_CFG_KEYS) | set(_SIM_KEYS) | set(_RUN_KEYS)
            if key not in known:
                raise ParseError(f"unknown setting {key!r}", row=lineno)
            try:
                out[key] = _coerce(value, _field_kind(key))
            except ValueError as exc:
                raise ParseError(str(exc), row=lineno) from None
    return out


def _settings(manifest: RunManifest):
    o = manifest.overrides
    hp = Hyperparameters(**{k: v for k, v in o.items() if k in _HP_KEYS})
    cfg_kwargs = {k: v for k, v in o.items() if k in _CFG_KEYS}
    cfg_kwargs.update(seed=manifest.seed, thread_count=manifest.thread_count)
    return hp, FitConfig(**cfg_kwargs)


def _load_inputs(manifest: RunManifest):
    if not manifest.counts:
        raise ValidationError("--counts is required")
    counts = load_matrix(manifest.counts, "counts")
    n, p = counts.values.shape
    taxa = counts.column_names or [f"taxon{j + 1}" for j in range(p)]
    X = CountMatrix(counts.values, taxa)
    if manifest.covariates:
        cov = load_matrix(manifest.covariates, "reals")
        M = CovariateMatrix.from_raw(cov.values, cov.column_names)
    else:
        M = CovariateMatrix.empty(n)
    return X, M, taxa


def _nu0_grid(manifest: RunManifest):
    text = manifest.overrides.get("nu0_grid")
    if text is None:
        return list(DEFAULT_NU0_GRID)
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _run_simulate(manifest: RunManifest):
    o = manifest.overrides
    spec = GraphSpec(kind=o.get("graph", "random"), p=o.get("p", 50),
                     bandwidth=o.get("bandwidth", 3), n_hubs=o.get("n_hubs", 3),
                     edge_prob=o.get("edge_prob", 0.025),
                     within_cluster_prob=o.get("within_cluster_prob", 0.30),
                     n_clusters=o.get("n_clusters", 3))
    truth = generate_dataset(spec, o.get("n", 300), o.get("q", 25), seed=manifest.seed,
                             v=o.get("v", 1.0), u=o.get("u", 1e-4),
                             random_sign=o.get("random_sign", False))
    write_ground_truth(truth, manifest.out)


def _run_fit(manifest: RunManifest):
    X, M, taxa = _load_inputs(manifest)
    hp, cfg = _settings(manifest)
    result = fit_once(X, M, hp, cfg)
    write_outputs(result, manifest.out, taxa, M.column_names)
    if not result.converged:
        logger.warning("fit stopped after %d iterations without converging", result.iterations)


def _run_grid(manifest: RunManifest):
    X, M, taxa = _load_inputs(manifest)
    hp, cfg = _settings(manifest)
    grid = _nu0_grid(manifest)
    target = float(manifest.overrides.get("sparsity_target", DEFAULT_SPARSITY_TARGET))
    res = fit_grid(X, M, hp, cfg, nu0_grid=grid, sparsity_target=target)
    rows = []
    for i, f in enumerate(res.fits):
        write_outputs(f.result, os.path.join(manifest.out, f"nu0_{i:02d}"), taxa,
                      M.column_names)
        rows.append([i, f.nu0, f.sparsity, f.elbo, int(f.converged), f.iterations,
                     int(i == res.selected_index)])
    summary = np.array(rows, dtype=object)
    write_matrix(os.path.join(manifest.out, "grid_summary.tsv"), summary,
                 ["index", "nu0", "sparsity", "elbo", "converged", "iterations", "selected"])
    write_outputs(res.selected.result, os.path.join(manifest.out, "selected"), taxa,
                  M.column_names)


def _run_evaluate(manifest: RunManifest):
    if not manifest.truth or not manifest.estimate:
        raise ValidationError("evaluate needs --truth and --estimate directories")
    rows, names = [], []
    adj_true = os.path.join(manifest.truth, "adjacency_true.tsv")
    adj_est = os.path.join(manifest.estimate, "adjacency.tsv")
    if os.path.exists(adj_true) and os.path.exists(adj_est):
        c = confusion_edges(load_matrix(adj_est, "counts").values != 0,
                            load_matrix(adj_true, "counts").values != 0)
        names.append("edges")
        rows.append([c.tp, c.fp, c.fn, c.tn, *scores(c)])
    b_true = os.path.join(manifest.truth, "b_true.tsv")
    phi_est = os.path.join(manifest.estimate, "phi.tsv")
    if os.path.exists(b_true) and os.path.exists(phi_est):
        c = confusion(load_matrix(phi_est).values > 0.5, load_matrix(b_true).values != 0)
        names.append("coefficients")
        rows.append([c.tp, c.fp, c.fn, c.tn, *scores(c)])
    if not rows:
        raise ValidationError("no matching truth/estimate files to score")
    os.makedirs(manifest.out, exist_ok=True)
    write_matrix(os.path.join(manifest.out, "metrics.tsv"), np.array(rows, dtype=object),
                 ["tp", "fp", "fn", "tn", "tpr", "fpr", "f1", "mcc"], names)


_RUNNERS = {"simulate": _run_simulate, "fit": _run_fit, "grid": _run_grid,
            "evaluate": _run_evaluate}


def run_command(manifest: RunManifest) -> int:
    """Execute one command and return its exit status."""
    try:
        os.makedirs(manifest.out, exist_ok=True)
        _RUNNERS[manifest.command](manifest)
        write_json(os.path.join(manifest.out, "run.json"), manifest.record())
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"sinc {manifest.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonFiniteResult, SingularBlock) as exc:
        print(f"sinc {manifest.command}: numerical failure: {exc}; "
              "try a larger lam or check the inputs for outliers", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"sinc {manifest.command}: file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SincError as exc:
        print(f"sinc {manifest.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sinc", description=(
        "Joint network and covariate selection for compositional count data."))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--counts", help="n x p count matrix (TSV or CSV)")
    parser.add_argument("--covariates", help="n x q covariate matrix (TSV or CSV)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--nu0", type=float, default=None)
    parser.add_argument("--nu0-grid", default=None, help="comma-separated nu0 values")
    parser.add_argument("--sparsity-target", type=float, default=None)
    parser.add_argument("--learn-tau", action="store_true", default=None)
    parser.add_argument("--constrain-b-zero", action="store_true", default=None)
    parser.add_argument("--constrain-omega-identity", action="store_true", default=None)
    parser.add_argument("--truth", help="ground-truth directory (evaluate)")
    parser.add_argument("--estimate", help="fit output directory (evaluate)")
    return parser


def manifest_from_args(args) -> RunManifest:
    overrides = read_config(args.config) if args.config else {}
    flag_map = {"nu0": args.nu0, "nu0_grid": args.nu0_grid,
                "sparsity_target": args.sparsity_target, "learn_tau": args.learn_tau,
                "constrain_B_zero": args.constrain_b_zero,
                "constrain_omega_identity": args.constrain_omega_identity}
    overrides.update({k: v for k, v in flag_map.items() if v is not None})
    seed = args.seed if args.seed is not None else int(overrides.pop("seed", 0))
    threads = args.threads if args.threads is not None else int(overrides.pop("thread_count", 1))
    overrides.pop("seed", None)
    overrides.pop("thread_count", None)
    return RunManifest(args.command, args.out, args.counts, args.covariates, args.truth,
                       args.estimate, seed, threads, dict(sorted(overrides.items())))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = manifest_from_args(args)
    except (ParseError, ValueError) as exc:
        print(f"sinc: bad configuration: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"sinc: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    return run_command(manifest)


if __name__ == "__main__":
    sys.exit(main())
