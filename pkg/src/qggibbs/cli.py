"""Command-line front end.

    qggibbs run [--config FILE] [--experiment NAME ...] [--seed S]
                [--out-dir DIR] [--set section.key=value ...] [--threads K]
    qggibbs validate FILE

Exit status: 0 all experiments passed, 1 some experiment failed, 2 invalid
configuration, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, RunConfig, load_config, validate
from .dynamics import NumericalBlowup
from .harness import (
    THREADS_ENV,
    Report,
    chaos_experiment,
    conservation_experiment,
    invariance_experiment,
    regularity_experiment,
    residual_experiment,
    resolve_threads,
)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def run_experiment(name: str, cfg: RunConfig, threads: int | None = None) -> Report:
    params = cfg.params()
    v = cfg.values
    seed = v["params"]["seed"]
    if name == "invariance":
        return invariance_experiment(
            params,
            M=v["params"]["m"],
            T=v["params"]["t"],
            dt=v["params"]["dt"],
            seed=seed,
            wrong_variance_factor=v["invariance"]["wrong_variance_factor"],
            coarse_dt=v["invariance"]["coarse_dt"],
            threads=threads,
        )
    if name == "conservation":
        c = v["conservation"]
        return conservation_experiment(
            params, T=c["t"], dt=c["dt"], seed=seed, refinements=c["refinements"], members=c["members"]
        )
    if name == "chaos":
        c = v["chaos"]
        return chaos_experiment(params, M=c["m"], seed=seed, phi_cutoff=c["phi_cutoff"], threads=threads)
    if name == "regularity":
        c = v["regularity"]
        return regularity_experiment(c["m_list"], c["deltas"], flat_tol=c["flat_tol"])
    if name == "residual":
        c = v["residual"]
        return residual_experiment(params, T=c["t"], dt_list=c["dt_list"], seed=seed, min_order=c["min_order"])
    raise ValueError(f"unknown experiment {name!r}")


def combined_report(reports: Sequence[Report], cfg: RunConfig) -> dict:
    """Deterministic report document (no timestamps or host details)."""
    return {
        "version": __version__,
        "config_digest": cfg.digest(),
        "passed": all(r.passed for r in reports),
        "experiments": {r.name: r.to_dict() for r in reports},
    }


def report_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()


def fresh_directory(root: Path, stamp: str) -> Path:
    """Create a new run directory under root; never reuses an existing one."""
    root.mkdir(parents=True, exist_ok=True)
    for i in range(10_000):
        path = root / (f"run-{stamp}" if i == 0 else f"run-{stamp}-{i}")
        try:
            path.mkdir()
            return path
        except FileExistsError:
            continue
    raise RuntimeError(f"could not create a fresh run directory in {root}")


def _write_csv(path: Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for row in rows:
        keys.extend(k for k in row if k not in keys)
    with path.open("x", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in keys})


def _write_snapshots(out: Path, cfg: RunConfig) -> list[str]:
    from .dynamics import integrate
    from .gibbs import block_rng, sample_state
    from .spectral import synthesize_on_grid

    params = cfg.params()
    n = cfg.values["output"]["grid_size"]
    state = sample_state(params, block_rng(cfg.values["params"]["seed"], 0, stream=99))
    T = cfg.values["params"]["t"]
    traj = integrate(state, params, cfg.values["params"]["dt"], T, stride=max(1, round(T / cfg.values["params"]["dt"])))
    names = []
    for label, s in (("t0", traj.states[0]), ("tT", traj.states[-1])):
        grid = synthesize_on_grid(s.omega, n, n)
        name = f"snapshot_omega_{label}.csv"
        with (out / name).open("x", newline="") as fh:
            csv.writer(fh, lineterminator="\r\n").writerows(grid.T.tolist())
        names.append(name)
    return names


def _cmd_validate(args: argparse.Namespace) -> int:
    if not Path(args.config).is_file():
        print(f"error: file: {args.config} does not exist", file=sys.stderr)
        return EXIT_CONFIG
    diags = validate(args.config)
    for d in diags:
        print(d, file=sys.stderr if d.level == "error" else sys.stdout)
    return EXIT_CONFIG if any(d.level == "error" for d in diags) else EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"params.seed={args.seed}")
    if args.experiment:
        names = [n for e in args.experiment for n in e.replace(",", " ").split()]
        if names != ["all"]:
            overrides.append("experiments.run=" + " ".join(names))
    if args.config is not None and not Path(args.config).is_file():
        print(f"error: file: {args.config} does not exist", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    for d in cfg.diagnostics:
        print(d, file=sys.stderr)
    try:
        threads = resolve_threads(args.threads)
    except ValueError as exc:
        print(f"error: threads: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    reports = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # beta = 0 already reported above
            for name in cfg.experiments:
                report = run_experiment(name, cfg, threads)
                print(f"{name}: {'PASS' if report.passed else 'FAIL'}")
                reports.append(report)
    except (NumericalBlowup, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    now = datetime.now(timezone.utc)
    out = fresh_directory(Path(args.out_dir), now.strftime("%Y%m%dT%H%M%S"))
    doc = combined_report(reports, cfg)
    body = report_bytes(doc)
    (out / "report.json").write_bytes(body)
    files = ["report.json"]
    for r in reports:
        for table, rows in r.tables.items():
            name = f"{r.name}_{table}.csv"
            _write_csv(out / name, rows)
            files.append(name)
    if cfg.values["output"]["grid_snapshots"]:
        files.extend(_write_snapshots(out, cfg))
    (out / "config.ini").write_text(cfg.source_text)
    manifest = {
        "created_utc": now.isoformat(),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "config_digest": cfg.digest(),
        "config_source_sha256": hashlib.sha256(cfg.source_text.encode()).hexdigest(),
        "overrides": overrides,
        "threads": threads,
        "report_sha256": hashlib.sha256(body).hexdigest(),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"artifacts: {out}")
    return EXIT_OK if doc["passed"] else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qggibbs", description="Gibbs-measure verification harness for truncated QG dynamics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run experiments and write artifacts")
    run.add_argument("--config", help="INI configuration file (defaults built in)")
    run.add_argument(
        "--experiment",
        action="append",
        help=f"experiment to run, repeatable ({', '.join(EXPERIMENTS)} or all)",
    )
    run.add_argument("--seed", type=int, help="override params.seed")
    run.add_argument("--out-dir", default="runs", help="parent directory for run folders")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override, e.g. params.N=7 or chaos.M=5000")
    run.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a configuration file")
    val.add_argument("config")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
