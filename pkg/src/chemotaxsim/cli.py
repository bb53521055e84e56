"""Command-line driver: ``chemotaxsim <config> [--dry-run] [--jobs K] [--output DIR]``.

Exit codes: 0 all audits pass, 1 an audit failed, 2 a run aborted,
3 configuration error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_config
from .diagnostics import AuditEntry, DiagSeries, audit_all
from .errors import ConfigError, DataIntegrityError
from .grid import atomic_write_text, write_field
from .ladder import LadderConfig, default_test_functions, run_ladder
from .model import make_initial
from .stepper import ABORTED, BLOWUP, run, sample_times
from .sweep import SweepBase, plan, sweep_csv_text, sweep_passed, threshold_sweep

EXIT_OK, EXIT_AUDIT, EXIT_ABORTED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("chemotaxsim")


class OutputError(Exception):
    def __init__(self, path, exc):
        super().__init__(f"{path}: {exc}")
        self.path = path


def _write(path: Path, text: str) -> None:
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise OutputError(path, exc) from exc


def _snapshot_writer(directory: Path, grid):
    counter = [0]

    def write(state):
        k = counter[0]
        counter[0] += 1
        try:
            write_field(directory / f"u_{k:05d}.chemofield", grid, state.u, state.t)
            write_field(directory / f"v_{k:05d}.chemofield", grid, state.v, state.t)
        except OSError as exc:
            raise OutputError(directory, exc) from exc
    return write


def _status_entry(status: str, reason: str) -> AuditEntry:
    return AuditEntry("run_status", status not in (ABORTED, BLOWUP), float("nan"),
                      np.zeros(0), np.zeros(0), np.zeros(0), f"status={status} {reason}".strip())


def build_id() -> str:
    return f"chemotaxsim-{__version__} numpy-{np.__version__} python-{platform.python_version()}"


# ---------------------------------------------------------------------------
# Modes

def _run_mode(cfg: RunConfig, out: Path, jobs: int) -> int:
    data = make_initial(cfg.preset, cfg.grid, cfg.params, cfg.seed)
    hook = _snapshot_writer(out / "snapshots", cfg.grid) if cfg.snapshots else None
    res = run(data, cfg.spec, cfg.scheme, cfg.formulation, cfg.diag, on_sample=hook)
    series = res.series
    series.write_csv(out / "diagnostics.csv")
    report = audit_all(series, data, energy_slack=cfg.energy_slack, w_cap=cfg.w_cap,
                       pr_list=cfg.diag.pr_list)
    report.add(_status_entry(res.status, res.reason))
    _write(out / "audit.txt", report.to_text())
    print(report.to_text(), end="")
    if res.status == ABORTED:
        return EXIT_ABORTED
    return EXIT_OK if report.passed else EXIT_AUDIT


def _sweep_mode(cfg: RunConfig, out: Path, jobs: int) -> int:
    base = SweepBase(cfg.grid, cfg.spec, cfg.scheme, cfg.preset, cfg.params, cfg.seed, cfg.formulation)
    rows = threshold_sweep(base, cfg.m_values, cfg.trials, jobs=jobs, keep_results=True)
    for row in rows:
        row.result.series.write_csv(out / "sweep" / f"m_{row.m:g}_trial_{row.trial}" / "diagnostics.csv")
    _write(out / "sweep.csv", sweep_csv_text(rows))
    lines = []
    for r in rows:
        verdict = ("PASS" if r.status == "completed" and np.isfinite(r.max_sup_u) else "FAIL") \
            if r.above_threshold else "INFO"
        lines.append(f"{verdict} m={r.m:g} trial={r.trial} seed={r.seed} status={r.status} "
                     f"max_sup_u={r.max_sup_u:.6g} t_of_max={r.t_of_max:.6g}")
    ok = sweep_passed(rows)
    lines.append(f"SUMMARY {'PASS' if ok else 'FAIL'} {len(rows)} runs")
    text = "\n".join(lines) + "\n"
    _write(out / "audit.txt", text)
    print(text, end="")
    if any(r.status == ABORTED and r.above_threshold for r in rows):
        return EXIT_ABORTED
    return EXIT_OK if ok else EXIT_AUDIT


def _ladder_mode(cfg: RunConfig, out: Path, jobs: int) -> int:
    data = make_initial(cfg.preset, cfg.grid, cfg.params, cfg.seed)
    t_cut = cfg.ladder_t_cut or 0.75 * cfg.scheme.t_end
    lc = LadderConfig(cfg.spec, data, cfg.scheme, cfg.ladder_eps,
                      default_test_functions(cfg.grid, t_cut), cfg.compare_unregularized, cfg.formulation)
    report = run_ladder(lc, jobs=jobs)
    _write(out / "ladder.csv", report.to_csv_text())
    _write(out / "ladder_summary.txt", report.summary_text())
    if cfg.snapshots:
        for rung, res in zip(report.rungs, report.results):
            write = _snapshot_writer(out / "ladder" / f"eps_{rung.eps:g}", cfg.grid)
            for s in res.samples:
                write(s)
    print(report.summary_text(), end="")
    if any(r.status == ABORTED for r in report.rungs):
        return EXIT_ABORTED
    return EXIT_OK if report.cauchy_consistent else EXIT_AUDIT


def _audit_mode(cfg: RunConfig, out: Path, jobs: int) -> int:
    path = Path(cfg.audit_input)
    try:
        series = DiagSeries.read_csv(path)
    except OSError as exc:
        raise OutputError(path, exc) from exc
    report = audit_all(series, None, energy_slack=cfg.energy_slack, w_cap=cfg.w_cap,
                       pr_list=cfg.diag.pr_list)
    _write(out / "audit.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK if report.passed else EXIT_AUDIT


MODES = {"run": _run_mode, "sweep": _sweep_mode, "ladder": _ladder_mode, "audit": _audit_mode}


def describe_plan(cfg: RunConfig) -> str:
    lines = [f"mode: {cfg.mode}", f"output: {cfg.output_dir}"]
    if cfg.mode == "audit":
        lines.append(f"audit input: {cfg.audit_input}")
        return "\n".join(lines) + "\n"
    lines += [
        f"formulation: {cfg.formulation}",
        f"grid: cells={cfg.grid.cells} lengths={cfg.grid.lengths}",
        f"model: {cfg.spec}",
        f"initial: {cfg.preset} {cfg.params} seed={cfg.seed}",
        f"scheme: {cfg.scheme}",
        f"samples per run: {len(sample_times(cfg.scheme)) + 1}",
    ]
    if cfg.mode == "sweep":
        tasks = plan(cfg.m_values, cfg.trials, cfg.seed)
        lines.append(f"planned runs: {len(tasks)}")
        lines += [f"  run {i}: m={t.m:g} trial={t.trial} seed={t.seed}" for i, t in enumerate(tasks)]
    elif cfg.mode == "ladder":
        n = len(cfg.ladder_eps) + (1 if cfg.compare_unregularized else 0)
        lines.append(f"planned runs: {n}")
        lines += [f"  rung {i}: eps={e:g}" for i, e in enumerate(cfg.ladder_eps)]
    else:
        lines.append("planned runs: 1")
    return "\n".join(lines) + "\n"


def execute(cfg: RunConfig, output: str | Path | None = None, jobs: int = 1,
            config_path: str | None = None) -> int:
    out = Path(output or cfg.output_dir)
    t0 = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        code = MODES[cfg.mode](cfg, out, jobs)
    except OutputError as exc:
        print(f"error: I/O failure at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_IO
    except DataIntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: I/O failure at {exc.filename or out}: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest = {
        "config": config_path,
        "config_sha256": cfg.text_sha256,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "build": build_id(),
        "wall_time_s": round(time.time() - t0, 6),
        "exit_code": code,
    }
    try:
        _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    except OutputError as exc:
        print(f"error: I/O failure at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="chemotaxsim", description=__doc__.splitlines()[0])
    ap.add_argument("config", help="path to a flat key = value configuration file")
    ap.add_argument("--dry-run", action="store_true", help="validate and print the run plan only")
    ap.add_argument("--jobs", type=int, default=1, help="concurrent runs for sweep and ladder modes")
    ap.add_argument("--output", help="output directory (overrides output.directory)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        cfg.output_dir = args.output
    if args.dry_run:
        print(describe_plan(cfg), end="")
        return EXIT_OK
    return execute(cfg, jobs=args.jobs, config_path=args.config)


if __name__ == "__main__":
    sys.exit(main())
