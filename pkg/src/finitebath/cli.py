"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure or resource cap.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
import warnings

import click

from .asymptotics import (
    block_size_m,
    eta_protocol_expansion,
    eta_thermo_expansion,
    expansion_coeffs,
    lattice_classify,
)
from .bath import PRESETS, BathSpec, SiteSpectrum, moments
from .checks import run_checks
from .errors import NumericalError, ResourceLimitError, ValidationError
from .lift import lift_report, work_distribution
from .protocol import ProtocolConfig, apply_protocol
from .sweep import CSV_COLUMNS, SweepSpec, add_scaling_columns, geometric_grid, preset, resolve_threads, run_sweep
from .thermo import EngineConfig, eta_thermo, eta_thermo_via_relent

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""
    return str(value)


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


def emit(records, fmt: str, out_path: str | None, columns=None):
    """Write records as CSV (fixed or given columns) or newline-delimited JSON."""
    buf = io.StringIO()
    if fmt == "csv":
        columns = columns or list(records[0].keys()) if records else columns or []
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec.get(c)) for c in columns])
    else:
        for rec in records:
            buf.write(json.dumps({k: _jsonable(v) for k, v in rec.items()}, sort_keys=False) + "\n")
    text = buf.getvalue()
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def parse_levels(levels: str | None, spectrum: str | None) -> tuple:
    if levels and spectrum:
        raise ValidationError("give either --levels or --spectrum, not both")
    if levels:
        try:
            return tuple(float(x) for x in levels.split(","))
        except ValueError:
            raise ValidationError(f"cannot parse levels {levels!r}") from None
    return SiteSpectrum.from_preset(spectrum or "qubit±1").levels


def parse_grid(n, n_grid) -> tuple:
    if (n is None) == (n_grid is None):
        raise ValidationError("give exactly one of --n and --n-grid")
    if n is not None:
        return (n,)
    try:
        start, stop, count = n_grid.split(":")
        return geometric_grid(float(start), float(stop), int(count))
    except ValueError:
        raise ValidationError("--n-grid must look like START:STOP:COUNT") from None


def parse_q(q, q_rule):
    if (q is None) == (q_rule is None):
        raise ValidationError("give exactly one of --q and --q-rule")
    if q is not None:
        return (q,), None
    try:
        a, b = (float(x) for x in q_rule.split(","))
    except ValueError:
        raise ValidationError("--q-rule must look like A,B (Q = A * n**B)") from None
    return None, (a, b)


def _q_for(n, q_values, q_rule):
    return q_rule[0] * n ** q_rule[1] if q_rule else q_values[0]


def common_options(func):
    opts = [
        click.option("--levels", default=None, help="Comma-separated site energy levels."),
        click.option("--spectrum", default=None, help=f"Named spectrum: {', '.join(PRESETS)}."),
        click.option("--beta-hot", type=float, default=1 / 30, show_default=True),
        click.option("--beta-cold", type=float, default=1 / 15, show_default=True),
        click.option("--n", "n", type=int, default=None, help="Particle count per bath."),
        click.option("--n-grid", default=None, help="Geometric grid START:STOP:COUNT."),
        click.option("--q", "q", type=float, default=None, help="Heat drawn from the hot bath."),
        click.option("--q-rule", default=None, help="Q = A*n**B given as A,B."),
        click.option("--m", "m", type=int, default=None, help="Block size (default from the heat target)."),
        click.option("--mode", type=click.Choice(["auto", "exact", "blockwise"]), default="auto", show_default=True),
        click.option("--precision", type=click.Choice(["auto", "double", "extended"]), default="auto", show_default=True),
        click.option("--output", "fmt", type=click.Choice(["csv", "json"]), default="json", show_default=True),
        click.option("--out", "out_path", default=None, help="Write to this file instead of stdout."),
        click.option("--threads", type=int, default=1, show_default=True, help="Worker processes (FBE_THREADS overrides)."),
    ]
    for opt in reversed(opts):
        func = opt(func)
    return func


def _engines(levels, beta_hot, beta_cold, n, n_grid, q, q_rule):
    ns = parse_grid(n, n_grid)
    q_values, rule = parse_q(q, q_rule)
    site = SiteSpectrum(levels)
    for size in ns:
        yield EngineConfig(BathSpec(site, beta_hot, size), BathSpec(site, beta_cold, size), _q_for(size, q_values, rule))


def _outcome_record(out) -> dict:
    rec = dataclasses.asdict(out)
    rec["eta_carnot"] = out.eta_carnot
    return rec


@click.group()
def main():
    """Work extraction between two finite heat baths."""


@main.command()
@common_options
def thermo(levels, spectrum, beta_hot, beta_cold, n, n_grid, q, q_rule, m, mode, precision, fmt, out_path, threads):
    """Optimal efficiency from energy and entropy conservation."""
    records = []
    for eng in _engines(parse_levels(levels, spectrum), beta_hot, beta_cold, n, n_grid, q, q_rule):
        prec = "extended" if precision == "auto" else precision
        sol = eta_thermo(eng, prec)
        rec = {"n": eng.n, "q_target": eng.q_target, "eta_carnot": eng.carnot}
        rec.update(dataclasses.asdict(sol))
        rec["eta_thermo_relent"] = eta_thermo_via_relent(eng, prec)
        records.append(rec)
    emit(records, fmt, out_path)


@main.command()
@common_options
@click.option("--rounding", type=click.Choice(["ceil", "floor"]), default="ceil", show_default=True)
def protocol(levels, spectrum, beta_hot, beta_cold, n, n_grid, q, q_rule, m, mode, precision, fmt, out_path, threads, rounding):
    """Run the sort/swap/unsort protocol."""
    records = []
    for eng in _engines(parse_levels(levels, spectrum), beta_hot, beta_cold, n, n_grid, q, q_rule):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = apply_protocol(ProtocolConfig(eng, m=m, mode=mode, precision=precision, rounding=rounding))
        records.append(_outcome_record(out))
    emit(records, fmt, out_path)


@main.command()
@common_options
def expansion(levels, spectrum, beta_hot, beta_cold, n, n_grid, q, q_rule, m, mode, precision, fmt, out_path, threads):
    """Expansion coefficients and the expanded efficiencies."""
    site = SiteSpectrum(parse_levels(levels, spectrum))
    coeffs = expansion_coeffs(moments(site, beta_hot), moments(site, beta_cold), beta_hot, beta_cold)
    lattice = lattice_classify(site)
    records = []
    for eng in _engines(site.levels, beta_hot, beta_cold, n, n_grid, q, q_rule):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rec = {"n": eng.n, "q_target": eng.q_target, **dataclasses.asdict(coeffs)}
            rec["lattice"] = lattice.kind
            rec["span"] = lattice.span
            rec["m"] = block_size_m(beta_hot, eng.q_target, eng.n, moments(site, beta_hot).variance, site.d)
            rec["eta_carnot"] = eng.carnot
            rec["eta_exp1"] = eta_thermo_expansion(coeffs, beta_hot, beta_cold, eng.q_target, eng.n, 1)
            rec["eta_exp2"] = eta_thermo_expansion(coeffs, beta_hot, beta_cold, eng.q_target, eng.n, 2)
            rec["eta_protocol_expansion"] = eta_protocol_expansion(coeffs, beta_hot, beta_cold, eng.q_target, eng.n, lattice)
        records.append(rec)
    emit(records, fmt, out_path)


@main.command("work-dist")
@common_options
def work_dist(levels, spectrum, beta_hot, beta_cold, n, n_grid, q, q_rule, m, mode, precision, fmt, out_path, threads):
    """Distribution of the energy received by the work storage."""
    records = []
    for eng in _engines(parse_levels(levels, spectrum), beta_hot, beta_cold, n, n_grid, q, q_rule):
        cfg = ProtocolConfig(eng, m=m, mode=mode, precision=precision)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = apply_protocol(cfg)
            wd = work_distribution(cfg)
        rec = {"n": eng.n, "m": cfg.m, **dataclasses.asdict(wd)}
        if out.eta is not None:
            rec.update(dataclasses.asdict(lift_report(out, wd, cfg)))
        records.append(rec)
    emit(records, fmt, out_path)


@main.command()
@common_options
@click.option("--preset", "preset_name", type=click.Choice(["fig1", "fig2"]), default=None)
@click.option("--no-storage", is_flag=True, help="Skip work-distribution columns.")
def sweep(levels, spectrum, beta_hot, beta_cold, n, n_grid, q, q_rule, m, mode, precision, fmt, out_path, threads, preset_name, no_storage):
    """Evaluate a grid of (n, q) points; CSV uses a fixed header."""
    if preset_name:
        spec = preset(preset_name)
        spec = dataclasses.replace(spec, mode=mode, precision=precision, with_storage=not no_storage)
    else:
        q_values, rule = parse_q(q, q_rule)
        spec = SweepSpec(
            parse_levels(levels, spectrum), beta_hot, beta_cold, parse_grid(n, n_grid), q_values, rule, m, mode, precision, not no_storage
        )
    records = run_sweep(spec, resolve_threads(threads))
    if preset_name == "fig2":
        fitted = add_scaling_columns(records)
        click.echo(f"fitted cubic-correction constant: {fitted!r}", err=True)
    emit(records, fmt, out_path, CSV_COLUMNS if fmt == "csv" else None)


@main.command()
def verify():
    """Run the invariant self-check; exit 0 iff every check passes."""
    results = run_checks()
    for name, passed, detail in results:
        click.echo(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail})")
    if not all(passed for _, passed, _ in results):
        sys.exit(1)


def run(argv=None) -> int:
    """Entry point mapping library errors onto exit codes."""
    try:
        main.main(args=argv, prog_name="finitebath", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except (NumericalError, ResourceLimitError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def entry():
    sys.exit(run())
