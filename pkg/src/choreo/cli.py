"""Command line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import yaml

from . import pipeline as pl
from .database import SolutionRecord, export_csv, read_jsonl, read_records, write_jsonl
from .errors import ChoreoError, ConfigError
from .newton import NewtonConfig, polish_configs
from .scan import Candidate, SearchDomain, scan_domain, worker_count
from .taylor import resolve_config


def _preset_arg(value: str):
    return int(value) if value.isdigit() else value


def _load_domain(path, grid_step=None) -> SearchDomain:
    data = yaml.safe_load(Path(path).read_text())
    if grid_step is not None:
        data["step"] = grid_step
    if "step" not in data:
        raise click.UsageError("grid step missing: pass --grid-step or set 'step' in the domain file")
    return SearchDomain.from_dict(data)


def _fail(err: Exception):
    click.echo(f"error: {err}", err=True)
    sys.exit(1)


def _report_failures(failures):
    for f in failures:
        click.echo(f"{f['id']}: {f['stage']} failed: {f['error']}", err=True)


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def main(verbose):
    """Search, refine and classify planar three-body choreographies."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--domain", "domain_file", required=True, type=click.Path(exists=True))
@click.option("--grid-step", default=None, help="Lattice spacing as p/q, e.g. 1/256.")
@click.option("--t0", required=True, help="Integration horizon T_0.")
@click.option("--preset", default="scan", show_default=True)
@click.option("--direction", type=click.Choice(["forward", "backward", "both"]), default="both", show_default=True)
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--workers", type=int, default=None, help="Defaults to CHOREO_WORKERS or 1.")
@click.option("--out", required=True, type=click.Path())
def scan(domain_file, grid_step, t0, preset, direction, checkpoint, workers, out):
    """Grid scan of the return-proximity function."""
    try:
        domain = _load_domain(domain_file, grid_step)
        cands = scan_domain(
            domain, t0, resolve_config(_preset_arg(preset)), direction, checkpoint=checkpoint,
            workers=worker_count(workers or 1),
        )
    except (ChoreoError, ValueError, KeyError) as err:
        _fail(err)
    write_jsonl(out, cands)
    click.echo(f"{len(cands)} candidates -> {out}")


@main.command()
@click.option("--in", "src", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["modified", "classic"]), default="modified", show_default=True)
@click.option("--preset", default="desk", show_default=True)
@click.option("--tolerance", default="1e-40", show_default=True)
@click.option("--tau0", type=float, default=0.2, show_default=True)
@click.option("--maxiter", type=int, default=None)
@click.option("--t0", default=None, help="Horizon used to bound T (defaults to each start's own T).")
def refine(src, out, mode, preset, tolerance, tau0, maxiter, t0):
    """Newton-correct scan candidates into periodic solutions."""
    items = read_jsonl(src)
    cands = [Candidate.from_json(d) if "T_guess" in d else SolutionRecord.from_json(d) for d in items]
    cfg = NewtonConfig(
        mode=mode, tau0=tau0, maxiter=maxiter, tolerance=tolerance, preset=_preset_arg(preset), t_ref=t0
    )
    records, failures = [], []
    for c in cands:
        rec, failure = pl.refine_one((c, cfg))
        if rec is not None:
            records.append(rec)
        if failure is not None:
            failures.append(failure)
    write_jsonl(out, records)
    _report_failures(failures)
    click.echo(f"{len(records)} solutions, {len(failures)} failures -> {out}")


@main.command()
@click.option("--in", "src", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--digits", type=int, default=180, show_default=True)
@click.option("--presets", default=None, help="run,verify presets; defaults depend on --digits.")
def polish(src, out, digits, presets):
    """Classic Newton at two precisions, verifying one against the other."""
    configs = (
        tuple(resolve_config(_preset_arg(p.strip())) for p in presets.split(","))
        if presets
        else polish_configs(digits)
    )
    records, failures = [], []
    for r in read_records(src):
        rec, failure = pl.polish_one((r, digits, configs))
        if rec is not None:
            records.append(rec)
        if failure is not None:
            failures.append(failure)
    write_jsonl(out, records)
    _report_failures(failures)
    click.echo(f"{len(records)} polished, {len(failures)} failures -> {out}")


@main.command()
@click.option("--in", "src", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--digits-lo", type=int, default=80, show_default=True)
@click.option("--digits-hi", type=int, default=130, show_default=True)
def stability(src, out, digits_lo, digits_hi):
    """Monodromy eigenvalues at two precisions and the stability verdict."""
    records = [pl.stability_one((r, digits_lo, digits_hi))[0] for r in read_records(src)]
    write_jsonl(out, records)
    for r in records:
        click.echo(f"{r.id}: {r.stability.get('verdict')} {r.stability.get('type') or ''}")


@main.command()
@click.option("--in", "src", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--preset", default="scan", show_default=True, help="Integrator for syzygy detection.")
@click.option("--check-preset", default="desk", show_default=True, help="Integrator for the choreography check.")
def classify(src, out, preset, check_preset):
    """Topological word, satellite power k and choreography verdict."""
    word_cfg = resolve_config(_preset_arg(preset))
    check_cfg = resolve_config(_preset_arg(check_preset))
    records = [pl.classify_one((r, word_cfg, check_cfg))[0] for r in read_records(src)]
    write_jsonl(out, records)
    for r in records:
        click.echo(f"{r.id}: word={r.word} k={r.k} choreography={r.choreography}")


@main.command()
@click.option("--config", "config_file", required=True, type=click.Path(exists=True))
@click.option("--dry-run", is_flag=True, help="Validate the config and print the planned work.")
def pipeline(config_file, dry_run):
    """Run every stage from a YAML config; reruns reuse finished stages."""
    try:
        config = pl.load_config(config_file)
    except ConfigError as err:
        _fail(err)
    if dry_run:
        click.echo(json.dumps(pl.dry_run(config), indent=2))
        return
    try:
        summary = pl.run_pipeline(config)
    except (ChoreoError, OSError) as err:
        _fail(err)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command()
@click.option("--in", "src", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--resolution", type=int, default=800, show_default=True)
@click.option("--preset", default="scan", show_default=True)
@click.option("--id", "ids", multiple=True, help="Only these record ids.")
def plot(src, out_dir, resolution, preset, ids):
    """Render each record's period as an SVG file."""
    from .plotting import plot_record

    for r in read_records(src):
        if ids and r.id not in ids:
            continue
        path = plot_record(r, out_dir, resolution, _preset_arg(preset))
        click.echo(str(path))


@main.command("export-csv")
@click.option("--in", "src", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def export_csv_cmd(src, out):
    """Table with columns N, v_x, v_y, T, T*, k."""
    export_csv(read_records(src), out)
    click.echo(out)


if __name__ == "__main__":
    main()
