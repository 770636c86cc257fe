"""
Command line entry point.

Exit codes: 0 all checks pass, 1 a property or counterexample failed,
2 usage or configuration error.
"""
import logging
from pathlib import Path

import click

from . import config as cfg
from .errors import DepthExceeded, SracareError
from .frames import FRAME_SIZE, FrameVerdict, build_image, read_image, verify_frame, write_image
from .properties.checks import check_properties
from .properties.ltl import eval_ltl, parse_formula
from .properties.model_check import POWERS, KeyMode, model_check
from .report import format_report, record_results, write_report
from .scenario import run_scenario
from .trace import Trace

logger = logging.getLogger(__name__)

CONTEXT_SETTINGS = dict(help_option_names=["-h", "--help"])

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _key(ctx, param, value):
    if value is None:
        return None
    try:
        return cfg.parse_hex(value, param.name)
    except SracareError as e:
        raise click.BadParameter(str(e))


def _abort(ctx: click.Context, error: Exception) -> None:
    click.echo(f"error: {error}", err=True)
    ctx.exit(EXIT_USAGE)


@click.group(context_settings=CONTEXT_SETTINGS)
@click.option("-v", "--verbose", count=True, help="-v for INFO, -vv for DEBUG")
@click.pass_context
def main(ctx, verbose):
    """Secure boot, recovery and attestation model with property checks."""
    try:
        settings = cfg.Settings.from_env()
    except SracareError as e:
        _abort(ctx, e)
    level = {0: settings.log_level, 1: "INFO"}.get(verbose, "DEBUG")
    cfg.configure_logging(level)
    ctx.obj = settings


@main.command("build-image")
@click.argument("binary", type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "--key", required=True, callback=_key, help="device key as hex")
@click.option("-o", "--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def build_image_cmd(ctx, binary, key, out_path):
    """Frame a raw application binary into a signed image."""
    try:
        frames = build_image(key, Path(binary).read_bytes())
    except SracareError as e:
        _abort(ctx, e)
    write_image(out_path, frames)
    click.echo(f"{len(frames)} frames written")


@main.command("verify-image")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "--key", required=True, callback=_key, help="device key as hex")
@click.pass_context
def verify_image_cmd(ctx, image, key):
    """Re-verify every frame of a framed image file."""
    try:
        frames = read_image(image)
    except SracareError as e:
        _abort(ctx, e)
    failed = 0
    for slot, frame in enumerate(frames):
        verdict = verify_frame(key, frame, expected_number=slot)
        failed += verdict is FrameVerdict.FAIL
        click.echo(f"frame {slot}: {verdict.value}")
    click.echo(f"{len(frames) - failed}/{len(frames)} frames pass ({len(frames) * FRAME_SIZE} octets)")
    ctx.exit(EXIT_FAILED if failed else EXIT_OK)


@main.command("run")
@click.argument("scenario")
@click.option("-o", "--out", "out_dir", default="results", show_default=True, type=click.Path(file_okay=False),
              help="directory for report, verdict sidecar and trace log")
@click.option("-w", "--workers", default=1, show_default=True, type=click.IntRange(min=1),
              help="threads for property checks")
@click.option("--db", type=click.Path(dir_okay=False), default=None,
              help="append verdicts to this SQLite file (default: $SRACARE_RESULTS_DB)")
@click.pass_context
def run_cmd(ctx, scenario, out_dir, workers, db):
    """Run a scenario end to end and check properties A1-A12."""
    settings = ctx.obj
    try:
        config = cfg.load_scenario(scenario, settings)
        run = run_scenario(config)
    except SracareError as e:
        _abort(ctx, e)
    results = check_properties(run.result, workers=workers)
    write_report(out_dir, config.name, results, run.trace.dumps())
    db = db or settings.results_db
    if db:
        record_results(db, config.name, results)
    click.echo(format_report(results, config.name))
    ctx.exit(EXIT_OK if all(r.passed for r in results) else EXIT_FAILED)


@main.command("model-check")
@click.option("-d", "--depth", default=cfg.DEFAULT_MAX_DEPTH, show_default=True, type=int)
@click.option("-p", "--powers", default=",".join(POWERS), show_default=True,
              help="comma-separated adversary powers, empty for none")
@click.option("--keys", type=click.Choice([k.value for k in KeyMode]), default=KeyMode.HONEST.value,
              show_default=True)
@click.pass_context
def model_check_cmd(ctx, depth, powers, keys):
    """Bounded search for an authentication counterexample."""
    chosen = [p.strip() for p in powers.split(",") if p.strip()]
    unknown = set(chosen) - set(POWERS)
    if unknown:
        raise click.BadParameter(f"unknown powers {sorted(unknown)}, choose from {POWERS}", param_hint="--powers")
    try:
        result = model_check(depth, chosen, KeyMode(keys), ceiling=ctx.obj.max_depth)
    except DepthExceeded as e:
        _abort(ctx, e)
    click.echo(f"states explored: {result.states}")
    if result.holds:
        click.echo("no counterexample")
        ctx.exit(EXIT_OK)
    click.echo(f"counterexample ({len(result.counterexample)} steps):")
    for step, label in enumerate(result.counterexample, start=1):
        click.echo(f"  {step}. {label}")
    ctx.exit(EXIT_FAILED)


@main.command("ltl-eval")
@click.argument("formula")
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def ltl_eval_cmd(ctx, formula, trace_file):
    """Evaluate an ASCII LTL formula against a trace log."""
    try:
        result = eval_ltl(parse_formula(formula), Trace.load(trace_file))
    except SracareError as e:
        _abort(ctx, e)
    if result.holds:
        click.echo("holds")
        ctx.exit(EXIT_OK)
    click.echo("violated" + (f" at event {result.witness}" if result.witness is not None else ""))
    ctx.exit(EXIT_FAILED)


if __name__ == "__main__":
    main()
