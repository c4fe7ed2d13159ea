'''Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 scenario
thresholds not met.
'''
import functools
import logging
import math
import sys

import click
import numpy as np

from vsc_impedance import __version__, config
from vsc_impedance.analytic_impedance import sweep_analytic
from vsc_impedance.averaged_sim import simulate, source_emf, write_trace_csv
from vsc_impedance.compare_report import (SUITES, emit_bode_svg, emit_csv, frames_note,
                                          run_scenario_suite, write_report_bundle)
from vsc_impedance.config_loader import load_run_config
from vsc_impedance.curve_io import read_curve_csv
from vsc_impedance.errors import AcceptanceFailure, ConfigError, ImpedanceToolkitError
from vsc_impedance.fra_extract import extract_impedance_at, process_capture, sweep_fra
from vsc_impedance.model_core import FrequencyGrid
from vsc_impedance.reduced_model import ReducedModel, sweep_reduced
from vsc_impedance.stability import SOURCE_KINDS, analyze_stability, build_source_impedance
from vsc_impedance.utils import atomic_write, parse_grid_triplet, parse_key_values

logger = logging.getLogger("vsc_impedance")


class GridParam(click.ParamType):
    name = "fmin,fmax,n"

    def convert(self, value, param, ctx):
        if isinstance(value, FrequencyGrid):
            return value
        triplet = parse_grid_triplet(value)
        if triplet is None:
            self.fail(f"expected fmin,fmax,n, got {value!r}", param, ctx)
        try:
            return FrequencyGrid(f_min=triplet[0], f_max=triplet[1], points=triplet[2])
        except ValueError as e:
            self.fail(str(e), param, ctx)


GRID = GridParam()


def _print_version(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo(f"vsc-impedance {__version__}")
    click.echo(config.CONVENTIONS)
    ctx.exit()


def handle_errors(fn):
    """Maps toolkit errors onto exit codes and prints them to stderr."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ImpedanceToolkitError as err:
            click.echo(f"Error: {err}", err=True)
            sys.exit(err.exit_code)
    return wrapper


def _load(config_ref):
    run = load_run_config(config_ref)
    logger.info("Loaded %s: %.6g kW, %s", config_ref, run.design.p_out / 1000.0,
                frames_note(run.controller))
    return run


def _check_ceiling(design, f_max):
    ceiling = config.AVERAGED_MODEL_CEILING_FRACTION * design.switching_frequency
    if f_max > ceiling:
        click.echo(f"Warning: {f_max:.6g} Hz is above the averaged-model ceiling "
                   f"f_sw/5 = {ceiling:.6g} Hz; results there are not meaningful.", err=True)


def _format_z(z):
    return (f"|Z| = {abs(z):.6g} ohm, phase = {math.degrees(np.angle(z)):.3f} deg "
            f"({z.real:.6g} {'+' if z.imag >= 0 else '-'} j{abs(z.imag):.6g} ohm)")


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress messages, -vv for per-point detail.")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=-1),
              help="Parallel workers for sweeps (-1 uses every core).")
@click.option("--version", is_flag=True, callback=_print_version, expose_value=False,
              is_eager=True, help="Print the version and model conventions.")
@click.pass_context
def cli(ctx, verbose, jobs):
    """Small-signal DC input impedance of grid-tie voltage-source converters."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if jobs == 0:
        raise click.BadParameter("must not be 0", param_hint="--jobs")
    ctx.obj = {"jobs": jobs, "verbose": verbose}


@cli.command("sweep-analytic")
@click.option("--config", "config_ref", required=True, help="JSON config file or bundled fixture name.")
@click.option("--grid", type=GRID, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Curve CSV.")
@click.option("--svg", type=click.Path(dir_okay=False), default=None, help="Optional Bode plot.")
@click.option("--inverter-only", is_flag=True, help="Write Z_i instead of Z_iT.")
@click.pass_obj
@handle_errors
def sweep_analytic_cmd(obj, config_ref, grid, out, svg, inverter_only):
    """Analytic closed-loop input impedance (DQ frame)."""
    run = _load(config_ref)
    z_i, z_it = sweep_analytic(run.design, run.controller, grid, jobs=obj["jobs"])
    curve = z_i if inverter_only else z_it
    emit_csv(curve, out)
    if svg:
        emit_bode_svg([curve], svg)
    if curve.has_gaps:
        click.echo(f"{int(curve.gaps.sum())} point(s) left out:", err=True)
        for note in curve.notes:
            click.echo(f"  {note}", err=True)
    click.echo(f"Wrote {len(curve.without_gaps())} points to {out}")


@cli.command("sweep-reduced")
@click.option("--config", "config_ref", required=True)
@click.option("--grid", type=GRID, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--svg", type=click.Path(dir_okay=False), default=None)
@click.option("--with-esr", is_flag=True, help="Include the capacitor ESR.")
@handle_errors
def sweep_reduced_cmd(config_ref, grid, out, svg, with_esr):
    """Reduced model: R_CPL in parallel with the DC-link capacitor."""
    run = _load(config_ref)
    curve = sweep_reduced(ReducedModel.from_design(run.design, with_esr=with_esr), grid)
    emit_csv(curve, out)
    if svg:
        emit_bode_svg([curve], svg)
    click.echo(f"Wrote {len(curve)} points to {out}")


@cli.command("simulate")
@click.option("--config", "config_ref", required=True)
@click.option("--duration", type=click.FloatRange(min=0, min_open=True), default=None,
              help="Seconds; defaults to the config's sim.duration.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Trace CSV.")
@click.option("--freq", type=click.FloatRange(min=0, min_open=True), default=None,
              help="Optional source perturbation frequency [Hz].")
@click.option("--amplitude", type=click.FloatRange(min=0), default=None,
              help="Perturbation amplitude [V] (default 1 % of the source voltage).")
@handle_errors
def simulate_cmd(config_ref, duration, out, freq, amplitude):
    """Time-domain run of the averaged converter model."""
    run = _load(config_ref)
    sim = run.sim if duration is None else run.sim.model_copy(update={"duration": duration})
    source = run.source
    if freq is not None:
        amp = (config.DEFAULT_INJECTION_FRACTION * source_emf(run.design, source)
               if amplitude is None else amplitude)
        source = source.with_injection(freq, amp)
    trace = simulate(run.design, run.controller, source, sim)
    write_trace_csv(trace, out)
    click.echo(f"Wrote {trace.time.size} samples ({trace.time[-1]:.6g} s) to {out}; "
               f"final v_dc = {trace.v_dc[-1]:.6g} V, i_d = {trace.i_d[-1]:.6g} A")


@cli.command("extract")
@click.option("--config", "config_ref", required=True)
@click.option("--freq", type=click.FloatRange(min=0, min_open=True), required=True)
@click.option("--amplitude", type=click.FloatRange(min=0), default=None)
@handle_errors
def extract_cmd(config_ref, freq, amplitude):
    """Measure Z_iT at one frequency on the simulator."""
    run = _load(config_ref)
    _check_ceiling(run.design, freq)
    z = extract_impedance_at(run.design, run.controller, freq, amplitude, run.source, run.sim)
    click.echo(f"{freq:.6g} Hz: {_format_z(z)}")


@cli.command("extract-sweep")
@click.option("--config", "config_ref", required=True)
@click.option("--grid", type=GRID, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--svg", type=click.Path(dir_okay=False), default=None)
@click.option("--amplitude", type=click.FloatRange(min=0), default=None)
@click.option("--progress/--no-progress", default=True, show_default=True)
@click.pass_obj
@handle_errors
def extract_sweep_cmd(obj, config_ref, grid, out, svg, amplitude, progress):
    """Measure Z_iT over a frequency grid on the simulator."""
    run = _load(config_ref)
    _check_ceiling(run.design, grid.frequencies()[-1])
    curve = sweep_fra(run.design, run.controller, grid, jobs=obj["jobs"], source=run.source,
                      sim=run.sim, amplitude=amplitude, progress=progress)
    emit_csv(curve, out)
    if svg:
        emit_bode_svg([curve], svg)
    for note in curve.notes:
        click.echo(f"gap: {note}", err=True)
    click.echo(f"Wrote {len(curve.without_gaps())} of {len(curve)} points to {out}")


@cli.command("process-capture")
@click.option("--capture", required=True, type=click.Path(dir_okay=False))
@click.option("--freq", type=click.FloatRange(min=0, min_open=True), required=True)
@handle_errors
def process_capture_cmd(capture, freq):
    """Z at the perturbation frequency from a t_s,v_V,i_A capture."""
    z = process_capture(capture, freq)
    click.echo(f"{freq:.6g} Hz: {_format_z(z)}")


def _source_curve(spec, load, grid):
    if not spec.startswith("builtin:"):
        return read_curve_csv(spec, label="Z_s")
    _, _, rest = spec.partition(":")
    kind, _, params_text = rest.partition(":")
    if kind not in SOURCE_KINDS or kind == "from_file":
        raise ConfigError(f"unknown builtin source {kind!r}; use one of R, RL, RLC",
                          module="cli", operation="stability", field="--source")
    try:
        params = parse_key_values(params_text)
    except ValueError as e:
        raise ConfigError(str(e), module="cli", operation="stability", field="--source") from e
    return build_source_impedance(kind, params, grid if grid is not None else load.frequencies)


@cli.command("stability")
@click.option("--source", "source_spec", required=True,
              help="Curve CSV, or builtin:KIND:k=v,... with KIND in R, RL, RLC (keys r, l, c).")
@click.option("--load", "load_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--grid", type=GRID, default=None,
              help="Grid for builtin sources (default: the load curve's frequencies).")
@click.option("--margin-db", type=float, default=config.MIDDLEBROOK_MARGIN_DB, show_default=True)
@click.option("--assume-no-rhp-poles/--no-assume-no-rhp-poles", default=True, show_default=True)
@handle_errors
def stability_cmd(source_spec, load_path, report_path, grid, margin_db, assume_no_rhp_poles):
    """Minor-loop gain, Middlebrook, margins and Nyquist verdict."""
    load = read_curve_csv(load_path, label="Z_L")
    source = _source_curve(source_spec, load, grid)
    report = analyze_stability(source, load, margin_db=margin_db)
    text = report.to_text()
    if not assume_no_rhp_poles:
        text += ("note: right-half-plane poles were not ruled out; the winding number "
                 "alone does not establish stability\n")
    atomic_write(report_path, lambda handle: handle.write(text))
    click.echo(f"{report.verdict.value} (winding {report.winding_number}); report written to {report_path}")


@cli.command("scenarios")
@click.option("--suite", type=click.Choice(SUITES + ("all",)), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports", show_default=True)
@click.option("--fra/--no-fra", "include_fra", default=True, show_default=True,
              help="Include the simulator-measured curves (slow).")
@click.option("--progress/--no-progress", default=False, show_default=True)
@click.pass_obj
@handle_errors
def scenarios_cmd(obj, suite, out_dir, include_fra, progress):
    """Run a scenario suite and write its reports."""
    bundle = run_scenario_suite(suite, include_fra=include_fra, jobs=obj["jobs"], progress=progress)
    written = write_report_bundle(bundle, out_dir)
    click.echo(bundle.summary().rstrip())
    click.echo(f"Wrote {len(written)} files to {out_dir}")
    if not bundle.passed:
        failed = ", ".join(f"{name}: {check.name}" for name, check in bundle.failed_checks())
        raise AcceptanceFailure(f"thresholds not met ({failed})", module="compare_report",
                                operation="run_scenario_suite")


def main():
    cli(prog_name="vsc-impedance")


if __name__ == "__main__":
    main()
