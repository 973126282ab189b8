"""CLI commands using click."""

import json
import logging
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click
from pydantic import ValidationError

from infdpp import __version__
from infdpp.config import Settings, get_settings
from infdpp.exceptions import InfDppError, NumericalError
from infdpp.models import KernelFamily

logger = logging.getLogger(__name__)

# Exit codes: 0 success, 1 invalid input, 2 numerical failure (including a failed self-test)
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


@click.group()
@click.version_option(version=__version__)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging to stderr")
@click.pass_context
def main(ctx: click.Context, verbose: bool) -> None:
    """Infinite determinantal measures: kernels, determinants and their identities."""
    ctx.ensure_object(dict)
    try:
        settings = get_settings()
    except ValidationError as e:
        # Bad INFDPP_* variables should not hide --help or the schema command
        ctx.obj["settings"] = None
        ctx.obj["settings_error"] = str(e)
        settings = None
    else:
        ctx.obj["settings"] = settings
    level = logging.DEBUG if verbose else (settings.log_level if settings else "WARNING")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _floats(text: str | None, name: str) -> tuple[float, ...] | None:
    if text is None:
        return None
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"--{name} expects comma-separated numbers, got {text!r}") from None


def _ints(text: str | None, name: str) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"--{name} expects comma-separated integers, got {text!r}") from None


def _pairs(items: tuple[str, ...], name: str) -> dict[str, str]:
    out = {}
    for item in items:
        for part in item.split(","):
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"--{name} expects key=value, got {part!r}")
            out[key.strip()] = value.strip()
    return out


def _options(params: dict[str, Any]) -> dict[str, Any]:
    """Translate raw option strings into ExperimentConfig fields."""
    options: dict[str, Any] = {
        "family": params["family"],
        "s": params["s"],
        "N": params["rank_n"],
        "x": params["x"],
        "y": params["y"],
        "b1": params["b1"],
        "grid": params["grid"],
        "draws": params["draws"],
        "seed": params["seed"],
        "workers": params["workers"],
        "panels": params["panels"],
        "nodes_per_panel": params["nodes_per_panel"],
        "n": _ints(params["n"], "n"),
        "chain": _floats(params["chain"], "chain"),
        "radii": _floats(params["radii"], "radii"),
        "region": _floats(params["region"], "region"),
        "output": params["output"],
        "format": params["fmt"],
    }
    ensemble = _pairs(params["ensemble"], "ensemble")
    unknown = set(ensemble) - {"s", "N", "b1"}
    if unknown:
        raise ValueError(f"--ensemble accepts s, N and b1, got {sorted(unknown)}")
    for key, value in ensemble.items():
        options[key] = int(value) if key == "N" else float(value)
    tolerances = _pairs(params["tolerance"], "tolerance")
    if tolerances:
        options["tolerances"] = {k: float(v) for k, v in tolerances.items()}
    return options


def _fail(ctx: click.Context, error: Exception, exit_code: int) -> None:
    """Structured error record on stderr, then exit."""
    record = {"error": type(error).__name__, "message": str(error), "exit_code": exit_code}
    click.echo(json.dumps(record, sort_keys=True), err=True)
    ctx.exit(exit_code)


def _run_experiment(ctx: click.Context, command: str, params: dict[str, Any]) -> None:
    from infdpp.experiments.output import render, write
    from infdpp.experiments.runner import build_config, run
    from infdpp.experiments.selftest import run_selftest

    settings: Settings | None = ctx.obj.get("settings")
    if settings is None:
        error = ValueError(f"Error loading settings: {ctx.obj.get('settings_error')}")
        _fail(ctx, error, EXIT_VALIDATION)
    assert settings is not None

    try:
        config = build_config(command, settings, **_options(params))
        result = run(config, settings)
        if params["selftest"]:
            result = run_selftest(result)
    except NumericalError as e:
        _fail(ctx, e, EXIT_NUMERICAL)
    except (ValidationError, InfDppError, ValueError) as e:
        _fail(ctx, e, EXIT_VALIDATION)

    if config.output is not None:
        write(result, config.format, config.output)
        click.echo(f"Wrote {config.output}", err=True)
    else:
        click.echo(render(result, config.format), nl=False)

    if params["selftest"]:
        for check in result.checks:
            mark = "ok" if check.passed else "FAIL"
            line = f"  [{mark}] {check.name}: {check.value:.3e} (bound {check.bound:.1e})"
            click.echo(line, err=True)
        if not result.passed:
            ctx.exit(EXIT_NUMERICAL)


def _experiment_options(func: Callable[..., None]) -> Callable[..., None]:
    options = [
        click.option("--family", type=click.Choice([f.value for f in KernelFamily])),
        click.option("--s", "s", type=float, help="Bessel/Jacobi parameter s"),
        click.option("--n", "n", help="Matrix sizes, comma-separated"),
        click.option("--N", "rank_n", type=int, help="Rank N of the ensemble"),
        click.option("--x", "x", type=float),
        click.option("--y", "y", type=float),
        click.option("--b1", type=float, help="Cut point of the ensemble"),
        click.option("--ensemble", multiple=True, help="Shorthand s=..,N=..,b1=.."),
        click.option("--chain", help="Increasing window ends after b1, comma-separated"),
        click.option("--radii", help="Increasing radii R, comma-separated"),
        click.option("--region", help="Region interval lo,hi"),
        click.option("--grid", help="Grid name"),
        click.option("--draws", type=int, help="Monte Carlo draws"),
        click.option("--seed", type=int, help="Seed (required for sampling commands)"),
        click.option("--workers", type=int, help="Worker streams [default: INFDPP_THREADS]"),
        click.option("--panels", type=int),
        click.option("--nodes-per-panel", type=int),
        click.option("--tolerance", multiple=True, help="Threshold override key=value"),
        click.option("--output", type=click.Path(path_type=Path), help="Write to a file"),
        click.option(
            "--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True
        ),
        click.option("--selftest", is_flag=True, help="Check the command's invariants"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _make_command(name: str, description: str) -> click.Command:
    @click.command(name, help=description)
    @_experiment_options
    @click.pass_context
    def command(ctx: click.Context, **params: Any) -> None:
        _run_experiment(ctx, name, params)

    return command


@main.command("schema")
def schema() -> None:
    """Print the versioned JSON schema of experiment results."""
    from infdpp.experiments.schema import result_schema

    click.echo(json.dumps(result_schema(), indent=2, sort_keys=True))


def _register() -> None:
    from infdpp.experiments.runner import DESCRIPTIONS

    for name, description in DESCRIPTIONS.items():
        main.add_command(_make_command(name, description))


_register()
