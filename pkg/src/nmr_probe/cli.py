"""``nmr-probe`` command line.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 an acceptance check failed (only with ``--enforce``).
"""
from __future__ import annotations

import json
import logging
import sys

import click

from . import config as config_mod
from . import experiments
from .dynamics import IntegrationError
from .krotov import KrotovConvergenceError
from .qfi import ContractError, CRBViolation

EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 2, 3, 4


def _common(f):
    f = click.option("--enforce", is_flag=True, help="Exit 4 if any acceptance check fails.")(f)
    f = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None,
                     help="Override [run] seed.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory (default: [run] output).")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="INI config; the packaged headline config when omitted.")(f)
    f = click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
                     help="Override one config value; repeatable.")(f)
    return f


def _load(config_path, seed, overrides):
    pairs = {}
    for item in overrides:
        if "=" not in item:
            raise config_mod.ConfigError(f"override needs SECTION.KEY=VALUE: {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    if seed is not None:
        pairs["run.seed"] = str(seed)
    return config_mod.load(config_path, pairs)


def _execute(name, config_path, out, seed, enforce, overrides, **kwargs):
    try:
        cfg = _load(config_path, seed, overrides)
    except config_mod.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        summary = experiments.RUNNERS[name](cfg, out=out, **kwargs)
    except (IntegrationError, KrotovConvergenceError, ContractError, CRBViolation, FloatingPointError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for c in summary["checks"]:
        click.echo(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: "
                   f"value={json.dumps(experiments.io._jsonable(c['value']))} "
                   f"threshold={json.dumps(experiments.io._jsonable(c['threshold']))}")
    if enforce and not summary["all_passed"]:
        sys.exit(EXIT_ACCEPTANCE)


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Probe a Lorentzian bath parameter with an optimally controlled qubit."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
@click.option("--control", type=click.Path(dir_okay=False), default=None,
              help="Control CSV (used only when [propagate] use_control is true).")
def propagate(config_path, out, seed, enforce, overrides, control):
    """Propagate state pairs and write F(t) for the configured values."""
    _execute("propagate", config_path, out, seed, enforce, overrides, control=control)


@main.command("qfi-scan")
@_common
def qfi_scan(config_path, out, seed, enforce, overrides):
    """Normalized uncontrolled F(t) over a parameter grid and its peak locus."""
    _execute("qfi-scan", config_path, out, seed, enforce, overrides)


@main.command()
@_common
def train(config_path, out, seed, enforce, overrides):
    """Ensemble (and single-point) Krotov training."""
    _execute("train", config_path, out, seed, enforce, overrides)


@main.command()
@_common
@click.option("--control", type=click.Path(dir_okay=False), default=None)
@click.option("--single", type=click.Path(dir_okay=False), default=None,
              help="Single-point control CSV for the comparison.")
def test(config_path, out, seed, enforce, overrides, control, single):
    """Validation sweep inside and outside the training range."""
    _execute("test", config_path, out, seed, enforce, overrides, control=control, single=single)


@main.command()
@_common
@click.option("--control", type=click.Path(dir_okay=False), default=None)
def robustness(config_path, out, seed, enforce, overrides, control):
    """F(t) envelope under misspecified nuisance bath parameters."""
    _execute("robustness", config_path, out, seed, enforce, overrides, control=control)


@main.command()
@_common
@click.option("--control", type=click.Path(dir_okay=False), default=None)
def measure(config_path, out, seed, enforce, overrides, control):
    """Optimal projective observable and CRB closeness."""
    _execute("measure", config_path, out, seed, enforce, overrides, control=control)


@main.command()
@_common
@click.option("--control", type=click.Path(dir_okay=False), default=None)
@click.option("--observable", type=click.Path(dir_okay=False), default=None,
              help="observable.json from a measure run.")
def fit(config_path, out, seed, enforce, overrides, control, observable):
    """Fit and invert the readout curves."""
    _execute("fit", config_path, out, seed, enforce, overrides, control=control, observable=observable)


if __name__ == "__main__":
    main()
