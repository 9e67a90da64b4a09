"""Command line: ``higher-aps verify <suite>``, ``higher-aps run <config>``, ``higher-aps sweep <config>``.

Exit codes: 0 success, 1 failed invariant or acceptance rule, 2 configuration error,
3 infeasible scenario (gap check failed).
"""
from __future__ import annotations

import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import click
import jsonschema
import numpy as np
import yaml

from .errors import ConfigError, HigherAPSError, InfeasibleError
from .index_pipeline import (SCHEMA_VERSION, Scenario, _rounded, aps_check, build_model, eta_integrand_table,
                             higher_index_absolute)
from .verify_suites import SUITES, format_table, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3
TOP_LEVEL_KEYS = ("schema_version", "scenario", "output", "seed")
OUTPUT_KEYS = ("dir",)
SWEEP_PARAMS = ("u", "seed", "n_nodes")


@dataclass(frozen=True)
class ConfigFile:
    schema_version: int
    scenario: Scenario
    output_dir: str | None = None
    seed: int | None = None


def _key_mark(node, path: list):
    """Line/column (1-based) of the key at ``path`` inside a composed YAML mapping."""
    mark = None
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            break
        for k, v in node.value:
            if k.value == key:
                mark, node = k.start_mark, v
                break
        else:
            break
    return (mark.line + 1, mark.column + 1) if mark is not None else (None, None)


def _unknown(where: str, keys, allowed, root, path):
    bad = sorted(set(keys) - set(allowed))
    if bad:
        line, col = _key_mark(root, path + [bad[0]])
        raise ConfigError(f"unknown key(s) {bad} in {where}", line, col)


def load_config(path: str | os.PathLike) -> ConfigFile:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    text = path.read_text()
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          None if mark is None else mark.line + 1, None if mark is None else mark.column + 1)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    _unknown("config", data, TOP_LEVEL_KEYS, root, [])
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        line, col = _key_mark(root, ["schema_version"])
        raise ConfigError(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION}); "
                          f"migrate by renaming keys per the README changelog and setting schema_version: "
                          f"{SCHEMA_VERSION}", line, col)
    scn_data = data.get("scenario")
    if not isinstance(scn_data, dict):
        raise ConfigError("config needs a 'scenario' mapping")
    try:
        scenario = Scenario.from_dict(scn_data)
    except ConfigError as exc:
        # locate the first offending key for the diagnostic
        msg = str(exc)
        for section in ("model", "quadrature", "tolerances", None):
            sub = scn_data.get(section, {}) if section else scn_data
            if not isinstance(sub, dict):
                continue
            for key in sub:
                if f"'{key}'" in msg:
                    line, col = _key_mark(root, ["scenario"] + ([section] if section else []) + [key])
                    raise ConfigError(msg, line, col) from None
        raise
    except TypeError as exc:
        raise ConfigError(f"bad scenario value: {exc}") from None
    output = data.get("output") or {}
    _unknown("output", output, OUTPUT_KEYS, root, ["output"])
    return ConfigFile(version, scenario, output.get("dir"), data.get("seed"))


def report_schema() -> dict:
    with resources.as_file(resources.files("higher_aps") / "data" / "report_schema.json") as p:
        return json.loads(p.read_text())


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.12g}" if isinstance(x, float) else x for x in r])


def _fail(exc: Exception) -> int:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    return EXIT_FAIL


def _common(f):
    f = click.option("--jobs", type=int, default=None, help="worker processes (default: logical cores)")(f)
    f = click.option("--seed", type=int, default=None, help="random seed override")(f)
    f = click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="output directory")(f)
    return f


@click.group()
def main():
    """Lattice experiments for higher index pairings."""


@main.command()
@click.argument("suite", type=click.Choice(SUITES + ("all",)))
@_common
def verify(suite, jobs, seed, out):
    """Run a property suite and print its residual table."""
    rows = run_suite(suite, 0 if seed is None else seed)
    click.echo(format_table(rows))
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        payload = {"suite": suite, "seed": 0 if seed is None else seed, "rows": [r.as_dict() for r in rows]}
        (Path(out) / f"verify_{suite}.json").write_text(json.dumps(_rounded(payload), indent=2, sort_keys=True) + "\n")
    sys.exit(EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL)


def _resolve(config: str, seed, out) -> tuple[Scenario, Path]:
    cfg = load_config(config)
    scn = cfg.scenario
    chosen = seed if seed is not None else cfg.seed
    if chosen is not None:
        scn = replace(scn, seed=int(chosen))
    out_dir = Path(out or cfg.output_dir or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    return scn, out_dir


@main.command()
@click.argument("config", type=click.Path())
@_common
def run(config, jobs, seed, out):
    """Run a scenario; writes <id>.json, <id>_u_sweep.csv and <id>_eta_integrand.csv."""
    try:
        scn, out_dir = _resolve(config, seed, out)
        model = build_model(scn.model, np.random.default_rng(scn.seed))
        report = aps_check(scn, model)
        payload = report.to_json_dict()
        jsonschema.validate(payload, report_schema())
        (out_dir / f"{scn.scenario_id}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _write_csv(out_dir / f"{scn.scenario_id}_u_sweep.csv", ["u", "pairing", "pairing_imag"],
                   [(s["u"], s["pairing"], s["pairing_imag"]) for s in payload["sweep"]])
        _write_csv(out_dir / f"{scn.scenario_id}_eta_integrand.csv", ["t", "integrand"],
                   eta_integrand_table(scn, model))
    except (HigherAPSError, jsonschema.ValidationError) as exc:
        sys.exit(_fail(exc))
    for chk in payload["pass"]:
        click.echo(f"{chk['rule']:<28} residual {chk['residual']:.3e}  tol {chk['tolerance']:.1e}  "
                   f"{'PASS' if chk['passed'] else 'FAIL'}")
    sys.exit(EXIT_OK if report.passed else EXIT_FAIL)


def _sweep_point(args) -> tuple:
    scn, param, value = args
    if param == "u":
        pv = higher_index_absolute(scn, float(value))
    else:
        pv = higher_index_absolute(replace(scn, **{param: type(getattr(scn, param))(value)}))
    return value, pv.value.real, pv.value.imag


@main.command()
@click.argument("config", type=click.Path())
@click.option("--param", type=click.Choice(SWEEP_PARAMS), default="u", show_default=True)
@click.option("--grid", required=True, help="comma-separated parameter values")
@_common
def sweep(config, param, grid, jobs, seed, out):
    """Absolute pairing over a parameter grid; writes <id>_<param>_sweep.csv and .json."""
    try:
        scn, out_dir = _resolve(config, seed, out)
        try:
            values = [float(x) if param == "u" else int(x) for x in grid.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse grid {grid!r}") from None
        tasks = [(scn, param, v) for v in values]
        jobs = jobs or os.cpu_count() or 1
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
                results = list(pool.map(_sweep_point, tasks))
        else:
            results = [_sweep_point(t) for t in tasks]
    except HigherAPSError as exc:
        sys.exit(_fail(exc))
    stem = f"{scn.scenario_id}_{param}_sweep"
    _write_csv(out_dir / f"{stem}.csv", [param, "pairing", "pairing_imag"], results)
    payload = {"scenario_id": scn.scenario_id, "param": param,
               "rows": [{"value": v, "pairing": re, "pairing_imag": im} for v, re, im in results]}
    (out_dir / f"{stem}.json").write_text(json.dumps(_rounded(payload), indent=2, sort_keys=True) + "\n")
    for v, re, im in results:
        click.echo(f"{param}={v:<8} pairing={re:.12g}{im:+.3g}i")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
