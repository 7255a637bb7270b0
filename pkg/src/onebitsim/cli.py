"""Command-line interface: config parsing, experiment commands, emission.

Config files are flat ``key = value`` INI text with one section per
command (see README for the full key list). Results land in two files per
command: a CSV with one row per (protocol, scenario, n) cell in a fixed,
versioned column order, and a JSON manifest that echoes the full config,
seeds, and timestamps needed to reproduce the run. Timestamps live only in
the manifest so reruns of the same config produce byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import datetime
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .harness import (
    ExperimentConfig,
    RiskReport,
    default_impossibility_config,
    impossibility_demo,
    run_sweep,
)
from .protocols import COIN_MODES, PROTOCOLS, Schedule
from .scenarios import SCENARIO_IDS
from .verify import run_verify_suites

CSV_COLUMNS = (
    "protocol",
    "scenario",
    "d",
    "n",
    "r_n",
    "c_n",
    "schedule_validity",
    "replications",
    "test_points",
    "risk_mean",
    "risk_se",
    "bayes_risk",
    "excess_risk",
    "bits_per_query",
    "abstain_rate",
    "all_abstain_frac",
    "seed",
)


class ConfigError(Exception):
    """Invalid configuration; the message names the offending key."""


def _fmt(value) -> str:
    """Full round-trip decimal text for numbers; plain text otherwise."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(report: RiskReport) -> dict:
    return {
        "protocol": report.protocol,
        "scenario": report.scenario_id,
        "d": report.dimension,
        "n": report.n,
        "r_n": report.r_n,
        "c_n": report.c_n,
        "schedule_validity": report.schedule_validity,
        "replications": report.replications,
        "test_points": report.test_points,
        "risk_mean": report.risk_mean,
        "risk_se": report.risk_se,
        "bayes_risk": report.bayes_risk,
        "excess_risk": report.excess_risk,
        "bits_per_query": report.bits_per_query,
        "abstain_rate": report.abstain_rate,
        "all_abstain_frac": report.all_abstain_frac,
        "seed": report.seed,
    }


def write_csv(path: Path, reports: list[RiskReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            row = report_row(report)
            writer.writerow([_fmt(row[col]) for col in CSV_COLUMNS])


def _manifest(command: str, config: ExperimentConfig, reports, started, finished, extra=None):
    body = {
        "tool": "onebit-sim",
        "version": __version__,
        "command": command,
        "master_seed": config.seed,
        "started_at": started,
        "finished_at": finished,
        "config": dataclasses.asdict(config),
        "rows": [report_row(r) for r in reports],
        "wall_time_s": [r.wall_time_s for r in reports],
    }
    if extra:
        body.update(extra)
    return body


def write_json(path: Path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# config parsing


def _parse_scalar(key: str, raw: str, kind, what: str):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {what}, got {raw!r}") from None


def _parse_param_value(raw: str):
    parts = [p.strip() for p in raw.split(",")]
    values = []
    for part in parts:
        try:
            values.append(int(part))
            continue
        except ValueError:
            pass
        try:
            values.append(float(part))
            continue
        except ValueError:
            values.append(part)
    if len(values) == 1:
        return values[0]
    return tuple(values)


def load_config_section(path: str, command: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path!r} ({exc.strerror})") from None
    except configparser.Error as exc:
        raise ConfigError(f"config: parse failure: {exc}") from None
    if not parser.has_section(command):
        raise ConfigError(f"config: section [{command}] is required")
    return dict(parser.items(command))


def build_experiment_config(
    section: dict,
    *,
    single_n: bool,
    seed_override: Optional[int] = None,
    defaults: Optional[ExperimentConfig] = None,
) -> ExperimentConfig:
    """Translate a config section into an ExperimentConfig.

    ``single_n`` selects between the ``n`` key (simulate) and ``n_grid``
    (sweep). ``defaults`` pre-fills keys (used by the demo command).
    """
    section = dict(section)

    def take(key, fallback=None):
        return section.pop(key, fallback)

    protocol = take("protocol", defaults.protocol if defaults else None)
    if protocol is None:
        raise ConfigError("protocol: required")
    if protocol not in PROTOCOLS:
        raise ConfigError(
            f"protocol: unknown {protocol!r}; known: {', '.join(PROTOCOLS)}"
        )
    scenario = take("scenario", defaults.scenario_id if defaults else None)
    if scenario is None:
        raise ConfigError("scenario: required")
    if scenario not in SCENARIO_IDS:
        raise ConfigError(
            f"scenario: unknown {scenario!r}; known: {', '.join(SCENARIO_IDS)}"
        )
    params = dict(defaults.scenario_params) if defaults else {}
    for key in [k for k in section if k.startswith("scenario.")]:
        params[key.split(".", 1)[1]] = _parse_param_value(section.pop(key))

    if single_n:
        raw_n = take("n")
        if raw_n is None:
            raise ConfigError("n: required")
        grid = (_parse_scalar("n", raw_n, int, "an integer"),)
    else:
        raw_grid = take("n_grid")
        if raw_grid is None and defaults is not None:
            grid = defaults.n_grid
        elif raw_grid is None:
            raise ConfigError("n_grid: required")
        else:
            grid = tuple(
                _parse_scalar("n_grid", part.strip(), int, "integers")
                for part in raw_grid.split(",")
                if part.strip()
            )
            if not grid:
                raise ConfigError("n_grid: required")

    sched_defaults = defaults.schedule if defaults else Schedule(0.5, 0.3)
    clamp_raw = take("clamp")
    schedule_kwargs = {
        "r0": _parse_scalar("r0", take("r0", sched_defaults.r0), float, "a number"),
        "beta": _parse_scalar("beta", take("beta", sched_defaults.beta), float, "a number"),
        "c0": _parse_scalar("c0", take("c0", sched_defaults.c0), float, "a number"),
        "gamma": _parse_scalar("gamma", take("gamma", sched_defaults.gamma), float, "a number"),
        "clamp": (
            _parse_scalar("clamp", clamp_raw, float, "a number")
            if clamp_raw is not None
            else sched_defaults.clamp
        ),
    }
    try:
        schedule = Schedule(**schedule_kwargs)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None

    def int_key(key, fallback):
        return _parse_scalar(key, take(key, fallback), int, "an integer")

    replications = int_key("replications", defaults.replications if defaults else 20)
    test_points = int_key("test_points", defaults.test_points if defaults else 2000)
    seed = int_key("seed", defaults.seed if defaults else 0)
    default_label = int_key("default_label", defaults.default_label if defaults else 0)
    max_rejects = int_key("max_rejects", defaults.max_rejects if defaults else 10_000)
    coin_mode = take("coin_mode", defaults.coin_mode if defaults else "per_sensor")
    if coin_mode not in COIN_MODES:
        raise ConfigError(
            f"coin_mode: unknown {coin_mode!r}; known: {', '.join(COIN_MODES)}"
        )
    family_c = _parse_scalar(
        "family_c", take("family_c", defaults.family_c if defaults else 2.0),
        float, "a number",
    )
    if seed_override is not None:
        seed = seed_override
    if section:
        raise ConfigError(f"{sorted(section)[0]}: unknown key")
    try:
        return ExperimentConfig(
            protocol=protocol,
            scenario_id=scenario,
            scenario_params=params,
            schedule=schedule,
            n_grid=grid,
            replications=replications,
            test_points=test_points,
            seed=seed,
            coin_mode=coin_mode,
            default_label=default_label,
            max_rejects=max_rejects,
            family_c=family_c,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def _out_dir(args) -> Path:
    out = os.environ.get("ONEBIT_SIM_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _print_table(reports: list[RiskReport]) -> None:
    print(
        f"{'protocol':>14} {'n':>8} {'risk':>10} {'excess':>10} "
        f"{'se':>9} {'abstain':>8} validity"
    )
    for r in reports:
        print(
            f"{r.protocol:>14} {r.n:>8} {r.risk_mean:>10.5f} "
            f"{r.excess_risk:>10.5f} {r.risk_se:>9.5f} "
            f"{r.abstain_rate:>8.4f} {r.schedule_validity}"
        )


def _run_experiment(args, command: str, single_n: bool) -> int:
    if args.config is None:
        raise ConfigError("config: required (--config PATH)")
    section = load_config_section(args.config, command)
    config = build_experiment_config(
        section, single_n=single_n, seed_override=args.seed
    )
    started = _now()
    reports = run_sweep(config, jobs=args.jobs)
    finished = _now()
    out = _out_dir(args)
    stem = command
    write_csv(out / f"{stem}.csv", reports)
    write_json(out / f"{stem}.json", _manifest(command, config, reports, started, finished))
    _print_table(reports)
    print(f"wrote {out / (stem + '.csv')} and {out / (stem + '.json')}")
    return 0


def cmd_simulate(args) -> int:
    return _run_experiment(args, "simulate", single_n=True)


def cmd_sweep(args) -> int:
    return _run_experiment(args, "sweep", single_n=False)


def cmd_demo(args) -> int:
    defaults = default_impossibility_config()
    if args.config is not None:
        section = load_config_section(args.config, "demo-impossibility")
        config = build_experiment_config(
            section, single_n=False, seed_override=args.seed, defaults=defaults
        )
    else:
        config = defaults
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
    if config.protocol != "reg_noabstain":
        raise ConfigError("protocol: the demo requires reg_noabstain")
    started = _now()
    demo = impossibility_demo(config, jobs=args.jobs)
    finished = _now()
    reports = list(demo.noabstain_reports) + list(demo.abstain_reports)
    out = _out_dir(args)
    write_csv(out / "demo_impossibility.csv", reports)
    summary = {
        "grid_mean_abs_estimate": demo.grid_mean_abs_estimate,
        "terminal_mse": demo.terminal_mse,
        "predicted_plateau_mse": demo.predicted_plateau_mse,
        "predicted_excess_plateau": demo.predicted_excess_plateau,
        "bayes_risk": demo.bayes_risk,
    }
    write_json(
        out / "demo_impossibility.json",
        _manifest("demo-impossibility", config, reports, started, finished,
                  extra={"summary": summary}),
    )
    _print_table(reports)
    print(f"mean |estimate| on query grid at n={config.n_grid[-1]}: "
          f"{demo.grid_mean_abs_estimate:.5f}")
    print(f"terminal one-bit MSE: {demo.terminal_mse:.5f} "
          f"(predicted plateau {demo.predicted_plateau_mse:.5f}, "
          f"optimal {demo.bayes_risk:.5f})")
    print(f"abstention contrast terminal excess: "
          f"{demo.abstain_reports[-1].excess_risk:.5f}")
    return 0


def cmd_verify(args) -> int:
    results = run_verify_suites()
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    return 0 if failed == 0 else 1


def cmd_report(args) -> int:
    src = Path(args.infile)
    if not src.exists():
        raise ConfigError(f"in: no such file {args.infile!r}")
    out = _out_dir(args)
    by_protocol: dict[str, list[tuple[int, str]]] = {}
    with open(src, newline="") as fh:
        for row in csv.DictReader(fh):
            by_protocol.setdefault(row["protocol"], []).append(
                (int(row["n"]), row["excess_risk"])
            )
    for protocol, rows in sorted(by_protocol.items()):
        path = out / f"convergence_{protocol}.dat"
        with open(path, "w") as fh:
            fh.write("# n excess_risk\n")
            for n, excess in sorted(rows):
                fh.write(f"{n} {excess}\n")
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onebit-sim",
        description="Simulate one-bit distributed learning protocols.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument(
            "--jobs", type=int, default=1,
            help="worker processes (hint only; never changes results)",
        )

    p = sub.add_parser("simulate", help="run a single (protocol, scenario, n) cell")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sweep", help="run a full n-grid sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser(
        "demo-impossibility",
        help="contrast one-bit regression with and without abstention",
    )
    common(p)
    p.set_defaults(func=cmd_demo)
    p = sub.add_parser("verify", help="run the built-in oracle suites")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser(
        "report", help="emit gnuplot-ready (n, excess_risk) files from a sweep CSV"
    )
    p.add_argument("--in", dest="infile", required=True, help="sweep CSV to read")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
