"""Command line entry point: ``otafl gen | run | sweep | validate``.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 sweep with
some failed cells. The output directory comes from ``--out-dir``, then the
``OTAFL_OUT_DIR`` environment variable, then the config's ``output.out_dir``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .domain import validate_fleet
from .fl_sim import ExperimentError, ExperimentResult, run_experiment
from .metrics import ExperimentSummary, instantaneous_ee
from .scenario import (
    SELECTOR_KINDS,
    ConfigError,
    GeneratorSpec,
    ScenarioConfig,
    generate_scenario,
    load_scenario,
    reference_scenario,
    save_scenario,
    scenario_to_json,
)

logger = logging.getLogger("otafl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 2, 3, 4
OUT_DIR_ENV = "OTAFL_OUT_DIR"

ROUND_COLUMNS = [
    "round", "loss", "accuracy", "delay_s", "energy_j", "iee", "selected_count", "failures",
    "selected", "failed", "bandwidth_hz", "fitness", "feasible", "aborted",
]


# -- helpers --------------------------------------------------------------------


def _json_safe(x):
    """Replace non-finite floats with None so the output is strict JSON."""
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def _ids(ids) -> str:
    return ";".join(str(i) for i in sorted(ids))


def _parse_list(values, cast=str) -> list:
    out = []
    for v in values or []:
        for part in str(v).split(","):
            part = part.strip()
            if not part:
                continue
            if cast is int and "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(cast(part))
    return out


def resolve_out_dir(arg: str | None, sc: ScenarioConfig | None = None) -> Path:
    if arg:
        return Path(arg)
    if os.environ.get(OUT_DIR_ENV):
        return Path(os.environ[OUT_DIR_ENV])
    if sc is not None and sc.output.get("out_dir"):
        return Path(sc.output["out_dir"])
    return Path("results")


def reseed(sc: ScenarioConfig, seed: int) -> ScenarioConfig:
    """Use ``seed`` as master seed; a generator-backed fleet is resampled too."""
    if sc.generator is None:
        return sc.with_seed(seed)
    fresh = generate_scenario(
        replace(sc.generator, seed=int(seed)),
        trainer=sc.trainer,
        data=sc.data,
        selector=dict(sc.selector),
        weights=sc.weights,
        metrics=dict(sc.metrics),
        output=dict(sc.output),
    )
    # Keep every system setting from the config except the derived ones.
    system = replace(sc.system, total_bandwidth=fresh.system.total_bandwidth, master_seed=int(seed))
    return replace(fresh, system=system)


def apply_overrides(sc: ScenarioConfig, seed=None, selector=None, rounds=None) -> ScenarioConfig:
    if seed is not None:
        sc = reseed(sc, seed)
    if selector is not None:
        sc = sc.with_selector(selector)
    if rounds is not None:
        if rounds < 1:
            raise ConfigError("rounds must be at least 1", "system.total_rounds")
        sc = sc.with_rounds(rounds)
    return sc


def _metadata(command: str) -> dict:
    return {
        "command": command,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
    }


# -- result export ----------------------------------------------------------------


def round_rows(records) -> list[dict]:
    rows = []
    for r in records:
        rows.append({
            "round": r.round,
            "loss": r.global_loss,
            "accuracy": r.global_accuracy,
            "delay_s": r.round_delay,
            "energy_j": r.round_energy,
            "iee": instantaneous_ee(100.0 * r.global_accuracy, r.round_energy),
            "selected_count": r.mask.count,
            "failures": len(r.failures),
            "selected": _ids(r.selected),
            "failed": _ids(r.failures),
            "bandwidth_hz": r.bandwidth_used,
            "fitness": r.selection_fitness,
            "feasible": int(r.selection_feasible),
            "aborted": int(r.aborted),
        })
    return rows


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _csv_cell(row.get(k, "")) for k in columns})


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else "nan"
    return v


def write_run(out_dir: Path, sc: ScenarioConfig, result: ExperimentResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_scenario(sc, out_dir / "scenario.json")
    write_csv(out_dir / "rounds.csv", ROUND_COLUMNS, round_rows(result.records))
    trace_rows = [
        {"round": t, "iteration": i, "best_fitness": f}
        for t, trace in sorted(result.traces.items())
        for i, f in enumerate(trace)
    ]
    write_csv(out_dir / "gwo_trace.csv", ["round", "iteration", "best_fitness"],
              trace_rows if sc.selector_kind == "gwo" else [])
    summary = result.summary.to_dict()
    summary.update(selector=sc.selector_kind, seed=sc.system.master_seed)
    _dump_json(out_dir / "summary.json", summary)


def write_error(out_dir: Path | None, kind: str, message: str, **extra) -> None:
    record = {"error": kind, "message": message, **extra}
    print(f"error ({kind}): {message}", file=sys.stderr)
    if out_dir is None:
        return
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(out_dir / "error.json", record)
    except OSError:
        logger.warning("could not write error record to %s", out_dir)


def execute(sc: ScenarioConfig, out_dir: Path) -> ExperimentResult:
    """Run one experiment and export it; partial rounds are flushed on failure."""
    try:
        result = run_experiment(sc)
    except ExperimentError as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_scenario(sc, out_dir / "scenario.json")
        write_csv(out_dir / "rounds.csv", ROUND_COLUMNS, round_rows(exc.records))
        raise
    write_run(out_dir, sc, result)
    return result


# -- commands ---------------------------------------------------------------------


def _load(args) -> ScenarioConfig:
    if getattr(args, "reference", False):
        if args.config:
            raise ConfigError("--reference and --config are mutually exclusive")
        return reference_scenario(0)
    if not args.config:
        raise ConfigError("--config is required")
    try:
        return load_scenario(args.config)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {args.config}") from exc


def cmd_gen(args) -> int:
    if args.config:
        sc = _load(args)
        if args.seed is not None:
            sc = reseed(sc, args.seed)
    elif args.reference:
        sc = reference_scenario(0 if args.seed is None else args.seed)
    else:
        sc = generate_scenario(GeneratorSpec(n=args.clients), 0 if args.seed is None else args.seed)
    sc = apply_overrides(sc, None, args.selector, args.rounds)
    out_dir = resolve_out_dir(args.out_dir, sc)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = save_scenario(sc, out_dir / "scenario.json")
    _dump_json(out_dir / "metadata.json", _metadata("gen"))
    print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    sc = apply_overrides(_load(args), args.seed, args.selector, args.rounds)
    out_dir = resolve_out_dir(args.out_dir, sc)
    try:
        result = execute(sc, out_dir)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime error record
        write_error(out_dir, "runtime", str(exc), rounds_completed=len(getattr(exc, "records", [])))
        return EXIT_RUNTIME
    _dump_json(out_dir / "metadata.json", _metadata("run"))
    s = result.summary
    print(f"{sc.selector_kind}: accuracy {s.final_accuracy:.2f}%  energy {s.total_energy:.3f} J  "
          f"gee {s.gee:.4g} %/J  -> {out_dir}")
    return EXIT_OK


def _sweep_cell(payload):
    sc_json, kind, seed, out_dir = payload
    from .scenario import scenario_from_dict

    sc = scenario_from_dict(json.loads(sc_json))
    try:
        result = execute(sc, Path(out_dir))
    except Exception as exc:  # noqa: BLE001 - recorded per row
        write_error(Path(out_dir), "runtime", str(exc))
        return kind, seed, None, str(exc)
    return kind, seed, result.summary, None


def sweep_rows(cells) -> list[dict]:
    """Comparison table rows: one per (selector, seed) then one mean row per selector."""
    cols = ExperimentSummary.scalar_fields()
    rows, by_kind = [], {}
    for kind, seed, summary, err in cells:
        row = {"selector": kind, "seed": seed, "status": "ok" if err is None else f"error: {err}"}
        if summary is not None:
            values = summary.to_dict()
            row.update({c: values[c] for c in cols})
            by_kind.setdefault(kind, []).append(values)
        rows.append(row)
    for kind in dict.fromkeys(c[0] for c in cells):
        ok = by_kind.get(kind, [])
        row = {"selector": kind, "seed": "mean", "status": f"{len(ok)} runs"}
        for c in cols:
            vals = [float(v[c]) for v in ok]
            row[c] = float(np.mean(vals)) if vals else math.nan
        rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    base = _load(args)
    kinds = _parse_list(args.selector) or [base.selector_kind]
    for k in kinds:
        if k not in SELECTOR_KINDS:
            raise ConfigError(f"unknown selector '{k}'", "selector.kind")
    seeds = _parse_list(args.seed, int) or [base.system.master_seed]
    if args.rounds is not None:
        base = apply_overrides(base, rounds=args.rounds)
    out_dir = resolve_out_dir(args.out_dir, base)
    out_dir.mkdir(parents=True, exist_ok=True)

    payloads = []
    for seed in seeds:
        per_seed = reseed(base, seed)  # same fleet for every selector at this seed
        for kind in kinds:
            sc = per_seed.with_selector(kind)
            payloads.append((scenario_to_json(sc), kind, seed, str(out_dir / kind / f"seed_{seed}")))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            cells = list(pool.map(_sweep_cell, payloads))
    else:
        cells = [_sweep_cell(p) for p in payloads]
    # Rows are ordered selector-major regardless of execution order.
    order = {k: i for i, k in enumerate(kinds)}
    cells.sort(key=lambda c: (order[c[0]], seeds.index(c[1])))

    rows = sweep_rows(cells)
    write_csv(out_dir / "comparison.csv", ["selector", "seed", "status", *ExperimentSummary.scalar_fields()], rows)
    _dump_json(out_dir / "metadata.json", _metadata("sweep"))
    failed = sum(c[3] is not None for c in cells)
    for row in rows:
        if row["seed"] == "mean":
            print(f"{row['selector']:>7}: accuracy {row['final_accuracy']:.2f}%  energy {row['total_energy']:.3f} J  "
                  f"fitness {row['mean_selection_fitness']:.4g}")
    if failed == len(cells):
        return EXIT_RUNTIME
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_validate(args) -> int:
    sc = apply_overrides(_load(args), args.seed, args.selector, args.rounds)
    issues = validate_fleet(sc.fleet, sc.system)
    errors = [m for m in issues if not m.startswith("warning:")]
    for m in issues:
        print(m)
    if errors:
        raise ConfigError(f"{len(errors)} fleet problem(s): {errors[0]}", "fleet")
    print(f"ok: {len(sc.fleet)} clients, {sc.system.total_rounds} rounds, selector {sc.selector_kind}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otafl", description="Client selection for over-the-air federated learning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi=False):
        sp.add_argument("--config", help="scenario JSON file")
        sp.add_argument("--reference", action="store_true", help="use the built-in 10-client reference scenario")
        if multi:
            sp.add_argument("--seed", action="append", help="seeds, comma separated or ranges like 0-4")
            sp.add_argument("--selector", action="append", help="selectors, comma separated")
        else:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--selector", choices=SELECTOR_KINDS)
        sp.add_argument("--rounds", type=int)
        sp.add_argument("--out-dir", help=f"output directory (env {OUT_DIR_ENV})")

    g = sub.add_parser("gen", help="write a scenario file with an explicit fleet")
    common(g)
    g.add_argument("--clients", type=int, default=10, help="fleet size for the default generator")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one experiment")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run selectors x seeds and write a comparison table")
    common(s, multi=True)
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check a scenario file")
    common(v)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        out = None
        if args.out_dir or os.environ.get(OUT_DIR_ENV):
            out = resolve_out_dir(args.out_dir)
        extra = {"field": exc.field, "line": exc.line}
        write_error(out, "config", str(exc), **{k: v for k, v in extra.items() if v is not None})
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
