"""Command-line entry point: ``ewh-nexus``."""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
from pathlib import Path

import click

from . import acivp
from .model import NetworkError, ScenarioError, load_network, read_scenario_csv, resample_scenario
from .rolling import (
    Perturbation,
    RollingConfig,
    generate_training_data,
    read_results_csv,
    report,
    results_from_rows,
    run_rolling,
    summarize,
)
from .solver import SolverConfig


class _Fail(Exception):
    def __init__(self, kind: str, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.kind = kind
        self.details = details or []


def _error_line(command: str, kind: str, message: str, details: list[str]) -> str:
    return "ERROR " + json.dumps({"command": command, "error": kind, "message": message, "details": details})


class _Group(click.Group):
    """Turns domain errors into one machine-readable stderr line and exit code 1."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except _Fail as e:
            name = ctx.invoked_subcommand or "?"
            click.echo(_error_line(name, e.kind, str(e), e.details), err=True)
            sys.exit(1)
        except NetworkError as e:
            click.echo(_error_line(ctx.invoked_subcommand or "?", "network", "invalid network",
                                   list(e.violations)), err=True)
            sys.exit(1)
        except (ScenarioError, acivp.StrategyError, ValueError, OSError) as e:
            kind = {ScenarioError: "scenario", acivp.StrategyError: "model"}.get(type(e), type(e).__name__)
            click.echo(_error_line(ctx.invoked_subcommand or "?", kind, str(e), []), err=True)
            sys.exit(1)


@click.group(cls=_Group)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Dispatch engine for a coupled power, water and hydrogen microgrid."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("net", type=click.Path(dir_okay=False))
def validate(net: str) -> None:
    """Check a network file and print its size."""
    n = load_network(Path(net))
    click.echo(f"ok: {len(n.buses)} buses, {len(n.branches)} branches, {len(n.nodes)} water nodes, "
               f"{len(n.pipes)} pipes, {len(n.tanks)} tanks")


def _read_curves(path: Path, step: int | None):
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise _Fail("curves", f"no .csv curves found in {path}")
    out = []
    for f in files:
        sc = read_scenario_csv(f)
        out.append(resample_scenario(sc, step) if step else sc)
    return out


@main.command("gen-data")
@click.argument("net", type=click.Path(dir_okay=False))
@click.argument("curves", type=click.Path())
@click.option("-n", "n_samples", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--horizon", type=int, default=24, show_default=True, help="Steps per sample.")
@click.option("--sigma", type=float, default=0.1, show_default=True, help="Lognormal spread per series.")
@click.option("--warp", type=int, default=1, show_default=True, help="Maximal time shift per series (steps).")
@click.option("--node-limit", type=int, default=100_000, show_default=True)
@click.option("--time-limit", type=float, default=None, help="Seconds per sample; unsolved samples are dropped.")
@click.option("--rounding", is_flag=True, help="Use the rounding heuristic inside branch-and-bound.")
@click.option("-o", "out", type=click.Path(file_okay=False), required=True)
def gen_data(net, curves, n_samples, seed, horizon, sigma, warp, node_limit, time_limit, rounding, out) -> None:
    """Solve perturbed historical windows and store their strategies."""
    network = load_network(Path(net))
    history = _read_curves(Path(curves), None)
    cfg = SolverConfig(node_limit=node_limit, rounding=rounding,
                       time_limit_s=math.inf if time_limit is None else time_limit)
    data = generate_training_data(network, history, n_samples, Perturbation(sigma, warp), seed, horizon, cfg)
    if not data.samples:
        raise _Fail("gen-data", "every sample was infeasible", [f"dropped={data.dropped}"])
    ts = acivp.build_training_set(data.samples, cfg)
    out_dir = Path(out)
    acivp.save_training_set(ts, out_dir)
    with open(out_dir / "samples.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "objective", "solve_time_s", "nodes", "strategy"])
        for i, (s, sid) in enumerate(zip(data.samples, ts.strategy_ids)):
            w.writerow([i, format(s.solution.objective, ".10g"), format(s.solution.solve_time, ".4f"),
                        s.solution.nodes, sid])
    manifest = {"network": str(net), "curves": str(curves), "n_requested": n_samples, "n_solved": len(data.samples),
                "dropped": data.dropped, "seed": seed, "horizon": horizon, "sigma": sigma, "warp": warp,
                "strategies": len(ts.strategies)}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    click.echo(f"solved {len(data.samples)} samples, dropped {data.dropped}, {len(ts.strategies)} strategies")


@main.command()
@click.option("-d", "data_dir", type=click.Path(file_okay=False, exists=True), required=True)
@click.option("-k", type=int, default=5, show_default=True, help="Neighbours consulted per query.")
@click.option("--merge/--no-merge", default=True, show_default=True,
              help="Pool the active sets of records that share a binary assignment.")
@click.option("-o", "out", type=click.Path(dir_okay=False), required=True)
def train(data_dir, k, merge, out) -> None:
    """Build the nearest-neighbour strategy store from a gen-data directory."""
    ts = acivp.load_training_set(data_dir)
    if merge:
        ts = acivp.merge_by_binaries(ts)
    pred = acivp.fit(ts, k)
    acivp.save_predictor(pred, out)
    click.echo(f"trained on {ts.n_records} records, {len(ts.strategies)} strategies, k={k}")


def _timing_path(out: Path) -> Path:
    return out.with_name(out.stem + ".timing.csv")


@main.command()
@click.argument("net", type=click.Path(dir_okay=False))
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["full", "acivp"]), default="full", show_default=True)
@click.option("--model", "model", type=click.Path(dir_okay=False), default=None)
@click.option("--step", type=int, default=5, show_default=True, help="Minutes per step.")
@click.option("--horizon", type=int, default=24, show_default=True, help="Lookahead steps per solve.")
@click.option("--steps", type=int, default=None, help="Rolling steps to run [default: whole scenario].")
@click.option("--wind-noise", type=float, default=0.5, show_default=True, help="Forecast noise, m/s.")
@click.option("--node-limit", type=int, default=5000, show_default=True)
@click.option("--time-limit", type=float, default=None,
              help="Seconds per branch-and-bound solve; results then depend on machine speed.")
@click.option("--rounding", is_flag=True, help="Use the rounding heuristic inside branch-and-bound.")
@click.option("--mip-gap", type=float, default=1e-4, show_default=True, help="Relative optimality gap.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "out", type=click.Path(dir_okay=False), required=True)
def run(net, scenario, mode, model, step, horizon, steps, wind_noise, node_limit, time_limit, rounding, mip_gap,
        seed, out) -> None:
    """Rolling-horizon dispatch over a realized scenario.

    Writes the per-step dispatch to OUT and wall-clock solve times to a
    ``.timing.csv`` file next to it, so OUT itself is reproducible.
    """
    if mode == "acivp" and model is None:
        raise _Fail("usage", "--model is required with --mode acivp")
    network = load_network(Path(net))
    realized = resample_scenario(read_scenario_csv(scenario), step)
    predictor = acivp.load_predictor(model) if mode == "acivp" else None
    solver = SolverConfig(node_limit=node_limit, rounding=rounding, mip_gap=mip_gap,
                          time_limit_s=math.inf if time_limit is None else time_limit)
    cfg = RollingConfig(step_minutes=step, horizon_steps=horizon, mode=mode, steps=steps, wind_noise=wind_noise,
                        seed=seed, solver=solver)
    results = run_rolling(network, realized, cfg, predictor)
    out_path = Path(out)
    out_path.write_text(report(results, "csv", timing=False))
    with open(_timing_path(out_path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mode", "solve_time_s", "fallback"])
        for r in results:
            w.writerow([r.step, r.mode, format(r.solve_time_s, ".6f"), int(r.fallback)])
    click.echo(f"{len(results)} steps written to {out}")


@main.command("report")
@click.argument("results", nargs=-1, required=True, type=click.Path(dir_okay=False, exists=True))
@click.option("--summary", is_flag=True, help="Print solve-time statistics instead of the CSV.")
def report_cmd(results, summary) -> None:
    """Print result files, or summarize their solve times (speedup when both modes are given)."""
    rows = []
    for path in results:
        p = Path(path)
        part = read_results_csv(p.read_text())
        timing = _timing_path(p)
        if timing.exists() and part and "solve_time_s" not in part[0]:
            extra = {row["step"]: row["solve_time_s"] for row in read_results_csv(timing.read_text())}
            for row in part:
                row["solve_time_s"] = extra[row["step"]]
        rows.extend(part)
    if not rows:
        raise _Fail("report", "no result rows")
    if summary:
        times, falls, objs = results_from_rows(rows)
        if not times:
            raise _Fail("report", "no solve times found (missing .timing.csv?)")
        click.echo(summarize(times, falls, objs), nl=False)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":  # pragma: no cover
    main()
