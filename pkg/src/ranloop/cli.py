"""Command-line entry point: headless runs, the three built-in use
cases, log replay verification, and the HTTP service."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import click

from .constraints import InfeasibleError
from .messages import MessageError
from .orchestrator import DEFAULT_MAX_ITERATIONS, Orchestrator, replay_log
from .scenario import ScenarioError, ScenarioSpec, parse_scenario
from .service import DEFAULT_PORT, serve

USECASE_FILES = {1: "usecase1.json", 2: "usecase2.json", 3: "usecase3.json"}

# use case 2 exercises the intent policies, which only engage when the
# run is driven by explicit per-user QoS goals
USECASE_QOS_MODE = {1: False, 2: True, 3: False}


def load_builtin_scenario(name: str) -> ScenarioSpec:
    text = resources.files("ranloop").joinpath("scenarios", name).read_text("utf-8")
    return parse_scenario(json.loads(text))


def _fail(message: str, code: int):
    click.echo(message, err=True)
    sys.exit(code)


@click.group()
def main():
    """Closed-loop multi-cell resource optimizer."""


@main.command("run")
@click.argument("scenario_path", type=click.Path())
@click.option("--mode", type=click.Choice(["headless", "hitl"]), default="headless")
@click.option("--max-iter", type=int, default=DEFAULT_MAX_ITERATIONS, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the scenario's base seed.")
@click.option("--qos-floor-mode", is_flag=True, help="Drive the run by per-user QoS goals.")
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default=".",
    show_default=True,
    help="Directory for the run log and CSV.",
)
def cmd_run(scenario_path, mode, max_iter, seed, qos_floor_mode, out):
    """Run a scenario file through the optimization loop."""
    path = Path(scenario_path)
    if not path.exists():
        _fail(f"scenario file not found: {path}", 1)
    try:
        spec = parse_scenario(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ScenarioError) as e:
        _fail(f"invalid scenario: {e}", 1)
    if seed is not None:
        spec = replace(spec, base_seed=seed)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    orch = Orchestrator(data_dir=out_dir)
    if mode == "hitl":
        click.echo("hitl mode is served over HTTP; starting the service.")
        click.echo("Create the run from the console or POST /runs, then decide there.")
        serve(data_dir=str(out_dir))
        return
    try:
        state = orch.run_headless(
            spec, max_iterations=max_iter, qos_floor_mode=qos_floor_mode
        )
    except InfeasibleError as e:
        _fail(f"infeasible: {e}", 2)

    csv_path = out_dir / f"{state.run_id}.csv"
    csv_path.write_text(orch.export_run(state.run_id, "csv"), encoding="utf-8")
    click.echo(f"run {state.run_id}: {state.status} ({state.terminal_reason})")
    click.echo(f"iterations: {state.iterations_done}")
    click.echo(f"log: {out_dir / 'runs' / (state.run_id + '.log')}")
    click.echo(f"csv: {csv_path}")


@main.command("usecase")
@click.argument("n", type=click.IntRange(1, 3))
@click.option("--seed", type=int, default=None, help="Override the built-in seed.")
def cmd_usecase(n, seed):
    """Run built-in use case N and print a pass/fail verdict table."""
    spec = load_builtin_scenario(USECASE_FILES[n])
    if seed is not None:
        spec = replace(spec, base_seed=seed)
    orch = Orchestrator()
    state = orch.run_headless(spec, qos_floor_mode=USECASE_QOS_MODE[n])
    first, last = state.records[0].kpis, state.records[-1].kpis

    click.echo(f"use case {n}: {spec.name} (seed {spec.base_seed})")
    click.echo(f"iterations: {state.iterations_done} ({state.terminal_reason})")
    rows = []
    if n == 1:
        gain = last.total_rate_mbps / first.total_rate_mbps - 1.0
        rows.append(
            (
                "total rate gain",
                f"{first.total_rate_mbps:.1f} -> {last.total_rate_mbps:.1f} Mbps "
                f"({gain:+.1%})",
                gain >= 0.10,
            )
        )
    elif n == 2:
        delta = last.satisfied_users - first.satisfied_users
        total = len(spec.ues)
        rows.append(
            (
                "satisfied users",
                f"{first.satisfied_users}/{total} -> {last.satisfied_users}/{total} "
                f"({delta:+d})",
                delta >= 2 or last.satisfied_users == total,
            )
        )
    else:
        prb_drop = 1.0 - last.total_active_prbs / first.total_active_prbs
        rate_delta = last.total_rate_mbps / first.total_rate_mbps - 1.0
        floors_ok = all(
            rate >= ue.min_rate_mbps
            for rate, ue in zip(last.per_user_rate_mbps, spec.ues)
        )
        rows.append(
            (
                "active PRB reduction",
                f"{first.total_active_prbs} -> {last.total_active_prbs} "
                f"({prb_drop:.1%})",
                prb_drop >= 0.20,
            )
        )
        rows.append(
            (
                "total rate change",
                f"{first.total_rate_mbps:.1f} -> {last.total_rate_mbps:.1f} Mbps "
                f"({rate_delta:+.1%})",
                rate_delta >= -0.10,
            )
        )
        rows.append(("rate floors", "all users at or above floor" if floors_ok else "floor broken", floors_ok))

    width = max(len(r[0]) for r in rows)
    all_ok = True
    for name, detail, ok in rows:
        verdict = "PASS" if ok else "FAIL"
        all_ok &= ok
        click.echo(f"  {name:<{width}}  {detail}  [{verdict}]")
    sys.exit(0 if all_ok else 1)


@main.command("replay")
@click.argument("log_path", type=click.Path())
def cmd_replay(log_path):
    """Re-execute a run log and verify the records are hash-identical."""
    path = Path(log_path)
    if not path.exists():
        _fail(f"log file not found: {path}", 1)
    try:
        identical, divergent = replay_log(path.read_text(encoding="utf-8"))
    except (MessageError, ScenarioError, json.JSONDecodeError) as e:
        _fail(f"malformed log: {e}", 1)
    if identical:
        click.echo("replay identical: every record hash matches")
        sys.exit(0)
    _fail(f"replay diverged at iteration {divergent}", 3)


@main.command("serve")
@click.option("--host", default="0.0.0.0", show_default=True)
@click.option("--port", type=int, default=None, help=f"Default {DEFAULT_PORT} or $RANLOOP_PORT.")
@click.option("--data-dir", type=click.Path(file_okay=False), default=None)
@click.option("--api-token", default=None, help="Shared token; defaults to $RANLOOP_API_TOKEN.")
def cmd_serve(host, port, data_dir, api_token):
    """Start the HTTP control service."""
    serve(host=host, port=port, data_dir=data_dir, api_token=api_token)


if __name__ == "__main__":
    main()
