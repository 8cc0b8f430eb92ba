"""Command-line entry point.

Every flag can be set through an environment variable with the
LUMENOPS_ prefix (for example LUMENOPS_RUN_SEED=3 lumenops run case1).
Exit codes: 0 success, 1 scenario failure or infeasible plan, 2
configuration error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .agents import make_planner
from .errors import ConfigError, LumenopsError, PlanError
from .qot import REQUIRED_GSNR_DB, margin, propagate
from .rsa import OccupancyMap, ServiceRequest, plan_service
from .scenarios import (SCENARIOS, case1_services, case3_services,
                        load_services_file, run_scenario)
from .topology import default_topology, load_topology_file
from .twin import DigitalTwin

CONTEXT_SETTINGS = {
    "auto_envvar_prefix": "LUMENOPS",
    "help_option_names": ["-h", "--help"],
}


def _load_topology(path: str | None):
    if path is None:
        return default_topology()
    try:
        return load_topology_file(path)
    except OSError as exc:
        raise ConfigError(f"cannot read topology file: {exc}") from exc


def _fail_config(exc: Exception) -> None:
    click.echo(f"configuration error: {exc}", err=True)
    sys.exit(2)


@click.group(context_settings=CONTEXT_SETTINGS)
@click.option("--log-level", default="warning", show_default=True,
              type=click.Choice(["debug", "info", "warning", "error"]),
              help="Python logging level.")
def main(log_level: str) -> None:
    """Optical-network lifecycle automation scenarios and tools."""
    logging.basicConfig(level=getattr(logging, log_level.upper()))


@main.command()
@click.argument("scenario", type=click.Choice(sorted(SCENARIOS)))
@click.option("--topology", "topology_path", default=None,
              help="Topology YAML file [default: built-in six-site mesh].")
@click.option("--seed", default=0, show_default=True, type=int,
              help="Perturbation and telemetry noise seed.")
@click.option("--noise-sigma", default=0.1, show_default=True, type=float,
              help="Telemetry noise sigma in dB.")
@click.option("--planner", default="deterministic", show_default=True,
              type=click.Choice(["deterministic", "generative"]),
              help="Workflow planner to use.")
@click.option("--planner-endpoint", default=None,
              help="HTTP endpoint for the generative planner.")
@click.option("--report", "report_dir", default=None,
              help="Report output directory "
                   "[default: reports/<scenario>-seed<seed>].")
@click.option("--format", "fmt", default="text", show_default=True,
              type=click.Choice(["text", "structured"]),
              help="What to print on stdout.")
def run(scenario: str, topology_path: str | None, seed: int,
        noise_sigma: float, planner: str, planner_endpoint: str | None,
        report_dir: str | None, fmt: str) -> None:
    """Run one lifecycle scenario end to end and write its report."""
    from .reporting import render_text, structured_payload, write_report_files

    try:
        topology = _load_topology(topology_path)
        if planner == "generative":
            if not planner_endpoint:
                raise ConfigError(
                    "--planner generative needs --planner-endpoint")
            planner_obj = make_planner(planner_endpoint)
        else:
            planner_obj = make_planner(None)
        result = run_scenario(scenario, topology=topology, seed=seed,
                              noise_sigma_db=noise_sigma,
                              planner=planner_obj)
    except ConfigError as exc:
        _fail_config(exc)
    out_dir = Path(report_dir or f"reports/{scenario}-seed{seed}")
    files = write_report_files(result, out_dir)
    if fmt == "structured":
        click.echo(json.dumps(structured_payload(result), indent=2,
                              sort_keys=True))
    else:
        click.echo(render_text(result), nl=False)
    click.echo(f"report files under {out_dir} "
               f"({len(files)} artifacts)", err=True)
    sys.exit(result.exit_code)


@main.command()
@click.option("--topology", "topology_path", default=None,
              help="Topology YAML file [default: built-in six-site mesh].")
@click.option("--services", "services_path", default=None,
              help="Service roster YAML [default: built-in case-1 roster].")
def qot(topology_path: str | None, services_path: str | None) -> None:
    """Estimate QoT for a roster on the nominal network, as a table."""
    try:
        topology = _load_topology(topology_path)
        services = (load_services_file(services_path)
                    if services_path is not None else case1_services())
        report = propagate(topology, services).report
    except (ConfigError, LumenopsError) as exc:
        _fail_config(exc)
    margins = {ch.service_id: ch.margin_db
               for ch in margin(report).channels}
    click.echo("service_id|path|center_thz|rate_gbps|gsnr_db|margin_db")
    for ch in report.channels:
        click.echo(f"{ch.service_id}|{'-'.join(ch.path)}"
                   f"|{ch.center_frequency_thz:g}|{ch.rate_gbps}"
                   f"|{ch.gsnr_db:.3f}|{margins[ch.service_id]:.3f}")
    sys.exit(0)


@main.command()
@click.option("--topology", "topology_path", default=None,
              help="Topology YAML file [default: built-in six-site mesh].")
@click.option("--occupancy", "occupancy_path", default=None,
              help="Roster YAML defining occupied spectrum "
                   "[default: built-in case-3 roster].")
@click.option("--src", default="2", show_default=True)
@click.option("--dst", default="1", show_default=True)
@click.option("--rate", default=800, show_default=True, type=int,
              help=f"Line rate in Gb/s, one of "
                   f"{sorted(REQUIRED_GSNR_DB)}.")
@click.option("--min-margin", default=1.0, show_default=True, type=float,
              help="Required post-change margin in dB.")
def rsa(topology_path: str | None, occupancy_path: str | None, src: str,
        dst: str, rate: int, min_margin: float) -> None:
    """Plan route and spectrum for a new service over current occupancy."""
    try:
        topology = _load_topology(topology_path)
        services = (load_services_file(occupancy_path)
                    if occupancy_path is not None else case3_services())
        occupancy = OccupancyMap.from_services(topology, services)
        request = ServiceRequest(src=src, dst=dst, rate_gbps=rate)
    except (ConfigError, LumenopsError) as exc:
        _fail_config(exc)
    twin = DigitalTwin(topology)
    try:
        plan = plan_service(topology, occupancy, twin, request, services,
                            min_margin_db=min_margin)
    except PlanError as exc:
        click.echo(f"no plan: {exc}", err=True)
        sys.exit(1)
    if not plan.feasible:
        click.echo("no feasible candidate:")
        for cand in plan.considered:
            click.echo(f"  path {'-'.join(cand.path)} center "
                       f"{cand.center_frequency_thz:g} THz: {cand.reason}")
        sys.exit(1)
    worst = plan.rehearsal.margins.min_margin_db
    click.echo(f"feasible: center {plan.center_frequency_thz:g} THz "
               f"on path {'-'.join(plan.path)}")
    click.echo(f"  start slice : {plan.start_slice}")
    click.echo(f"  service id  : {plan.service.service_id}")
    click.echo(f"  min margin  : {worst:.3f} dB "
               f"(floor {min_margin:g} dB)")
    click.echo(f"  candidates considered: {len(plan.considered)}")
    sys.exit(0)


@main.command()
@click.argument("scenario", type=click.Choice(sorted(SCENARIOS)))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--noise-sigma", default=0.1, show_default=True, type=float)
def pool(scenario: str, seed: int, noise_sigma: float) -> None:
    """Run a scenario and dump its shared pool as JSON lines."""
    try:
        result = run_scenario(scenario, seed=seed,
                              noise_sigma_db=noise_sigma)
    except ConfigError as exc:
        _fail_config(exc)
    for line in result.pool.dump_lines():
        click.echo(line)
    sys.exit(result.exit_code)


if __name__ == "__main__":
    main()
