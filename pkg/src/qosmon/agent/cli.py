"""Agent CLI: scheduled daemon, one-shot batteries, config dump, flush."""

from __future__ import annotations

import dataclasses
import json
import logging

import click

from ..clock import Clock, SystemClock, VirtualClock
from ..records import Manifest
from .battery import (
    ManifestUnavailableError,
    fetch_manifest,
    netprobe_log_lines,
    run_battery,
)
from .config import AgentConfig, load_config, load_cursor, save_cursor
from .spool import Spool
from .uploader import HttpCollectorClient, spool_and_upload

logger = logging.getLogger(__name__)


def _build_backend(config: AgentConfig) -> tuple[object, object, Clock]:
    """(stream transport, probe transport, clock) for the configured backend."""
    if config.backend == "simnet":
        if not config.simnet_config:
            raise click.UsageError("backend=simnet requires simnet_config")
        from ..simnet.config import build_simnet

        net = build_simnet(config.simnet_config, clock=VirtualClock())
        client = net.transport(config.agent_id)
        return client, client, net.clock
    from ..transport import RealProbeTransport, SocketTransport

    return SocketTransport(), RealProbeTransport(), SystemClock()


def _collector_client(config: AgentConfig, manifest: Manifest) -> HttpCollectorClient:
    endpoint = config.collector_endpoint_override or manifest.collector_endpoint
    return HttpCollectorClient(endpoint)


def _restrict_manifest(manifest: Manifest, battery: str) -> Manifest:
    if battery == "all":
        return manifest
    return dataclasses.replace(
        manifest,
        web_targets=manifest.web_targets if battery == "web" else (),
        large_files=manifest.large_files if battery == "web" else (),
        mail=manifest.mail if battery == "mail" else None,
        nntp=manifest.nntp if battery == "nntp" else None,
        newsgroups=manifest.newsgroups if battery == "nntp" else (),
        echo_targets=manifest.echo_targets if battery == "net" else (),
    )


def _execute_battery(config: AgentConfig, manifest: Manifest, clock: Clock,
                     transport, probe_transport, battery_index: int) -> int:
    """Run one battery, spool its records, return sample count."""
    battery_id = f"{config.agent_id}-{clock.wall_ms()}-{battery_index}"
    cursor = load_cursor(config)
    result = run_battery(
        transport, probe_transport, clock, manifest,
        agent_id=config.agent_id, provider_id=config.provider_id,
        battery_id=battery_id, rr_cursor=cursor,
        timeout_ms=config.timeout_ms, echo_count=config.echo_count,
        echo_interval_ms=config.echo_interval_ms,
        trace_max_hops=config.trace_max_hops,
        credentials=config.credentials,
    )
    save_cursor(config, result.next_cursor)
    Spool(config.spool_path).append(result.samples)
    lines = netprobe_log_lines(result, config.agent_id)
    if lines:
        with open(config.netprobe_log_path, "a", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return len(result.samples)


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool):
    """QoS monitoring agent."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--cycles", default=None, type=int,
              help="Stop after N batteries (default: run forever).")
def run(config_path: str, cycles: int | None):
    """Run scheduled batteries until interrupted."""
    from .scheduler import run_schedule

    config = load_config(config_path)
    transport, probe_transport, clock = _build_backend(config)

    def cycle(k: int) -> None:
        try:
            manifest, origin = fetch_manifest(
                transport, config.manifest_url,
                cache_path=config.manifest_cache_path,
                timeout_ms=config.timeout_ms)
        except ManifestUnavailableError as exc:
            logger.error("battery %d skipped: %s", k, exc)
            return
        if origin == "cache":
            logger.warning("battery %d running on cached manifest", k)
        n = _execute_battery(config, manifest, clock, transport,
                             probe_transport, k)
        logger.info("battery %d: %d samples spooled", k, n)
        report = spool_and_upload(
            Spool(config.spool_path), _collector_client(config, manifest),
            clock=clock)
        logger.info("upload: %d new, %d duplicate, %d remaining",
                    report.uploaded, report.duplicates, report.remaining)

    # Interval comes from the manifest; fetch once up front for scheduling.
    manifest, _ = fetch_manifest(transport, config.manifest_url,
                                 cache_path=config.manifest_cache_path,
                                 timeout_ms=config.timeout_ms)
    run_schedule(clock, manifest.poll_interval_min * 60_000.0,
                 run_cycle=cycle, cycles=cycles)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--battery", type=click.Choice(["web", "mail", "nntp", "net", "all"]),
              default="all", show_default=True)
@click.option("--upload/--no-upload", default=False, show_default=True)
def once(config_path: str, battery: str, upload: bool):
    """Run a single battery manually."""
    config = load_config(config_path)
    transport, probe_transport, clock = _build_backend(config)
    manifest, origin = fetch_manifest(
        transport, config.manifest_url,
        cache_path=config.manifest_cache_path, timeout_ms=config.timeout_ms)
    restricted = _restrict_manifest(manifest, battery)
    n = _execute_battery(config, restricted, clock, transport,
                         probe_transport, 0)
    click.echo(f"battery complete: {n} samples spooled ({origin} manifest)")
    if upload:
        report = spool_and_upload(
            Spool(config.spool_path), _collector_client(config, manifest),
            clock=clock)
        click.echo(f"uploaded {report.uploaded} records "
                   f"({report.duplicates} duplicates, {report.remaining} remaining)")


@main.command("show-config")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def show_config(config_path: str):
    """Print the effective configuration (after environment overrides)."""
    config = load_config(config_path)
    doc = dataclasses.asdict(config)
    doc["credentials"] = {ref: [user, "****"]
                          for ref, (user, _pw) in config.credentials.items()}
    click.echo(json.dumps(doc, indent=2))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def flush(config_path: str):
    """Force an upload of all pending spooled records."""
    config = load_config(config_path)
    transport, _probe, clock = _build_backend(config)
    manifest, _ = fetch_manifest(
        transport, config.manifest_url,
        cache_path=config.manifest_cache_path, timeout_ms=config.timeout_ms)
    report = spool_and_upload(
        Spool(config.spool_path), _collector_client(config, manifest),
        clock=SystemClock())
    click.echo(f"uploaded {report.uploaded} records "
               f"({report.duplicates} duplicates, {report.remaining} remaining, "
               f"{report.quarantined} quarantined)")


if __name__ == "__main__":
    main()
