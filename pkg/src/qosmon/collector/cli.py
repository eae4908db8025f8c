"""Collector CLI: serve the HTTP service, or run analyses over a store."""

from __future__ import annotations

import json
import sys

import click

from .analysis import aggregate_summary, export_scatter, scatter_csv
from .bias import BiasParams, detect_bias
from .store import RecordStore


@click.group()
def main():
    """QoS monitoring collector."""


@main.command()
@click.option("--port", default=8800, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", "store_path", required=True, type=click.Path())
def serve(port: int, host: str, store_path: str):
    """Run the collector HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(RecordStore(store_path))
    uvicorn.run(app, host=host, port=port, log_level="info")


def _parse_window(window: str | None) -> tuple[int, int] | None:
    if window is None:
        return None
    start, _, end = window.partition(":")
    return (int(start or 0), int(end or 2**62))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--window", default=None,
              help="Timestamp window 'START:END' in UTC milliseconds.")
@click.option("--provider", default=None)
@click.option("--bias", "bias_sources", default=None,
              help="Run the bias detector: 'SOURCE_A,SOURCE_B' (needs --provider).")
@click.option("--rel-threshold", default=0.05, show_default=True)
@click.option("--min-samples", default=30, show_default=True)
def analyze(store_path: str, window: str | None, provider: str | None,
            bias_sources: str | None, rel_threshold: float, min_samples: int):
    """Aggregate summaries, optionally plus a bias report, as JSON."""
    store = RecordStore(store_path)
    records = store.snapshot()
    if provider is not None:
        records = [r for r in records if r.provider_id == provider]
    win = _parse_window(window)
    rows = aggregate_summary(records, window=win)
    out = {
        "summary": [
            {
                "provider_id": r.provider_id,
                "source_label": r.source_label,
                "probe_kind": r.probe_kind,
                "size_bucket": r.size_bucket,
                "n": r.n,
                "median_bps": None if r.median_bps != r.median_bps else r.median_bps,
                "p10_bps": None if r.p10_bps != r.p10_bps else r.p10_bps,
                "p90_bps": None if r.p90_bps != r.p90_bps else r.p90_bps,
                "failure_rate": r.failure_rate,
            }
            for r in rows
        ]
    }
    if bias_sources is not None:
        if provider is None:
            raise click.UsageError("--bias requires --provider")
        source_a, _, source_b = bias_sources.partition(",")
        report = detect_bias(
            store.snapshot(), provider, source_a.strip(), source_b.strip(),
            window=win,
            params=BiasParams(rel_threshold=rel_threshold,
                              min_samples=min_samples),
        )
        out["bias"] = {
            "source_a": report.source_a,
            "source_b": report.source_b,
            "median_diff_rel": report.median_diff_rel,
            "ci_low": report.ci_low,
            "ci_high": report.ci_high,
            "n_a": report.n_a,
            "n_b": report.n_b,
            "flagged": report.flagged,
            "status": report.status,
        }
    click.echo(json.dumps(out, indent=2))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True)
@click.option("--provider", default=None)
@click.option("--source", default=None)
@click.option("--probe-kind", default=None)
@click.option("--window", default=None)
def export(store_path: str, fmt: str, provider: str | None, source: str | None,
           probe_kind: str | None, window: str | None):
    """Export scatter rows (size vs effective rate) for plotting."""
    store = RecordStore(store_path)
    rows = export_scatter(
        store.snapshot(), provider_id=provider, source_label=source,
        probe_kinds={probe_kind} if probe_kind else None,
        window=_parse_window(window),
    )
    if fmt == "csv":
        sys.stdout.write(scatter_csv(rows))
    else:
        click.echo(json.dumps([
            {"payload_bytes": r.payload_bytes, "effective_bps": r.effective_bps,
             "source_label": r.source_label, "probe_kind": r.probe_kind}
            for r in rows
        ], indent=2))


if __name__ == "__main__":
    main()
