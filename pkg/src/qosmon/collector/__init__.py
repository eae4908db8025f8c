"""Central collector: record ingestion, aggregation, bias detection."""

from .store import RecordStore, IngestReceipt
from .analysis import AggregateSummary, aggregate_summary, export_scatter, size_bucket
from .bias import BiasParams, detect_bias

__all__ = [
    "RecordStore",
    "IngestReceipt",
    "AggregateSummary",
    "aggregate_summary",
    "export_scatter",
    "size_bucket",
    "BiasParams",
    "detect_bias",
]
