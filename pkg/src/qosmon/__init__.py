"""Edge-based broadband QoS monitoring toolkit.

Subpackages:
- records / html_scan / throughput: shared measurement model and analysis
- net_probes / app_probes: probe implementations over a pluggable transport
- agent: consumer-premises measurement daemon and CLI
- collector: ingestion + aggregation service (FastAPI) and CLI
- simnet: deterministic in-process network emulation harness
"""

__version__ = "0.1.0"
