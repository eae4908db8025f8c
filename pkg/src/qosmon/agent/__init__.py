"""Consumer-premises measurement agent."""

from .config import AgentConfig, load_config
from .battery import BatteryResult, run_battery
from .spool import Spool
from .uploader import HttpCollectorClient, UploadReport, spool_and_upload

__all__ = [
    "AgentConfig",
    "load_config",
    "BatteryResult",
    "run_battery",
    "Spool",
    "HttpCollectorClient",
    "UploadReport",
    "spool_and_upload",
]
