"""Deterministic in-process network emulation harness.

Shaped HTTP/POP3/SMTP/NNTP servers plus an echo/trace responder, with
per-route bandwidth, latency, loss and a slow-start-like ramp.  Used as
the oracle for end-to-end tests; also runnable over loopback sockets.
"""

from .shaping import Ramp, RouteShape, ramp_rate, transfer_time_ms
from .network import SimNet, SimNetConfigError
from .content import PageDef, FileDef, RedirectDef, GroupDef

__all__ = [
    "Ramp",
    "RouteShape",
    "ramp_rate",
    "transfer_time_ms",
    "SimNet",
    "SimNetConfigError",
    "PageDef",
    "FileDef",
    "RedirectDef",
    "GroupDef",
]
