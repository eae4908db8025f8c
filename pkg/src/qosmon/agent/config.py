"""Agent configuration: JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

ENV_MANIFEST_URL = "QOSMON_MANIFEST_URL"
ENV_COLLECTOR_ENDPOINT = "QOSMON_COLLECTOR_ENDPOINT"


class AgentConfigError(ValueError):
    pass


@dataclass
class AgentConfig:
    agent_id: str
    provider_id: str
    manifest_url: str
    state_dir: str  # spool, manifest cache, round-robin cursor
    collector_endpoint_override: str | None = None
    backend: str = "real"  # "real" | "simnet"
    simnet_config: str | None = None
    timeout_ms: float = 10_000.0
    echo_count: int = 10
    echo_interval_ms: float = 1000.0
    trace_max_hops: int = 30
    # credentials reference -> [user, password]
    credentials: dict[str, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.agent_id or not self.provider_id:
            raise AgentConfigError("agent_id and provider_id must be non-empty")

    @property
    def spool_path(self) -> Path:
        return Path(self.state_dir) / "spool.jsonl"

    @property
    def netprobe_log_path(self) -> Path:
        return Path(self.state_dir) / "netprobes.jsonl"

    @property
    def manifest_cache_path(self) -> Path:
        return Path(self.state_dir) / "manifest.cache.json"

    @property
    def cursor_path(self) -> Path:
        return Path(self.state_dir) / "round_robin.cursor"


def load_config(path: str | os.PathLike) -> AgentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AgentConfigError(f"cannot read config {path}: {exc}") from None
    for name in ("agent_id", "provider_id", "manifest_url", "state_dir"):
        if not doc.get(name):
            raise AgentConfigError(f"config missing required field {name!r}")
    credentials = {
        ref: (pair[0], pair[1])
        for ref, pair in doc.get("credentials", {}).items()
    }
    config = AgentConfig(
        agent_id=doc["agent_id"],
        provider_id=doc["provider_id"],
        manifest_url=os.environ.get(ENV_MANIFEST_URL, doc["manifest_url"]),
        state_dir=doc["state_dir"],
        collector_endpoint_override=os.environ.get(
            ENV_COLLECTOR_ENDPOINT, doc.get("collector_endpoint")),
        backend=doc.get("backend", "real"),
        simnet_config=doc.get("simnet_config"),
        timeout_ms=float(doc.get("timeout_ms", 10_000.0)),
        echo_count=int(doc.get("echo_count", 10)),
        echo_interval_ms=float(doc.get("echo_interval_ms", 1000.0)),
        trace_max_hops=int(doc.get("trace_max_hops", 30)),
        credentials=credentials,
    )
    state_dir = Path(config.state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(state_dir, os.W_OK):
        raise AgentConfigError(f"state_dir {state_dir} is not writable")
    return config


def load_cursor(config: AgentConfig) -> int:
    try:
        return int(config.cursor_path.read_text().strip())
    except (OSError, ValueError):
        return 0


def save_cursor(config: AgentConfig, cursor: int) -> None:
    config.cursor_path.write_text(str(cursor))
