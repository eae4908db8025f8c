"""Simnet config file: services, routes, shapes, catalogs, seed."""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..clock import Clock
from .content import FileDef, GroupDef, PageDef, RedirectDef
from .network import SimNet, SimNetConfigError
from .shaping import Ramp, RouteShape, ShapeError


def parse_shape(doc: dict) -> RouteShape:
    try:
        ramp = None
        if doc.get("ramp"):
            ramp = Ramp(
                initial_rate_bps=float(doc["ramp"]["initial_rate_bps"]),
                doubling_period_ms=float(doc["ramp"]["doubling_period_ms"]),
            )
        return RouteShape(
            raw_rate_bps=float(doc["raw_rate_bps"]),
            one_way_delay_ms=float(doc.get("one_way_delay_ms", 0.0)),
            loss_prob=float(doc.get("loss_prob", 0.0)),
            overhead_frac=float(doc.get("overhead_frac", 0.06)),
            ramp=ramp,
            cap_bps=float(doc["cap_bps"]) if doc.get("cap_bps") else None,
            jitter_frac=float(doc.get("jitter_frac", 0.0)),
        )
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise SimNetConfigError(f"bad route shape: {exc}") from None


def _build_http(net: SimNet, doc: dict) -> None:
    resources = net.add_http(doc["host"], port=int(doc.get("port", 80)))
    for path, page in doc.get("pages", {}).items():
        resources[path] = PageDef(
            elements={p: int(s) for p, s in page.get("elements", {}).items()},
            repeat_refs=tuple(page.get("repeat_refs", [])),
            pad_bytes=int(page.get("pad_bytes", 0)),
            html=page.get("html"),
        )
        for elem_path, size in page.get("elements", {}).items():
            resources.setdefault(elem_path, FileDef(size=int(size)))
    for path, size in doc.get("files", {}).items():
        resources[path] = FileDef(size=int(size))
    for path, location in doc.get("redirects", {}).items():
        resources[path] = RedirectDef(location=location)
    for path, manifest in doc.get("manifests", {}).items():
        resources[path] = json.dumps(manifest).encode()


def build_simnet(config: dict | str | os.PathLike,
                 clock: Clock | None = None) -> SimNet:
    """Build a SimNet from a config document or config file path."""
    if not isinstance(config, dict):
        try:
            config = json.loads(Path(config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SimNetConfigError(f"cannot read simnet config: {exc}") from None

    net = SimNet(seed=int(config.get("seed", 0)), clock=clock)
    if "default_shape" in config:
        net.default_shape = parse_shape(config["default_shape"])

    for doc in config.get("services", []):
        kind = doc.get("kind")
        if kind == "http":
            _build_http(net, doc)
        elif kind == "mail":
            net.add_mail(doc["host"], accounts=doc.get("accounts", {}))
        elif kind == "nntp":
            groups = {}
            for name, g in doc.get("groups", {}).items():
                if "sizes" in g:
                    groups[name] = GroupDef(article_sizes=tuple(int(s) for s in g["sizes"]))
                else:
                    groups[name] = GroupDef.sized_range(
                        count=int(g["count"]), min_size=int(g["min_size"]),
                        max_size=int(g["max_size"]), seed=net.seed, name=name)
            net.add_nntp(doc["host"], groups,
                         filler_count=int(doc.get("filler_count", 0)))
        elif kind == "echo":
            hops = [(h[0], float(h[1])) for h in doc.get("hops", [])]
            net.add_echo_host(doc["host"], hops=hops or None)
        else:
            raise SimNetConfigError(f"unknown service kind {kind!r}")

    for route in config.get("routes", []):
        net.set_route(route.get("client", "*"), route["host"],
                      parse_shape(route["shape"]))
    return net
