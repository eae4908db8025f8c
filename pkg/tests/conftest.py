"""Shared test fixtures and builders."""

from __future__ import annotations

import pytest

from qosmon.clock import VirtualClock
from qosmon.records import (
    Affiliation,
    MailConfig,
    Manifest,
    Outcome,
    ProbeKind,
    TransferSample,
    WebTarget,
)
from qosmon.simnet.content import FileDef, GroupDef, PageDef
from qosmon.simnet.network import SimNet
from qosmon.simnet.shaping import Ramp, RouteShape


def make_sample(**overrides) -> TransferSample:
    """A completed sample with sensible defaults, overridable per test."""
    base = dict(
        agent_id="agent-1",
        provider_id="prov-x",
        battery_id="bat-1",
        timestamp=1_700_000_000_000,
        probe_kind=ProbeKind.WEB_ELEMENT,
        target="http://example.test/img.gif",
        source_label="site-a",
        affiliation=Affiliation.UNAFFILIATED,
        payload_bytes=25_000,
        outcome=Outcome.OK,
        elapsed_ms=500.0,
        effective_bps=400_000.0,
    )
    base.update(overrides)
    return TransferSample(**base)


DEFAULT_RAMP = Ramp(initial_rate_bps=64_000, doubling_period_ms=250.0)


def broadband_shape(**overrides) -> RouteShape:
    """A 640 kbps consumer-line shape with slow-start ramp."""
    kw = dict(raw_rate_bps=640_000, one_way_delay_ms=5.0, ramp=DEFAULT_RAMP)
    kw.update(overrides)
    return RouteShape(**kw)


def build_test_net(seed: int = 3) -> SimNet:
    """A simnet with one of each service, shaped like a broadband line."""
    net = SimNet(seed=seed, clock=VirtualClock())
    web = net.add_http("web-a.sim")
    web["/index.html"] = PageDef(elements={"/a.gif": 20_000, "/b.gif": 30_000})
    web["/a.gif"] = FileDef(size=20_000)
    web["/b.gif"] = FileDef(size=30_000)
    web["/big1.bin"] = FileDef(size=400_000)
    web["/big2.bin"] = FileDef(size=600_000)
    net.add_mail("mail.sim", accounts={"probe": "pw"})
    net.add_nntp("news.sim", {
        "alt.test": GroupDef(article_sizes=(5_000, 40_000, 12_000, 60_000)),
    })
    net.add_echo_host("gw.sim", hops=[("10.0.0.1", 5.0), ("10.0.0.2", 10.0),
                                      ("gw.sim", 15.0)])
    for host in ("web-a.sim", "mail.sim", "news.sim", "gw.sim"):
        net.set_route("*", host, broadband_shape())
    return net


def full_manifest(**overrides) -> Manifest:
    base = dict(
        version=1,
        poll_interval_min=60.0,
        web_targets=(WebTarget("http://web-a.sim/index.html", "site-a",
                               Affiliation.UNAFFILIATED),),
        large_files=("http://web-a.sim/big1.bin", "http://web-a.sim/big2.bin"),
        newsgroups=("alt.test",),
        n_largest=2,
        mail=MailConfig(smtp="mail.sim:25", pop="mail.sim:110",
                        account="mail-main", probe_size_bytes=300_000),
        nntp="news.sim:119",
        echo_targets=("gw.sim",),
        collector_endpoint="http://collector.sim:8800",
    )
    base.update(overrides)
    return Manifest(**base)


@pytest.fixture
def sim_net() -> SimNet:
    return build_test_net()
