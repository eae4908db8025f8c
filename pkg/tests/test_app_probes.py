"""Web page timing, probe mail, and NNTP battery behavior."""

import zlib

import pytest

from conftest import broadband_shape, build_test_net
from qosmon.app_probes import (
    MIN_PROBE_MESSAGE_BYTES,
    ProbeConfigError,
    ProbeContext,
    fetch_page,
    generate_probe_message,
    mail_battery,
    nntp_battery,
    pick_round_robin,
)
from qosmon.clients import NntpClient
from qosmon.clock import VirtualClock
from qosmon.records import Affiliation, MailConfig, Outcome, ProbeKind
from qosmon.simnet.content import FileDef, GroupDef, PageDef
from qosmon.simnet.network import SimNet


def make_ctx(net, **overrides):
    kw = dict(transport=net.transport("agent"), agent_id="agent-1",
              provider_id="prov-x", battery_id="bat-1", clock=net.clock,
              timeout_ms=120_000.0, credentials={"mail-main": ("probe", "pw")})
    kw.update(overrides)
    return ProbeContext(**kw)


class TestFetchPage:
    def test_page_with_five_images_yields_seven_samples(self):
        net = SimNet(seed=2, clock=VirtualClock())
        web = net.add_http("w.sim")
        elements = {f"/i{k}.gif": 5_000 * (k + 1) for k in range(5)}
        web["/p.html"] = PageDef(elements=elements)
        for path, size in elements.items():
            web[path] = FileDef(size=size)
        net.set_route("*", "w.sim", broadband_shape())
        timing = fetch_page(make_ctx(net), "http://w.sim/p.html", "s",
                            Affiliation.UNKNOWN)
        samples = timing.all_samples()
        assert len(samples) == 7
        kinds = [s.probe_kind for s in samples]
        assert kinds[0] is ProbeKind.WEB_HTML
        assert kinds[1:6] == [ProbeKind.WEB_ELEMENT] * 5
        assert kinds[6] is ProbeKind.WEB_PAGE_AGGREGATE
        assert all(s.outcome is Outcome.OK for s in samples)

    def test_aggregate_spans_whole_page(self, sim_net):
        timing = fetch_page(make_ctx(sim_net), "http://web-a.sim/index.html",
                            "s", Affiliation.UNKNOWN)
        agg = timing.aggregate_sample
        assert agg.elapsed_ms >= timing.html_sample.elapsed_ms
        assert agg.elapsed_ms >= sum(s.elapsed_ms for s in timing.element_samples)
        assert agg.payload_bytes == (timing.html_sample.payload_bytes
                                     + sum(s.payload_bytes
                                           for s in timing.element_samples))

    def test_repeated_reference_fetched_once(self):
        net = SimNet(seed=2, clock=VirtualClock())
        web = net.add_http("w.sim")
        web["/p.html"] = PageDef(elements={"/logo.gif": 8_000},
                                 repeat_refs=("/logo.gif",))
        web["/logo.gif"] = FileDef(size=8_000)
        net.set_route("*", "w.sim", broadband_shape())
        timing = fetch_page(make_ctx(net), "http://w.sim/p.html", "s",
                            Affiliation.UNKNOWN)
        # Markup references the logo three times; one fetch.
        assert len(timing.element_samples) == 1

    def test_truncated_element_marks_aggregate_partial(self):
        net = SimNet(seed=2, clock=VirtualClock())
        web = net.add_http("w.sim")
        web["/p.html"] = PageDef(elements={"/ok.gif": 4_000, "/cut.gif": 50_000})
        web["/ok.gif"] = FileDef(size=4_000)
        web["/cut.gif"] = FileDef(size=50_000, truncate_at=10_000)
        net.set_route("*", "w.sim", broadband_shape())
        timing = fetch_page(make_ctx(net), "http://w.sim/p.html", "s",
                            Affiliation.UNKNOWN)
        by_target = {s.target.rsplit("/", 1)[-1]: s for s in timing.element_samples}
        assert by_target["ok.gif"].outcome is Outcome.OK
        assert by_target["cut.gif"].outcome is Outcome.TRUNCATED
        assert timing.aggregate_sample.partial is True
        assert timing.aggregate_sample.outcome is Outcome.OK

    def test_html_failure_stops_page(self):
        net = SimNet(seed=2, clock=VirtualClock())
        net.add_http("w.sim")  # no resources: 404
        net.set_route("*", "w.sim", broadband_shape())
        timing = fetch_page(make_ctx(net), "http://w.sim/p.html", "s",
                            Affiliation.UNKNOWN)
        assert timing.html_sample.outcome is Outcome.PROTOCOL_ERROR
        assert timing.element_samples == []
        assert timing.aggregate_sample is None

    def test_binary_target_has_no_elements(self, sim_net):
        timing = fetch_page(make_ctx(sim_net), "http://web-a.sim/big1.bin",
                            "large-file-pool", Affiliation.UNKNOWN)
        assert timing.element_samples == []
        assert timing.aggregate_sample.payload_bytes == 400_000


class TestProbeMessage:
    def test_floor_enforced(self):
        with pytest.raises(ProbeConfigError):
            generate_probe_message(MIN_PROBE_MESSAGE_BYTES - 1, "b")
        msg = generate_probe_message(MIN_PROBE_MESSAGE_BYTES, "b")
        assert msg.total_size_bytes >= MIN_PROBE_MESSAGE_BYTES

    def test_subject_identifies_battery(self):
        msg = generate_probe_message(300_000, "bat-42")
        assert "bat-42" in msg.subject
        assert msg.subject.encode() in msg.wire_bytes

    def test_body_is_incompressible(self):
        msg = generate_probe_message(300_000, "b")
        ratio = len(zlib.compress(msg.wire_bytes, 9)) / len(msg.wire_bytes)
        assert ratio > 0.95

    def test_body_is_mail_safe(self):
        msg = generate_probe_message(300_000, "b")
        _, _, body = msg.wire_bytes.partition(b"\r\n\r\n")
        for banned in (b"\x00", b"\r", b"\n", b"."):
            assert banned not in body

    def test_deterministic_per_battery(self):
        assert generate_probe_message(300_000, "b1").wire_bytes == \
            generate_probe_message(300_000, "b1").wire_bytes
        assert generate_probe_message(300_000, "b1").wire_bytes != \
            generate_probe_message(300_000, "b2").wire_bytes


MAIL = MailConfig(smtp="mail.sim:25", pop="mail.sim:110",
                  account="mail-main", probe_size_bytes=300_000)


class TestMailBattery:
    def test_loopback_times_both_directions(self, sim_net):
        samples = mail_battery(make_ctx(sim_net), MAIL)
        smtp, pop = samples
        assert smtp.probe_kind is ProbeKind.MAIL_SMTP
        assert pop.probe_kind is ProbeKind.MAIL_POP
        assert smtp.outcome is pop.outcome is Outcome.OK
        # Both directions move the same message over the same shaped line.
        assert pop.payload_bytes == smtp.payload_bytes >= 300_000
        ceiling = 601_600.0
        for s in (smtp, pop):
            assert 0.6 * ceiling < s.effective_bps <= ceiling

    def test_smtp_failure_skips_pop_wait(self, sim_net):
        sim_net.set_down("mail.sim")
        t0 = sim_net.clock.monotonic_ms()
        samples = mail_battery(make_ctx(sim_net, timeout_ms=2000), MAIL)
        elapsed = sim_net.clock.monotonic_ms() - t0
        assert [s.outcome for s in samples] == [Outcome.CONNECT_TIMEOUT,
                                                Outcome.READ_TIMEOUT]
        # No 6 x 10 s retrieval polling when nothing was uploaded.
        assert elapsed < 10_000

    def test_wrong_credentials_fail_pop_only(self, sim_net):
        ctx = make_ctx(sim_net, credentials={"mail-main": ("probe", "bad")})
        samples = mail_battery(ctx, MAIL)
        assert samples[0].outcome is Outcome.OK
        assert samples[1].outcome is Outcome.PROTOCOL_ERROR

    def test_probe_message_deleted_after_retrieval(self, sim_net):
        from qosmon.clients import PopClient
        mail_battery(make_ctx(sim_net), MAIL)
        pop = PopClient(sim_net.transport("x").open_stream("mail.sim", 110, 5000))
        pop.login("probe", "pw")
        assert pop.list_messages() == []


class TestNntpBattery:
    def test_sample_counts(self, sim_net):
        samples = nntp_battery(make_ctx(sim_net), "news.sim:119",
                               ["alt.test"], n_largest=2)
        kinds = [s.probe_kind for s in samples]
        assert kinds == [ProbeKind.NNTP_LIST, ProbeKind.NNTP_HEADERS,
                         ProbeKind.NNTP_ARTICLE, ProbeKind.NNTP_ARTICLE]
        assert all(s.outcome is Outcome.OK for s in samples)
        # The two largest by advertised size: 60 kB then 40 kB.
        articles = [s for s in samples if s.probe_kind is ProbeKind.NNTP_ARTICLE]
        assert [s.payload_bytes for s in articles] == [60_000, 40_000]
        assert [s.target for s in articles] == ["news.sim:119/alt.test/4",
                                                "news.sim:119/alt.test/2"]

    def test_n_beyond_available_truncates(self, sim_net):
        samples = nntp_battery(make_ctx(sim_net), "news.sim:119",
                               ["alt.test"], n_largest=50)
        articles = [s for s in samples if s.probe_kind is ProbeKind.NNTP_ARTICLE]
        assert len(articles) == 4

    def test_missing_group_recorded_and_skipped(self, sim_net):
        samples = nntp_battery(make_ctx(sim_net), "news.sim:119",
                               ["no.such.group", "alt.test"], n_largest=1)
        failed = [s for s in samples if s.outcome is not Outcome.OK]
        assert len(failed) == 1
        assert failed[0].probe_kind is ProbeKind.NNTP_HEADERS
        assert "no.such.group" in failed[0].target
        # The second group still ran.
        assert any(s.probe_kind is ProbeKind.NNTP_ARTICLE for s in samples)

    def test_header_window_capped_at_500(self):
        net = SimNet(seed=2, clock=VirtualClock())
        net.add_nntp("big.sim", {"alt.many": GroupDef(
            article_sizes=tuple(100 + i for i in range(600)))})
        net.set_route("*", "big.sim", broadband_shape(raw_rate_bps=10_000_000,
                                                      ramp=None))
        ctx = make_ctx(net)
        samples = nntp_battery(ctx, "big.sim:119", ["alt.many"], n_largest=1)
        headers = next(s for s in samples
                       if s.probe_kind is ProbeKind.NNTP_HEADERS)
        # Independent check: byte size of exactly the newest 500 overview rows.
        nntp = NntpClient(net.transport("z").open_stream("big.sim", 119, 5000))
        nntp.select_group("alt.many")
        entries, expected_bytes = nntp.overview(101, 600)
        assert len(entries) == 500
        assert headers.payload_bytes == expected_bytes

    def test_empty_group_list_rejected(self, sim_net):
        with pytest.raises(ProbeConfigError):
            nntp_battery(make_ctx(sim_net), "news.sim:119", [], n_largest=1)

    def test_capped_route_plateaus_articles(self):
        net = SimNet(seed=2, clock=VirtualClock())
        net.add_nntp("news.sim", {"alt.big": GroupDef(
            article_sizes=(150_000, 250_000, 400_000))})
        net.set_route("*", "news.sim", broadband_shape(cap_bps=128_000))
        samples = nntp_battery(make_ctx(net), "news.sim:119", ["alt.big"],
                               n_largest=3)
        articles = [s for s in samples if s.probe_kind is ProbeKind.NNTP_ARTICLE]
        assert len(articles) == 3
        for s in articles:
            assert s.effective_bps <= 128_000.0
            assert s.effective_bps > 0.9 * 128_000.0


class TestRoundRobin:
    def test_even_rotation(self):
        pool = ["u1", "u2", "u3"]
        cursor = 0
        picks = []
        for _ in range(300):
            url, cursor = pick_round_robin(pool, cursor)
            picks.append(url)
        assert picks[:6] == ["u1", "u2", "u3", "u1", "u2", "u3"]
        assert all(picks.count(u) == 100 for u in pool)

    def test_empty_pool_rejected(self):
        with pytest.raises(ProbeConfigError):
            pick_round_robin([], 0)
