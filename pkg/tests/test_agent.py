"""Agent-side pipeline: manifest handling, batteries, spool, upload, schedule."""

import json

import pytest

from conftest import build_test_net, full_manifest, make_sample
from qosmon.agent.battery import (
    LARGE_FILE_SOURCE_LABEL,
    ManifestUnavailableError,
    fetch_manifest,
    run_battery,
)
from qosmon.agent.scheduler import run_schedule
from qosmon.agent.spool import Spool
from qosmon.agent.uploader import BatchReceipt, UploadError, spool_and_upload
from qosmon.clock import VirtualClock
from qosmon.records import Outcome, ProbeKind, manifest_to_json, serialize_record
from qosmon.simnet.content import FileDef


CREDS = {"mail-main": ("probe", "pw")}


def battery_kwargs(k=0):
    return dict(agent_id="agent-1", provider_id="prov-x",
                battery_id=f"bat-{k}", timeout_ms=120_000.0,
                echo_count=4, echo_interval_ms=100.0, trace_max_hops=10,
                credentials=CREDS)


class TestFetchManifest:
    def _serve(self, net, doc_text):
        web = net.add_http("cfg.sim")
        web["/manifest.json"] = doc_text.encode()
        net.set_route("*", "cfg.sim", net.default_shape)

    def test_fresh_fetch_caches(self, sim_net, tmp_path):
        self._serve(sim_net, manifest_to_json(full_manifest()))
        cache = tmp_path / "m.json"
        manifest, origin = fetch_manifest(sim_net.transport("c"),
                                          "http://cfg.sim/manifest.json",
                                          cache_path=cache)
        assert origin == "fresh"
        assert manifest == full_manifest()
        assert cache.exists()

    def test_cache_fallback_when_unreachable(self, sim_net, tmp_path):
        cache = tmp_path / "m.json"
        cache.write_text(manifest_to_json(full_manifest()))
        manifest, origin = fetch_manifest(sim_net.transport("c"),
                                          "http://gone.sim/manifest.json",
                                          cache_path=cache)
        assert origin == "cache"
        assert manifest == full_manifest()

    def test_invalid_fetched_manifest_keeps_cache(self, sim_net, tmp_path):
        self._serve(sim_net, '{"version": "not valid"}')
        cache = tmp_path / "m.json"
        cache.write_text(manifest_to_json(full_manifest()))
        manifest, origin = fetch_manifest(sim_net.transport("c"),
                                          "http://cfg.sim/manifest.json",
                                          cache_path=cache)
        assert origin == "cache"
        # The bad document must not clobber the good cache.
        assert json.loads(cache.read_text())["version"] == 1

    def test_no_manifest_anywhere(self, sim_net, tmp_path):
        with pytest.raises(ManifestUnavailableError):
            fetch_manifest(sim_net.transport("c"),
                           "http://gone.sim/manifest.json",
                           cache_path=tmp_path / "absent.json")


class TestRunBattery:
    def test_full_battery_composition(self, sim_net):
        result = run_battery(sim_net.transport("a"), sim_net.transport("a"),
                             sim_net.clock, full_manifest(), rr_cursor=0,
                             **battery_kwargs())
        kinds = [s.probe_kind for s in result.samples]
        # 1 page (html + 2 elements + aggregate), large file (html +
        # aggregate), mail pair, nntp: list + headers + 2 articles.
        assert kinds.count(ProbeKind.WEB_HTML) == 2
        assert kinds.count(ProbeKind.WEB_ELEMENT) == 2
        assert kinds.count(ProbeKind.WEB_PAGE_AGGREGATE) == 2
        assert kinds.count(ProbeKind.MAIL_SMTP) == 1
        assert kinds.count(ProbeKind.MAIL_POP) == 1
        assert kinds.count(ProbeKind.NNTP_LIST) == 1
        assert kinds.count(ProbeKind.NNTP_HEADERS) == 1
        assert kinds.count(ProbeKind.NNTP_ARTICLE) == 2
        assert all(s.outcome is Outcome.OK for s in result.samples)
        assert all(s.battery_id == "bat-0" for s in result.samples)
        assert len(result.rtt_series) == 1 and len(result.traces) == 1
        assert result.next_cursor == 1

    def test_round_robin_advances_across_batteries(self, sim_net):
        cursor = 0
        picked = []
        for k in range(4):
            result = run_battery(sim_net.transport("a"), sim_net.transport("a"),
                                 sim_net.clock, full_manifest(),
                                 rr_cursor=cursor, **battery_kwargs(k))
            cursor = result.next_cursor
            picked.extend(s.target for s in result.samples
                          if s.source_label == LARGE_FILE_SOURCE_LABEL
                          and s.probe_kind is ProbeKind.WEB_HTML)
        assert picked == ["http://web-a.sim/big1.bin", "http://web-a.sim/big2.bin",
                          "http://web-a.sim/big1.bin", "http://web-a.sim/big2.bin"]

    def test_one_endpoint_down_is_isolated(self, sim_net):
        sim_net.set_down("news.sim")
        result = run_battery(sim_net.transport("a"), sim_net.transport("a"),
                             sim_net.clock, full_manifest(), rr_cursor=0,
                             **battery_kwargs())
        nntp = [s for s in result.samples if s.probe_kind.value.startswith("nntp")]
        rest = [s for s in result.samples if not s.probe_kind.value.startswith("nntp")]
        assert nntp and all(s.outcome is not Outcome.OK for s in nntp)
        assert rest and all(s.outcome is Outcome.OK for s in rest)

    def test_optional_probes_skipped_when_unconfigured(self, sim_net):
        manifest = full_manifest(mail=None, nntp=None, newsgroups=(),
                                 large_files=(), echo_targets=())
        result = run_battery(sim_net.transport("a"), sim_net.transport("a"),
                             sim_net.clock, manifest, rr_cursor=0,
                             **battery_kwargs())
        assert {s.probe_kind for s in result.samples} == {
            ProbeKind.WEB_HTML, ProbeKind.WEB_ELEMENT,
            ProbeKind.WEB_PAGE_AGGREGATE}
        assert result.rtt_series == [] and result.traces == []


class TestSpool:
    def test_append_pending_ack_cycle(self, tmp_path):
        spool = Spool(tmp_path / "s.jsonl")
        spool.append([make_sample(timestamp=i) for i in range(5)])
        assert len(spool.pending()) == 5
        spool.mark_acked(3)
        assert len(spool.pending()) == 2
        spool.mark_acked(2)
        assert spool.pending() == []

    def test_survives_reopen(self, tmp_path):
        path = tmp_path / "s.jsonl"
        Spool(path).append([make_sample(timestamp=i) for i in range(4)])
        Spool(path).mark_acked(1)
        assert len(Spool(path).pending()) == 3

    def test_corrupt_line_quarantined(self, tmp_path):
        path = tmp_path / "s.jsonl"
        spool = Spool(path)
        spool.append([make_sample(timestamp=1)])
        with open(path, "a") as fh:
            fh.write("{corrupt\n")
        spool.append([make_sample(timestamp=2)])
        pending = spool.pending()
        assert len(pending) == 2
        assert spool.quarantined == 1
        # Acking both good lines steps over the corrupt one.
        spool.mark_acked(2)
        assert spool.pending() == []


class FakeCollector:
    """In-memory collector with scriptable outages."""

    def __init__(self, fail_times=0):
        self.seen: set = set()
        self.batches: list[list[str]] = []
        self.fail_times = fail_times

    def ingest(self, lines):
        if self.fail_times > 0:
            self.fail_times -= 1
            raise UploadError("synthetic outage")
        self.batches.append(list(lines))
        accepted = duplicates = 0
        from qosmon.records import parse_record
        for line in lines:
            key = parse_record(line).dedup_key
            if key in self.seen:
                duplicates += 1
            else:
                self.seen.add(key)
                accepted += 1
        return BatchReceipt(accepted=accepted, duplicates=duplicates, rejected=0)


class TestUploader:
    def test_clean_upload(self, tmp_path):
        spool = Spool(tmp_path / "s.jsonl")
        spool.append([make_sample(timestamp=i) for i in range(7)])
        report = spool_and_upload(spool, FakeCollector(), clock=VirtualClock())
        assert report.uploaded == 7 and report.remaining == 0
        assert spool.pending() == []

    def test_retry_after_outage(self, tmp_path):
        spool = Spool(tmp_path / "s.jsonl")
        spool.append([make_sample(timestamp=i) for i in range(3)])
        collector = FakeCollector(fail_times=2)
        report = spool_and_upload(spool, collector, clock=VirtualClock())
        assert report.uploaded == 3 and report.remaining == 0

    def test_persistent_outage_keeps_spool(self, tmp_path):
        spool = Spool(tmp_path / "s.jsonl")
        spool.append([make_sample(timestamp=i) for i in range(3)])
        report = spool_and_upload(spool, FakeCollector(fail_times=99),
                                  clock=VirtualClock(), max_attempts=2)
        assert report.uploaded == 0 and report.remaining == 3
        assert len(spool.pending()) == 3

    def test_crash_replay_is_exactly_once(self, tmp_path):
        # Ack lost after a successful upload: the whole batch is re-sent,
        # the collector reports duplicates, and the spool settles.
        spool = Spool(tmp_path / "s.jsonl")
        spool.append([make_sample(timestamp=i) for i in range(4)])
        collector = FakeCollector()
        collector.ingest(spool.pending())  # upload happened, ack was lost
        report = spool_and_upload(spool, collector, clock=VirtualClock())
        assert report.uploaded == 0 and report.duplicates == 4
        assert report.remaining == 0
        assert len(collector.seen) == 4

    def test_batching(self, tmp_path):
        spool = Spool(tmp_path / "s.jsonl")
        spool.append([make_sample(timestamp=i) for i in range(25)])
        collector = FakeCollector()
        spool_and_upload(spool, collector, clock=VirtualClock(), batch_size=10)
        assert [len(b) for b in collector.batches] == [10, 10, 5]


class TestScheduler:
    def test_fixed_interval_no_drift(self):
        clock = VirtualClock()
        starts = []
        # Each battery takes 400 ms of the 1000 ms interval.
        run_schedule(clock, 1000.0,
                     run_cycle=lambda k: clock.sleep(400.0),
                     cycles=100,
                     on_start=lambda k, t: starts.append(t))
        base = starts[0]
        for k, t in enumerate(starts):
            assert t - base == pytest.approx(k * 1000.0, abs=1e-6)

    def test_overlong_cycle_does_not_accumulate(self):
        clock = VirtualClock()
        starts = []

        def cycle(k):
            clock.sleep(2500.0 if k == 3 else 100.0)

        run_schedule(clock, 1000.0, run_cycle=cycle, cycles=10,
                     on_start=lambda k, t: starts.append(t))
        # Cycles 4 and 5 start late (the slot was missed), but cycle 6
        # onward is back on the original grid.
        base = starts[0]
        assert starts[4] - base > 4000.0
        for k in range(6, 10):
            assert starts[k] - base == pytest.approx(k * 1000.0, abs=1e-6)

    def test_cycle_failure_does_not_stop_schedule(self):
        clock = VirtualClock()
        ran = []

        def cycle(k):
            ran.append(k)
            if k == 1:
                raise RuntimeError("probe exploded")

        run_schedule(clock, 100.0, run_cycle=cycle, cycles=4)
        assert ran == [0, 1, 2, 3]

    def test_upload_runs_between_batteries(self):
        clock = VirtualClock()
        events = []
        run_schedule(clock, 100.0,
                     run_cycle=lambda k: events.append(("battery", k)),
                     upload=lambda: events.append(("upload", None)),
                     cycles=3)
        assert events == [("battery", 0), ("upload", None),
                          ("battery", 1), ("upload", None),
                          ("battery", 2), ("upload", None)]
