"""Record arithmetic, wire round-trips, and manifest validation."""

import json
import math

import pytest
from hypothesis import given, strategies as st

from qosmon.records import (
    Affiliation,
    InvalidMeasurementError,
    ManifestError,
    Outcome,
    ProbeKind,
    RecordParseError,
    TransferSample,
    compute_effective_rate,
    manifest_to_json,
    parse_record,
    serialize_record,
    validate_manifest,
)
from conftest import make_sample


class TestEffectiveRate:
    def test_quarter_megabyte_in_four_seconds(self):
        # 250,000 bytes in 4 s is exactly half a megabit per second.
        assert compute_effective_rate(250_000, 4000.0) == 500_000.0

    def test_zero_payload_is_zero_rate(self):
        assert compute_effective_rate(0, 1000.0) == 0.0

    @pytest.mark.parametrize("elapsed", [0.0, -1.0, -0.001])
    def test_nonpositive_elapsed_rejected(self, elapsed):
        with pytest.raises(InvalidMeasurementError):
            compute_effective_rate(1000, elapsed)

    def test_negative_payload_rejected(self):
        with pytest.raises(InvalidMeasurementError):
            compute_effective_rate(-1, 1000.0)

    @given(payload=st.integers(1, 10**8),
           elapsed=st.floats(0.01, 10**7))
    def test_rate_scales_linearly_with_payload(self, payload, elapsed):
        one = compute_effective_rate(payload, elapsed)
        double = compute_effective_rate(2 * payload, elapsed)
        assert math.isclose(double, 2 * one, rel_tol=1e-9)


class TestTransferSample:
    def test_completed_derives_rate(self):
        s = TransferSample.completed(
            payload_bytes=250_000, elapsed_ms=4000.0,
            agent_id="a", provider_id="p", battery_id="b",
            timestamp=0, probe_kind=ProbeKind.WEB_HTML, target="t",
            source_label="s", affiliation=Affiliation.UNKNOWN)
        assert s.effective_bps == 500_000.0
        assert s.outcome is Outcome.OK

    def test_ok_requires_positive_elapsed(self):
        with pytest.raises(InvalidMeasurementError):
            make_sample(elapsed_ms=None, effective_bps=None)
        with pytest.raises(InvalidMeasurementError):
            make_sample(elapsed_ms=0.0)

    def test_dedup_key_fields(self):
        s = make_sample()
        assert s.dedup_key == ("agent-1", "bat-1", "web_element",
                               "http://example.test/img.gif",
                               1_700_000_000_000)


_FAILURES = [o for o in Outcome if o is not Outcome.OK]

_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40)


@st.composite
def wire_samples(draw):
    outcome = draw(st.sampled_from(list(Outcome)))
    common = dict(
        agent_id=draw(_text), provider_id=draw(_text),
        battery_id=draw(_text), timestamp=draw(st.integers(0, 2**53)),
        probe_kind=draw(st.sampled_from(list(ProbeKind))),
        target=draw(_text), source_label=draw(_text),
        affiliation=draw(st.sampled_from(list(Affiliation))),
    )
    if outcome is Outcome.OK:
        return TransferSample.completed(
            payload_bytes=draw(st.integers(0, 10**8)),
            elapsed_ms=draw(st.floats(0.01, 10**7)),
            partial=draw(st.booleans()),
            **common)
    return TransferSample(
        payload_bytes=draw(st.integers(0, 10**8)),
        outcome=outcome,
        elapsed_ms=draw(st.none() | st.floats(0.01, 10**7)),
        **common)


class TestWireFormat:
    @given(sample=wire_samples())
    def test_round_trip(self, sample):
        assert parse_record(serialize_record(sample)) == sample

    def test_unknown_fields_ignored(self):
        doc = json.loads(serialize_record(make_sample()))
        doc["future_extension"] = {"nested": True}
        assert parse_record(json.dumps(doc)) == make_sample()

    def test_partial_flag_survives(self):
        s = make_sample(probe_kind=ProbeKind.WEB_PAGE_AGGREGATE, partial=True)
        line = serialize_record(s)
        assert json.loads(line)["partial"] is True
        assert parse_record(line).partial is True

    def test_partial_omitted_when_false(self):
        assert "partial" not in json.loads(serialize_record(make_sample()))

    def test_missing_required_field(self):
        doc = json.loads(serialize_record(make_sample()))
        del doc["battery_id"]
        with pytest.raises(RecordParseError, match="battery_id"):
            parse_record(json.dumps(doc))

    def test_ok_without_elapsed_rejected(self):
        doc = json.loads(serialize_record(make_sample()))
        del doc["elapsed_ms"]
        with pytest.raises(RecordParseError, match="elapsed_ms"):
            parse_record(json.dumps(doc))

    def test_not_json(self):
        with pytest.raises(RecordParseError):
            parse_record("{nope")
        with pytest.raises(RecordParseError):
            parse_record('["a","list"]')

    def test_rate_rederived_when_absent(self):
        doc = json.loads(serialize_record(make_sample()))
        del doc["effective_bps"]
        parsed = parse_record(json.dumps(doc))
        assert parsed.effective_bps == pytest.approx(
            compute_effective_rate(doc["payload_bytes"], doc["elapsed_ms"]))

    def test_rate_mismatch_logs_warning(self, caplog):
        doc = json.loads(serialize_record(make_sample()))
        doc["effective_bps"] *= 1.02  # 2% off, way past the 0.1% tolerance
        with caplog.at_level("WARNING", logger="qosmon.records"):
            parse_record(json.dumps(doc))
        assert any("mismatch" in r.message for r in caplog.records)

    def test_tiny_rate_slack_not_warned(self, caplog):
        doc = json.loads(serialize_record(make_sample()))
        doc["effective_bps"] *= 1.0005  # within the 0.1% tolerance
        with caplog.at_level("WARNING", logger="qosmon.records"):
            parse_record(json.dumps(doc))
        assert not caplog.records

    @pytest.mark.parametrize("outcome", _FAILURES)
    def test_failures_carry_no_rate(self, outcome):
        s = make_sample(outcome=outcome, elapsed_ms=None, effective_bps=None,
                        payload_bytes=1234)
        parsed = parse_record(serialize_record(s))
        assert parsed.effective_bps is None
        assert parsed.payload_bytes == 1234  # bytes received before failure


def _manifest_doc(**overrides):
    doc = {
        "version": 3,
        "poll_interval_min": 60,
        "web_targets": [
            {"url": "http://a.example/", "source_label": "a",
             "affiliation": "affiliated"},
            {"url": "http://b.example/", "source_label": "b",
             "affiliation": "unaffiliated"},
            {"url": "http://c.example/", "source_label": "c"},
            {"url": "http://d.example/", "source_label": "d"},
        ],
        "large_files": ["http://a.example/big1", "http://a.example/big2"],
        "newsgroups": ["alt.test"],
        "n_largest": 3,
        "mail": {"smtp": "mail.example:25", "pop": "mail.example:110",
                 "account": "probe-main", "probe_size_bytes": 350_000},
        "nntp": "news.example:119",
        "echo_targets": ["gw.example"],
        "collector_endpoint": "http://collector.example:8800",
    }
    doc.update(overrides)
    return doc


class TestManifest:
    def test_valid_document(self):
        m = validate_manifest(_manifest_doc())
        assert m.n_largest == 3
        assert len(m.web_targets) == 4
        assert m.mail.probe_size_bytes == 350_000
        assert m.web_targets[2].affiliation is Affiliation.UNKNOWN

    def test_probe_size_floor(self):
        doc = _manifest_doc()
        doc["mail"]["probe_size_bytes"] = 100_000
        with pytest.raises(ManifestError) as exc:
            validate_manifest(doc)
        assert any("probe_size_bytes" in v for v in exc.value.violations)

    def test_n_largest_floor(self):
        with pytest.raises(ManifestError, match="n_largest"):
            validate_manifest(_manifest_doc(n_largest=0))

    def test_empty_web_targets(self):
        with pytest.raises(ManifestError, match="web_targets"):
            validate_manifest(_manifest_doc(web_targets=[]))

    def test_all_violations_collected(self):
        doc = _manifest_doc(n_largest=0, web_targets=[])
        doc["mail"]["probe_size_bytes"] = 5
        del doc["collector_endpoint"]
        with pytest.raises(ManifestError) as exc:
            validate_manifest(doc)
        assert len(exc.value.violations) == 4

    def test_bad_hostport(self):
        with pytest.raises(ManifestError, match="nntp"):
            validate_manifest(_manifest_doc(nntp="no-port-here"))

    def test_mail_and_nntp_optional(self):
        doc = _manifest_doc()
        del doc["mail"]
        del doc["nntp"]
        m = validate_manifest(doc)
        assert m.mail is None and m.nntp is None

    def test_json_round_trip(self):
        m = validate_manifest(_manifest_doc())
        assert validate_manifest(manifest_to_json(m)) == m

    def test_garbage_document(self):
        with pytest.raises(ManifestError):
            validate_manifest("{not json")
        with pytest.raises(ManifestError):
            validate_manifest("[1,2,3]")
