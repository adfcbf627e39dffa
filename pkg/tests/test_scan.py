"""Scan probes, the response lattice, CBOR handshake subset, reports."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peerscope import scan, wire
from peerscope.liveness import DailyActivity
from peerscope.profiles import BUILTIN_PROFILES
from peerscope.scan import (
    CARDANO_ACCEPT,
    CARDANO_PROPOSE,
    CARDANO_REFUSE,
    CLASSES,
    GARBAGE,
    HTTP_400,
    NO_RESPONSE,
    OTHER_HTTP,
    VERSION_VALID_ANY,
    VERSION_VALID_NETWORK,
    ClassifiedRecord,
    UnsupportedFamily,
    build_probe,
    cbor_decode,
    cbor_encode,
    classify_response,
    scan_report,
)

import datetime as dt


def _version_response(profile, nonce=9):
    payload = wire.build_version_payload(profile, ("5.6.7.8", profile.default_ports[0]),
                                         ("1.2.3.4", 0), nonce=nonce)
    return wire.encode_message(profile, wire.CMD_VERSION, payload)


class TestCbor:
    @pytest.mark.parametrize("obj", [
        0, 23, 24, 255, 65536, [0, 1, [2]], {1: [764824073, False]}, [2, [0]], True, False,
    ])
    def test_round_trip(self, obj):
        assert cbor_decode(cbor_encode(obj)) == obj

    def test_trailing_bytes_rejected(self):
        with pytest.raises(scan.ScanError):
            cbor_decode(cbor_encode([1]) + b"\x00")

    def test_truncated_rejected(self):
        with pytest.raises(scan.ScanError):
            cbor_decode(cbor_encode([1, 2, 3])[:-1])


class TestBuildProbe:
    def test_bitcoin_probe_starts_with_magic(self, bitcoin_profile):
        probe = build_probe(bitcoin_profile, 8333)
        assert probe.payload[:4] == bytes.fromhex("d9b4bef9")
        msg = wire.decode_message(bitcoin_profile, probe.payload)
        assert msg.command == wire.CMD_VERSION

    def test_probe_is_deterministic(self, dogecoin_profile):
        assert build_probe(dogecoin_profile, 22556) == build_probe(dogecoin_profile, 22556)

    def test_cardano_probe_lists_all_versions_including_14(self, cardano_profile):
        probe = build_probe(cardano_profile, 3001)
        doc = cbor_decode(probe.payload)
        assert doc[0] == 0  # propose-versions
        assert set(doc[1]) == set(cardano_profile.handshake_versions)
        assert 14 in doc[1]

    def test_dht_profile_unsupported(self):
        with pytest.raises(UnsupportedFamily):
            build_probe(BUILTIN_PROFILES["ethereum-discv4"], 30303)


class TestClassify:
    def test_empty_is_no_response(self, bitcoin_profile):
        assert classify_response(bitcoin_profile, b"") == NO_RESPONSE

    def test_http_400(self, bitcoin_profile):
        raw = b"HTTP/1.1 400 Bad Request\r\nServer: nginx\r\n\r\n"
        assert classify_response(bitcoin_profile, raw) == HTTP_400

    def test_other_http(self, bitcoin_profile):
        assert classify_response(bitcoin_profile, b"HTTP/1.0 404 Not Found\r\n") == OTHER_HTTP

    def test_own_network_version_is_network_valid(self, dogecoin_profile):
        raw = _version_response(dogecoin_profile)
        assert classify_response(dogecoin_profile, raw) == VERSION_VALID_NETWORK

    def test_dogecoin_version_under_bch_profile_is_any_valid(self, dogecoin_profile, bch_profile):
        raw = _version_response(dogecoin_profile)
        assert classify_response(bch_profile, raw) == VERSION_VALID_ANY

    def test_bitcoin_version_under_bch_profile_is_network_valid(self, bitcoin_profile, bch_profile):
        # BCH inherited bitcoin's version number, so bitcoin replies pollute it
        raw = _version_response(bitcoin_profile)
        assert classify_response(bch_profile, raw) == VERSION_VALID_NETWORK

    def test_non_version_frame_is_garbage(self, bitcoin_profile):
        raw = wire.encode_message(bitcoin_profile, wire.CMD_VERACK)
        assert classify_response(bitcoin_profile, raw) == GARBAGE

    def test_cardano_codes(self, cardano_profile):
        assert classify_response(cardano_profile, scan.build_cardano_propose(cardano_profile)) == CARDANO_PROPOSE
        assert classify_response(cardano_profile, scan.build_cardano_accept(14, 764824073)) == CARDANO_ACCEPT
        assert classify_response(cardano_profile, scan.build_cardano_refuse()) == CARDANO_REFUSE

    def test_cardano_garbage(self, cardano_profile):
        assert classify_response(cardano_profile, b"\xff\xfe\x01") == GARBAGE
        assert classify_response(cardano_profile, cbor_encode([7, 7])) == GARBAGE

    @given(raw=st.binary(max_size=120))
    @settings(max_examples=300, deadline=None)
    def test_totality_bitcoin(self, raw):
        label = classify_response(BUILTIN_PROFILES["bitcoin"], raw)
        assert label in CLASSES

    @given(raw=st.binary(max_size=120))
    @settings(max_examples=300, deadline=None)
    def test_totality_cardano(self, raw):
        assert classify_response(BUILTIN_PROFILES["cardano"], raw) in CLASSES


def _records(label, n, start=0):
    return [ClassifiedRecord(address=f"198.51.{(start + i) >> 8 & 255}.{(start + i) & 255}",
                             port=8333, label=label) for i in range(n)]


class TestReport:
    def test_empty_report_is_all_zero(self):
        report = scan_report([], network="x")
        assert report.success_count == 0
        assert report.response_count == 0
        assert report.version_any_count == 0
        assert report.version_network_count == 0
        assert report.class_counts == {}

    def test_synthetic_counts_exact(self):
        classified = (
            _records(NO_RESPONSE, 10)
            + _records(HTTP_400, 5, 10)
            + _records(VERSION_VALID_NETWORK, 3, 15)
            + _records(VERSION_VALID_ANY, 2, 18)
            + _records(GARBAGE, 4, 20)
        )
        report = scan_report(classified, network="sim")
        assert report.success_count == 24
        assert report.response_count == 14
        assert report.version_any_count == 5
        assert report.version_network_count == 3
        assert report.class_counts[HTTP_400] == 5

    def test_monotone_chain_random_mixes(self):
        rng = random.Random(60)
        for _ in range(50):
            classified = []
            offset = 0
            for label in CLASSES:
                n = rng.randrange(0, 30)
                classified.extend(_records(label, n, offset))
                offset += n
            report = scan_report(classified)
            assert report.version_network_count <= report.version_any_count
            assert report.version_any_count <= report.response_count
            assert report.response_count <= report.success_count

    def test_overlap_with_activity(self):
        classified = _records(VERSION_VALID_NETWORK, 4) + _records(GARBAGE, 2, 4)
        hits = {r.address for r in classified[:4]}
        activity = DailyActivity(network="sim", date=dt.date(2025, 7, 8),
                                 active=set(list(hits)[:2]), discovered=hits | {"203.0.113.9"})
        report = scan_report(classified, crawl_activity=activity)
        assert report.overlap == {"discovered": 4, "active": 2}

    def test_success_count_override(self):
        report = scan_report(_records(HTTP_400, 3), success_count=100)
        assert report.success_count == 100
        assert report.response_count == 3


class TestCaptureFile:
    def test_read_and_classify(self, tmp_path, dogecoin_profile):
        version = _version_response(dogecoin_profile)
        lines = [
            f"198.51.100.1,22556,{version.hex()}",
            "198.51.100.2,22556,",  # connect with no payload
            f"198.51.100.3,22556,{b'HTTP/1.1 400 nope'.hex()}",
            "# comment line",
        ]
        path = tmp_path / "capture.csv"
        path.write_text("\n".join(lines) + "\n")
        records = scan.classify_capture(dogecoin_profile, path)
        assert [r.label for r in records] == [VERSION_VALID_NETWORK, NO_RESPONSE, HTTP_400]

    def test_bad_record_raises(self, tmp_path, dogecoin_profile):
        path = tmp_path / "capture.csv"
        path.write_text("no-commas-here\n")
        with pytest.raises(scan.ScanError):
            scan.classify_capture(dogecoin_profile, path)


class TestProbeIsolation:
    def test_simnet_bitcoin_peer_ignores_bch_probe(self, bch_profile):
        from conftest import make_simnet

        net = make_simnet(peer_count=4, seed=92)  # bitcoin-profile peers
        probe = build_probe(bch_profile, 8333)
        for ep in net.reachable_endpoints():
            assert net.serve(probe.payload, "scanner", ep) is None
