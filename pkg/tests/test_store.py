"""Day store sealing, enrichment joins, flat export."""

import datetime as dt

import pytest

from peerscope.liveness import DailyActivity
from peerscope.netlabel import RULE_CLIENT, NetworkLabel
from peerscope.store import (
    DayStore,
    DuplicateDay,
    EnrichmentDataset,
    EnrichmentRecord,
    JoinedRecord,
    StoreError,
    StoredDay,
    enrich,
)

import ipaddress

D = dt.date(2025, 4, 10)


def _dataset():
    return EnrichmentDataset([
        EnrichmentRecord(ipaddress.ip_network("198.51.0.0/16"), "DE", "Europe", 64496, "hosting"),
        EnrichmentRecord(ipaddress.ip_network("203.0.113.0/24"), "US", "North America", 64497, "isp"),
        EnrichmentRecord(ipaddress.ip_network("192.0.2.0/24"), "CA", "North America", 64498, "other"),
        EnrichmentRecord(ipaddress.ip_network("2001:db8::/32"), "FR", "Europe", 64499, "hosting"),
    ])


def _activity(active, discovered=None, network="sim"):
    return DailyActivity(network=network, date=D, active=set(active),
                         discovered=set(discovered or active))


class TestEnrichment:
    def test_address_in_slash16_hosting_prefix(self):
        joined = enrich(_activity(["198.51.100.7"]), _dataset())
        assert joined[0].category == "hosting"
        assert joined[0].country == "DE"
        assert joined[0].asn == 64496

    def test_address_outside_all_prefixes_is_unknown(self):
        joined = enrich(_activity(["8.8.8.8"]), _dataset())
        assert joined[0].category == "unknown"
        assert joined[0].asn is None
        assert not joined[0].known

    def test_join_totality(self):
        active = [f"198.51.{i}.1" for i in range(40)] + ["8.8.8.8", "2001:db8::5"]
        joined = enrich(_activity(active), _dataset())
        assert len(joined) == len(active)

    def test_longest_prefix_wins(self):
        dataset = EnrichmentDataset([
            EnrichmentRecord(ipaddress.ip_network("10.0.0.0/8"), "US", "North America", 1, "isp"),
        ])
        # /8 matches; now shadow part of it with a disjoint dataset variant
        nested = EnrichmentDataset([
            EnrichmentRecord(ipaddress.ip_network("10.1.0.0/16"), "DE", "Europe", 2, "hosting"),
            EnrichmentRecord(ipaddress.ip_network("10.2.0.0/16"), "US", "North America", 3, "isp"),
        ])
        assert dataset.lookup("10.1.2.3").asn == 1
        assert nested.lookup("10.1.2.3").asn == 2
        assert nested.lookup("10.9.9.9") is None

    def test_overlapping_prefixes_rejected(self):
        with pytest.raises(StoreError):
            EnrichmentDataset([
                EnrichmentRecord(ipaddress.ip_network("10.0.0.0/8"), "US", "North America", 1, "isp"),
                EnrichmentRecord(ipaddress.ip_network("10.1.0.0/16"), "DE", "Europe", 2, "hosting"),
            ])

    def test_ipv6_lookup(self):
        assert _dataset().lookup("2001:db8::1234").country == "FR"

    def test_csv_load(self, tmp_path):
        path = tmp_path / "enrich.csv"
        path.write_text(
            "# prefix,country,continent,asn,category\n"
            "198.51.0.0/16,DE,Europe,64496,hosting\n"
            "192.0.2.0/24,US,North America,64497,isp\n"
        )
        dataset = EnrichmentDataset.load(path)
        assert dataset.lookup("192.0.2.9").category == "isp"

    def test_bad_continent_rejected(self):
        with pytest.raises(StoreError):
            EnrichmentRecord(ipaddress.ip_network("1.0.0.0/8"), "AU", "Atlantis", 1, "isp")


class TestDayStore:
    def _day(self, network="sim"):
        activity = _activity(["10.0.0.1", "10.0.0.2"], ["10.0.0.1", "10.0.0.2", "10.0.0.3"],
                             network=network)
        return StoredDay(
            network=network,
            date=D,
            activity=activity,
            tables={("10.0.0.1", 8333): [("10.0.0.2", 8333), ("10.0.0.3", 8333)]},
            labels=[NetworkLabel("10.0.0.1", D, "BitcoinCash", RULE_CLIENT)],
            enrichment=[JoinedRecord("10.0.0.1", "DE", "Europe", 64496, "hosting")],
        )

    def test_put_get_round_trip(self, tmp_path):
        store = DayStore(tmp_path)
        store.put_day(self._day())
        loaded = store.get_day("sim", D)
        original = self._day()
        assert loaded.activity.active == original.activity.active
        assert loaded.activity.discovered == original.activity.discovered
        assert loaded.tables == original.tables
        assert loaded.labels == original.labels
        assert loaded.enrichment == original.enrichment

    def test_get_missing_is_typed_absence(self, tmp_path):
        assert DayStore(tmp_path).get_day("sim", D) is None

    def test_second_put_is_duplicate(self, tmp_path):
        store = DayStore(tmp_path)
        store.put_day(self._day())
        with pytest.raises(DuplicateDay):
            store.put_day(self._day())

    def test_sealed_file_reads_identically(self, tmp_path):
        store = DayStore(tmp_path)
        path = store.put_day(self._day())
        assert path.read_bytes() == path.read_bytes()
        first = path.read_bytes()
        store.get_day("sim", D)
        assert path.read_bytes() == first

    def test_no_tmp_left_behind(self, tmp_path):
        store = DayStore(tmp_path)
        store.put_day(self._day())
        assert not list(tmp_path.rglob("*.tmp"))

    def test_days_listing(self, tmp_path):
        store = DayStore(tmp_path)
        store.put_day(self._day())
        two = self._day()
        two.date = D + dt.timedelta(days=1)
        store.put_day(two)
        assert store.days("sim") == [D, D + dt.timedelta(days=1)]
        assert store.networks() == ["sim"]

    def test_export_flat(self, tmp_path):
        store = DayStore(tmp_path)
        store.put_day(self._day())
        out = tmp_path / "flat.csv"
        store.export_flat("sim", out)
        lines = out.read_text().splitlines()
        assert lines[0] == "date,address,active,label,country,continent,asn,category"
        assert any("10.0.0.1,1,BitcoinCash,DE,Europe,64496,hosting" in line for line in lines)
        assert any("10.0.0.3,0" in line for line in lines)
