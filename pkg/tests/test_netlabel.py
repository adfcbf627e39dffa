"""Label rules, precedence, window inheritance, cross-discovery backfill."""

import datetime as dt
import json
import random

import pytest

from peerscope.netlabel import (
    LABEL_MISC_CLIENT,
    LABEL_NONE,
    LABEL_OTHER,
    RULE_CHAIN_ID,
    RULE_CLIENT,
    RULE_CROSS_DISCOVERY,
    RULE_FORK_ID,
    RULE_MISC_CLIENT,
    RULE_NONE,
    RULE_WINDOW_INHERIT,
    AmbiguousRuleTable,
    LabelError,
    LabelEvidence,
    NetworkLabel,
    RuleTable,
    cross_discovery_backfill,
    inherit_labels,
    label_bitcoincash,
    label_discv4,
    label_discv5,
    label_series,
    load_labels,
    save_labels,
)

D = dt.date(2025, 5, 1)


def _ev(address="10.0.0.1", date=D, **kwargs):
    return LabelEvidence(address=address, date=date, **kwargs)


@pytest.fixture
def bch_rules():
    return RuleTable.builtin("rules_bitcoincash.json")


@pytest.fixture
def discv4_rules():
    return RuleTable(
        fork_ids={"0x9f3d2254": "Ethereum"},
        chain_ids={100: ["Gnosis"], 1: ["Ethereum", "PulseChain-fork"], 56: ["Binance"]},
        client_prefixes=[("bor", "Polygon")],
        misc_client_prefixes=["geth", "nethermind", "besu"],
    )


@pytest.fixture
def discv5_rules():
    return RuleTable(fork_digests={"0x6a95a1a9": "Ethereum", "0x945dee19": "Ethereum",
                                   "0xf9925eea": "Gnosis"})


class TestBitcoinCash:
    def test_bch_node_client(self, bch_rules):
        row = label_bitcoincash(_ev(client="/Bitcoin Cash Node:27.0.0/"), bch_rules)
        assert row.label == "BitcoinCash"
        assert row.rule_fired == RULE_CLIENT

    def test_ecash_and_bsv_clients(self, bch_rules):
        assert label_bitcoincash(_ev(client="/Bitcoin ABC:0.28.5/"), bch_rules).label == "eCash"
        assert label_bitcoincash(_ev(client="/Bitcoin SV:1.0.16/"), bch_rules).label == "BitcoinSV"

    def test_no_version_response_is_none(self, bch_rules):
        row = label_bitcoincash(_ev(), bch_rules)
        assert row.label == LABEL_NONE
        assert row.rule_fired == RULE_NONE

    def test_unknown_client_is_other(self, bch_rules):
        assert label_bitcoincash(_ev(client="/mystery:1.0/"), bch_rules).label == LABEL_OTHER


class TestDiscv4:
    def test_fork_id_lookup(self, discv4_rules):
        row = label_discv4(_ev(fork_id="0x9f3d2254"), discv4_rules)
        assert (row.label, row.rule_fired) == ("Ethereum", RULE_FORK_ID)

    def test_unique_chain_id_tier(self, discv4_rules):
        row = label_discv4(_ev(chain_id=100), discv4_rules)
        assert (row.label, row.rule_fired) == ("Gnosis", RULE_CHAIN_ID)

    def test_shared_chain_id_never_labels(self, discv4_rules):
        row = label_discv4(_ev(chain_id=1), discv4_rules)
        assert row.label == LABEL_OTHER  # evidence present, nothing matched

    def test_client_tier(self, discv4_rules):
        row = label_discv4(_ev(client="bor/v1.2.3"), discv4_rules)
        assert (row.label, row.rule_fired) == ("Polygon", RULE_CLIENT)

    def test_misc_client_bucket(self, discv4_rules):
        row = label_discv4(_ev(client="Geth/v1.13.14-stable"), discv4_rules)
        assert (row.label, row.rule_fired) == (LABEL_MISC_CLIENT, RULE_MISC_CLIENT)

    def test_precedence_fork_id_beats_chain_id(self, discv4_rules):
        row = label_discv4(_ev(fork_id="0x9f3d2254", chain_id=100, client="bor"), discv4_rules)
        assert row.label == "Ethereum"

    def test_unknown_fork_id_falls_through_to_chain_id(self, discv4_rules):
        row = label_discv4(_ev(fork_id="0xdeadbeef", chain_id=56), discv4_rules)
        assert (row.label, row.rule_fired) == ("Binance", RULE_CHAIN_ID)

    def test_no_evidence_is_none(self, discv4_rules):
        assert label_discv4(_ev(), discv4_rules).label == LABEL_NONE

    def test_duplicate_fork_id_rejected_at_load(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text('{"fork_ids": {"0x1": "A", "0x1": "B"}}')
        with pytest.raises(AmbiguousRuleTable):
            RuleTable.load(path)

    def test_conflicting_client_prefix_rejected(self):
        with pytest.raises(AmbiguousRuleTable):
            RuleTable(client_prefixes=[("bor", "Polygon"), ("bor", "NotPolygon")])


class TestDiscv5:
    def test_digest_pre_and_post_upgrade_map_to_same_chain(self, discv5_rules):
        pre = label_discv5(_ev(fork_digest="0x6a95a1a9"), discv5_rules)
        post = label_discv5(_ev(fork_digest="0x945dee19"), discv5_rules)
        assert pre.label == post.label == "Ethereum"

    def test_unknown_digest_is_other(self, discv5_rules):
        assert label_discv5(_ev(fork_digest="0xfefefefe"), discv5_rules).label == LABEL_OTHER

    def test_absent_enr_is_none(self, discv5_rules):
        assert label_discv5(_ev(), discv5_rules).label == LABEL_NONE
        # digest is the only field this labeler reads
        assert label_discv5(_ev(client="lighthouse/v5"), discv5_rules).label == LABEL_NONE


class TestInheritance:
    def _series(self, spec):
        # spec: list of (day_offset, label)
        rows = []
        for off, label in spec:
            rule = RULE_NONE if label == LABEL_NONE else RULE_CLIENT
            rows.append(NetworkLabel(address="10.0.0.1", date=D + dt.timedelta(days=off),
                                     label=label, rule_fired=rule))
        return rows

    def test_monday_label_spreads_across_week(self):
        rows = self._series([(0, "BitcoinCash")] + [(i, LABEL_NONE) for i in range(1, 5)])
        out = inherit_labels(rows)
        assert all(r.label == "BitcoinCash" for r in out)
        assert out[1].rule_fired == RULE_WINDOW_INHERIT

    def test_conflicting_window_stays_none(self):
        rows = self._series([(0, "A"), (3, LABEL_NONE), (5, "B")])
        out = inherit_labels(rows)
        assert out[1].label == LABEL_NONE

    def test_window_is_symmetric_and_bounded(self):
        rows = self._series([(0, "A"), (8, LABEL_NONE)])
        assert inherit_labels(rows)[1].label == LABEL_NONE  # 8 days > window
        rows = self._series([(0, LABEL_NONE), (7, "A")])
        assert inherit_labels(rows)[0].label == "A"  # future evidence counts

    def test_never_overwrites_non_none(self):
        rows = self._series([(0, "A"), (1, "B")])
        out = inherit_labels(rows)
        assert [r.label for r in out] == ["A", "B"]

    def test_inheritance_does_not_chain(self):
        # an inherited label is not itself evidence for further spreading
        rows = self._series([(0, "A"), (7, LABEL_NONE), (14, LABEL_NONE)])
        out = inherit_labels(rows)
        assert out[1].label == "A"
        assert out[2].label == LABEL_NONE

    def test_constructed_reduction_count(self):
        rng = random.Random(70)
        rows = []
        expected_inherits = 0
        for i in range(120):
            addr = f"10.1.{i}.1"
            rows.append(NetworkLabel(address=addr, date=D, label="X", rule_fired=RULE_CLIENT))
            if rng.random() < 0.5:
                rows.append(NetworkLabel(address=addr, date=D + dt.timedelta(days=3),
                                         label=LABEL_NONE, rule_fired=RULE_NONE))
                expected_inherits += 1
        before = sum(1 for r in rows if r.label == LABEL_NONE)
        after_rows = inherit_labels(rows)
        after = sum(1 for r in after_rows if r.label == LABEL_NONE)
        assert before - after == expected_inherits


class TestBackfill:
    def test_adopts_with_provenance(self):
        a = [NetworkLabel("10.2.0.1", D, LABEL_NONE, RULE_NONE)]
        b = [NetworkLabel("10.2.0.1", D + dt.timedelta(days=2), "Ethereum", RULE_FORK_ID)]
        out = cross_discovery_backfill(a, b, "Ethereum", source="discv5")
        assert out[0].label == "Ethereum (from discv5)"
        assert out[0].rule_fired == RULE_CROSS_DISCOVERY

    def test_unlabeled_in_both_stays_none(self):
        a = [NetworkLabel("10.2.0.2", D, LABEL_NONE, RULE_NONE)]
        b = [NetworkLabel("10.2.0.2", D, LABEL_NONE, RULE_NONE)]
        assert cross_discovery_backfill(a, b, "Ethereum")[0].label == LABEL_NONE

    def test_backfill_monotone_on_none_count(self):
        rng = random.Random(71)
        a, b = [], []
        for i in range(200):
            addr = f"10.3.{i >> 8}.{i & 255}"
            label = LABEL_NONE if rng.random() < 0.6 else "Ethereum"
            rule = RULE_NONE if label == LABEL_NONE else RULE_FORK_ID
            a.append(NetworkLabel(addr, D, label, rule))
            if rng.random() < 0.5:
                b.append(NetworkLabel(addr, D + dt.timedelta(days=rng.randrange(-6, 7)),
                                      "Ethereum", RULE_FORK_ID))
        out = cross_discovery_backfill(a, b, "Ethereum")
        assert sum(1 for r in out if r.label == LABEL_NONE) <= sum(1 for r in a if r.label == LABEL_NONE)
        for before, after in zip(a, out):
            if before.label != LABEL_NONE:
                assert after == before


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rows = [
            NetworkLabel("10.0.0.1", D, "BitcoinCash", RULE_CLIENT),
            NetworkLabel("10.0.0.2", D, LABEL_NONE, RULE_NONE),
        ]
        path = tmp_path / "labels.csv"
        save_labels(path, "bch", rows)
        assert load_labels(path) == rows

    def test_invariant_enforced(self):
        with pytest.raises(LabelError):
            NetworkLabel("10.0.0.1", D, LABEL_NONE, RULE_CLIENT)
        with pytest.raises(LabelError):
            NetworkLabel("10.0.0.1", D, "Ethereum", RULE_NONE)

    def test_builtin_tables_load(self):
        for name in ("rules_bitcoincash.json", "rules_discv4.json", "rules_discv5.json"):
            table = RuleTable.builtin(name)
            assert table.version == 1

    def test_label_series_by_name(self, bch_rules):
        rows = label_series([_ev(client="/Bitcoin Cash Node:27/")], bch_rules, "bitcoincash")
        assert rows[0].label == "BitcoinCash"
