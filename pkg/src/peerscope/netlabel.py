"""Disambiguate networks that share one discovery layer.

The Bitcoin Cash discovery network carries BitcoinCash, BitcoinSV and eCash
nodes, split apart by client string. discv4 carries dozens of chains, split
by fork id, then unique chain id, then client. discv5 splits by fork digest.
Address-days that yielded no evidence can inherit a label seen for the same
address within a +/-7 day window (conflicts stay unlabeled), and one
discovery network's labels can back-fill another's.

Rule tables live in JSON config files, not code: the mappings churn as
networks fork, appear, and die. The shipped defaults are best-effort and
operator-overridable.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

LABEL_NONE = "none"
LABEL_OTHER = "other"
LABEL_MISC_CLIENT = "misc-client"

RULE_FORK_ID = "fork-id"
RULE_CHAIN_ID = "chain-id"
RULE_CLIENT = "client"
RULE_MISC_CLIENT = "misc-client"
RULE_WINDOW_INHERIT = "window-inherit"
RULE_CROSS_DISCOVERY = "cross-discovery"
RULE_NONE = "none"

DEFAULT_WINDOW_DAYS = 7


class LabelError(Exception):
    pass


class AmbiguousRuleTable(LabelError):
    """Two labels claim the same fork id / digest / client prefix."""


@dataclass(frozen=True)
class LabelEvidence:
    address: str
    date: dt.date
    client: str | None = None
    protocol_version: int | None = None
    fork_id: str | None = None
    chain_id: int | None = None
    fork_digest: str | None = None

    def has_any(self) -> bool:
        return any(
            v is not None
            for v in (self.client, self.protocol_version, self.fork_id, self.chain_id, self.fork_digest)
        )


@dataclass(frozen=True)
class NetworkLabel:
    address: str
    date: dt.date
    label: str
    rule_fired: str

    def __post_init__(self) -> None:
        if (self.rule_fired == RULE_NONE) != (self.label == LABEL_NONE):
            raise LabelError("rule_fired is 'none' exactly when the label is 'none'")


def _check_no_duplicates(pairs, what: str):
    seen: dict = {}
    for key, value in pairs:
        if key in seen and seen[key] != value:
            raise AmbiguousRuleTable(f"{what} {key!r} claimed by {seen[key]!r} and {value!r}")
        seen[key] = value
    return seen


@dataclass
class RuleTable:
    version: int = 1
    client_prefixes: list[tuple[str, str]] = None
    fork_ids: dict[str, str] = None
    chain_ids: dict[int, list[str]] = None
    fork_digests: dict[str, str] = None
    misc_client_prefixes: list[str] = None

    def __post_init__(self) -> None:
        self.client_prefixes = list(self.client_prefixes or [])
        self.fork_ids = dict(self.fork_ids or {})
        self.chain_ids = dict(self.chain_ids or {})
        self.fork_digests = dict(self.fork_digests or {})
        self.misc_client_prefixes = list(self.misc_client_prefixes or [])
        _check_no_duplicates(self.client_prefixes, "client prefix")

    @classmethod
    def from_dict(cls, doc: dict) -> "RuleTable":
        chain_ids: dict[int, list[str]] = {}
        for key, value in (doc.get("chain_ids") or {}).items():
            labels = [value] if isinstance(value, str) else list(value)
            chain_ids[int(key)] = labels
        return cls(
            version=int(doc.get("version", 1)),
            client_prefixes=[(p, l) for p, l in (doc.get("client_prefixes") or [])],
            fork_ids={str(k).lower(): v for k, v in (doc.get("fork_ids") or {}).items()},
            chain_ids=chain_ids,
            fork_digests={str(k).lower(): v for k, v in (doc.get("fork_digests") or {}).items()},
            misc_client_prefixes=list(doc.get("misc_client_prefixes") or []),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RuleTable":
        def reject_dupes(pairs):
            keys = [k for k, _ in pairs]
            for key in keys:
                if keys.count(key) > 1:
                    raise AmbiguousRuleTable(f"duplicate key {key!r} in rule table")
            return dict(pairs)

        doc = json.loads(Path(path).read_text(), object_pairs_hook=reject_dupes)
        return cls.from_dict(doc)

    @classmethod
    def builtin(cls, name: str) -> "RuleTable":
        data = resources.files("peerscope").joinpath(f"data/{name}")
        return cls.from_dict(json.loads(data.read_text()))

    def unique_chain_label(self, chain_id: int) -> str | None:
        labels = self.chain_ids.get(chain_id)
        if labels and len(labels) == 1:
            return labels[0]
        return None

    def client_label(self, client: str) -> str | None:
        for prefix, label in self.client_prefixes:
            if client.startswith(prefix):
                return label
        return None

    def is_misc_client(self, client: str) -> bool:
        lowered = client.lower()
        return any(lowered.startswith(p.lower()) for p in self.misc_client_prefixes)


def _label(ev: LabelEvidence, label: str, rule: str) -> NetworkLabel:
    return NetworkLabel(address=ev.address, date=ev.date, label=label, rule_fired=rule)


def label_bitcoincash(evidence: LabelEvidence, rules: RuleTable) -> NetworkLabel:
    """Client-string prefix rules split the shared discovery network; an
    address that never answered the version message stays 'none'."""
    if evidence.client is None:
        return _label(evidence, LABEL_NONE, RULE_NONE)
    label = rules.client_label(evidence.client)
    if label is not None:
        return _label(evidence, label, RULE_CLIENT)
    return _label(evidence, LABEL_OTHER, RULE_CLIENT)


def label_discv4(evidence: LabelEvidence, rules: RuleTable) -> NetworkLabel:
    """Precedence: fork id, then unique chain id, then client, then the
    misc-client bucket for generic Ethereum-family clients."""
    if evidence.fork_id is not None:
        label = rules.fork_ids.get(evidence.fork_id.lower())
        if label is not None:
            return _label(evidence, label, RULE_FORK_ID)
    if evidence.chain_id is not None:
        label = rules.unique_chain_label(evidence.chain_id)
        if label is not None:
            return _label(evidence, label, RULE_CHAIN_ID)
    if evidence.client is not None:
        label = rules.client_label(evidence.client)
        if label is not None:
            return _label(evidence, label, RULE_CLIENT)
        if rules.is_misc_client(evidence.client):
            return _label(evidence, LABEL_MISC_CLIENT, RULE_MISC_CLIENT)
    if evidence.client is not None:
        return _label(evidence, LABEL_OTHER, RULE_CLIENT)
    if evidence.chain_id is not None:
        return _label(evidence, LABEL_OTHER, RULE_CHAIN_ID)
    if evidence.fork_id is not None:
        return _label(evidence, LABEL_OTHER, RULE_FORK_ID)
    return _label(evidence, LABEL_NONE, RULE_NONE)


def label_discv5(evidence: LabelEvidence, rules: RuleTable) -> NetworkLabel:
    """Fork digest encodes genesis plus current protocol version; one chain
    maps from several digests across upgrades."""
    if evidence.fork_digest is None:
        return _label(evidence, LABEL_NONE, RULE_NONE)
    label = rules.fork_digests.get(evidence.fork_digest.lower())
    if label is not None:
        return _label(evidence, label, RULE_FORK_ID)
    return _label(evidence, LABEL_OTHER, RULE_FORK_ID)


LABELERS = {
    "bitcoincash": label_bitcoincash,
    "discv4": label_discv4,
    "discv5": label_discv5,
}


def label_series(evidence: list[LabelEvidence], rules: RuleTable, labeler) -> list[NetworkLabel]:
    if isinstance(labeler, str):
        labeler = LABELERS[labeler]
    return [labeler(ev, rules) for ev in evidence]


def inherit_labels(labels: list[NetworkLabel], window_days: int = DEFAULT_WINDOW_DAYS) -> list[NetworkLabel]:
    """Let none-labeled address-days adopt the label directly observed for
    the same address within +/-window_days, unless the window shows two
    different labels (conflicts stay none). Never rewrites a non-none row.
    """
    observed: dict[str, list[tuple[dt.date, str]]] = {}
    for row in labels:
        if row.label != LABEL_NONE:
            observed.setdefault(row.address, []).append((row.date, row.label))
    out: list[NetworkLabel] = []
    window = dt.timedelta(days=window_days)
    for row in labels:
        if row.label != LABEL_NONE:
            out.append(row)
            continue
        nearby = {
            label
            for date, label in observed.get(row.address, ())
            if abs(date - row.date) <= window
        }
        if len(nearby) == 1:
            out.append(replace(row, label=next(iter(nearby)), rule_fired=RULE_WINDOW_INHERIT))
        else:
            out.append(row)
    return out


def cross_discovery_backfill(
    labels_a: list[NetworkLabel],
    labels_b: list[NetworkLabel],
    target_label: str,
    source: str = "discv5",
    window_days: int = DEFAULT_WINDOW_DAYS,
) -> list[NetworkLabel]:
    """Fill A's none rows from addresses carrying target_label in B within
    the window; the adopted label is provenance-marked."""
    marked = f"{target_label} (from {source})"
    dates_by_addr: dict[str, list[dt.date]] = {}
    for row in labels_b:
        if row.label == target_label:
            dates_by_addr.setdefault(row.address, []).append(row.date)
    window = dt.timedelta(days=window_days)
    out: list[NetworkLabel] = []
    for row in labels_a:
        if row.label == LABEL_NONE and any(
            abs(date - row.date) <= window for date in dates_by_addr.get(row.address, ())
        ):
            out.append(replace(row, label=marked, rule_fired=RULE_CROSS_DISCOVERY))
        else:
            out.append(row)
    return out


def save_labels(path: str | Path, network: str, labels: list[NetworkLabel]) -> None:
    """Line-delimited: date, network, address, label, rule_fired."""
    lines = [
        f"{row.date.isoformat()},{network},{row.address},{row.label},{row.rule_fired}"
        for row in labels
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_labels(path: str | Path) -> list[NetworkLabel]:
    labels = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        date_s, _network, address, label, rule = line.split(",", 4)
        labels.append(
            NetworkLabel(
                address=address,
                date=dt.date.fromisoformat(date_s),
                label=label,
                rule_fired=rule,
            )
        )
    return labels


def evidence_from_metadata(address: str, date: dt.date, metadata: dict) -> LabelEvidence:
    """Build evidence from the handshake fields a crawl records."""
    chain_id = metadata.get("chain_id")
    pv = metadata.get("protocol_version")
    return LabelEvidence(
        address=address,
        date=date,
        client=metadata.get("client"),
        protocol_version=int(pv) if pv is not None else None,
        fork_id=metadata.get("fork_id"),
        chain_id=int(chain_id) if chain_id is not None else None,
        fork_digest=metadata.get("fork_digest"),
    )
