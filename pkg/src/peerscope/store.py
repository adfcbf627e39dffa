"""Day-granular persistence: sealed per-day artifacts plus enrichment joins.

Layout is directory-per-network, file-per-day, line-delimited JSON records
behind a schema-version header, so the metrics engine can stream days and
diffs stay auditable. Writes are append-then-seal (temp file, atomic
rename); a (network, date) pair is written exactly once.

Enrichment is a static prefix -> (country, continent, ASN, category) table
loaded per run; no live geolocation, so everything stays hermetic.
"""

from __future__ import annotations

import datetime as dt
import ipaddress
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .liveness import DailyActivity
from .netlabel import NetworkLabel
from .profiles import Endpoint, format_endpoint, parse_endpoint

SCHEMA_VERSION = 1

CONTINENTS = ("Africa", "Asia", "Europe", "North America", "Oceania", "South America")
CATEGORY_ISP = "isp"
CATEGORY_HOSTING = "hosting"
CATEGORY_OTHER = "other"
UNKNOWN = "unknown"


class StoreError(Exception):
    pass


class DuplicateDay(StoreError):
    pass


# ---------------------------------------------------------------------------
# enrichment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnrichmentRecord:
    prefix: ipaddress.IPv4Network | ipaddress.IPv6Network
    country: str
    continent: str
    asn: int
    category: str

    def __post_init__(self) -> None:
        if self.continent not in CONTINENTS:
            raise StoreError(f"unknown continent {self.continent!r}")
        if self.category not in (CATEGORY_ISP, CATEGORY_HOSTING, CATEGORY_OTHER):
            raise StoreError(f"unknown category {self.category!r}")


@dataclass(frozen=True)
class JoinedRecord:
    address: str
    country: str
    continent: str
    asn: int | None
    category: str

    @property
    def known(self) -> bool:
        return self.asn is not None


class EnrichmentDataset:
    """Non-overlapping prefixes with longest-prefix lookup."""

    def __init__(self, records: list[EnrichmentRecord]):
        self.records = list(records)
        self._validate_disjoint()
        self._by_prefixlen: dict[tuple[int, int], dict] = {}
        for record in self.records:
            key = (record.prefix.version, record.prefix.prefixlen)
            self._by_prefixlen.setdefault(key, {})[record.prefix.network_address.packed] = record

    def _validate_disjoint(self) -> None:
        for version in (4, 6):
            nets = sorted(
                (r.prefix for r in self.records if r.prefix.version == version),
                key=lambda n: (int(n.network_address), n.prefixlen),
            )
            for prev, cur in zip(nets, nets[1:]):
                if prev.overlaps(cur):
                    raise StoreError(f"overlapping enrichment prefixes {prev} and {cur}")

    def lookup(self, address: str) -> EnrichmentRecord | None:
        ip = ipaddress.ip_address(address)
        lens = sorted(
            (plen for ver, plen in self._by_prefixlen if ver == ip.version), reverse=True
        )
        for plen in lens:
            net = ipaddress.ip_network(f"{ip}/{plen}", strict=False)
            record = self._by_prefixlen[(ip.version, plen)].get(net.network_address.packed)
            if record is not None:
                return record
        return None

    @classmethod
    def load(cls, path: str | Path) -> "EnrichmentDataset":
        """CSV lines: prefix,country,continent,asn,category."""
        records = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                prefix, country, continent, asn, category = line.split(",", 4)
                records.append(
                    EnrichmentRecord(
                        prefix=ipaddress.ip_network(prefix.strip()),
                        country=country.strip(),
                        continent=continent.strip(),
                        asn=int(asn),
                        category=category.strip(),
                    )
                )
            except (ValueError, StoreError) as err:
                raise StoreError(f"{path}:{lineno}: {err}") from None
        return cls(records)


def enrich(activity: DailyActivity, dataset: EnrichmentDataset) -> list[JoinedRecord]:
    """Longest-prefix join of every active address; misses are explicit
    unknowns so |joined| always equals |active|."""
    joined = []
    for address in sorted(activity.active):
        record = dataset.lookup(address)
        if record is None:
            joined.append(
                JoinedRecord(address=address, country=UNKNOWN, continent=UNKNOWN, asn=None, category=UNKNOWN)
            )
        else:
            joined.append(
                JoinedRecord(
                    address=address,
                    country=record.country,
                    continent=record.continent,
                    asn=record.asn,
                    category=record.category,
                )
            )
    return joined


# ---------------------------------------------------------------------------
# the day store
# ---------------------------------------------------------------------------


@dataclass
class StoredDay:
    network: str
    date: dt.date
    activity: DailyActivity
    tables: dict[Endpoint, list[Endpoint]] = field(default_factory=dict)
    labels: list[NetworkLabel] = field(default_factory=list)
    enrichment: list[JoinedRecord] = field(default_factory=list)


class DayStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, network: str, date: dt.date) -> Path:
        return self.root / network / f"{date.isoformat()}.jsonl"

    def put_day(self, day: StoredDay) -> Path:
        path = self._path(day.network, day.date)
        if path.exists():
            raise DuplicateDay(f"{day.network}/{day.date} already stored")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with tmp.open("w") as fh:
            fh.write(_dumps({"kind": "header", "schema": SCHEMA_VERSION,
                             "network": day.network, "date": day.date.isoformat()}))
            for address in sorted(day.activity.active):
                fh.write(_dumps({"kind": "active", "address": address}))
            for address in sorted(day.activity.discovered):
                fh.write(_dumps({"kind": "discovered", "address": address}))
            for ep in sorted(day.tables):
                fh.write(_dumps({
                    "kind": "table",
                    "endpoint": format_endpoint(ep),
                    "peers": [format_endpoint(e) for e in day.tables[ep]],
                }))
            for row in sorted(day.labels, key=lambda r: (r.date.isoformat(), r.address, r.label)):
                fh.write(_dumps({
                    "kind": "label", "date": row.date.isoformat(), "address": row.address,
                    "label": row.label, "rule": row.rule_fired,
                }))
            for rec in sorted(day.enrichment, key=lambda r: r.address):
                fh.write(_dumps({
                    "kind": "enrich", "address": rec.address, "country": rec.country,
                    "continent": rec.continent, "asn": rec.asn, "category": rec.category,
                }))
            fh.flush()
            os.fsync(fh.fileno())
        tmp.rename(path)  # seal
        return path

    def get_day(self, network: str, date: dt.date) -> StoredDay | None:
        path = self._path(network, date)
        if not path.exists():
            return None
        active: set[str] = set()
        discovered: set[str] = set()
        tables: dict[Endpoint, list[Endpoint]] = {}
        labels: list[NetworkLabel] = []
        enrichment: list[JoinedRecord] = []
        header = None
        for line in path.read_text().splitlines():
            doc = json.loads(line)
            kind = doc["kind"]
            if kind == "header":
                if doc["schema"] != SCHEMA_VERSION:
                    raise StoreError(f"unsupported schema {doc['schema']} in {path}")
                header = doc
            elif kind == "active":
                active.add(doc["address"])
            elif kind == "discovered":
                discovered.add(doc["address"])
            elif kind == "table":
                tables[parse_endpoint(doc["endpoint"])] = [parse_endpoint(e) for e in doc["peers"]]
            elif kind == "label":
                labels.append(NetworkLabel(
                    address=doc["address"], date=dt.date.fromisoformat(doc["date"]),
                    label=doc["label"], rule_fired=doc["rule"],
                ))
            elif kind == "enrich":
                enrichment.append(JoinedRecord(
                    address=doc["address"], country=doc["country"], continent=doc["continent"],
                    asn=doc["asn"], category=doc["category"],
                ))
            else:
                raise StoreError(f"unknown record kind {kind!r} in {path}")
        if header is None:
            raise StoreError(f"{path} has no header")
        activity = DailyActivity(network=network, date=date, active=active, discovered=discovered)
        return StoredDay(network=network, date=date, activity=activity,
                         tables=tables, labels=labels, enrichment=enrichment)

    def days(self, network: str) -> list[dt.date]:
        netdir = self.root / network
        if not netdir.is_dir():
            return []
        return sorted(dt.date.fromisoformat(p.stem) for p in netdir.glob("*.jsonl"))

    def networks(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def export_flat(self, network: str, out_path: str | Path) -> None:
        """One flat table for external analysis: date,address,active,label,
        country,continent,asn,category."""
        rows = ["date,address,active,label,country,continent,asn,category"]
        for date in self.days(network):
            day = self.get_day(network, date)
            label_by_addr = {row.address: row.label for row in day.labels}
            enrich_by_addr = {rec.address: rec for rec in day.enrichment}
            for address in sorted(day.activity.discovered | day.activity.active):
                rec = enrich_by_addr.get(address)
                rows.append(",".join((
                    date.isoformat(),
                    address,
                    "1" if address in day.activity.active else "0",
                    label_by_addr.get(address, ""),
                    rec.country if rec else "",
                    rec.continent if rec else "",
                    str(rec.asn) if rec and rec.asn is not None else "",
                    rec.category if rec else "",
                )))
        Path(out_path).write_text("\n".join(rows) + "\n")


def _dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True) + "\n"
