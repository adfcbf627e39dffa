"""Breadth-first network crawl over a pluggable discovery strategy.

Endpoints pop off a shared frontier, the strategy queries them (with
retries), newly learned peers join the frontier if unseen, and the crawl
halts at the fixpoint: every endpoint ever enqueued has been attempted.
Every response is recorded with provenance.
"""

from __future__ import annotations

import json
import time
from collections import deque
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .kademlia import NodeId
from .profiles import Endpoint, format_endpoint, parse_endpoint

KEY_ENDPOINT = "endpoint"
KEY_NODE_ID = "node_id"

KIND_OK = "ok"
KIND_TIMEOUT = "timeout"
KIND_ERROR = "error"


class CrawlError(Exception):
    pass


class AllBootstrapUnreachable(CrawlError):
    """Raised when not a single bootstrap endpoint answered."""


@dataclass(frozen=True)
class DiscoveredPeer:
    endpoint: Endpoint
    node_id: NodeId | None = None


@dataclass
class StrategyResult:
    kind: str
    peers: list[DiscoveredPeer] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


class DiscoveryStrategy(Protocol):
    """One implementation per family; must be deterministic given a
    deterministic transport so simnet crawls replay."""

    key_mode: str

    def query(self, endpoint: Endpoint, timeout: float = 20.0) -> StrategyResult: ...


def dedupe_key(endpoint: Endpoint, node_id: NodeId | None = None, key_mode: str = KEY_ENDPOINT):
    """Bitcoin-family peers are their ip:port; DHT-family peers are their
    node id when one is known."""
    if key_mode == KEY_NODE_ID and node_id is not None:
        return ("id", node_id.value)
    return ("ep", endpoint[0], endpoint[1])


@dataclass
class CrawlConfig:
    network: str
    bootstrap: list[Endpoint]
    max_attempts: int = 10
    attempt_timeout: float = 20.0
    parallelism: int = 128
    retry_backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise CrawlError("max_attempts must be >= 1")
        if self.parallelism < 1:
            raise CrawlError("parallelism must be >= 1")


@dataclass
class PeerRecord:
    endpoint: Endpoint
    node_id: NodeId | None = None
    responded: bool = False
    attempts: int = 0
    discovered_from: Endpoint | None = None
    answered_port: int | None = None

    @property
    def advertised_port(self) -> int:
        return self.endpoint[1]


@dataclass
class CrawlSnapshot:
    network: str
    started: float
    finished: float
    records: dict[Endpoint, PeerRecord] = field(default_factory=dict)
    tables: dict[Endpoint, list[Endpoint]] = field(default_factory=dict)
    metadata: dict[Endpoint, dict] = field(default_factory=dict)

    def responded(self) -> list[Endpoint]:
        return sorted(ep for ep, r in self.records.items() if r.responded)

    def discovered_only(self) -> list[Endpoint]:
        return sorted(ep for ep, r in self.records.items() if not r.responded)

    def validate(self) -> None:
        for src, table in self.tables.items():
            if src not in self.records:
                raise CrawlError(f"table source {src} missing from records")
            for ep in table:
                if ep not in self.records:
                    raise CrawlError(f"table entry {ep} missing from records")

    def to_json(self) -> str:
        doc = {
            "network": self.network,
            "started": self.started,
            "finished": self.finished,
            "records": {
                format_endpoint(ep): {
                    "node_id": r.node_id.hex if r.node_id else None,
                    "responded": r.responded,
                    "attempts": r.attempts,
                    "discovered_from": format_endpoint(r.discovered_from) if r.discovered_from else None,
                    "answered_port": r.answered_port,
                }
                for ep, r in sorted(self.records.items())
            },
            "tables": {
                format_endpoint(ep): [format_endpoint(e) for e in table]
                for ep, table in sorted(self.tables.items())
            },
            "metadata": {
                format_endpoint(ep): meta for ep, meta in sorted(self.metadata.items())
            },
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CrawlSnapshot":
        doc = json.loads(text)
        snap = cls(network=doc["network"], started=doc["started"], finished=doc["finished"])
        for ep_s, rec in doc["records"].items():
            ep = parse_endpoint(ep_s)
            snap.records[ep] = PeerRecord(
                endpoint=ep,
                node_id=NodeId.from_hex(rec["node_id"]) if rec["node_id"] else None,
                responded=rec["responded"],
                attempts=rec["attempts"],
                discovered_from=parse_endpoint(rec["discovered_from"]) if rec["discovered_from"] else None,
                answered_port=rec["answered_port"],
            )
        snap.tables = {
            parse_endpoint(ep_s): [parse_endpoint(e) for e in table]
            for ep_s, table in doc["tables"].items()
        }
        snap.metadata = {parse_endpoint(ep_s): meta for ep_s, meta in doc["metadata"].items()}
        return snap

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CrawlSnapshot":
        return cls.from_json(Path(path).read_text())


def crawl(
    config: CrawlConfig,
    strategy: DiscoveryStrategy,
    clock: Callable[[], float] = time.time,
    sleep: Callable[[float], None] | None = time.sleep,
    status: Callable[[dict], None] | None = None,
) -> CrawlSnapshot:
    """Run the crawl to its fixpoint and return a consistent snapshot.

    Unresponsive endpoints are attempted exactly max_attempts times, each
    bounded by attempt_timeout, with retry_backoff between tries. `clock`
    and `sleep` are injectable so simulated runs stay logical-time only.
    `status`, when set, receives progress counters after every settled
    endpoint: {"queued", "attempted", "responded", "discovered"}.
    """
    if not config.bootstrap:
        raise CrawlError("bootstrap must be non-empty")
    snapshot = CrawlSnapshot(network=config.network, started=clock(), finished=0.0)
    frontier: deque[DiscoveredPeer] = deque()
    claimed: set = set()
    attempted = 0
    responded = 0

    def admit(peer: DiscoveredPeer, src: Endpoint | None) -> None:
        if peer.endpoint not in snapshot.records:
            snapshot.records[peer.endpoint] = PeerRecord(
                endpoint=peer.endpoint, node_id=peer.node_id, discovered_from=src
            )
        key = dedupe_key(peer.endpoint, peer.node_id, strategy.key_mode)
        if key in claimed:
            return
        claimed.add(key)
        frontier.append(peer)

    for ep in config.bootstrap:
        admit(DiscoveredPeer(ep), None)

    def attempt(peer: DiscoveredPeer) -> tuple[DiscoveredPeer, StrategyResult, int]:
        result = StrategyResult(kind=KIND_TIMEOUT)
        for n in range(1, config.max_attempts + 1):
            result = strategy.query(peer.endpoint, timeout=config.attempt_timeout)
            if result.kind == KIND_OK:
                return peer, result, n
            if n < config.max_attempts and sleep is not None and config.retry_backoff > 0:
                sleep(config.retry_backoff)
        return peer, result, config.max_attempts

    def settle(peer: DiscoveredPeer, result: StrategyResult, attempts: int) -> None:
        nonlocal attempted, responded
        record = snapshot.records[peer.endpoint]
        record.attempts = attempts
        attempted += 1
        if result.kind == KIND_OK:
            responded += 1
            record.responded = True
            record.answered_port = peer.endpoint[1]
            snapshot.tables[peer.endpoint] = [p.endpoint for p in result.peers]
            if result.metadata:
                snapshot.metadata[peer.endpoint] = result.metadata
            for found in result.peers:
                admit(found, peer.endpoint)
        if status is not None:
            status({"queued": len(frontier), "attempted": attempted,
                    "responded": responded, "discovered": len(snapshot.records)})

    if config.parallelism == 1:
        while frontier:
            settle(*attempt(frontier.popleft()))
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            in_flight = set()
            while frontier or in_flight:
                while frontier and len(in_flight) < config.parallelism:
                    in_flight.add(pool.submit(attempt, frontier.popleft()))
                done, in_flight = wait(in_flight, return_when=FIRST_COMPLETED)
                for future in done:
                    settle(*future.result())

    snapshot.finished = clock()
    snapshot.validate()
    if not any(snapshot.records[ep].responded for ep in config.bootstrap if ep in snapshot.records):
        raise AllBootstrapUnreachable(f"none of {len(config.bootstrap)} bootstrap endpoints answered")
    return snapshot


def next_bootstrap(snapshot: CrawlSnapshot, seed: int = 0, sample_size: int = 100) -> list[Endpoint]:
    """Seed for a re-crawl: a random sample of the previous responded set."""
    import random

    responded = snapshot.responded()
    if not responded:
        return []
    rng = random.Random(seed)
    return sorted(rng.sample(responded, min(sample_size, len(responded))))
