"""Hourly liveness probes and the daily "active" determination.

Three check types: a TCP connect, an in-protocol ping (version + ping/pong
for the bitcoin family, a health call for RPC-style nodes), and a crawl
ping (the discovery query itself succeeding). Each discovered address is
probed on its advertised port plus the profile's default ports. A node
counts as active for the day if it responded to any check at any hour, or
answered the crawl itself.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

from . import wire
from .crawl import KIND_OK, CrawlSnapshot, DiscoveryStrategy
from .profiles import FAMILY_BITCOIN, Endpoint, NetworkProfile
from .simnet import derive_rng

KIND_TCP = "tcp"
KIND_PROTOCOL = "protocol"
KIND_CRAWL = "crawl"
PROBE_KINDS = (KIND_TCP, KIND_PROTOCOL, KIND_CRAWL)

RESPONDED = "responded"
TIMEOUT = "timeout"
REFUSED = "refused"
WRONG_PROTOCOL = "wrong-protocol"

# which checks make sense per family, following what each network exposes
DEFAULT_KINDS = {
    "bitcoin": (KIND_TCP, KIND_PROTOCOL),
    "kademlia": (KIND_TCP, KIND_CRAWL),
    "rpc": (KIND_TCP, KIND_PROTOCOL, KIND_CRAWL),
    "stellar": (KIND_TCP, KIND_CRAWL),
    "cardano": (KIND_TCP,),
}


@dataclass(frozen=True)
class ProbeResult:
    endpoint: Endpoint
    probe_kind: str
    port_tested: int
    hour: int
    outcome: str


@dataclass
class DailyActivity:
    network: str
    date: dt.date
    active: set[str]
    discovered: set[str]


class LivenessProber:
    def __init__(
        self,
        profile: NetworkProfile,
        transport,
        strategy: DiscoveryStrategy | None = None,
        seed: int = 0,
        timeout: float = 5.0,
        self_endpoint: Endpoint = ("0.0.0.0", 0),
    ):
        self.profile = profile
        self.transport = transport
        self.strategy = strategy
        self.seed = seed
        self.timeout = timeout
        self.self_endpoint = self_endpoint

    def probe(self, endpoint: Endpoint, kinds=None, hour: int = 0) -> list[ProbeResult]:
        """One result per (kind, port); failures are outcomes, not errors."""
        if kinds is None:
            kinds = DEFAULT_KINDS.get(self.profile.family, (KIND_TCP,))
        ports = [endpoint[1]]
        for p in self.profile.default_ports:
            if p not in ports:
                ports.append(p)
        results = []
        for port in ports:
            target = (endpoint[0], port)
            for kind in kinds:
                outcome = self._check(kind, target)
                results.append(
                    ProbeResult(endpoint=endpoint, probe_kind=kind, port_tested=port, hour=hour, outcome=outcome)
                )
        return results

    def _check(self, kind: str, target: Endpoint) -> str:
        if kind == KIND_TCP:
            return RESPONDED if self.transport.tcp_check(target, self.timeout) else TIMEOUT
        if kind == KIND_PROTOCOL:
            if self.profile.family == FAMILY_BITCOIN:
                return self._bitcoin_ping(target)
            return self._health_ping(target)
        if kind == KIND_CRAWL:
            if self.strategy is None:
                return TIMEOUT
            result = self.strategy.query(target, timeout=self.timeout)
            return RESPONDED if result.kind == KIND_OK else TIMEOUT
        raise ValueError(f"unknown probe kind {kind!r}")

    def _bitcoin_ping(self, target: Endpoint) -> str:
        """Version handshake then ping/pong; an echo of our own bytes (same
        nonce back) is a non-protocol service on the port."""
        rng = derive_rng(self.seed, "probe", target)
        nonce = rng.getrandbits(64)
        version = wire.encode_message(
            self.profile,
            wire.CMD_VERSION,
            wire.build_version_payload(self.profile, self.self_endpoint, target, nonce),
        )
        raw = self.transport.send(version, target, self.timeout)
        if raw is None:
            return TIMEOUT
        try:
            msg = next(iter(wire.iter_messages(self.profile, raw)))
            if msg.command != wire.CMD_VERSION:
                return WRONG_PROTOCOL
            if wire.parse_version_payload(msg.payload).nonce == nonce:
                return WRONG_PROTOCOL
        except wire.WireError:
            return WRONG_PROTOCOL
        ping_nonce = rng.getrandbits(64)
        raw = self.transport.send(
            wire.encode_message(self.profile, wire.CMD_PING, wire.encode_ping_payload(ping_nonce)),
            target,
            self.timeout,
        )
        if raw is None:
            return TIMEOUT
        try:
            msg = wire.decode_message(self.profile, raw)
            if msg.command == wire.CMD_PONG and wire.parse_ping_payload(msg.payload) == ping_nonce:
                return RESPONDED
        except wire.WireError:
            pass
        return WRONG_PROTOCOL

    def _health_ping(self, target: Endpoint) -> str:
        raw = self.transport.send(json.dumps({"op": "health"}).encode(), target, self.timeout)
        if raw is None:
            return TIMEOUT
        try:
            if json.loads(raw).get("op") == "health_ack":
                return RESPONDED
        except ValueError:
            pass
        return WRONG_PROTOCOL


def fold_active(results: list[ProbeResult], snapshot: CrawlSnapshot, date: dt.date) -> DailyActivity:
    """Active = answered any probe that day, unioned with crawl responders."""
    active = {r.endpoint[0] for r in results if r.outcome == RESPONDED}
    discovered = {r.endpoint[0] for r in results}
    for ep, record in snapshot.records.items():
        discovered.add(ep[0])
        if record.responded:
            active.add(ep[0])
    for table in snapshot.tables.values():
        discovered.update(ep[0] for ep in table)
    return DailyActivity(network=snapshot.network, date=date, active=active, discovered=discovered)


def save_probe_results(path: str | Path, network: str, results: list[ProbeResult]) -> None:
    """Line-delimited: hour, network, address, port, kind, outcome."""
    lines = [
        f"{r.hour},{network},{r.endpoint[0]},{r.port_tested},{r.probe_kind},{r.outcome}"
        for r in results
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_probe_results(path: str | Path) -> list[ProbeResult]:
    results = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        hour_s, _network, address, port_s, kind, outcome = line.split(",", 5)
        port = int(port_s)
        results.append(
            ProbeResult(
                endpoint=(address, port),
                probe_kind=kind,
                port_tested=port,
                hour=int(hour_s),
                outcome=outcome,
            )
        )
    return results
