"""Deterministic in-process peer network: the ground-truth test oracle.

Builds a synthetic network of peers speaking one discovery family
(bitcoin-style getaddr, kademlia FIND_NODE, RPC peer lists, or stellar-style
sampling) with configurable reachable fraction, response caching, and
scripted daily churn. Identical SimConfig means identical behavior: every
random draw comes from an RNG derived from (seed, purpose), never from
wall-clock or call order.

Unreachable peers model NAT'd nodes: they appear in other peers' tables but
never answer. Departed peers linger in tables as stale entries. Decoys are
plain TCP echo services squatting on the default port.

The clock is logical hours, advanced explicitly; nothing sleeps.

Known fidelity gap: getaddr responses sample uniformly over the new and
tried tables combined, whereas real clients bias the draw by table size and
entry freshness.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from . import kademlia, wire
from .kademlia import NodeId, PeerEntry, RoutingTable
from .profiles import (
    BUILTIN_PROFILES,
    FAMILY_BITCOIN,
    FAMILY_KADEMLIA,
    FAMILY_RPC,
    FAMILY_STELLAR,
    Endpoint,
    NetworkProfile,
    format_endpoint,
)

SIM_FAMILIES = (FAMILY_BITCOIN, FAMILY_KADEMLIA, FAMILY_RPC, FAMILY_STELLAR)


class SimError(Exception):
    pass


def derive_rng(*parts) -> random.Random:
    """RNG seeded from a stable hash of the parts (never Python's hash())."""
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    if lam > 500:  # normal approximation; Knuth's product underflows
        return max(0, round(rng.gauss(lam, math.sqrt(lam))))
    threshold = math.exp(-lam)
    count, product = 0, rng.random()
    while product > threshold:
        count += 1
        product *= rng.random()
    return count


@dataclass(frozen=True)
class ChurnConfig:
    leave_prob: float = 0.0
    arrivals_per_day: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    peer_count: int = 100
    reachable_fraction: float = 1.0
    family: str = FAMILY_BITCOIN
    profile_name: str = "bitcoin"
    table_fill: int = 64
    new_capacity: int = 66560
    tried_capacity: int = 16384
    k: int = 16
    bucket_count: int = 256
    addr_cache_ttl: int = 24  # simulated hours
    churn: ChurnConfig = field(default_factory=ChurnConfig)
    decoy_count: int = 0
    stellar_sample: int = 50
    port: int | None = None
    client_mix: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.peer_count < 1:
            raise SimError("peer_count must be >= 1")
        if not 0.0 <= self.reachable_fraction <= 1.0:
            raise SimError("reachable_fraction must be in [0, 1]")
        if self.family not in SIM_FAMILIES:
            raise SimError(f"unsupported sim family {self.family!r}")


@dataclass
class ChurnReport:
    day: int
    joined: list[Endpoint]
    left: list[Endpoint]


class SimPeer:
    def __init__(
        self,
        endpoint: Endpoint,
        node_id: NodeId | None,
        reachable: bool,
        wire_profile: NetworkProfile,
        nonce: int,
    ):
        self.endpoint = endpoint
        self.node_id = node_id
        self.reachable = reachable
        self.departed = False
        self.wire_profile = wire_profile
        self.nonce = nonce
        self.metadata: dict[str, object] = {}
        # family-specific knowledge
        self.new_table: list[Endpoint] = []
        self.tried_table: list[Endpoint] = []
        self.routing: RoutingTable | None = None
        self.conn_cache: list[PeerEntry] = []
        self._known: set = set()
        self.addr_cache: dict[str, tuple[int, bytes]] = {}

    @property
    def host(self) -> str:
        return self.endpoint[0]

    def table_endpoints(self) -> list[Endpoint]:
        """Ground-truth view of everything this peer's table knows."""
        if self.routing is not None:
            return [e.endpoint for e in self.routing.entries()]
        if self.conn_cache:
            return [e.endpoint for e in self.conn_cache]
        return list(self.new_table) + list(self.tried_table)


class SimNetwork:
    def __init__(self, config: SimConfig, profile: NetworkProfile):
        self.config = config
        self.profile = profile
        self.peers: dict[Endpoint, SimPeer] = {}
        self.decoys: set[Endpoint] = set()
        self.bootstrap: list[Endpoint] = []
        self.hour = 0
        self._ip_counter = 0

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, config: SimConfig, profile: NetworkProfile | None = None) -> "SimNetwork":
        """Build the knowledge graph.

        Reachable peers form a chain in knowledge space (so the whole
        reachable set is crawlable from the bootstrap peer) and every peer,
        reachable or not, is planted in at least one reachable peer's table.
        The rest of each table is random fill.
        """
        if profile is None:
            profile = BUILTIN_PROFILES[config.profile_name]
        if config.family != profile.family:
            profile = dataclasses.replace(profile, family=config.family, magic=profile.magic)
        net = cls(config, profile)
        rng = derive_rng(config.seed, "build")
        n = config.peer_count

        for i in range(n):
            net._spawn_peer(rng, reachable=False)
        endpoints = sorted(net.peers)
        reach_count = round(n * config.reachable_fraction)
        chosen = set(rng.sample(range(n), reach_count))
        if reach_count > 0 and 0 not in chosen:
            chosen.discard(max(chosen))
            chosen.add(0)
        for idx in chosen:
            net.peers[endpoints[idx]].reachable = True
        net.bootstrap = [endpoints[0]]

        reachable = [ep for ep in endpoints if net.peers[ep].reachable]
        for i in range(len(reachable) - 1):
            net._insert_known(net.peers[reachable[i]], net.peers[reachable[i + 1]])
        if reachable:
            for ep in endpoints:
                if ep == reachable[0]:
                    continue
                for attempt in range(8):
                    host_peer = net.peers[reachable[rng.randrange(len(reachable))]]
                    if host_peer.endpoint != ep and net._insert_known(host_peer, net.peers[ep]):
                        break
        for ep in endpoints:
            net._random_fill(rng, net.peers[ep], endpoints)

        for _ in range(config.decoy_count):
            net.decoys.add(net._next_endpoint())
        return net

    def _next_endpoint(self) -> Endpoint:
        i = self._ip_counter
        self._ip_counter += 1
        if i >= 1 << 24:
            raise SimError("simnet address space exhausted")
        host = f"10.{(i >> 16) & 255}.{(i >> 8) & 255}.{i & 255}"
        port = self.config.port or (self.profile.default_ports[0] if self.profile.default_ports else 18444)
        return (host, port)

    def _spawn_peer(self, rng: random.Random, reachable: bool) -> SimPeer:
        endpoint = self._next_endpoint()
        node_id = None if self.config.family == FAMILY_BITCOIN else NodeId.random(rng)
        wire_profile = self.profile
        if self.config.client_mix:
            agents = [a for a, _ in self.config.client_mix]
            weights = [w for _, w in self.config.client_mix]
            agent = rng.choices(agents, weights=weights, k=1)[0]
            wire_profile = dataclasses.replace(self.profile, user_agent=agent)
        peer = SimPeer(
            endpoint=endpoint,
            node_id=node_id,
            reachable=reachable,
            wire_profile=wire_profile,
            nonce=rng.getrandbits(64),
        )
        peer.metadata = {"client": wire_profile.user_agent}
        if self.config.family == FAMILY_KADEMLIA:
            peer.routing = RoutingTable(peer.node_id, k=self.config.k, bucket_count=self.config.bucket_count)
        self.peers[endpoint] = peer
        return peer

    def _insert_known(self, host_peer: SimPeer, entry_peer: SimPeer) -> bool:
        if entry_peer.endpoint == host_peer.endpoint:
            return False
        if entry_peer.endpoint in host_peer._known:
            return True
        family = self.config.family
        if family == FAMILY_KADEMLIA:
            ok = host_peer.routing.add(PeerEntry(entry_peer.node_id, entry_peer.endpoint))
            if not ok:
                return False
        elif family == FAMILY_BITCOIN:
            if entry_peer.reachable and len(host_peer.tried_table) < self.config.tried_capacity:
                host_peer.tried_table.append(entry_peer.endpoint)
            elif len(host_peer.new_table) < self.config.new_capacity:
                host_peer.new_table.append(entry_peer.endpoint)
            else:
                return False
        else:  # rpc / stellar connection caches
            host_peer.conn_cache.append(PeerEntry(entry_peer.node_id, entry_peer.endpoint))
        host_peer._known.add(entry_peer.endpoint)
        return True

    def _random_fill(self, rng: random.Random, peer: SimPeer, endpoints: list[Endpoint]) -> None:
        want = self.config.table_fill - len(peer._known)
        if want <= 0 or len(endpoints) <= 1:
            return
        candidates = [ep for ep in endpoints if ep != peer.endpoint and ep not in peer._known]
        rng.shuffle(candidates)
        added = 0
        for ep in candidates:
            if added >= want:
                break
            if self._insert_known(peer, self.peers[ep]):
                added += 1

    # -- ground truth -------------------------------------------------------

    def all_endpoints(self, include_departed: bool = False) -> list[Endpoint]:
        return sorted(
            ep for ep, p in self.peers.items() if include_departed or not p.departed
        )

    def reachable_endpoints(self) -> list[Endpoint]:
        return sorted(ep for ep, p in self.peers.items() if p.reachable and not p.departed)

    def active_hosts(self) -> set[str]:
        return {ep[0] for ep in self.reachable_endpoints()}

    def tables(self) -> dict[Endpoint, list[Endpoint]]:
        return {ep: p.table_endpoints() for ep, p in self.peers.items()}

    def table_known(self) -> set[Endpoint]:
        """Union of every table plus the bootstrap set."""
        known: set[Endpoint] = set(self.bootstrap)
        for peer in self.peers.values():
            known.update(peer.table_endpoints())
        return known

    def seed_bitcoin_table(self, endpoint: Endpoint, entries: list[Endpoint]) -> None:
        peer = self.peers[endpoint]
        peer.new_table = list(entries)
        peer.tried_table = []
        peer._known = set(entries)
        peer.addr_cache.clear()

    def seed_routing_table(self, endpoint: Endpoint, table: RoutingTable) -> None:
        peer = self.peers[endpoint]
        peer.routing = table
        peer._known = {e.endpoint for e in table.entries()}

    def dump_ground_truth(self, path: str | Path) -> None:
        doc = {
            "config_seed": self.config.seed,
            "family": self.config.family,
            "hour": self.hour,
            "bootstrap": [format_endpoint(ep) for ep in self.bootstrap],
            "decoys": sorted(format_endpoint(ep) for ep in self.decoys),
            "peers": [
                {
                    "endpoint": format_endpoint(ep),
                    "node_id": p.node_id.hex if p.node_id else None,
                    "reachable": p.reachable,
                    "departed": p.departed,
                    "table": sorted(format_endpoint(e) for e in p.table_endpoints()),
                }
                for ep, p in sorted(self.peers.items())
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    # -- serving ------------------------------------------------------------

    def tcp_connect(self, endpoint: Endpoint) -> bool:
        if endpoint in self.decoys:
            return True
        peer = self.peers.get(endpoint)
        return bool(peer and peer.reachable and not peer.departed)

    def serve(self, query: bytes, src: str, dst: Endpoint) -> bytes | None:
        """One request/response round trip. Silence (None) models
        unreachable, departed, or uninterested peers."""
        if dst in self.decoys:
            return query  # plain echo service
        peer = self.peers.get(dst)
        if peer is None or not peer.reachable or peer.departed:
            return None
        if self.config.family == FAMILY_BITCOIN:
            return self._serve_bitcoin(peer, src, query)
        return self._serve_json(peer, src, query)

    def _serve_bitcoin(self, peer: SimPeer, src: str, query: bytes) -> bytes | None:
        try:
            msg = wire.decode_message(peer.wire_profile, query)
        except wire.WireError:
            return None
        prof = peer.wire_profile
        if msg.command == wire.CMD_VERSION:
            payload = wire.build_version_payload(
                prof,
                self_endpoint=peer.endpoint,
                remote_endpoint=(src, 0),
                nonce=peer.nonce,
                timestamp=self.hour * 3600,
            )
            return wire.encode_message(prof, wire.CMD_VERSION, payload)
        if msg.command == wire.CMD_VERACK:
            return wire.encode_message(prof, wire.CMD_VERACK)
        if msg.command == wire.CMD_PING:
            return wire.encode_message(prof, wire.CMD_PONG, msg.payload)
        if msg.command == wire.CMD_GETADDR:
            return wire.encode_message(prof, wire.CMD_ADDR, self._addr_payload(peer, src))
        return None

    def _addr_payload(self, peer: SimPeer, src: str) -> bytes:
        cached = peer.addr_cache.get(src)
        if cached is not None and self.hour < cached[0]:
            return cached[1]
        pool = list(peer.new_table) + list(peer.tried_table)
        rng = derive_rng(self.config.seed, "addr", peer.endpoint, src, self.hour)
        sample = rng.sample(pool, min(wire.MAX_ADDR_ENTRIES, len(pool)))
        entries = [
            wire.AddrEntry(address=ep[0], port=ep[1], last_seen=self.hour * 3600)
            for ep in sample
        ]
        payload = wire.encode_addr_payload(entries)
        peer.addr_cache[src] = (self.hour + self.config.addr_cache_ttl, payload)
        return payload

    def _serve_json(self, peer: SimPeer, src: str, query: bytes) -> bytes | None:
        family = self.config.family
        if family == FAMILY_KADEMLIA:
            try:
                fn = kademlia.decode_find_node(query)
            except kademlia.KademliaError:
                fn = None
            if fn is not None:
                return kademlia.encode_nodes(kademlia.answer_find_node(peer.routing, fn))
        try:
            doc = json.loads(query)
            op = doc.get("op")
        except (ValueError, AttributeError):
            return None
        if op == "handshake":
            ack = {"op": "handshake_ack"}
            if peer.node_id is not None:
                ack["node_id"] = peer.node_id.hex
            ack.update(peer.metadata)
            return json.dumps(ack, sort_keys=True).encode()
        if op == "health" and family in (FAMILY_RPC, FAMILY_STELLAR):
            return json.dumps({"op": "health_ack"}).encode()
        if op == "peers" and family in (FAMILY_RPC, FAMILY_STELLAR):
            entries = list(peer.conn_cache)
            if family == FAMILY_STELLAR and len(entries) > self.config.stellar_sample:
                rng = derive_rng(self.config.seed, "stellar", peer.endpoint, src, self.hour)
                entries = rng.sample(entries, self.config.stellar_sample)
            return json.dumps(
                {
                    "op": "peers_ack",
                    "peers": [[e.endpoint[0], e.endpoint[1], e.node_id.hex if e.node_id else None] for e in entries],
                },
                sort_keys=True,
            ).encode()
        return None

    # -- clock and churn ----------------------------------------------------

    @property
    def day(self) -> int:
        return self.hour // 24

    def advance_hours(self, hours: int) -> None:
        if hours < 0:
            raise SimError("clock cannot run backwards")
        self.hour += hours

    def advance_day(self) -> ChurnReport:
        """Advance to the next day boundary and apply scripted churn:
        independent leaves at the configured probability, Poisson arrivals.
        Departed peers stay in tables as stale entries."""
        self.advance_hours(24 - self.hour % 24)
        day = self.day
        churn = self.config.churn
        rng = derive_rng(self.config.seed, "churn", day)
        left: list[Endpoint] = []
        for ep in self.all_endpoints():
            if rng.random() < churn.leave_prob:
                self.peers[ep].departed = True
                left.append(ep)
        joined: list[Endpoint] = []
        alive = [ep for ep in self.all_endpoints()]
        reachable_alive = [ep for ep in alive if self.peers[ep].reachable]
        for _ in range(_poisson(rng, churn.arrivals_per_day)):
            peer = self._spawn_peer(rng, reachable=rng.random() < self.config.reachable_fraction)
            joined.append(peer.endpoint)
            if reachable_alive:
                for _ in range(3):  # plant the newcomer in a few live tables
                    host = self.peers[reachable_alive[rng.randrange(len(reachable_alive))]]
                    self._insert_known(host, peer)
            fill_from = [ep for ep in alive if ep != peer.endpoint]
            rng.shuffle(fill_from)
            for ep in fill_from[: self.config.table_fill]:
                self._insert_known(peer, self.peers[ep])
        return ChurnReport(day=day, joined=joined, left=left)
