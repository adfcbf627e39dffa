"""Discovery strategies: one per family, all satisfying the crawl contract.

Each strategy turns one endpoint into (peers learned, handshake metadata,
response kind) using a transport. Nonces and other random material derive
from (seed, endpoint) so results are independent of query order.
"""

from __future__ import annotations

import json

from . import kademlia, wire
from .crawl import (
    KEY_ENDPOINT,
    KEY_NODE_ID,
    KIND_ERROR,
    KIND_OK,
    KIND_TIMEOUT,
    DiscoveredPeer,
    StrategyResult,
)
from .kademlia import NodeId, PeerEntry, PreimagePool
from .profiles import (
    FAMILY_BITCOIN,
    FAMILY_KADEMLIA,
    FAMILY_RPC,
    FAMILY_STELLAR,
    Endpoint,
    NetworkProfile,
)
from .simnet import derive_rng


class BitcoinGetaddrStrategy:
    """Version handshake for metadata, then getaddr for up to 1000 peers."""

    key_mode = KEY_ENDPOINT

    def __init__(self, profile: NetworkProfile, transport, seed: int = 0,
                 self_endpoint: Endpoint = ("0.0.0.0", 0)):
        self.profile = profile
        self.transport = transport
        self.seed = seed
        self.self_endpoint = self_endpoint

    def _nonce(self, endpoint: Endpoint) -> int:
        return derive_rng(self.seed, "nonce", endpoint).getrandbits(64)

    def query(self, endpoint: Endpoint, timeout: float = 20.0) -> StrategyResult:
        nonce = self._nonce(endpoint)
        version_frame = wire.encode_message(
            self.profile,
            wire.CMD_VERSION,
            wire.build_version_payload(self.profile, self.self_endpoint, endpoint, nonce),
        )
        raw = self.transport.send(version_frame, endpoint, timeout)
        if raw is None:
            return StrategyResult(kind=KIND_TIMEOUT)
        try:
            msg = next(iter(wire.iter_messages(self.profile, raw)))
            if msg.command != wire.CMD_VERSION:
                return StrategyResult(kind=KIND_ERROR)
            info = wire.parse_version_payload(msg.payload)
        except wire.WireError:
            return StrategyResult(kind=KIND_ERROR)
        if info.nonce == nonce:
            return StrategyResult(kind=KIND_ERROR)  # talking to our own echo
        metadata = {
            "client": info.user_agent,
            "protocol_version": info.protocol_version,
            "services": info.services,
        }
        peers: list[DiscoveredPeer] = []
        raw = self.transport.send(wire.encode_message(self.profile, wire.CMD_GETADDR), endpoint, timeout)
        if raw is not None:
            try:
                msg = wire.decode_message(self.profile, raw)
                if msg.command == wire.CMD_ADDR:
                    for entry in wire.parse_addr_payload(msg.payload):
                        peers.append(DiscoveredPeer(endpoint=(entry.address, entry.port)))
            except wire.WireError:
                pass  # handshake succeeded; a bad addr just yields no peers
        return StrategyResult(kind=KIND_OK, peers=peers, metadata=metadata)


def _handshake(transport, endpoint: Endpoint, timeout: float) -> dict | None:
    raw = transport.send(json.dumps({"op": "handshake"}).encode(), endpoint, timeout)
    if raw is None:
        return None
    try:
        doc = json.loads(raw)
    except ValueError:
        return None
    if doc.get("op") != "handshake_ack":
        return None
    return {k: v for k, v in doc.items() if k != "op"}


class KademliaEnumerateStrategy:
    """Handshake to learn the remote's node id, then exhaust its buckets."""

    key_mode = KEY_NODE_ID

    def __init__(self, dialect, transport, depth: int = 16, pool: PreimagePool | None = None):
        self.dialect = kademlia.get_dialect(dialect)
        self.transport = transport
        self.depth = depth
        if pool is None and self.dialect.hash_name is not None:
            pool = PreimagePool(self.dialect.hash_name, seed=0)
        self.pool = pool

    def query(self, endpoint: Endpoint, timeout: float = 20.0) -> StrategyResult:
        ack = _handshake(self.transport, endpoint, timeout)
        if ack is None:
            return StrategyResult(kind=KIND_TIMEOUT)
        node_id_hex = ack.pop("node_id", None)
        if node_id_hex is None:
            return StrategyResult(kind=KIND_ERROR)
        remote = PeerEntry(NodeId.from_hex(node_id_hex), endpoint)
        result = kademlia.enumerate_remote(
            self.transport, self.dialect, remote, self.depth, pool=self.pool, timeout=timeout
        )
        ack["enumeration_complete"] = result.complete
        peers = [DiscoveredPeer(endpoint=e.endpoint, node_id=e.node_id) for e in result.peers]
        return StrategyResult(kind=KIND_OK, peers=peers, metadata=ack)


class _JsonPeerListStrategy:
    """Shared shape for RPC-style and stellar-style single-response lists."""

    key_mode = KEY_ENDPOINT

    def __init__(self, transport):
        self.transport = transport

    def query(self, endpoint: Endpoint, timeout: float = 20.0) -> StrategyResult:
        metadata = _handshake(self.transport, endpoint, timeout) or {}
        metadata.pop("node_id", None)
        raw = self.transport.send(json.dumps({"op": "peers"}).encode(), endpoint, timeout)
        if raw is None:
            return StrategyResult(kind=KIND_TIMEOUT)
        try:
            doc = json.loads(raw)
            if doc.get("op") != "peers_ack":
                return StrategyResult(kind=KIND_ERROR)
            peers = [
                DiscoveredPeer(
                    endpoint=(host, int(port)),
                    node_id=NodeId.from_hex(id_hex) if id_hex else None,
                )
                for host, port, id_hex in doc["peers"]
            ]
        except (ValueError, KeyError, TypeError, kademlia.KademliaError):
            return StrategyResult(kind=KIND_ERROR)
        return StrategyResult(kind=KIND_OK, peers=peers, metadata=metadata)


class RpcPeerListStrategy(_JsonPeerListStrategy):
    """Built-in RPC that returns the node's current active connections."""

    key_mode = KEY_NODE_ID


class StellarStyleStrategy(_JsonPeerListStrategy):
    """Single discovery response per node, recorded against its IP."""

    key_mode = KEY_ENDPOINT


def strategy_for(profile: NetworkProfile, transport, seed: int = 0,
                 pool: PreimagePool | None = None):
    if profile.family == FAMILY_BITCOIN:
        return BitcoinGetaddrStrategy(profile, transport, seed=seed)
    if profile.family == FAMILY_KADEMLIA:
        dialect = profile.dht_dialect or "hashed-target-keccak"
        return KademliaEnumerateStrategy(dialect, transport, depth=profile.dht_depth, pool=pool)
    if profile.family == FAMILY_RPC:
        return RpcPeerListStrategy(transport)
    if profile.family == FAMILY_STELLAR:
        return StellarStyleStrategy(transport)
    raise ValueError(f"no crawl strategy for family {profile.family!r}")
