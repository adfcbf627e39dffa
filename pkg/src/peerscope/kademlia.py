"""Kademlia identity space, k-bucket tables, and FIND_NODE dialects.

Three dialects of FIND_NODE are modeled:

  * hashed-target-keccak  — the query carries a key whose Keccak-256 hash is
                            the lookup target (discv4 style), 16 per response
  * explicit-distance     — the query names a bucket distance directly
                            (discv5 style), 16 per response
  * hashed-target-sha256  — key hashed with SHA-256 (libp2p style), 20 per
                            response

Enumerating a remote's whole table with a hashed dialect requires crafting
keys whose hashes land in each target bucket; the PreimagePool caches every
(key, hash) pair ever generated, indexed by hash prefix, so crafts against
new remotes reuse earlier work.

Queries and responses travel as bytes through a transport with the contract
``send(payload, remote, timeout) -> bytes | None`` (None means no answer).
Live discv4/discv5 packet formats are out of scope; the byte encoding here
is the simulator's.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
from dataclasses import dataclass

from ._keccak import keccak256, keccak256_many
from .profiles import Endpoint

ID_BITS = 256
DEFAULT_K = 16
DEFAULT_MAX_CRAFTED_DEPTH = 16
DEFAULT_CRAFT_BUDGET = 1 << 20

# batches only pay off once the expected search is long
_BATCH_THRESHOLD = 256
_MAX_BATCH = 4096


class KademliaError(Exception):
    pass


class BucketTooDeep(KademliaError):
    """Requested bucket is deeper than the configured crafting budget allows."""


class CraftUnsound(KademliaError):
    """A crafted key failed its post-craft bucket check. Should never happen."""


@dataclass(frozen=True, order=True)
class NodeId:
    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value < (1 << ID_BITS):
            raise KademliaError("node id out of 256-bit range")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "NodeId":
        if len(raw) != ID_BITS // 8:
            raise KademliaError(f"node id must be {ID_BITS // 8} bytes")
        return cls(int.from_bytes(raw, "big"))

    @classmethod
    def from_hex(cls, text: str) -> "NodeId":
        return cls.from_bytes(bytes.fromhex(text))

    @classmethod
    def random(cls, rng: random.Random) -> "NodeId":
        return cls(rng.getrandbits(ID_BITS))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(ID_BITS // 8, "big")

    @property
    def hex(self) -> str:
        return self.to_bytes().hex()


def logdist(a: NodeId, b: NodeId) -> int:
    """Log-distance: bit length of a XOR b. 0 iff a == b, max 256."""
    return (a.value ^ b.value).bit_length()


def id_at_distance(owner: NodeId, bucket: int, rng: random.Random) -> NodeId:
    """A random id at exactly logdist `bucket` from `owner` (bucket >= 1)."""
    if not 1 <= bucket <= ID_BITS:
        raise KademliaError(f"bucket {bucket} out of range")
    low = rng.getrandbits(bucket - 1) if bucket > 1 else 0
    return NodeId(owner.value ^ ((1 << (bucket - 1)) | low))


@dataclass(frozen=True, order=True)
class PeerEntry:
    node_id: NodeId
    endpoint: Endpoint


class RoutingTable:
    """256 k-buckets; bucket i holds entries at logdist i from the owner."""

    def __init__(self, owner: NodeId, k: int = DEFAULT_K, bucket_count: int = ID_BITS):
        self.owner = owner
        self.k = k
        self.bucket_count = bucket_count
        self._buckets: dict[int, list[PeerEntry]] = {}
        self._ids: set[NodeId] = set()

    def add(self, entry: PeerEntry) -> bool:
        """Insert; False when the entry is the owner, a duplicate, or its
        bucket is full."""
        dist = logdist(self.owner, entry.node_id)
        if dist == 0 or dist > self.bucket_count:
            return False
        if entry.node_id in self._ids:
            return False
        bucket = self._buckets.setdefault(dist, [])
        if len(bucket) >= self.k:
            return False
        bucket.append(entry)
        self._ids.add(entry.node_id)
        return True

    def bucket(self, index: int) -> tuple[PeerEntry, ...]:
        return tuple(self._buckets.get(index, ()))

    def entries(self) -> list[PeerEntry]:
        out: list[PeerEntry] = []
        for index in sorted(self._buckets):
            out.extend(self._buckets[index])
        return out

    def node_ids(self) -> set[NodeId]:
        return set(self._ids)

    def occupied_buckets(self) -> list[int]:
        return sorted(i for i, b in self._buckets.items() if b)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self._ids


# ---------------------------------------------------------------------------
# dialects and hashing
# ---------------------------------------------------------------------------

ADDRESS_HASHED = "hashed"
ADDRESS_DISTANCE = "distance"


@dataclass(frozen=True)
class Dialect:
    name: str
    addressing: str
    hash_name: str | None
    response_limit: int


DIALECTS: dict[str, Dialect] = {
    d.name: d
    for d in (
        Dialect("hashed-target-keccak", ADDRESS_HASHED, "keccak256", 16),
        Dialect("explicit-distance", ADDRESS_DISTANCE, None, 16),
        Dialect("hashed-target-sha256", ADDRESS_HASHED, "sha256", 20),
        # identity hash: key bytes are the target, for fast deterministic sims
        Dialect("hashed-target-identity", ADDRESS_HASHED, "identity", 16),
    )
}


def get_dialect(dialect: "Dialect | str") -> Dialect:
    if isinstance(dialect, Dialect):
        return dialect
    try:
        return DIALECTS[dialect]
    except KeyError:
        raise KademliaError(f"unknown dialect {dialect!r}") from None


def hash_key(hash_name: str, key: bytes) -> int:
    if hash_name == "keccak256":
        return int.from_bytes(keccak256(key), "big")
    if hash_name == "sha256":
        return int.from_bytes(hashlib.sha256(key).digest(), "big")
    if hash_name == "identity":
        if len(key) != 32:
            raise KademliaError("identity hash requires 32-byte keys")
        return int.from_bytes(key, "big")
    raise KademliaError(f"unknown hash {hash_name!r}")


def _hash_many(hash_name: str, keys: list[bytes]) -> list[int]:
    if hash_name == "keccak256":
        return [int.from_bytes(d, "big") for d in keccak256_many(keys)]
    return [hash_key(hash_name, k) for k in keys]


@dataclass(frozen=True)
class FindNodeQuery:
    dialect: str
    target_key: bytes | None = None
    distance: int | None = None

    def __post_init__(self) -> None:
        d = get_dialect(self.dialect)
        if d.addressing == ADDRESS_HASHED and self.target_key is None:
            raise KademliaError(f"dialect {d.name} requires a target key")
        if d.addressing == ADDRESS_DISTANCE and self.distance is None:
            raise KademliaError(f"dialect {d.name} requires a distance")

    @property
    def response_limit(self) -> int:
        return get_dialect(self.dialect).response_limit


# ---------------------------------------------------------------------------
# preimage crafting
# ---------------------------------------------------------------------------


class PreimagePool:
    """Cache of (key, hash) pairs indexed by hash prefix.

    A key whose hash shares the needed top bits with *any* remote serves that
    remote's corresponding bucket, so crafting across thousands of remotes
    amortizes to near-zero. Lookups may run concurrently; extension takes the
    pool lock.
    """

    def __init__(
        self,
        hash_name: str = "keccak256",
        seed: int | None = None,
        max_prefix_bits: int = DEFAULT_MAX_CRAFTED_DEPTH + 1,
    ):
        self.hash_name = hash_name
        self.max_prefix_bits = max_prefix_bits
        self.rng = random.Random(seed)
        self.hash_evaluations = 0  # keys actually hashed
        self.craft_attempts = 0    # candidates examined across all crafts
        self.crafts = 0
        self._by_prefix: dict[tuple[int, int], bytes] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._by_prefix)

    def lookup(self, prefix_len: int, prefix: int) -> bytes | None:
        return self._by_prefix.get((prefix_len, prefix))

    def _register_many(self, pairs: list[tuple[bytes, int]]) -> None:
        with self._lock:
            setdefault = self._by_prefix.setdefault
            for key, digest in pairs:
                for plen in range(1, self.max_prefix_bits + 1):
                    setdefault((plen, digest >> (ID_BITS - plen)), key)


def required_prefix(remote: NodeId, bucket: int) -> tuple[int, int]:
    """The hash prefix a key must have to land in `bucket` of `remote`.

    logdist(hash, remote) == bucket iff hash agrees with remote on the top
    256-bucket bits and differs at the next one: prefix length 257-bucket.
    """
    if not 1 <= bucket <= ID_BITS:
        raise KademliaError(f"bucket {bucket} out of range")
    return (ID_BITS + 1 - bucket), (remote.value >> (bucket - 1)) ^ 1


def craft_preimage(
    pool: PreimagePool,
    remote: NodeId,
    bucket: int,
    max_crafted_depth: int = DEFAULT_MAX_CRAFTED_DEPTH,
    budget: int = DEFAULT_CRAFT_BUDGET,
) -> bytes:
    """Find a key hashing into `bucket` of `remote`'s table.

    Expected cost doubles per level below the top bucket (probability
    2^-(depth+1) per random key); refuses upfront when that exceeds the
    budget. Every returned key is re-verified against the requested bucket.
    """
    depth = ID_BITS - bucket
    if depth < 0:
        raise KademliaError(f"bucket {bucket} out of range")
    expected = 1 << (depth + 1)
    if depth > max_crafted_depth or expected > budget:
        raise BucketTooDeep(
            f"bucket {bucket} is {depth} below the top: expected {expected} "
            f"hash evaluations exceeds depth/budget limits"
        )
    plen, prefix = required_prefix(remote, bucket)

    def _verify(key: bytes) -> bytes:
        if logdist(NodeId(hash_key(pool.hash_name, key)), remote) != bucket:
            raise CraftUnsound(f"key for bucket {bucket} fails verification")
        pool.crafts += 1
        return key

    cached = pool.lookup(plen, prefix)
    if cached is not None:
        return _verify(cached)

    shift = ID_BITS - plen
    batch_size = 1
    if expected >= _BATCH_THRESHOLD:
        batch_size = min(_MAX_BATCH, expected // 2)
    evaluated = 0
    while evaluated < budget:
        size = min(batch_size, budget - evaluated)
        keys = [pool.rng.randbytes(32) for _ in range(size)]
        digests = _hash_many(pool.hash_name, keys)
        evaluated += size
        pool.hash_evaluations += size
        pool._register_many(list(zip(keys, digests)))
        for i, digest in enumerate(digests):
            if digest >> shift == prefix:
                pool.craft_attempts += i + 1
                return _verify(keys[i])
        pool.craft_attempts += size
    raise BucketTooDeep(f"budget of {budget} evaluations exhausted for bucket {bucket}")


def plan_enumeration(
    dialect: "Dialect | str",
    remote: NodeId,
    depth: int,
    pool: PreimagePool | None = None,
    max_crafted_depth: int = DEFAULT_MAX_CRAFTED_DEPTH,
    budget: int = DEFAULT_CRAFT_BUDGET,
) -> list[FindNodeQuery]:
    """Queries addressing buckets 256 down to 256-depth+1 of `remote`."""
    d = get_dialect(dialect)
    if depth < 1:
        raise KademliaError("depth must be >= 1")
    buckets = range(ID_BITS, ID_BITS - depth, -1)
    if d.addressing == ADDRESS_DISTANCE:
        return [FindNodeQuery(d.name, distance=b) for b in buckets]
    if depth > max_crafted_depth:
        raise BucketTooDeep(f"depth {depth} exceeds max crafted depth {max_crafted_depth}")
    if pool is None:
        pool = PreimagePool(d.hash_name)
    elif pool.hash_name != d.hash_name:
        raise KademliaError(
            f"pool hashes with {pool.hash_name}, dialect {d.name} needs {d.hash_name}"
        )
    return [
        FindNodeQuery(d.name, target_key=craft_preimage(pool, remote, b, max_crafted_depth, budget))
        for b in buckets
    ]


# ---------------------------------------------------------------------------
# serving and enumerating
# ---------------------------------------------------------------------------


def answer_find_node(table: RoutingTable, query: FindNodeQuery) -> list[PeerEntry]:
    """What a compliant peer returns: the named bucket for explicit-distance,
    the response_limit XOR-closest entries for hashed dialects."""
    d = get_dialect(query.dialect)
    if d.addressing == ADDRESS_DISTANCE:
        return list(table.bucket(query.distance))[: d.response_limit]
    target = hash_key(d.hash_name, query.target_key)
    ranked = sorted(table.entries(), key=lambda e: e.node_id.value ^ target)
    return ranked[: d.response_limit]


@dataclass
class EnumerationResult:
    peers: list[PeerEntry]
    complete: bool
    queries_sent: int = 0
    queries_answered: int = 0

    def node_ids(self) -> set[NodeId]:
        return {p.node_id for p in self.peers}


def enumerate_remote(
    transport,
    dialect: "Dialect | str",
    remote: PeerEntry,
    depth: int,
    pool: PreimagePool | None = None,
    timeout: float = 5.0,
) -> EnumerationResult:
    """Issue the planned FIND_NODE queries and union the answers.

    Per-query transport failures leave a partial result flagged incomplete
    rather than raising. Deduplicates by node id.
    """
    queries = plan_enumeration(dialect, remote.node_id, depth, pool=pool)
    seen: dict[NodeId, PeerEntry] = {}
    answered = 0
    complete = True
    for query in queries:
        raw = transport.send(encode_find_node(query), remote.endpoint, timeout)
        if raw is None:
            complete = False
            continue
        try:
            entries = decode_nodes(raw)
        except KademliaError:
            complete = False
            continue
        answered += 1
        for entry in entries:
            seen.setdefault(entry.node_id, entry)
    peers = sorted(seen.values())
    return EnumerationResult(
        peers=peers, complete=complete, queries_sent=len(queries), queries_answered=answered
    )


# ---------------------------------------------------------------------------
# byte encoding of queries/responses (simnet wire format)
# ---------------------------------------------------------------------------


def encode_find_node(query: FindNodeQuery) -> bytes:
    doc = {
        "op": "find_node",
        "dialect": query.dialect,
        "target": query.target_key.hex() if query.target_key is not None else None,
        "distance": query.distance,
    }
    return json.dumps(doc, sort_keys=True).encode()


def decode_find_node(raw: bytes) -> FindNodeQuery:
    try:
        doc = json.loads(raw)
        if doc.get("op") != "find_node":
            raise ValueError("not a find_node")
        target = doc.get("target")
        return FindNodeQuery(
            dialect=doc["dialect"],
            target_key=bytes.fromhex(target) if target is not None else None,
            distance=doc.get("distance"),
        )
    except (ValueError, KeyError, TypeError) as err:
        raise KademliaError(f"bad find_node query: {err}") from None


def encode_nodes(entries: list[PeerEntry]) -> bytes:
    doc = {
        "op": "nodes",
        "peers": [[e.endpoint[0], e.endpoint[1], e.node_id.hex] for e in entries],
    }
    return json.dumps(doc, sort_keys=True).encode()


def decode_nodes(raw: bytes) -> list[PeerEntry]:
    try:
        doc = json.loads(raw)
        if doc.get("op") != "nodes":
            raise ValueError("not a nodes response")
        return [
            PeerEntry(node_id=NodeId.from_hex(id_hex), endpoint=(host, int(port)))
            for host, port, id_hex in doc["peers"]
        ]
    except (ValueError, KeyError, TypeError) as err:
        raise KademliaError(f"bad nodes response: {err}") from None
