"""Single-shot scan probes and response classification.

The probe for a bitcoin-family network is its framed version message (the
magic isolates networks: nodes of other families don't answer). Cardano's
probe is the CBOR-encoded propose-versions handshake. Captured responses
classify into a fixed lattice: every byte string maps to exactly one class,
and version-valid-network refines version-valid-any.

The scanning loop itself (rate-limited transmission) is out of scope; this
module consumes captured (address, port, hex-response) records from a file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .liveness import DailyActivity
from .profiles import BUILTIN_PROFILES, FAMILY_BITCOIN, FAMILY_CARDANO, NetworkProfile
from .simnet import derive_rng

# classification lattice
NO_RESPONSE = "no-response"
HTTP_400 = "http-400"
OTHER_HTTP = "other-http"
VERSION_VALID_ANY = "version-valid-any"
VERSION_VALID_NETWORK = "version-valid-network"
CARDANO_PROPOSE = "cardano-propose"
CARDANO_ACCEPT = "cardano-accept"
CARDANO_REFUSE = "cardano-refuse"
GARBAGE = "garbage"

CLASSES = (
    NO_RESPONSE,
    HTTP_400,
    OTHER_HTTP,
    VERSION_VALID_ANY,
    VERSION_VALID_NETWORK,
    CARDANO_PROPOSE,
    CARDANO_ACCEPT,
    CARDANO_REFUSE,
    GARBAGE,
)

_CARDANO_CODES = {0: CARDANO_PROPOSE, 1: CARDANO_ACCEPT, 2: CARDANO_REFUSE}


class ScanError(Exception):
    pass


class UnsupportedFamily(ScanError):
    pass


@dataclass(frozen=True)
class ScanProbe:
    network: str
    port: int
    payload: bytes


@dataclass(frozen=True)
class ClassifiedRecord:
    address: str
    port: int
    label: str


# ---------------------------------------------------------------------------
# minimal CBOR: just what the handshake mini-protocol needs
# (unsigned ints, arrays, maps, definite lengths)
# ---------------------------------------------------------------------------

def cbor_encode(obj) -> bytes:
    if isinstance(obj, bool):
        return b"\xf5" if obj else b"\xf4"
    if isinstance(obj, int):
        if obj < 0:
            return _cbor_head(1, -1 - obj)
        return _cbor_head(0, obj)
    if isinstance(obj, list):
        return _cbor_head(4, len(obj)) + b"".join(cbor_encode(v) for v in obj)
    if isinstance(obj, dict):
        out = _cbor_head(5, len(obj))
        for key, value in obj.items():
            out += cbor_encode(key) + cbor_encode(value)
        return out
    raise ScanError(f"cannot CBOR-encode {type(obj).__name__}")


def _cbor_head(major: int, arg: int) -> bytes:
    if arg < 24:
        return bytes([(major << 5) | arg])
    for code, size in ((24, 1), (25, 2), (26, 4), (27, 8)):
        if arg < (1 << (8 * size)):
            return bytes([(major << 5) | code]) + arg.to_bytes(size, "big")
    raise ScanError("CBOR integer too large")


def cbor_decode(data: bytes):
    obj, consumed = _cbor_item(data, 0)
    if consumed != len(data):
        raise ScanError("trailing bytes after CBOR item")
    return obj


def _cbor_item(data: bytes, offset: int):
    if offset >= len(data):
        raise ScanError("truncated CBOR")
    initial = data[offset]
    major, arg = initial >> 5, initial & 0x1F
    offset += 1
    if arg < 24:
        value = arg
    elif arg in (24, 25, 26, 27):
        size = 1 << (arg - 24)
        if offset + size > len(data):
            raise ScanError("truncated CBOR argument")
        value = int.from_bytes(data[offset : offset + size], "big")
        offset += size
    else:
        raise ScanError("indefinite lengths unsupported")
    if major == 0:
        return value, offset
    if major == 1:
        return -1 - value, offset
    if major == 4:
        items = []
        for _ in range(value):
            item, offset = _cbor_item(data, offset)
            items.append(item)
        return items, offset
    if major == 5:
        mapping = {}
        for _ in range(value):
            key, offset = _cbor_item(data, offset)
            val, offset = _cbor_item(data, offset)
            mapping[key] = val
        return mapping, offset
    if major == 7 and initial in (0xF4, 0xF5):
        return initial == 0xF5, offset
    raise ScanError(f"unsupported CBOR major type {major}")


def build_cardano_propose(profile: NetworkProfile) -> bytes:
    """Propose-versions listing every protocol version the profile knows."""
    versions = profile.handshake_versions or (profile.protocol_version,)
    table = {int(v): [profile.cardano_network_magic, False] for v in sorted(versions)}
    return cbor_encode([0, table])


def build_cardano_accept(version: int, network_magic: int) -> bytes:
    return cbor_encode([1, int(version), [network_magic, False]])


def build_cardano_refuse(reason: int = 0) -> bytes:
    return cbor_encode([2, [reason]])


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

def build_probe(profile: NetworkProfile, port: int) -> ScanProbe:
    if profile.family == FAMILY_BITCOIN:
        nonce = derive_rng("scan-probe", profile.name, port).getrandbits(64)
        payload = wire.encode_message(
            profile,
            wire.CMD_VERSION,
            wire.build_version_payload(profile, ("0.0.0.0", 0), ("0.0.0.0", port), nonce),
        )
        return ScanProbe(network=profile.name, port=port, payload=payload)
    if profile.family == FAMILY_CARDANO:
        return ScanProbe(network=profile.name, port=port, payload=build_cardano_propose(profile))
    raise UnsupportedFamily(f"no scan probe for family {profile.family!r}")


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def _classify_http(raw: bytes) -> str | None:
    if not raw.startswith(b"HTTP/"):
        return None
    status_line = raw.split(b"\r\n", 1)[0].split(b"\n", 1)[0]
    parts = status_line.split(b" ")
    if len(parts) >= 2 and parts[1] == b"400":
        return HTTP_400
    return OTHER_HTTP


def _decode_version_any(raw: bytes, known_profiles) -> wire.VersionInfo | None:
    for candidate in known_profiles:
        if candidate.magic is None:
            continue
        try:
            msg = next(iter(wire.iter_messages(candidate, raw)))
        except wire.WireError:
            continue
        if msg.command != wire.CMD_VERSION:
            return None
        try:
            return wire.parse_version_payload(msg.payload)
        except wire.WireError:
            return None
    return None


def classify_response(profile: NetworkProfile, raw: bytes, known_profiles=None) -> str:
    """Deterministically assign one class from the lattice.

    Version frames are recognized under any known network magic;
    version-valid-network additionally requires the scanned profile's
    protocol version number in the reply.
    """
    if known_profiles is None:
        known_profiles = [p for p in BUILTIN_PROFILES.values() if p.magic is not None]
    if len(raw) == 0:
        return NO_RESPONSE
    http = _classify_http(raw)
    if http is not None:
        return http
    if profile.family == FAMILY_BITCOIN:
        info = _decode_version_any(raw, known_profiles)
        if info is not None:
            if info.protocol_version == profile.protocol_version:
                return VERSION_VALID_NETWORK
            return VERSION_VALID_ANY
        return GARBAGE
    if profile.family == FAMILY_CARDANO:
        try:
            doc = cbor_decode(raw)
        except ScanError:
            return GARBAGE
        if isinstance(doc, list) and doc and isinstance(doc[0], int):
            return _CARDANO_CODES.get(doc[0], GARBAGE)
        return GARBAGE
    return GARBAGE


# ---------------------------------------------------------------------------
# capture files and reports
# ---------------------------------------------------------------------------

def read_capture(path: str | Path):
    """Yield (address, port, payload) from 'address,port,hexresponse' lines.

    An empty hex field records a connection that returned nothing (the
    capture stage logs one line per successful TCP connect).
    """
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            address, port_s, hex_payload = line.split(",", 2)
            yield address, int(port_s), bytes.fromhex(hex_payload.strip())
        except ValueError:
            raise ScanError(f"{path}:{lineno}: bad capture record") from None


def classify_capture(profile: NetworkProfile, path: str | Path, known_profiles=None) -> list[ClassifiedRecord]:
    return [
        ClassifiedRecord(address=addr, port=port, label=classify_response(profile, payload, known_profiles))
        for addr, port, payload in read_capture(path)
    ]


@dataclass
class ScanReport:
    network: str
    success_count: int                      # TCP connects (capture-stage count)
    class_counts: dict[str, int]
    response_count: int                     # returned at least one byte
    version_any_count: int                  # cumulative: network-valid included
    version_network_count: int
    overlap: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "network": self.network,
                "success": self.success_count,
                "response": self.response_count,
                "version_all": self.version_any_count,
                "version_network": self.version_network_count,
                "classes": dict(sorted(self.class_counts.items())),
                "overlap": dict(sorted(self.overlap.items())),
            },
            indent=1,
            sort_keys=True,
        )

    def to_text(self) -> str:
        lines = [
            f"network: {self.network}",
            f"success: {self.success_count}",
            f"response: {self.response_count}",
            f"version (any network): {self.version_any_count}",
            f"version (this network): {self.version_network_count}",
        ]
        for cls in CLASSES:
            if self.class_counts.get(cls):
                lines.append(f"  {cls}: {self.class_counts[cls]}")
        for key, value in sorted(self.overlap.items()):
            lines.append(f"overlap {key}: {value}")
        return "\n".join(lines)


def scan_report(
    classified: list[ClassifiedRecord],
    crawl_activity: DailyActivity | None = None,
    network: str = "",
    success_count: int | None = None,
) -> ScanReport:
    """Counts per class plus the cumulative version chain; when crawl
    activity is supplied, the network-valid addresses are intersected with
    the discovered and active sets."""
    counts: dict[str, int] = {}
    for record in classified:
        counts[record.label] = counts.get(record.label, 0) + 1
    response_count = len(classified) - counts.get(NO_RESPONSE, 0)
    version_network = counts.get(VERSION_VALID_NETWORK, 0)
    version_any = version_network + counts.get(VERSION_VALID_ANY, 0)
    report = ScanReport(
        network=network,
        success_count=len(classified) if success_count is None else success_count,
        class_counts=counts,
        response_count=response_count,
        version_any_count=version_any,
        version_network_count=version_network,
    )
    if crawl_activity is not None:
        hits = {r.address for r in classified if r.label == VERSION_VALID_NETWORK}
        report.overlap = {
            "discovered": len(hits & crawl_activity.discovered),
            "active": len(hits & crawl_activity.active),
        }
    return report
