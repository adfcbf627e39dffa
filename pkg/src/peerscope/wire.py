"""Bitcoin-family wire codec: framing, version handshake, getaddr/addr, ping.

Frame layout (classic reference-client framing, parameterized per network
by the profile's 4-byte magic):

    [ 4] MAGIC                    profile.magic, byte-exact
    [12] COMMAND                  ASCII, zero padded
    [ 4] LENGTH                   <I  len(payload)
    [ 4] CHECKSUM                 sha256(sha256(payload))[:4]
    [..] PAYLOAD

All operations here are stateless; any number of workers may call them
concurrently.
"""

from __future__ import annotations

import hashlib
import ipaddress
import struct
from dataclasses import dataclass

from .profiles import Endpoint, NetworkProfile

HEADER_LEN = 24
MAX_COMMAND_LEN = 12
MAX_ADDR_ENTRIES = 1000

CMD_VERSION = "version"
CMD_VERACK = "verack"
CMD_GETADDR = "getaddr"
CMD_ADDR = "addr"
CMD_PING = "ping"
CMD_PONG = "pong"


class WireError(Exception):
    pass


class CommandTooLong(WireError):
    pass


class WrongMagic(WireError):
    pass


class BadChecksum(WireError):
    pass


class Truncated(WireError):
    pass


class MalformedEntry(WireError):
    pass


class TooManyEntries(WireError):
    pass


def double_sha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def checksum(payload: bytes) -> bytes:
    return double_sha256(payload)[:4]


@dataclass(frozen=True)
class WireMessage:
    magic: bytes
    command: str
    payload: bytes

    @property
    def checksum(self) -> bytes:
        return checksum(self.payload)


@dataclass(frozen=True)
class VersionInfo:
    protocol_version: int
    services: int
    user_agent: str
    advertised_port: int
    nonce: int
    timestamp: int = 0
    start_height: int = 0
    relay: bool = False

    def __post_init__(self) -> None:
        if self.protocol_version < 0:
            raise WireError("protocol_version must be >= 0")


@dataclass(frozen=True)
class AddrEntry:
    address: str
    port: int
    last_seen: int
    services: int = 0


# ---------------------------------------------------------------------------
# framing
# ---------------------------------------------------------------------------

def encode_message(profile: NetworkProfile, command: str, payload: bytes = b"") -> bytes:
    if profile.magic is None:
        raise WireError(f"profile {profile.name!r} has no magic")
    try:
        cmd = command.encode("ascii")
    except UnicodeEncodeError:
        raise CommandTooLong(f"command {command!r} is not ASCII") from None
    if len(cmd) > MAX_COMMAND_LEN:
        raise CommandTooLong(f"command {command!r} exceeds {MAX_COMMAND_LEN} bytes")
    return b"".join(
        (
            profile.magic,
            cmd.ljust(MAX_COMMAND_LEN, b"\x00"),
            struct.pack("<I", len(payload)),
            checksum(payload),
            payload,
        )
    )


def decode_message(profile: NetworkProfile, raw: bytes) -> WireMessage:
    """Decode one frame. Trailing bytes after the frame are ignored.

    Unknown commands decode fine; callers dispatch on ``command``.
    """
    if profile.magic is None:
        raise WireError(f"profile {profile.name!r} has no magic")
    if len(raw) < 4:
        raise Truncated(f"got {len(raw)} bytes, need at least 4")
    if raw[:4] != profile.magic:
        raise WrongMagic(f"{raw[:4].hex()} != {profile.magic.hex()}")
    if len(raw) < HEADER_LEN:
        raise Truncated(f"got {len(raw)} of {HEADER_LEN} header bytes")
    command = raw[4:16].split(b"\x00", 1)[0].decode("latin-1")
    (length,) = struct.unpack("<I", raw[16:20])
    claimed = raw[20:24]
    if len(raw) < HEADER_LEN + length:
        raise Truncated(f"payload: got {len(raw) - HEADER_LEN} of {length} bytes")
    payload = raw[HEADER_LEN : HEADER_LEN + length]
    if checksum(payload) != claimed:
        raise BadChecksum(f"{checksum(payload).hex()} != {claimed.hex()}")
    return WireMessage(magic=profile.magic, command=command, payload=payload)


def frame_length(raw: bytes) -> int | None:
    """Total frame length once the 24-byte header is available, else None."""
    if len(raw) < HEADER_LEN:
        return None
    (length,) = struct.unpack("<I", raw[16:20])
    return HEADER_LEN + length


def iter_messages(profile: NetworkProfile, raw: bytes):
    """Yield consecutive frames from a byte buffer (e.g. a TCP read)."""
    offset = 0
    while offset < len(raw):
        total = frame_length(raw[offset:])
        if total is None or len(raw) - offset < total:
            raise Truncated("incomplete trailing frame")
        yield decode_message(profile, raw[offset : offset + total])
        offset += total


# ---------------------------------------------------------------------------
# varint / address encoding helpers
# ---------------------------------------------------------------------------

def encode_varint(n: int) -> bytes:
    if n < 0xFD:
        return struct.pack("<B", n)
    if n <= 0xFFFF:
        return b"\xfd" + struct.pack("<H", n)
    if n <= 0xFFFFFFFF:
        return b"\xfe" + struct.pack("<I", n)
    return b"\xff" + struct.pack("<Q", n)


def decode_varint(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Returns (value, new_offset)."""
    if offset >= len(data):
        raise MalformedEntry("varint past end of payload")
    first = data[offset]
    if first < 0xFD:
        return first, offset + 1
    width = {0xFD: 2, 0xFE: 4, 0xFF: 8}[first]
    end = offset + 1 + width
    if end > len(data):
        raise MalformedEntry("truncated varint")
    return int.from_bytes(data[offset + 1 : end], "little"), end


def _ip_to_wire(address: str) -> bytes:
    ip = ipaddress.ip_address(address)
    if ip.version == 4:
        return b"\x00" * 10 + b"\xff\xff" + ip.packed
    return ip.packed


def _ip_from_wire(raw16: bytes) -> str:
    ip = ipaddress.IPv6Address(raw16)
    mapped = ip.ipv4_mapped
    # v4-mapped addresses normalize back to dotted quads so IPv4 and IPv6
    # populations can be counted separately downstream.
    if mapped is not None:
        return str(mapped)
    return str(ip)


def encode_network_address(services: int, address: str, port: int) -> bytes:
    return struct.pack("<Q", services) + _ip_to_wire(address) + struct.pack(">H", port)


def decode_network_address(data: bytes, offset: int) -> tuple[int, str, int, int]:
    """Returns (services, address, port, new_offset)."""
    end = offset + 26
    if end > len(data):
        raise MalformedEntry("truncated network address")
    (services,) = struct.unpack("<Q", data[offset : offset + 8])
    address = _ip_from_wire(data[offset + 8 : offset + 24])
    (port,) = struct.unpack(">H", data[offset + 24 : end])
    return services, address, port, end


# ---------------------------------------------------------------------------
# version payload
# ---------------------------------------------------------------------------

def build_version_payload(
    profile: NetworkProfile,
    self_endpoint: Endpoint,
    remote_endpoint: Endpoint,
    nonce: int,
    timestamp: int = 0,
    start_height: int = 0,
) -> bytes:
    """Version payload advertising the profile's protocol version and agent."""
    user_agent = profile.user_agent.encode("utf-8")
    return b"".join(
        (
            struct.pack("<i", profile.protocol_version),
            struct.pack("<Q", profile.services),
            struct.pack("<q", timestamp),
            encode_network_address(profile.services, remote_endpoint[0], remote_endpoint[1]),
            encode_network_address(profile.services, self_endpoint[0], self_endpoint[1]),
            struct.pack("<Q", nonce),
            encode_varint(len(user_agent)),
            user_agent,
            struct.pack("<i", start_height),
            struct.pack("<?", False),
        )
    )


def parse_version_payload(payload: bytes) -> VersionInfo:
    if len(payload) < 80:
        raise MalformedEntry(f"version payload too short: {len(payload)} bytes")
    (protocol_version,) = struct.unpack("<i", payload[0:4])
    (services,) = struct.unpack("<Q", payload[4:12])
    (timestamp,) = struct.unpack("<q", payload[12:20])
    _, _, _, offset = decode_network_address(payload, 20)          # addr_recv
    _, _, my_port, offset = decode_network_address(payload, offset)  # addr_from
    if offset + 8 > len(payload):
        raise MalformedEntry("version payload missing nonce")
    (nonce,) = struct.unpack("<Q", payload[offset : offset + 8])
    offset += 8
    ua_len, offset = decode_varint(payload, offset)
    if offset + ua_len > len(payload):
        raise MalformedEntry("truncated user agent")
    user_agent = payload[offset : offset + ua_len].decode("utf-8", errors="replace")
    offset += ua_len
    start_height = 0
    relay = False
    if offset + 4 <= len(payload):
        (start_height,) = struct.unpack("<i", payload[offset : offset + 4])
        offset += 4
    if offset < len(payload):
        relay = bool(payload[offset])
    return VersionInfo(
        protocol_version=protocol_version,
        services=services,
        user_agent=user_agent,
        advertised_port=my_port,
        nonce=nonce,
        timestamp=timestamp,
        start_height=start_height,
        relay=relay,
    )


# ---------------------------------------------------------------------------
# addr payload
# ---------------------------------------------------------------------------

def encode_addr_payload(entries: list[AddrEntry]) -> bytes:
    if len(entries) > MAX_ADDR_ENTRIES:
        raise TooManyEntries(f"{len(entries)} entries, max {MAX_ADDR_ENTRIES}")
    parts = [encode_varint(len(entries))]
    for e in entries:
        parts.append(struct.pack("<I", e.last_seen))
        parts.append(encode_network_address(e.services, e.address, e.port))
    return b"".join(parts)


def parse_addr_payload(raw: bytes) -> list[AddrEntry]:
    count, offset = decode_varint(raw, 0)
    if count > MAX_ADDR_ENTRIES:
        raise TooManyEntries(f"payload declares {count} entries, max {MAX_ADDR_ENTRIES}")
    entries: list[AddrEntry] = []
    for _ in range(count):
        if offset + 4 > len(raw):
            raise MalformedEntry("truncated addr timestamp")
        (last_seen,) = struct.unpack("<I", raw[offset : offset + 4])
        services, address, port, offset = decode_network_address(raw, offset + 4)
        if not 1 <= port <= 65535:
            raise MalformedEntry(f"port {port} out of range")
        entries.append(AddrEntry(address=address, port=port, last_seen=last_seen, services=services))
    return entries


def encode_ping_payload(nonce: int) -> bytes:
    return struct.pack("<Q", nonce)


def parse_ping_payload(payload: bytes) -> int:
    if len(payload) != 8:
        raise MalformedEntry(f"ping payload must be 8 bytes, got {len(payload)}")
    return struct.unpack("<Q", payload)[0]
