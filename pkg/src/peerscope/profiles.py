"""Network profiles: the static per-network facts every other module keys off.

A profile describes one discovery network: its family (which discovery
mechanism it speaks), the 4-byte network secret for bitcoin-family framing,
protocol version, default ports, and bootstrap endpoints. Profiles for the
networks we ship support for are built in; operators add or override them
through a YAML config file.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import yaml

# An endpoint is a plain (host, port) tuple throughout the codebase.
Endpoint = tuple[str, int]

FAMILY_BITCOIN = "bitcoin"
FAMILY_KADEMLIA = "kademlia"
FAMILY_RPC = "rpc"
FAMILY_STELLAR = "stellar"
FAMILY_CARDANO = "cardano"

FAMILIES = (
    FAMILY_BITCOIN,
    FAMILY_KADEMLIA,
    FAMILY_RPC,
    FAMILY_STELLAR,
    FAMILY_CARDANO,
)


class ProfileError(Exception):
    """Raised for malformed or inconsistent profile configuration."""


@dataclass(frozen=True)
class NetworkProfile:
    name: str
    family: str
    magic: bytes | None = None          # 4-byte network secret, bitcoin family only
    protocol_version: int = 0
    user_agent: str = "/peerscope:0.1.0/"
    services: int = 0
    default_ports: tuple[int, ...] = ()  # probed in addition to the advertised port
    scan_ports: tuple[int, ...] = ()     # ports targeted by one-shot scans
    bootstrap: tuple[Endpoint, ...] = ()
    dht_dialect: str | None = None       # kademlia family only
    dht_depth: int = 16
    handshake_versions: tuple[int, ...] = ()  # cardano family only
    cardano_network_magic: int = 0
    rule_table: str | None = None        # path to a netlabel rule table

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ProfileError(f"unknown family {self.family!r}")
        if self.magic is not None and len(self.magic) != 4:
            raise ProfileError("magic must be exactly 4 bytes")
        if self.family == FAMILY_BITCOIN and self.magic is None:
            raise ProfileError(f"bitcoin-family profile {self.name!r} needs a magic")
        if self.protocol_version < 0:
            raise ProfileError("protocol_version must be >= 0")

    @property
    def effective_scan_ports(self) -> tuple[int, ...]:
        return self.scan_ports or self.default_ports


def _ep(host: str, port: int) -> Endpoint:
    return (host, port)


# Built-in profiles. Magics are the per-network 4-byte secrets; protocol
# versions are reference-client defaults and can be overridden per config
# (dogecoin intentionally differs from bitcoin so scan classification can
# tell the two apart by version number).
BUILTIN_PROFILES: dict[str, NetworkProfile] = {
    p.name: p
    for p in (
        NetworkProfile(
            name="bitcoin",
            family=FAMILY_BITCOIN,
            magic=bytes.fromhex("d9b4bef9"),
            protocol_version=70016,
            default_ports=(8333,),
        ),
        NetworkProfile(
            name="dogecoin",
            family=FAMILY_BITCOIN,
            magic=bytes.fromhex("c0c0c0c0"),
            protocol_version=70015,
            default_ports=(22556,),
            scan_ports=(22556, 19919),
        ),
        NetworkProfile(
            name="bitcoincash",  # shared by BCH, BSV and eCash ("Bitcoin Cash (*)")
            family=FAMILY_BITCOIN,
            magic=bytes.fromhex("e8f3e1e3"),
            protocol_version=70016,
            default_ports=(8333,),
            scan_ports=(8333, 8334, 8433),
            rule_table="rules_bitcoincash.json",
        ),
        NetworkProfile(
            name="litecoin",
            family=FAMILY_BITCOIN,
            magic=bytes.fromhex("dbb6c0fb"),
            protocol_version=70015,
            default_ports=(9333,),
        ),
        NetworkProfile(
            name="ethereum-discv4",
            family=FAMILY_KADEMLIA,
            dht_dialect="hashed-target-keccak",
            default_ports=(30303,),
            rule_table="rules_discv4.json",
        ),
        NetworkProfile(
            name="ethereum-discv5",
            family=FAMILY_KADEMLIA,
            dht_dialect="explicit-distance",
            default_ports=(30303,),
            rule_table="rules_discv5.json",
        ),
        NetworkProfile(
            name="libp2p-dht",
            family=FAMILY_KADEMLIA,
            dht_dialect="hashed-target-sha256",
            default_ports=(4001,),
        ),
        NetworkProfile(
            name="ripple",
            family=FAMILY_RPC,
            default_ports=(2459, 51235),
        ),
        NetworkProfile(
            name="stellar",
            family=FAMILY_STELLAR,
            default_ports=(11625,),
        ),
        NetworkProfile(
            name="cardano",
            family=FAMILY_CARDANO,
            protocol_version=14,
            handshake_versions=tuple(range(7, 15)),
            cardano_network_magic=764824073,
            default_ports=(3001,),
            scan_ports=(3000, 3001, 3002, 6000, 6001),
        ),
    )
}


def parse_endpoint(text: str) -> Endpoint:
    """Parse 'host:port' (IPv6 hosts in brackets: '[::1]:8333')."""
    text = text.strip()
    if text.startswith("["):
        host, _, rest = text[1:].partition("]")
        if not rest.startswith(":"):
            raise ProfileError(f"bad endpoint {text!r}")
        port_s = rest[1:]
    else:
        host, sep, port_s = text.rpartition(":")
        if not sep:
            raise ProfileError(f"bad endpoint {text!r}")
    try:
        port = int(port_s)
    except ValueError:
        raise ProfileError(f"bad endpoint port in {text!r}") from None
    if not 1 <= port <= 65535:
        raise ProfileError(f"port out of range in {text!r}")
    return (host, port)


def format_endpoint(ep: Endpoint) -> str:
    host, port = ep
    if ":" in host:
        return f"[{host}]:{port}"
    return f"{host}:{port}"


def _profile_from_mapping(entry: dict, base_dir: Path) -> NetworkProfile:
    known = dict(entry)
    name = known.pop("name", None)
    if not name:
        raise ProfileError("network entry missing 'name'")
    family = known.pop("family", None)
    if family is None:
        raise ProfileError(f"network {name!r} missing 'family'")
    kwargs: dict = {"name": name, "family": family}
    if "magic" in known:
        try:
            kwargs["magic"] = bytes.fromhex(str(known.pop("magic")))
        except ValueError:
            raise ProfileError(f"network {name!r}: magic is not hex") from None
    for key in ("protocol_version", "services", "dht_depth", "cardano_network_magic"):
        if key in known:
            kwargs[key] = int(known.pop(key))
    if "user_agent" in known:
        kwargs["user_agent"] = str(known.pop("user_agent"))
    for key in ("default_ports", "scan_ports", "handshake_versions"):
        if key in known:
            kwargs[key] = tuple(int(v) for v in known.pop(key))
    if "bootstrap" in known:
        kwargs["bootstrap"] = tuple(parse_endpoint(str(v)) for v in known.pop("bootstrap"))
    if "dialect" in known:
        kwargs["dht_dialect"] = str(known.pop("dialect"))
    if "depth" in known:
        kwargs["dht_depth"] = int(known.pop("depth"))
    if "rule_table" in known:
        path = (base_dir / str(known.pop("rule_table"))).resolve()
        if not path.exists():
            raise ProfileError(f"network {name!r}: rule table {path} does not exist")
        kwargs["rule_table"] = str(path)
    if known:
        raise ProfileError(f"network {name!r}: unknown keys {sorted(known)}")
    return NetworkProfile(**kwargs)


def load_profile_config(path: str | Path) -> dict[str, NetworkProfile]:
    """Load a YAML profile config; returns builtins overlaid with the file.

    Names must be unique within the file and every referenced rule-table
    file must exist at load time.
    """
    path = Path(path)
    raw = yaml.safe_load(path.read_text())
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ProfileError("profile config must be a mapping")
    profiles = dict(BUILTIN_PROFILES)
    seen: set[str] = set()
    for entry in raw.get("networks", []) or []:
        if not isinstance(entry, dict):
            raise ProfileError("each network entry must be a mapping")
        profile = _profile_from_mapping(entry, path.parent)
        if profile.name in seen:
            raise ProfileError(f"duplicate network name {profile.name!r}")
        seen.add(profile.name)
        profiles[profile.name] = profile
    return profiles


def with_bootstrap(profile: NetworkProfile, bootstrap: list[Endpoint]) -> NetworkProfile:
    return replace(profile, bootstrap=tuple(bootstrap))
