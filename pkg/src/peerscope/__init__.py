"""peerscope: multi-protocol peer-to-peer network crawler and measurement toolkit."""

__version__ = "0.1.0"

from .profiles import BUILTIN_PROFILES, Endpoint, NetworkProfile  # noqa: F401
