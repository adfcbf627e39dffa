import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from peerscope.profiles import BUILTIN_PROFILES
from peerscope.simnet import ChurnConfig, SimConfig, SimNetwork
from peerscope.transport import SimnetTransport


@pytest.fixture
def bitcoin_profile():
    return BUILTIN_PROFILES["bitcoin"]

@pytest.fixture
def dogecoin_profile():
    return BUILTIN_PROFILES["dogecoin"]

@pytest.fixture
def bch_profile():
    return BUILTIN_PROFILES["bitcoincash"]

@pytest.fixture
def cardano_profile():
    return BUILTIN_PROFILES["cardano"]


def make_simnet(**kwargs) -> SimNetwork:
    defaults = dict(seed=42, peer_count=30, reachable_fraction=1.0, family="bitcoin", table_fill=10)
    defaults.update(kwargs)
    return SimNetwork.build(SimConfig(**defaults))


@pytest.fixture
def small_bitcoin_net():
    return make_simnet()


@pytest.fixture
def small_bitcoin_transport(small_bitcoin_net):
    return SimnetTransport(small_bitcoin_net)
