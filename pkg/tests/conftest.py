import numpy as np
import pytest

from saginsim.topology import TopologyConfig, build_reference_topology


@pytest.fixture(scope="session")
def default_topo():
    return build_reference_topology()


@pytest.fixture(scope="session")
def small_topo():
    """Fully layered graph at a fraction of the default scale."""
    cfg = TopologyConfig(leo_count=6, uav_count=12, ground_count=48,
                         buffer_access_pkts=64)
    return build_reference_topology(cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
