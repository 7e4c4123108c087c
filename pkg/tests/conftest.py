import numpy as np
import pytest

from advmt.skeleton import SkeletonTopology


@pytest.fixture
def topo17():
    return SkeletonTopology.default_17()


@pytest.fixture
def chain3():
    return SkeletonTopology(joint_names=("root", "mid", "tip"), parent=(None, 0, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
