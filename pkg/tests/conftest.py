import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest

from contract.core import AgentSpec, Instance, OutcomeSpace
from contract.rewards import RewardSpec

ALL_TAGS = ("increasing", "dr_submodular", "ir_supermodular")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale sweeps over hundreds of seeded instances")


def point_mass_agent(cost):
    # Null action on outcome 0, one costly action on outcome 1
    return AgentSpec([0.0, cost], [[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def t1():
    """One agent, Ω = {0, 1}, a costly action of cost 0.5 that surely yields 1, g(ω) = ω."""
    return Instance([point_mass_agent(0.5)], OutcomeSpace([0.0, 1.0], null_index=0),
                    RewardSpec("linear", {"weights": 1.0}, ALL_TAGS))


@pytest.fixture
def t2():
    """Like t1, but the costly action (cost 0.2) yields 1 only with probability 1/2."""
    agent = AgentSpec([0.0, 0.2], [[1.0, 0.0], [0.5, 0.5]])
    return Instance([agent], OutcomeSpace([0.0, 1.0], null_index=0),
                    RewardSpec("linear", {"weights": 1.0}, ALL_TAGS))
