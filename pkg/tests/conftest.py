import json

import pytest

from hwpredict import synth
from hwpredict.features import make_agent_state
from hwpredict.lane_map import load_lane_graph


@pytest.fixture
def two_lane_graph():
    return load_lane_graph(json.dumps(synth.two_lane_map()))


@pytest.fixture
def three_lane_graph():
    return load_lane_graph(json.dumps(synth.three_lane_map()))


@pytest.fixture
def exit_graph():
    return load_lane_graph(json.dumps(synth.exit_map()))


@pytest.fixture
def entry_graph():
    return load_lane_graph(json.dumps(synth.entry_map()))


def agent(id="v1", position=(50.0, 0.0), heading=0.0, speed=10.0, accel=0.0,
          agent_class="car", length=4.5, width=1.8):
    return make_agent_state(id, position, heading, speed, accel,
                            agent_class=agent_class, length=length, width=width)
