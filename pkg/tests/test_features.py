import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hwpredict import geometry
from hwpredict.features import (AGENT_CLASSES, FEATURE_SCHEMAS,
                                change_lane_features, change_schema_id,
                                feature_length, follow_lane_features,
                                follow_schema_id, headway_distance,
                                polygon_distance, select_neighbours)

from conftest import agent


def brute_polygon_distance(a, b, n=400):
    """Edge-pair sampling oracle for rectangle-to-rectangle distance."""
    ca = geometry.rectangle_corners(a.position, a.heading, a.length, a.width)
    cb = geometry.rectangle_corners(b.position, b.heading, b.length, b.width)

    def edge_points(corners):
        pts = []
        for p, q in zip(corners, np.roll(corners, -1, axis=0)):
            ts = np.linspace(0.0, 1.0, n)
            pts.append(p + ts[:, None] * (q - p))
        return np.concatenate(pts)

    pa, pb = edge_points(ca), edge_points(cb)
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1)
    return math.sqrt(d2.min())


class TestSelectNeighbours:
    def test_lone_agent(self, two_lane_graph):
        t = agent()
        n = select_neighbours([t], "v1", two_lane_graph)
        assert n.front == [] and n.left_side == [] and n.right_side == []

    def test_front_nearest_three_of_five(self, two_lane_graph):
        scene = [agent()] + [agent(f"f{d}", position=(50.0 + d, 0.0))
                             for d in (10, 20, 30, 40, 50)]
        n = select_neighbours(scene, "v1", two_lane_graph)
        assert [r.agent.id for r in n.front] == ["f10", "f20", "f30"]
        assert [r.gap for r in n.front] == pytest.approx([10.0, 20.0, 30.0])

    def test_radius_boundary(self, two_lane_graph):
        scene = [agent(), agent("far", position=(111.0, 0.0))]
        n = select_neighbours(scene, "v1", two_lane_graph)
        assert n.front == []

    def test_side_sorted_by_abs_gap(self, two_lane_graph):
        scene = [agent(),
                 agent("b1", position=(45.0, 3.5)),
                 agent("b2", position=(52.0, 3.5)),
                 agent("b3", position=(90.0, 3.5))]
        n = select_neighbours(scene, "v1", two_lane_graph)
        assert [r.agent.id for r in n.left_side] == ["b2", "b1", "b3"]

    def test_behind_same_lane_excluded_from_front(self, two_lane_graph):
        scene = [agent(), agent("rear", position=(30.0, 0.0))]
        n = select_neighbours(scene, "v1", two_lane_graph)
        assert n.front == []

    def test_scene_order_irrelevant(self, two_lane_graph):
        base = [agent(),
                agent("f1", position=(60.0, 0.0)),
                agent("f2", position=(70.0, 0.0)),
                agent("s1", position=(48.0, 3.5))]
        ref = None
        for perm in itertools.permutations(base):
            n = select_neighbours(list(perm), "v1", two_lane_graph)
            z = change_lane_features(n, "left", 2, 1)
            if ref is None:
                ref = z.values
            assert np.array_equal(z.values, ref)


class TestFollowFeatures:
    def test_target_only_length(self, two_lane_graph):
        n = select_neighbours([agent()], "v1", two_lane_graph)
        z = follow_lane_features(n, 0)
        assert len(z.values) == 2 + len(AGENT_CLASSES)
        assert z.schema_id == follow_schema_id(0)

    def test_documented_order(self, two_lane_graph):
        t = agent(speed=10.0, accel=0.5)
        f = agent("f1", position=(65.0, 0.0), speed=8.0, accel=-0.2,
                  agent_class="truck", length=8.0)
        n = select_neighbours([t, f], "v1", two_lane_graph)
        z = follow_lane_features(n, 1)
        headway = 15.0 - 4.5 / 2 - 8.0 / 2  # bumper-to-bumper
        expected = [10.0, 0.5, 1.0, 0.0, 0.0,
                    8.0, -0.2, 0.0, 1.0, 0.0, headway]
        assert z.values == pytest.approx(expected)

    def test_determinism(self, two_lane_graph):
        scene = [agent(), agent("f1", position=(60.0, 0.0))]
        n1 = select_neighbours(scene, "v1", two_lane_graph)
        n2 = select_neighbours(scene, "v1", two_lane_graph)
        assert np.array_equal(follow_lane_features(n1, 1).values,
                              follow_lane_features(n2, 1).values)

    def test_too_few_front_agents(self, two_lane_graph):
        n = select_neighbours([agent()], "v1", two_lane_graph)
        with pytest.raises(ValueError, match="front"):
            follow_lane_features(n, 1)


class TestChangeFeatures:
    def test_zero_side_equals_follow_block(self, two_lane_graph):
        scene = [agent(), agent("f1", position=(60.0, 0.0))]
        n = select_neighbours(scene, "v1", two_lane_graph)
        zc = change_lane_features(n, "left", 1, 0)
        zf = follow_lane_features(n, 1)
        assert np.array_equal(zc.values, zf.values)
        assert zc.schema_id == change_schema_id(1, 0)

    def test_alongside_zero_gap_is_behind(self, two_lane_graph):
        scene = [agent(), agent("s1", position=(50.0, 3.5))]
        n = select_neighbours(scene, "v1", two_lane_graph)
        z = change_lane_features(n, "left", 0, 1)
        flag = z.values[5 + 5]  # first side block, ahead/behind slot
        assert flag == 0.0

    def test_polygon_distance_aligned_rectangles(self):
        a = agent(position=(0.0, 0.0), width=1.8)
        b = agent("s", position=(0.0, 2.8), width=1.8)
        # lateral gap: 2.8 - 0.9 - 0.9 = 1.0
        assert polygon_distance(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_polygon_distance_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a = agent(position=(0.0, 0.0), heading=rng.uniform(-3, 3))
            b = agent("s", position=tuple(rng.uniform(5.0, 12.0, 2)),
                      heading=rng.uniform(-3, 3))
            assert polygon_distance(a, b) == pytest.approx(
                brute_polygon_distance(a, b), abs=2e-2)

    def test_c2c_at_least_polygon_distance(self, two_lane_graph):
        rng = np.random.default_rng(3)
        for _ in range(30):
            t = agent(position=(50.0, 0.0))
            s = agent("s1", position=(50.0 + rng.uniform(-30, 30),
                                      3.5 + rng.uniform(-1, 1)))
            n = select_neighbours([t, s], "v1", two_lane_graph)
            if not n.left_side:
                continue
            z = change_lane_features(n, "left", 0, 1)
            c2c, poly = z.values[-2], z.values[-1]
            assert c2c >= poly >= 0.0


@given(kf=st.integers(0, 3), ks=st.integers(0, 3))
@settings(max_examples=16, deadline=None)
def test_schema_lengths(kf, ks):
    assert feature_length(follow_schema_id(kf)) == 5 + 6 * kf
    assert feature_length(change_schema_id(kf, ks)) == 5 + 6 * kf + 8 * ks


def test_twenty_schemas_total():
    assert len(FEATURE_SCHEMAS) == 20


def test_headway_non_negative(two_lane_graph):
    t = agent(length=10.0)
    f = agent("f1", position=(53.0, 0.0), length=10.0)
    n = select_neighbours([t, f], "v1", two_lane_graph)
    assert headway_distance(t, n.front[0]) == 0.0
