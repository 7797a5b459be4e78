import math

import numpy as np
import pytest

from hwpredict import bayes, synth, tracks
from hwpredict.bayes import (BayesParams, PhysicsProfilePredictor, Predictor,
                             forget, lateral_acc_penalty, likelihood,
                             posterior_update, remap_goal_masses)
from hwpredict.lane_map import (Goal, GoalKind, GoalMatching, OffRoadError,
                                match_goals)

from conftest import agent

PARAMS = BayesParams()

PEAK = 1.0 / ((2 * math.pi) ** 1.5 * 0.4 * 0.4 * 0.15)


class TestLikelihood:
    def test_peak_density(self):
        obs = agent(position=(10.0, 0.0), heading=0.0, speed=10.0)
        lik = likelihood(obs, (10.0, 0.0, 0.0, 10.0), PARAMS)
        assert lik == pytest.approx(PEAK, rel=1e-12)
        assert lik == pytest.approx(2.6459, abs=2e-3)

    def test_one_metre_x_error(self):
        obs = agent(position=(11.0, 0.0), heading=0.0, speed=10.0)
        lik = likelihood(obs, (10.0, 0.0, 0.0, 10.0), PARAMS)
        assert lik == pytest.approx(PEAK * math.exp(-0.5 * (1.0 / 0.4) ** 2),
                                    rel=1e-12)

    def test_angle_wrapping(self):
        obs = agent(position=(10.0, 0.0), heading=2 * math.pi - 0.01,
                    speed=10.0)
        near = likelihood(obs, (10.0, 0.0, 0.0, 10.0), PARAMS)
        obs2 = agent(position=(10.0, 0.0), heading=-0.01, speed=10.0)
        assert near == pytest.approx(
            likelihood(obs2, (10.0, 0.0, 0.0, 10.0), PARAMS), rel=1e-12)

    def test_invariant_under_2pi_velocity_direction(self):
        a = agent(position=(10.0, 0.1), heading=0.3, speed=8.0)
        b = agent(position=(10.0, 0.1), heading=0.3 - 2 * math.pi, speed=8.0)
        pred = (10.0, 0.0, 0.1, 8.0)
        assert likelihood(a, pred, PARAMS) == pytest.approx(
            likelihood(b, pred, PARAMS), rel=1e-12)


class TestPosteriorUpdate:
    def test_uniform_symmetry(self):
        post = posterior_update(np.full(4, 0.25), np.full(4, 3.3))
        assert post == pytest.approx([0.25] * 4)

    def test_zero_likelihood_annihilates(self):
        post = posterior_update(np.array([0.5, 0.5]), np.array([0.0, 1.0]))
        assert post == pytest.approx([0.0, 1.0])

    def test_bayes_arithmetic(self):
        post = posterior_update(np.array([0.5, 0.5]), np.array([2.0, 1.0]))
        assert post == pytest.approx([2 / 3, 1 / 3])

    def test_all_zero_falls_back_to_prior(self):
        prior = np.array([0.7, 0.3])
        post = posterior_update(prior, np.zeros(2))
        assert post == pytest.approx(prior)


class TestPenalty:
    def test_zero_alpha_unchanged(self):
        dist = np.array([0.5, 0.3, 0.2])
        out = lateral_acc_penalty(dist, np.zeros(3), PARAMS)
        assert out == pytest.approx(dist)

    def test_direct_evaluation(self):
        dist = np.array([0.5, 0.5])
        out = lateral_acc_penalty(dist, np.array([0.0, 2.0]), PARAMS)
        w = math.exp(-0.5 * 2.0)  # lambda = 0.5, excess = 2
        assert out == pytest.approx([0.5 / (0.5 + 0.5 * w), 0.5 * w / (0.5 + 0.5 * w)])
        assert w == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_lambda_zero_identity(self):
        params = BayesParams(penalty_rate=0.0)
        dist = np.array([0.6, 0.4])
        assert lateral_acc_penalty(dist, np.array([3.0, 1.0]), params) == \
            pytest.approx(dist)

    def test_ranking_monotone_in_alpha(self):
        dist = np.array([0.25, 0.25, 0.25, 0.25])
        out = lateral_acc_penalty(dist, np.array([0.0, 1.0, 2.0, 1.0]), PARAMS)
        assert out[0] > out[1] > out[2]
        assert out[1] == pytest.approx(out[3])


class TestForget:
    def test_uniform_fixed_point(self):
        u = np.full(5, 0.2)
        assert forget(u, 0.1) == pytest.approx(u)

    def test_full_forgetting(self):
        assert forget(np.array([1.0, 0.0]), 1.0) == pytest.approx([0.5, 0.5])

    def test_direct_evaluation(self):
        assert forget(np.array([1.0, 0.0]), 0.1) == pytest.approx([0.95, 0.05])


class TestRemap:
    def test_identity(self):
        goals = [Goal(GoalKind.FOLLOW_LANE, "a"), Goal(GoalKind.CHANGE_LEFT, "b")]
        m = match_goals(goals, goals)
        dist = np.array([0.7, 0.3])
        assert remap_goal_masses(dist, m, 2) == pytest.approx(dist)

    def test_removed_split_equally(self):
        prev = [Goal(GoalKind.FOLLOW_LANE, "a"), Goal(GoalKind.CHANGE_LEFT, "b"),
                Goal(GoalKind.EXIT_HIGHWAY, "x")]
        cur = prev[:2]
        m = match_goals(prev, cur)
        out = remap_goal_masses(np.array([0.4, 0.3, 0.3]), m, 2)
        assert out == pytest.approx([0.55, 0.45])

    def test_added_draws_uniform_share(self):
        prev = [Goal(GoalKind.FOLLOW_LANE, "a"), Goal(GoalKind.CHANGE_LEFT, "b")]
        cur = prev + [Goal(GoalKind.CHANGE_RIGHT, "c")]
        m = match_goals(prev, cur)
        out = remap_goal_masses(np.array([0.6, 0.4]), m, 3)
        assert out == pytest.approx([0.6 - 1 / 6, 0.4 - 1 / 6, 1 / 3])

    def test_negative_clamp_renormalises(self):
        prev = [Goal(GoalKind.FOLLOW_LANE, "a")]
        cur = prev + [Goal(GoalKind.CHANGE_LEFT, "b"),
                      Goal(GoalKind.CHANGE_RIGHT, "c"),
                      Goal(GoalKind.EXIT_HIGHWAY, "x")]
        m = match_goals(prev, cur)
        out = remap_goal_masses(np.array([1.0]), m, 4)
        assert np.all(out >= 0.0)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)


def run_scenario(table, map_name, target="v1"):
    graph = synth.fixture_graph(map_name)
    scenes = tracks.table_to_scenes(table)
    predictor = Predictor(graph, PhysicsProfilePredictor("cv"))
    posteriors = []
    for frame in sorted(scenes):
        posteriors.append(predictor.step(scenes[frame], target))
    return posteriors


class TestStep:
    def test_uniform_at_t0(self, three_lane_graph):
        predictor = Predictor(three_lane_graph, PhysicsProfilePredictor("cv"),
                              BayesParams(forgetting=0.0, penalty_rate=0.0))
        post = predictor.step([agent(position=(50.0, 3.5))], "v1")
        assert post.probabilities == pytest.approx([1 / 3] * 3)

    def test_sums_to_one_and_floor(self):
        table = synth.change_lane_track()
        for post in run_scenario(table, "two_lane"):
            p = post.probabilities
            assert p.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(p >= 0.1 / len(p) - 1e-12)

    def test_constant_follow_argmax(self):
        table = synth.constant_velocity_track()
        posteriors = run_scenario(table, "two_lane")
        hits = sum(p.most_likely().goal.kind == GoalKind.FOLLOW_LANE
                   for p in posteriors)
        assert hits / len(posteriors) >= 0.95

    def test_scripted_change_left_wins(self):
        table = synth.change_lane_track(onset=2.0, manoeuvre=3.0)
        posteriors = run_scenario(table, "two_lane")
        crossed = None
        for i, post in enumerate(posteriors):
            prob = next((e.probability for e in post.entries
                         if e.goal.kind == GoalKind.CHANGE_LEFT), 0.0)
            if i / 10.0 >= 2.0 and prob > 0.8:
                crossed = i / 10.0 - 2.0
                break
        assert crossed is not None and crossed <= 1.5

    def test_determinism(self):
        table = synth.change_lane_track()
        a = [p.probabilities for p in run_scenario(table, "two_lane")]
        b = [p.probabilities for p in run_scenario(table, "two_lane")]
        for pa, pb in zip(a, b):
            assert np.array_equal(pa, pb)

    def test_off_road_raises(self, two_lane_graph):
        predictor = Predictor(two_lane_graph, PhysicsProfilePredictor("cv"))
        with pytest.raises(OffRoadError):
            predictor.step([agent(position=(50.0, -40.0))], "v1")

    def test_one_trajectory_per_goal(self, three_lane_graph):
        predictor = Predictor(three_lane_graph, PhysicsProfilePredictor("cv"))
        post = predictor.step([agent(position=(50.0, 3.5))], "v1")
        assert len(post.entries) == len({e.goal.key for e in post.entries})
        for e in post.entries:
            assert e.trajectory.states.shape == (50, 4)
