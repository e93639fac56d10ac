import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import ffward.dmvf as dmvf
from ffward.dmvf import (
    DmvfConfig, consensus_round, default_portions, initial_scores, maximal_consensus, run_dmvf,
    select_strategies, update_own_score,
)
from ffward.ffagent import Strategy
from ffward.features import identical_views
from ffward.graph import CommGraph
from ffward.netsim import Channel, ChannelConfig, Kind, SocketChannel, encoded_size
from ffward.report import RunReport
from ffward.simkernel import agent_sim

from helpers import fixed_policies, random_policies

S, N, F = Strategy.SLOW, Strategy.NORMAL, Strategy.FAST


def at_similarity(x, s, alpha=0.05):
    """A point whose similarity to x is exactly s."""
    y = np.array(x, dtype=np.float64)
    y[0] += -math.log(s) / alpha
    return y


@st.composite
def connected_graphs(draw, max_n=12):
    n = draw(st.integers(2, max_n))
    # random spanning tree plus extra edges
    edges = {(draw(st.integers(0, v - 1)), v) for v in range(1, n)}
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    edges |= set(draw(st.lists(st.sampled_from(pairs), max_size=2 * n)))
    return CommGraph.from_edges(n, edges)


class TestInitialScores:
    def test_identical_selections_score_one(self):
        f = np.random.default_rng(0).normal(size=(4, 3))
        scores = initial_scores(0, {0: f, 1: f.copy(), 2: f.copy()}, 0.05)
        assert scores == {0: 1.0, 1: 1.0, 2: 1.0}

    def test_single_neighbour(self):
        x = np.zeros(2)
        fj = np.array([x])
        fi = np.array([at_similarity(x, 0.6)])
        assert initial_scores(0, {0: fi, 1: fj}, 0.05)[1] == pytest.approx(0.6, abs=1e-9)

    def test_two_term_average(self):
        # i's frame sits at similarity 0.8 from j's, k's at 0.4 (k placed on the opposite side)
        x = np.zeros(2)
        fj = np.array([x])
        fi = np.array([at_similarity(x, 0.8)])
        fk = np.array([-at_similarity(x, 0.4)])
        assert agent_sim(fi, fj) == pytest.approx(0.8) and agent_sim(fk, fj) == pytest.approx(0.4)
        scores = initial_scores(0, {0: fi, 1: fj, 2: fk}, 0.05)
        assert scores[1] == pytest.approx(0.6, abs=1e-9)

    def test_empty_selection_terms_skipped(self):
        f = np.random.default_rng(1).normal(size=(3, 2))
        scores = initial_scores(0, {0: f, 1: np.zeros((0, 2)), 2: f.copy()}, 0.05)
        assert scores[1] == 0.0
        assert scores[0] == 1.0 and scores[2] == 1.0

    def test_needs_neighbour(self):
        with pytest.raises(ValueError):
            initial_scores(0, {0: np.zeros((1, 2))}, 0.05)


class TestUpdateOwnScore:
    def test_equal_weights_mean(self):
        assert update_own_score({0: 0.2, 1: 0.4, 2: 0.9}, {0: 3, 1: 3, 2: 3}) == pytest.approx(0.5)

    def test_hand_weighted(self):
        assert update_own_score({0: 0.3, 1: 0.9}, {0: 2, 1: 4}) == pytest.approx(0.5, abs=1e-12)

    def test_single(self):
        assert update_own_score({4: 0.37}, {4: 7}) == pytest.approx(0.37)

    def test_empty(self):
        with pytest.raises(ValueError):
            update_own_score({}, {})


def sparse_inputs(values):
    n = len(values)
    out = []
    for i, v in enumerate(values):
        e = np.zeros(n)
        e[i] = v
        out.append(e)
    return out


class TestConsensus:
    def test_complete_one_round(self):
        g = CommGraph.complete(4)
        vecs = consensus_round(g, sparse_inputs([0.1, 0.7, 0.3, 0.2]))
        for v in vecs:
            np.testing.assert_array_equal(v, [0.1, 0.7, 0.3, 0.2])

    def test_path_two_rounds(self):
        g = CommGraph.path(3)
        a, b, c = 0.2, 0.5, 0.9
        one = consensus_round(g, sparse_inputs([a, b, c]))
        np.testing.assert_array_equal(one[0], [a, b, 0])
        np.testing.assert_array_equal(one[1], [a, b, c])
        np.testing.assert_array_equal(one[2], [0, b, c])
        for v in maximal_consensus(g, sparse_inputs([a, b, c])):
            np.testing.assert_array_equal(v, [a, b, c])

    @given(connected_graphs(), st.data())
    def test_exact_after_diameter_rounds(self, g, data):
        vals = data.draw(st.lists(st.floats(0, 1), min_size=g.num_nodes, max_size=g.num_nodes))
        inputs = sparse_inputs(vals)
        expected = np.max(inputs, axis=0)
        for v in maximal_consensus(g, inputs):
            np.testing.assert_array_equal(v, expected)

    def test_wrong_vector_count(self):
        with pytest.raises(ValueError):
            maximal_consensus(CommGraph.complete(3), sparse_inputs([1.0, 2.0]))


class TestSelectStrategies:
    def test_ranking(self):
        assert select_strategies([0.9, 0.5, 0.1], (1, 1, 1)) == [S, N, F]
        assert select_strategies([0.1, 0.5, 0.9], (1, 1, 1)) == [F, N, S]

    def test_ties_lowest_id_first(self):
        assert select_strategies([0.3, 0.3, 0.3], (1, 1, 1)) == [S, N, F]
        assert select_strategies([0.3] * 4, (1, 2, 1)) == [S, N, N, F]

    @given(st.lists(st.floats(0, 1), min_size=6, max_size=6))
    def test_six_agents_two_each(self, scores):
        out = select_strategies(scores, (2, 2, 2))
        assert [out.count(s) for s in Strategy] == [2, 2, 2]

    def test_portion_sum_checked(self):
        with pytest.raises(ValueError):
            select_strategies([0.1, 0.2], (1, 1, 1))

    def test_default_portions(self):
        assert default_portions(3) == (1, 1, 1)
        assert default_portions(6) == (2, 2, 2)
        assert sum(default_portions(5)) == 5 and sum(default_portions(4)) == 4


class TestRunDmvf:
    def test_identical_views_single_period(self, small_scene):
        ds = identical_views(small_scene)
        # same skip length everywhere so all agents pick the same frames
        pol = fixed_policies(ds.dim, slow=5, normal=5, fast=5)
        rep = run_dmvf(ds, CommGraph.complete(3), pol, DmvfConfig(), periods=1)
        scores = rep.periods[0].scores
        assert scores[0] == scores[1] == scores[2] == 1.0
        # period 0 runs on the all-zero ranking
        assert rep.periods[0].strategies == ["slow", "normal", "fast"]

    def test_portions_every_period(self, small_scene):
        rep = run_dmvf(small_scene, CommGraph.path(3), random_policies(small_scene.dim), DmvfConfig())
        for counts in rep.strategy_counts():
            assert (counts["slow"], counts["normal"], counts["fast"]) == (1, 1, 1)
        assert rep.meta["consensus_disagreements"] == 0

    def test_channel_transparency(self, small_scene):
        pol = random_policies(small_scene.dim, 1)
        g = CommGraph.ring(3)
        a = run_dmvf(small_scene, g, pol).to_text()
        b = run_dmvf(small_scene, g, pol, channel=Channel(ChannelConfig(loss=0.0))).to_text()
        with SocketChannel(ChannelConfig(loss=0.0)) as ch:
            c = run_dmvf(small_scene, g, pol, channel=ch).to_text()
        assert a == b == c

    def test_processing_accounting(self, small_scene):
        rep = run_dmvf(small_scene, CommGraph.complete(3), fixed_policies(small_scene.dim))
        # constant policies: slow skips 2, normal 5, fast 12 frames
        assert rep.processed_total() == sum(len(s) for s in rep.selections())
        assert rep.processing_rate() == rep.processed_total() / (3 * small_scene.length)
        for p in rep.periods:
            for a, sel in enumerate(p.selected):
                assert all(p.period * 100 <= t < (p.period + 1) * 100 for t in sel)

    def test_byte_accounting(self, small_scene):
        rep = run_dmvf(small_scene, CommGraph.path(3), random_policies(small_scene.dim, 2))
        hist = rep.comm.histogram
        assert sum(size * n for h in hist.values() for size, n in h.items()) == rep.comm.bytes_p2p
        assert rep.comm.bytes_central == 0
        assert sum(sum(p.bytes_sent) for p in rep.periods) == rep.comm.bytes_p2p
        assert set(hist) == {"FRAME_BATCH", "SCORE_VECTOR"}

    def test_consensus_bytes_match_rounds(self, small_scene):
        g = CommGraph.path(3)
        rep = run_dmvf(small_scene, g, fixed_policies(small_scene.dim), periods=1)
        directed = 2 * len(g.edges)
        # one x0 row per directed edge plus one vector per directed edge per round
        assert sum(rep.comm.histogram["SCORE_VECTOR"].values()) == directed * (1 + g.diameter)
        assert sum(rep.comm.histogram["FRAME_BATCH"].values()) == directed

    def test_lost_frames_shrink_neighbourhood(self, small_scene, monkeypatch):
        calls = []
        real = dmvf.initial_scores

        def spy(i, selections, alpha):
            calls.append((i, sorted(selections)))
            return real(i, selections, alpha)

        class DropZeroToOne(Channel):
            def send(self, msg, dest):
                if msg.kind is Kind.FRAME_BATCH and msg.sender == 0 and dest == 1:
                    self._ordinal += 1
                    return False
                return super().send(msg, dest)

        monkeypatch.setattr(dmvf, "initial_scores", spy)
        run_dmvf(small_scene, CommGraph.complete(3), fixed_policies(small_scene.dim), channel=DropZeroToOne(),
                 periods=1)
        assert (1, [1, 2]) in calls
        assert (0, [0, 1, 2]) in calls and (2, [0, 1, 2]) in calls

    def test_deterministic_under_loss(self, small_scene):
        pol = random_policies(small_scene.dim, 3)
        runs = [run_dmvf(small_scene, CommGraph.ring(3), pol, channel=Channel(ChannelConfig(0.1, 4))).to_text()
                for _ in range(2)]
        assert runs[0] == runs[1]

    def test_report_roundtrip(self, small_scene):
        rep = run_dmvf(small_scene, CommGraph.complete(3), random_policies(small_scene.dim))
        assert RunReport.from_text(rep.to_text()).to_text() == rep.to_text()

    def test_missing_policy(self, small_scene):
        pol = fixed_policies(small_scene.dim)
        del pol[Strategy.FAST]
        with pytest.raises(KeyError):
            run_dmvf(small_scene, CommGraph.complete(3), pol)

    def test_graph_size_checked(self, small_scene):
        with pytest.raises(ValueError):
            run_dmvf(small_scene, CommGraph.complete(4), fixed_policies(small_scene.dim))

    def test_uniform_weights_option(self, small_scene):
        rep = run_dmvf(small_scene, CommGraph.path(3), fixed_policies(small_scene.dim),
                       DmvfConfig(evaluator_weight="uniform"), periods=2)
        assert rep.meta["evaluator_weight"] == "uniform"
        with pytest.raises(ValueError):
            run_dmvf(small_scene, CommGraph.path(3), fixed_policies(small_scene.dim),
                     DmvfConfig(evaluator_weight="bogus"), periods=1)
