"""Star rounds, gossip averaging, topologies and the communication ledger."""

import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coreopt.compressors import core_compress, core_reconstruct
from coreopt.errors import InvalidDimensionError, InvalidInputError, NonConvergenceError
from coreopt.randomness import forced_basis, round_basis
from coreopt.simnet import (CommLedger, Topology, decentralized_round, gossip_average,
                            gossip_iterations, star_round, star_round_detail)


class TestStarRound:
    def test_zero_gradients_still_charged(self):
        ledger = CommLedger(3)
        est = star_round(np.zeros((3, 10)), seed=1, round=0, m=4, ledger=ledger)
        np.testing.assert_array_equal(est, 0.0)
        assert (ledger.uplink, ledger.downlink, ledger.total) == (12, 12, 24)

    def test_single_machine_is_core(self, rng):
        g = rng.standard_normal(25)
        est = star_round(g[None, :], seed=9, round=3, m=6)
        np.testing.assert_array_equal(est, core_reconstruct(core_compress(g, 9, 3, 6), 9))

    def test_identical_machines_match_single(self):
        g = np.array([[1.0, -2.0, 0.5, 4.0]])
        single = star_round(g, 5, 0, 3)
        many = star_round(np.repeat(g, 4, axis=0), 5, 0, 3)
        np.testing.assert_array_equal(single, many)

    def test_average_of_machine_sketches(self, rng):
        G = rng.standard_normal((5, 12))
        est, coeffs = star_round_detail(G, 2, 7, 4)
        basis = round_basis(2, 7, 4, 12)
        oracle = sum(G[i] @ basis[j] * basis[j] for i in range(5) for j in range(4)) / 20
        np.testing.assert_allclose(est, oracle, atol=1e-12)
        np.testing.assert_allclose(coeffs, (G @ basis.T).mean(axis=0), atol=1e-12)

    def test_forced_basis(self):
        with forced_basis([[1.0, 0.0], [0.0, 1.0]]):
            est = star_round(np.array([[2.0, 4.0], [0.0, 2.0]]), 0, 0, 2)
        np.testing.assert_allclose(est, [0.5, 1.5])

    def test_rejects_vector(self):
        with pytest.raises(InvalidDimensionError):
            star_round(np.ones(4), 0, 0, 1)


class TestTopology:
    def test_ring_edges(self):
        assert Topology.ring(8).n_edges == 8
        assert Topology.ring(2).edges == ((0, 1),)
        assert Topology.ring(1).n_edges == 0

    @pytest.mark.parametrize("edges", [[(0, 0)], [(0, 5)], [(0, 1), (1, 0)]])
    def test_invalid_edges(self, edges):
        with pytest.raises(InvalidInputError):
            Topology.graph(3, edges)

    def test_unknown_kind(self):
        with pytest.raises(InvalidInputError):
            Topology("mesh", 3)

    @pytest.mark.parametrize("topo", [Topology.ring(8), Topology.complete(5),
                                      Topology.graph(4, [(0, 1), (1, 2), (1, 3)])])
    def test_gossip_matrix_properties(self, topo):
        W = topo.gossip_matrix
        np.testing.assert_allclose(W, W.T, atol=0)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-14)
        ev = np.linalg.eigvalsh(W)
        assert ev.min() >= -1e-12 and ev.max() == pytest.approx(1.0)
        assert 0 < topo.eigengap <= 1

    def test_disconnected(self):
        topo = Topology.graph(4, [(0, 1), (2, 3)])
        assert not topo.connected and topo.eigengap == 0.0
        with pytest.raises(NonConvergenceError):
            gossip_iterations(1e-6, topo.eigengap)
        with pytest.raises(NonConvergenceError):
            gossip_average(np.ones((4, 2)), topo, tol=1e-6)


class TestGossip:
    def test_two_nodes_one_step(self):
        topo = Topology.ring(2)
        assert gossip_iterations(1e-12, topo.eigengap) == 1
        out = gossip_average([[1.0, 4.0], [3.0, 0.0]], topo, iterations=1)
        np.testing.assert_array_equal(out, [[2.0, 2.0], [2.0, 2.0]])

    def test_zero_iterations_is_identity(self, rng):
        V = rng.standard_normal((8, 3))
        ledger = CommLedger(8)
        np.testing.assert_array_equal(gossip_average(V, Topology.ring(8), 0, ledger), V)
        assert ledger.total == 0

    @pytest.mark.parametrize("accelerated", [False, True])
    def test_ring_reaches_average(self, accelerated, rng):
        topo = Topology.ring(8)
        V = rng.standard_normal((8, 4))
        out = gossip_average(V, topo, accelerated=accelerated, tol=1e-10)
        assert np.max(np.abs(out - V.mean(axis=0))) <= 1e-9

    def test_chebyshev_needs_fewer_iterations(self):
        gap = Topology.ring(32).eigengap
        assert gossip_iterations(1e-8, gap, True) < gossip_iterations(1e-8, gap, False)

    @given(st.integers(0, 40), st.booleans(), st.integers(0, 2 ** 32 - 1))
    def test_mean_conserved(self, iters, accelerated, seed):
        V = np.random.default_rng(seed).standard_normal((8, 3))
        out = gossip_average(V, Topology.ring(8), iters, accelerated=accelerated)
        assert np.max(np.abs(out.mean(axis=0) - V.mean(axis=0))) <= 1e-13

    def test_ring_ledger(self):
        ledger = CommLedger(8)
        gossip_average(np.ones((8, 4)), Topology.ring(8), 20, ledger)
        assert ledger.gossip == 1280 and ledger.total == 1280

    def test_requires_iterations_or_tol(self):
        with pytest.raises(InvalidInputError):
            gossip_average(np.ones((2, 1)), Topology.ring(2))
        with pytest.raises(InvalidInputError):
            gossip_average(np.ones((2, 1)), Topology.ring(2), iterations=-1)

    def test_row_count_checked(self):
        with pytest.raises(InvalidDimensionError):
            gossip_average(np.ones((3, 1)), Topology.ring(2), 1)


class TestDecentralized:
    def test_complete_graph_matches_star(self, rng):
        G = rng.standard_normal((6, 30))
        star = star_round(G, 11, 2, 5)
        dec = decentralized_round(G, 11, 2, 5, Topology.complete(6))
        assert np.max(np.abs(dec - star)) <= 1e-12

    def test_ring_matches_star(self, rng):
        G = rng.standard_normal((8, 20))
        star = star_round(G, 3, 0, 4)
        dec = decentralized_round(G, 3, 0, 4, Topology.ring(8), tol=1e-12)
        assert np.max(np.abs(dec - star)) <= 1e-10

    def test_gossip_charged(self, rng):
        ledger = CommLedger(8)
        decentralized_round(rng.standard_normal((8, 5)), 0, 0, 4, Topology.ring(8), 20, ledger)
        assert ledger.total == 1280

    def test_shape_checked(self):
        with pytest.raises(InvalidDimensionError):
            decentralized_round(np.ones((3, 2)), 0, 0, 1, Topology.ring(4))


class TestLedger:
    def test_directions_and_rounds(self):
        ledger = CommLedger(2)
        ledger.charge(0, uplink=4, downlink=4)
        ledger.charge(0, gossip=2)
        ledger.charge(1, uplink=1)
        assert ledger.total == 11 and ledger.rounds == 2
        assert ledger.per_machine() == {"uplink": 2.5, "downlink": 2.0, "gossip": 1.0}
        fh = io.StringIO()
        ledger.write_csv(fh)
        assert fh.getvalue() == "round,uplink,downlink,gossip\n0,4,4,2\n1,1,0,0\n"

    def test_negative_charge(self):
        with pytest.raises(InvalidInputError):
            CommLedger().charge(0, uplink=-1)
