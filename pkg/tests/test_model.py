import numpy as np
import pytest

from pnpest.errors import DimensionMismatchError
from pnpest.model import (CrossGain, GainSet, PlantGraph, Subsystem,
                          assemble_collective, validate_graph, zero_gains)
from pnpest.zonotope import from_box


def make_sub(sub_id, A, couplings=None, C=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    return Subsystem(id=sub_id, A=A, C=np.eye(n) if C is None else C,
                     couplings=couplings or {},
                     error_set=from_box(np.ones(n)))


class TestAssembly:
    def test_zero_gain_identity(self):
        sub = make_sub(1, [[0.3, 0.1], [0.0, 0.5]])
        g = PlantGraph([sub])
        A_bar, D = assemble_collective(g, {1: zero_gains(sub)})
        assert np.array_equal(A_bar, sub.A)
        assert D.shape == (2, 0)

    def test_decoupled_block_diagonal(self):
        s1 = make_sub(1, [[0.3]])
        s2 = make_sub(2, [[0.2, 0.0], [0.1, 0.4]])
        g = PlantGraph([s1, s2])
        A_bar, _ = assemble_collective(g)
        assert np.array_equal(A_bar[:1, :1], s1.A)
        assert np.array_equal(A_bar[1:, 1:], s2.A)
        assert np.all(A_bar[:1, 1:] == 0.0) and np.all(A_bar[1:, :1] == 0.0)

    def test_delta_switch_controls_cross_gain(self):
        A12 = np.array([[0.2]])
        s1 = make_sub(1, [[0.3]], couplings={2: A12})
        s2 = make_sub(2, [[0.4]])
        g = PlantGraph([s1, s2])
        L12 = np.array([[-0.15]])
        for delta, expected in ((0, A12), (1, A12 + L12)):
            gains = {
                1: GainSet(L=np.zeros((1, 1)),
                           cross={2: CrossGain(L12 if delta else np.zeros((1, 1)), delta)},
                           Q=np.ones(1), R=np.ones(1), P=np.zeros((1, 1)),
                           dare_residual=0.0),
                2: zero_gains(s2),
            }
            A_bar, _ = assemble_collective(g, gains)
            assert A_bar[0, 1] == pytest.approx(expected[0, 0])

    def test_local_gain_enters_diagonal(self):
        sub = make_sub(1, [[0.5]])
        gains = {1: GainSet(L=np.array([[-0.2]]), cross={}, Q=np.ones(1),
                            R=np.ones(1), P=np.zeros((1, 1)), dare_residual=0.0)}
        A_bar, _ = assemble_collective(PlantGraph([sub]), gains)
        assert A_bar[0, 0] == pytest.approx(0.3)

    def test_dimension_error_names_block(self):
        s1 = make_sub(1, [[0.3]], couplings={2: np.array([[0.1, 0.2]])})
        s2 = make_sub(2, [[0.4]])
        g = PlantGraph([s1, s2])
        with pytest.raises(DimensionMismatchError, match=r"A\[1,2\]"):
            assemble_collective(g)

    def test_disturbance_block_diagonal(self):
        s1 = Subsystem(id=1, A=[[0.3]], C=[[1.0]], D=[[1.0]],
                       error_set=from_box([1.0]), dist_set=from_box([0.1]))
        s2 = Subsystem(id=2, A=[[0.4]], C=[[1.0]], D=[[2.0]],
                       error_set=from_box([1.0]), dist_set=from_box([0.1]))
        _, D = assemble_collective(PlantGraph([s1, s2]))
        assert np.array_equal(D, np.diag([1.0, 2.0]))


class TestValidation:
    def test_well_formed_chain(self):
        s1 = make_sub(1, [[0.3]], couplings={2: [[0.1]]})
        s2 = make_sub(2, [[0.4]])
        assert validate_graph(PlantGraph([s1, s2])).ok

    def test_unknown_parent(self):
        s1 = make_sub(1, [[0.3]], couplings={7: [[0.1]]})
        report = validate_graph(PlantGraph([s1]))
        assert any(f.code == "unknown-parent" and "7" in f.message
                   for f in report.findings)

    def test_wrong_coupling_shape(self):
        s1 = make_sub(1, [[0.3]], couplings={2: [[0.1, 0.2]]})
        s2 = make_sub(2, [[0.4]])
        report = validate_graph(PlantGraph([s1, s2]))
        bad = [f for f in report.findings if f.code == "bad-dim"]
        assert bad and "(1, 1)" in bad[0].message and "(1, 2)" in bad[0].message

    def test_self_coupling(self):
        s1 = make_sub(1, [[0.3]], couplings={1: [[0.1]]})
        report = validate_graph(PlantGraph([s1]))
        assert any(f.code == "self-coupling" for f in report.findings)

    def test_zero_coupling_flagged(self):
        s1 = make_sub(1, [[0.3]], couplings={2: [[0.0]]})
        s2 = make_sub(2, [[0.4]])
        report = validate_graph(PlantGraph([s1, s2]))
        assert any(f.code == "zero-coupling" for f in report.findings)


class TestGraph:
    def test_children_parents_duality(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n_subs = rng.integers(2, 6)
            subs = []
            for i in range(1, n_subs + 1):
                parents = [j for j in range(1, n_subs + 1)
                           if j != i and rng.random() < 0.4]
                subs.append(make_sub(i, [[0.2]],
                                     couplings={j: [[0.1]] for j in parents}))
            g = PlantGraph(subs)
            for i in g.ids:
                for j in g.ids:
                    assert (j in g.children(i)) == (i in g[j].parents)

    def test_without_subsystem_drops_references(self):
        s1 = make_sub(1, [[0.3]], couplings={2: [[0.1]]})
        s2 = make_sub(2, [[0.4]])
        g = PlantGraph([s1, s2]).without_subsystem(2)
        assert g.ids == (1,)
        assert g[1].parents == ()

    def test_with_subsystem_adds_child_couplings(self):
        s1 = make_sub(1, [[0.3]])
        g = PlantGraph([s1])
        new = make_sub(2, [[0.4]], couplings={1: [[0.1]]})
        g2 = g.with_subsystem(new, child_couplings={1: [[0.2]]})
        assert g2.ids == (1, 2)
        assert g2[1].parents == (2,)
        assert g2.children(2) == (1,)
        # original untouched
        assert g[1].parents == ()

    def test_duplicate_id_rejected(self):
        with pytest.raises(ValueError):
            PlantGraph([make_sub(1, [[0.1]]), make_sub(1, [[0.2]])])

    def test_parent_data_scope(self, toy_graph):
        pd = toy_graph.parent_data(1)
        assert set(pd) == {2}
        assert pd[2].C.shape == (2, 2)
