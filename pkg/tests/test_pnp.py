import numpy as np
import pytest

from pnpest.model import PlantGraph, Subsystem
from pnpest.plantfile import plant_hash
from pnpest.pnp import plug_in, unplug
from pnpest.synthesis import SynthesisOptions, design_lse
from pnpest.zonotope import from_box

FAST = SynthesisOptions(eval_budget=120)


def chain_graph():
    s1 = Subsystem(id=1, A=[[0.5]], C=[[1.0]], couplings={2: [[0.05]]},
                   error_set=from_box([1.0]))
    s2 = Subsystem(id=2, A=[[0.4]], C=[[1.0]], error_set=from_box([1.0]))
    return PlantGraph([s1, s2])


@pytest.fixture()
def chain_designs():
    g = chain_graph()
    designs = {sid: design_lse(g[sid], g.parent_data(sid), options=FAST)
               for sid in g.ids}
    return g, designs


class TestPlugIn:
    def test_isolated_subsystem_designs_only_itself(self, chain_designs):
        g, designs = chain_designs
        new = Subsystem(id=3, A=[[0.3]], C=[[1.0]], error_set=from_box([1.0]))
        res = plug_in(g, designs, new, options=FAST)
        assert res.transaction.accepted
        assert res.transaction.redesigned == (3,)
        assert res.design_calls == (3,)
        assert res.graph.ids == (1, 2, 3)
        # untouched subsystems keep their exact designs
        for sid in (1, 2):
            assert res.designs[sid] is designs[sid]

    def test_children_redesigned(self, chain_designs):
        g, designs = chain_designs
        new = Subsystem(id=3, A=[[0.3]], C=[[1.0]], couplings={1: [[0.02]]},
                        error_set=from_box([1.0]))
        res = plug_in(g, designs, new, child_couplings={2: [[0.03]]}, options=FAST)
        assert res.transaction.accepted
        assert res.transaction.redesigned == (3, 2)
        assert res.designs[1] is designs[1]
        assert res.designs[2] is not designs[2]
        assert res.graph[2].parents == (3,)

    def test_rejection_is_atomic(self, chain_designs):
        g, designs = chain_designs
        h_before = plant_hash(g)
        # coupling so large the child cannot host an invariant set; output
        # communication from the newcomer is disabled so it cannot be
        # attenuated away either
        new = Subsystem(id=3, A=[[0.3]], C=[[1.0]], error_set=from_box([1.0]))
        res = plug_in(g, designs, new, child_couplings={2: [[5.0]]},
                      delta={3: 0}, options=FAST)
        assert not res.transaction.accepted
        assert res.transaction.rejection.failing_id == 2
        assert res.transaction.rejection.reason == "NecessaryConditionViolated"
        assert res.transaction.redesigned == ()
        assert res.graph is g
        assert res.designs is designs
        assert plant_hash(res.graph) == h_before

    def test_rejects_duplicate_id(self, chain_designs):
        g, designs = chain_designs
        dup = Subsystem(id=2, A=[[0.3]], C=[[1.0]], error_set=from_box([1.0]))
        with pytest.raises(ValueError):
            plug_in(g, designs, dup, options=FAST)

    def test_rejects_invalid_subsystem(self, chain_designs):
        g, designs = chain_designs
        bad = Subsystem(id=3, A=[[0.3]], C=[[1.0]], couplings={9: [[0.1]]},
                        error_set=from_box([1.0]))
        res = plug_in(g, designs, bad, options=FAST)
        assert not res.transaction.accepted
        assert res.transaction.rejection.stage == "validate"


class TestUnplug:
    def test_leaf_removal_touches_nothing(self, chain_designs):
        g, designs = chain_designs
        # subsystem 1 has no children (nobody couples to it)
        res = unplug(g, designs, 1, options=FAST)
        assert res.transaction.redesigned == ()
        assert res.transaction.optional_redesigned == ()
        assert res.graph.ids == (2,)
        assert res.designs[2] is designs[2]

    def test_children_recertified_not_redesigned(self, chain_designs):
        g, designs = chain_designs
        res = unplug(g, designs, 2, options=FAST)
        assert res.transaction.redesigned == ()
        d1_old, d1_new = designs[1], res.designs[1]
        assert np.array_equal(d1_old.gains.L, d1_new.gains.L)
        assert 2 not in d1_new.gains.cross
        assert d1_new.rpi is d1_old.rpi
        # one parent fewer: certified gains cannot grow
        assert d1_new.report.coupling.upper <= d1_old.report.coupling.upper + 1e-12
        assert d1_new.report.disturbance.upper <= d1_old.report.disturbance.upper + 1e-12

    def test_optional_redesign_recorded(self, chain_designs):
        g, designs = chain_designs
        res = unplug(g, designs, 2, redesign_children=True, options=FAST)
        assert res.transaction.redesigned == ()
        assert res.transaction.optional_redesigned == (1,)
        assert res.design_calls == (1,)

    def test_unknown_id(self, chain_designs):
        g, designs = chain_designs
        with pytest.raises(KeyError):
            unplug(g, designs, 9, options=FAST)

    def test_round_trip_replug(self, chain_designs):
        g, designs = chain_designs
        removed = g[2]
        coupling_back = g[1].couplings[2]
        res = unplug(g, designs, 2, options=FAST)
        res2 = plug_in(res.graph, res.designs,
                       Subsystem(id=2, A=removed.A, C=removed.C,
                                 error_set=removed.error_set),
                       child_couplings={1: coupling_back}, options=FAST)
        assert res2.transaction.accepted
        assert res2.graph.ids == (1, 2)
        assert plant_hash(res2.graph) == plant_hash(g)
