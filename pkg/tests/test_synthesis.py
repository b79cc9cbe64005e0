import numpy as np
import pytest

from pnpest.analysis import is_schur, spectral_radius
from pnpest.errors import (DareDivergenceError, GainSearchInfeasibleError,
                           NecessaryConditionError)
from pnpest.model import CrossGain, ParentData, Subsystem, local_error_matrix
from pnpest.synthesis import (Infeasible, SynthesisOptions, attenuate_coupling,
                              dare_residual, design_lse, entrywise_one_norm,
                              local_gain, search_qr, solve_dare, _dare_iteration)
from pnpest.zonotope import from_box, pseudo_inverse


def scalar_dare_bisect(a, c, q, r, lo=0.0, hi=100.0):
    """Independent oracle: bisection on the scalar fixed-point equation."""
    def g(p):
        return a * a * p + q - (a * p * c) ** 2 / (r + c * c * p) - p
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestAttenuation:
    def setup_method(self):
        self.H2 = from_box([1.0, 1.0]).facet_normals
        self.H2p = pseudo_inverse(self.H2)

    def test_exact_cancellation(self):
        # A_ij lies in the row space of C_j, so the optimizer can zero it out
        C_j = np.array([[1.0, 0.0], [0.0, 1.0]])
        A_ij = np.array([[0.3, -0.2], [0.1, 0.4]])
        L, obj = attenuate_coupling(self.H2, A_ij, C_j, self.H2p, norm="fro")
        assert obj < 1e-12
        assert np.allclose(A_ij + L @ C_j, 0.0, atol=1e-12)

    def test_zero_output_map(self):
        C_j = np.zeros((1, 2))
        A_ij = np.array([[0.3, -0.2], [0.1, 0.4]])
        for norm, ref in (("fro", np.linalg.norm(self.H2 @ A_ij @ self.H2p, "fro")),
                          ("one", entrywise_one_norm(self.H2 @ A_ij @ self.H2p))):
            L, obj = attenuate_coupling(self.H2, A_ij, C_j, self.H2p, norm=norm)
            assert np.all(L == 0.0)
            assert obj == pytest.approx(ref)

    @pytest.mark.parametrize("norm", ["fro", "one"])
    def test_never_worse_than_zero_gain(self, norm):
        rng = np.random.default_rng(11)
        H4 = from_box([1.0, 0.5, 2.0, 1.0]).facet_normals
        H4p = pseudo_inverse(H4)
        for _ in range(10):
            A_ij = rng.standard_normal((4, 4)) * 0.4
            C_j = rng.standard_normal((2, 4))
            L, obj = attenuate_coupling(H4, A_ij, C_j, H4p, norm=norm)
            M0 = H4 @ A_ij @ H4p
            obj0 = np.linalg.norm(M0, "fro") if norm == "fro" else entrywise_one_norm(M0)
            assert obj <= obj0 + 1e-10

    def test_local_optimality_against_perturbations(self):
        rng = np.random.default_rng(12)
        H4 = from_box([1.0, 1.5, 1.0, 1.5]).facet_normals
        H4p = pseudo_inverse(H4)
        A_ij = rng.standard_normal((4, 4)) * 0.4
        C_j = rng.standard_normal((2, 4))
        L, obj = attenuate_coupling(H4, A_ij, C_j, H4p, norm="fro")
        for _ in range(100):
            dL = rng.standard_normal(L.shape) * 1e-4
            pert = np.linalg.norm(H4 @ (A_ij + (L + dL) @ C_j) @ H4p, "fro")
            assert obj <= pert + 1e-12

    def test_unknown_norm(self):
        with pytest.raises(ValueError):
            attenuate_coupling(self.H2, np.eye(2), np.eye(2), self.H2p, norm="two")


class TestDare:
    def test_zero_dynamics_one_step(self):
        Q = np.diag([1.0, 2.0])
        P, res = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
        assert np.allclose(P, Q, atol=1e-12)
        assert res < 1e-12

    def test_scalar_matches_bisection(self):
        P, res = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
        p_oracle = scalar_dare_bisect(0.5, 1.0, 1.0, 1.0)
        assert abs(P[0, 0] - p_oracle) < 1e-10
        assert res < 1e-12

    def test_iteration_agrees_with_direct_solver(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            A = rng.standard_normal((3, 3)) * 0.5
            C = rng.standard_normal((2, 3))
            Q = np.diag(rng.uniform(0.1, 2.0, 3))
            R = np.diag(rng.uniform(0.1, 2.0, 2))
            P, _ = solve_dare(A, C, Q, R)
            P_it, _ = _dare_iteration(A, C, Q, R)
            assert np.abs(P - P_it).max() < 1e-8

    def test_residual_property(self):
        rng = np.random.default_rng(14)
        A = rng.standard_normal((4, 4)) * 0.7
        C = rng.standard_normal((2, 4))
        P, res = solve_dare(A, C, np.eye(4), np.eye(2))
        assert res < 1e-8
        assert dare_residual(A, C, np.eye(4), np.eye(2), P) == pytest.approx(res)

    def test_divergence_on_undetectable_unstable_pair(self):
        # unstable mode invisible from the output: no stabilizing solution
        A = np.diag([2.0, 0.5])
        C = np.array([[0.0, 1.0]])
        with pytest.raises(DareDivergenceError):
            solve_dare(A, C, np.eye(2), np.eye(1))


class TestLocalGain:
    def test_scalar_gain_and_stability(self):
        L, P, _ = local_gain([[0.5]], [[1.0]], [[1.0]], [[1.0]])
        p = scalar_dare_bisect(0.5, 1.0, 1.0, 1.0)
        assert L[0, 0] == pytest.approx(-0.5 * p / (1.0 + p), abs=1e-9)
        a_closed = 0.5 + L[0, 0]
        assert abs(a_closed) < 1.0

    def test_cheap_measurement_limit_is_deadbeat(self):
        rng = np.random.default_rng(15)
        A = rng.standard_normal((3, 3)) * 0.8
        L, _, _ = local_gain(A, np.eye(3), np.eye(3), np.eye(3) * 1e-6)
        assert spectral_radius(A + L) < 0.05

    def test_small_weight_keeps_stable_dynamics(self, benchmark_graph):
        # with nearly no process weight the observer barely moves an already
        # stable local block
        sub = benchmark_graph[1]
        L, _, _ = local_gain(sub.A, sub.C, np.eye(16) * 1e-4, np.eye(8))
        rho_open = spectral_radius(sub.A)
        assert spectral_radius(sub.A + L @ sub.C) <= rho_open + 0.1


class TestSearch:
    def test_decoupled_noise_free_immediately_feasible(self):
        sub = Subsystem(id=1, A=[[0.5]], C=[[1.0]], error_set=from_box([1.0]))
        result = search_qr(sub, {}, {}, SynthesisOptions())
        assert not isinstance(result, Infeasible)
        ok, _ = is_schur(local_error_matrix(sub, result))
        assert ok

    def test_overwhelming_coupling_is_infeasible(self):
        # the k = 0 series term is already 2 regardless of the local gain
        sub = Subsystem(id=1, A=[[0.5]], C=[[1.0]],
                        couplings={2: [[2.0]]}, error_set=from_box([1.0]))
        parents = {2: ParentData(C=np.array([[1.0]]), error_set=from_box([1.0]))}
        cross = {2: CrossGain(np.zeros((1, 1)), 0)}
        result = search_qr(sub, cross, parents, SynthesisOptions(eval_budget=60))
        assert isinstance(result, Infeasible)
        assert result.evaluations <= 60

    def test_benchmark_search_feasible(self, benchmark_designs):
        for design in benchmark_designs.values():
            assert design.report.coupling.upper < 1.0


class TestDesignLse:
    def test_decoupled_noiseless_origin_set(self):
        sub = Subsystem(id=1, A=[[0.5, 0.1], [0.0, 0.3]], C=[[1.0, 0.0]],
                        error_set=from_box([1.0, 1.0]))
        design = design_lse(sub, {})
        assert design.rpi.is_origin
        assert design.report.coupling.upper == 0.0
        assert design.report.disturbance.upper == 0.0

    def test_delta_zero_skips_cross_gains(self):
        sub = Subsystem(id=1, A=[[0.5]], C=[[1.0]], couplings={2: [[0.05]]},
                        error_set=from_box([1.0]))
        parents = {2: ParentData(C=np.array([[1.0]]), error_set=from_box([1.0]))}
        design = design_lse(sub, parents, delta={2: 0})
        assert design.gains.cross[2].delta == 0
        assert np.all(design.gains.cross[2].L == 0.0)

    def test_negligible_gain_flips_delta(self):
        # parent output map orthogonal to anything useful: optimizer returns
        # zero gain, so communication gets switched off
        sub = Subsystem(id=1, A=[[0.5, 0.0], [0.0, 0.4]], C=np.eye(2),
                        couplings={2: np.array([[0.05, 0.0], [0.0, 0.05]])},
                        error_set=from_box([1.0, 1.0]))
        # C_j = 0 rows force a zero optimizer
        parents = {2: ParentData(C=np.zeros((1, 2)), error_set=from_box([1.0, 1.0]))}
        design = design_lse(sub, parents)
        assert design.gains.cross[2].delta == 0

    def test_necessary_condition_aborts_early(self):
        sub = Subsystem(id=1, A=[[0.5]], C=[[1.0]], couplings={2: [[5.0]]},
                        error_set=from_box([0.1]))
        parents = {2: ParentData(C=np.array([[1.0]]), error_set=from_box([1.0]))}
        with pytest.raises(NecessaryConditionError):
            design_lse(sub, parents, delta={2: 0})

    def test_infeasible_coupling_raises(self):
        # the coupled coordinate rides an unobservable 0.95 mode, so the
        # series is at least 0.9 / (1 - 0.95) for every admissible gain
        sub = Subsystem(id=1, A=np.diag([0.5, 0.95]), C=[[1.0, 0.0]],
                        couplings={2: np.array([[0.0], [0.9]])},
                        error_set=from_box([1.0, 1.0]))
        parents = {2: ParentData(C=np.array([[1.0]]), error_set=from_box([1.0]))}
        with pytest.raises(GainSearchInfeasibleError):
            design_lse(sub, parents, delta={2: 0},
                       options=SynthesisOptions(eval_budget=80))

    def test_one_norm_design_path(self):
        sub = Subsystem(id=1, A=[[0.5, 0.1], [0.0, 0.4]], C=np.eye(2),
                        couplings={2: np.eye(2) * 0.1},
                        error_set=from_box([1.0, 1.0]))
        parents = {2: ParentData(C=np.eye(2), error_set=from_box([1.0, 1.5]))}
        design = design_lse(sub, parents,
                            options=SynthesisOptions(norm="one", eval_budget=120))
        assert design.report.coupling.upper < 1.0

    def test_benchmark_designs_complete(self, benchmark_graph, benchmark_designs):
        for sid, design in benchmark_designs.items():
            assert design.rpi.containment_margin >= 0.0
            assert design.gains.dare_residual < 1e-8
            ok, _ = is_schur(local_error_matrix(benchmark_graph[sid], design.gains))
            assert ok
