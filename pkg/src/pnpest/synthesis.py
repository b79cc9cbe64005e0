"""Estimator gain design: coupling attenuation, Riccati local gain, weight search.

The design for one subsystem runs three steps in order: (1) for each parent
with communication enabled, pick the cross gain minimizing the scaled norm
of the closed coupling block; (2) search diagonal Riccati weights until the
local gain makes the small-gain quantities contract; (3) build the invariant
error set and certify it against the constraint set.  Each step reads only
local data and the fixed parameters of the parents.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from . import analysis, rpi
from .analysis import CertifiedSum, SmallGainReport
from .errors import (ContainmentError, DareDivergenceError, GainSearchInfeasibleError,
                     NecessaryConditionError, SeriesInconclusiveError)
from .model import (CrossGain, GainSet, ParentData, Subsystem,
                    cross_error_matrix, local_error_matrix)

# Cross gains smaller than this cannot attenuate anything; communication with
# that parent is switched off instead.
NEGLIGIBLE_GAIN = 1e-10

DARE_REL_TOL = 1e-12
DARE_MAX_ITER = 100_000
DARE_RESIDUAL_LIMIT = 1e-8

LOG_BOUND = 6.0          # search box in log10 of the diagonal weights
INITIAL_STEP = 0.5
IMPROVE_RTOL = 1e-4
MIN_STEP = 1e-4


def entrywise_one_norm(M) -> float:
    return float(np.abs(np.asarray(M, dtype=float)).sum())


def attenuate_coupling(H_i, A_ij, C_j, H_j_pinv, norm: str = "fro"
                       ) -> tuple[np.ndarray, float]:
    """Cross gain minimizing ||H_i (A_ij + L C_j) H_j^b||_p, p in {fro, one}.

    The objective is affine in L, so the Frobenius variant is an exact linear
    least squares and the entrywise-1-norm variant is an LP with the usual
    absolute-value splitting.  Returns (L, achieved objective).
    """
    H_i = np.atleast_2d(np.asarray(H_i, dtype=float))
    A_ij = np.atleast_2d(np.asarray(A_ij, dtype=float))
    C_j = np.atleast_2d(np.asarray(C_j, dtype=float))
    H_j_pinv = np.atleast_2d(np.asarray(H_j_pinv, dtype=float))
    n_i = A_ij.shape[0]
    p_j = C_j.shape[0]
    X = H_i @ A_ij @ H_j_pinv
    Cb = C_j @ H_j_pinv

    def objective(L):
        M = H_i @ (A_ij + L @ C_j) @ H_j_pinv
        if norm == "fro":
            return float(np.linalg.norm(M, "fro"))
        return entrywise_one_norm(M)

    if p_j == 0 or not np.any(C_j):
        L = np.zeros((n_i, p_j))
        return L, objective(L)

    if norm == "fro":
        # min_L || X + (H_i L) Cb ||_F: vectorize with vec(H L Cb) = (Cb^T kron H) vec(L).
        K = np.kron(Cb.T, H_i)
        vecL, *_ = np.linalg.lstsq(K, -X.reshape(-1, order="F"), rcond=None)
        L = vecL.reshape((n_i, p_j), order="F")
        return L, objective(L)
    if norm == "one":
        f_i, f_j = X.shape
        n_L = n_i * p_j
        n_s = f_i * f_j
        K = np.kron(Cb.T, H_i)  # maps vec(L) (column-major) to vec(H L Cb)
        c = np.concatenate([np.zeros(n_L), np.ones(n_s)])
        A_ub = np.block([[K, -np.eye(n_s)], [-K, -np.eye(n_s)]])
        b_ub = np.concatenate([-X.reshape(-1, order="F"), X.reshape(-1, order="F")])
        bounds = [(None, None)] * n_L + [(0, None)] * n_s
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if not res.success:
            raise RuntimeError(f"attenuation LP failed: {res.message}")
        L = res.x[:n_L].reshape((n_i, p_j), order="F")
        return L, objective(L)
    raise ValueError(f"unknown norm {norm!r} (expected 'fro' or 'one')")


def _dare_iteration(A, C, Q, R) -> tuple[np.ndarray, int]:
    """Plain fixed-point iteration of the dual Riccati recursion from P0 = Q."""
    P = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(DARE_MAX_ITER):
            S = R + C @ P @ C.T
            APCt = A @ P @ C.T
            P_next = A @ P @ A.T + Q - APCt @ np.linalg.solve(S, APCt.T)
            P_next = 0.5 * (P_next + P_next.T)
            change = np.linalg.norm(P_next - P, "fro") / (1.0 + np.linalg.norm(P_next, "fro"))
            P = P_next
            if change < DARE_REL_TOL:
                return P, it + 1
            if not np.isfinite(change):
                break
    raise DareDivergenceError("dual Riccati iteration did not converge")


def dare_residual(A, C, Q, R, P) -> float:
    """Relative fixed-point defect of the dual Riccati equation at P."""
    S = R + C @ P @ C.T
    APCt = A @ P @ C.T
    lhs = A @ P @ A.T + Q - APCt @ np.linalg.solve(S, APCt.T)
    return float(np.linalg.norm(lhs - P, "fro") / (1.0 + np.linalg.norm(P, "fro")))


def solve_dare(A, C, Q, R) -> tuple[np.ndarray, float]:
    """Stabilizing solution of A P A^T + Q - A P C^T (R + C P C^T)^-1 C P A^T = P.

    Solved through the dual algebraic Riccati equation; falls back to the
    fixed-point iteration when the direct solver rejects the data.  Raises
    DareDivergenceError when neither converges (non-detectable pair).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = None
    try:
        P = scipy.linalg.solve_discrete_are(A.T, C.T, Q, R)
        P = 0.5 * (P + P.T)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        P = None
    if P is not None:
        res = dare_residual(A, C, Q, R, P)
        if res < DARE_RESIDUAL_LIMIT:
            return P, res
    P, _ = _dare_iteration(A, C, Q, R)
    res = dare_residual(A, C, Q, R, P)
    if res >= DARE_RESIDUAL_LIMIT:
        raise DareDivergenceError(f"Riccati residual {res:.3g} above limit")
    return P, res


def local_gain(A, C, Q, R) -> tuple[np.ndarray, np.ndarray, float]:
    """Output-injection gain from the dual-LQ Riccati solution.

    Returns (L, P, residual) with L = -A P C^T (R + C P C^T)^-1, oriented and
    signed so that A + L C inherits the closed-loop stability of the dual
    regulator.  Stability is certified by the caller, never assumed.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    P, res = solve_dare(A, C, Q, R)
    S = R + C @ P @ C.T
    L = -np.linalg.solve(S.T, (A @ P @ C.T).T).T
    return L, P, res


@dataclass(frozen=True)
class Infeasible:
    """Diagnostics of a failed weight search (a value, not an exception)."""

    best_objective: float
    coupling_upper: float | None
    disturbance_upper: float | None
    evaluations: int
    message: str = "no feasible diagonal weights found"

    def __str__(self):
        return (f"{self.message}: best max-gain {self.best_objective:.4g} "
                f"after {self.evaluations} evaluations")


@dataclass(frozen=True)
class SynthesisOptions:
    norm: str = "fro"
    eval_budget: int = 500
    depth_cap: int = analysis.DEFAULT_DEPTH_CAP
    tail_tol: float = analysis.DEFAULT_TAIL_TOL
    epsilon_ladder: tuple[float, ...] = rpi.DEFAULT_EPSILON_LADDER
    horizon_cap: int = rpi.DEFAULT_HORIZON_CAP
    # Candidates slower than this either cannot finish the invariant-set
    # truncation within the horizon cap or converge too slowly to be useful;
    # the search treats them as infeasible.
    rho_cap: float = 0.93


@dataclass
class _Candidate:
    gains: GainSet
    rho: float
    coupling: CertifiedSum | None
    disturbance: CertifiedSum | None
    feasible: bool
    objective: float


def search_qr(sub: Subsystem, cross: dict[int, CrossGain],
              parents: dict[int, ParentData],
              options: SynthesisOptions = SynthesisOptions()
              ) -> GainSet | Infeasible:
    """Derivative-free search over diagonal Riccati weights.

    Coordinates are log10 of the diagonal entries of Q (n values) and R
    (p values), boxed to [-6, 6]; compass pattern search with step halving.
    Until a feasible point is known the objective is max of the two gain
    uppers; afterwards it is the coupling upper with infeasible iterates
    rejected outright.  The disturbance constraint participates only when a
    disturbance set is present.
    """
    stub = _gains_stub(sub, cross)
    psi = analysis.lumped_disturbance(sub, stub, parents)
    # The closed coupling blocks depend on the cross gains only, so they are
    # fixed for the whole search.
    coupling_blocks = [cross_error_matrix(sub, stub, j, parents[j].C)
                       @ parents[j].error_set.facet_pinv for j in sorted(parents)]
    H = sub.error_set.facet_normals
    H_pinv = sub.error_set.facet_pinv
    need_disturbance = sub.dist_set is not None
    evals = 0

    def evaluate(theta) -> _Candidate | None:
        nonlocal evals
        evals += 1
        q_diag = 10.0 ** theta[:sub.n]
        r_diag = 10.0 ** theta[sub.n:]
        try:
            L, P, res = local_gain(sub.A, sub.C, np.diag(q_diag), np.diag(r_diag))
        except DareDivergenceError:
            return None
        gains = GainSet(L=L, cross=cross, Q=q_diag, R=r_diag, P=P, dare_residual=res)
        ok, rho = analysis.is_schur(local_error_matrix(sub, gains))
        if not ok:
            return _Candidate(gains, rho, None, None, False, np.inf)
        if rho > options.rho_cap:
            return _Candidate(gains, rho, None, None, False, 1.0 + rho)
        # A series whose partial sum crosses 1 is provably infeasible (the
        # partial is a lower bound) and one without a certificate cannot be
        # accepted either; both rank by 1 + rho so the feasibility phase is
        # still pulled toward faster local dynamics.
        try:
            cg, dg = analysis.certified_norm_series_multi(
                H, local_error_matrix(sub, gains), [coupling_blocks, [psi]],
                H_pinv, depth_cap=options.depth_cap,
                tail_tol=options.tail_tol, partial_cap=1.0)
        except SeriesInconclusiveError:
            return _Candidate(gains, rho, None, None, False, 1.0 + rho)
        feasible = cg.upper < 1.0 and (not need_disturbance or dg.upper < 1.0)
        reach = max(cg.upper, dg.upper if need_disturbance else 0.0)
        return _Candidate(gains, rho, cg, dg, feasible, reach)

    dim = sub.n + sub.p
    # Fixed pattern directions: every coordinate, plus uniform shifts of the
    # whole Q block and the whole R block (these move the observer bandwidth
    # far faster than any single diagonal entry).  A few seeded random
    # directions are appended per sweep so narrow valleys that no coordinate
    # move can enter stay reachable; the seed is fixed, so runs stay
    # deterministic.
    fixed_dirs = [np.eye(dim)[i] for i in range(dim)]
    fixed_dirs.append(np.concatenate([np.ones(sub.n), np.zeros(sub.p)]))
    fixed_dirs.append(np.concatenate([np.zeros(sub.n), np.ones(sub.p)]))
    rng = np.random.default_rng(0)

    theta = np.zeros(dim)
    center = evaluate(theta)
    best_feasible = center if center is not None and center.feasible else None

    def score(cand: _Candidate | None) -> float:
        if cand is None:
            return np.inf
        if best_feasible is not None:
            if not cand.feasible:
                return np.inf
            # Secondary disturbance term keeps invariant-set horizons modest
            # without measurably moving the primary objective.
            return cand.coupling.upper + 0.01 * cand.disturbance.upper
        return cand.objective

    current = score(center)
    step = INITIAL_STEP
    while evals < options.eval_budget and step >= MIN_STEP:
        sweep_start = current
        sweep_anchor = theta.copy()
        improved = False
        extra = []
        for _ in range(4):
            d = rng.standard_normal(dim)
            extra.append(d / np.abs(d).max())
        for direction in fixed_dirs + extra:
            for sign in (1.0, -1.0):
                if evals >= options.eval_budget:
                    break
                trial = np.clip(theta + sign * step * direction,
                                -LOG_BOUND, LOG_BOUND)
                if np.array_equal(trial, theta):
                    continue
                cand = evaluate(trial)
                if cand is not None and cand.feasible and best_feasible is None:
                    # Phase switch: lock onto feasibility, restart scoring.
                    best_feasible = cand
                    theta = trial
                    center = cand
                    current = score(cand)
                    improved = True
                    continue
                s = score(cand)
                if s < current:
                    theta, center, current = trial, cand, s
                    improved = True
                    if cand.feasible and (best_feasible is None or
                                          score(cand) <= score(best_feasible)):
                        best_feasible = cand
        if improved:
            # Pattern move: ride the aggregated sweep direction while it
            # keeps paying (Hooke-Jeeves acceleration along valleys).
            while evals < options.eval_budget:
                trial = np.clip(2.0 * theta - sweep_anchor, -LOG_BOUND, LOG_BOUND)
                if np.array_equal(trial, theta):
                    break
                cand = evaluate(trial)
                s = score(cand)
                if cand is not None and cand.feasible and best_feasible is None:
                    best_feasible = cand
                    sweep_anchor, theta, center = theta, trial, cand
                    current = score(cand)
                    continue
                if s < current:
                    sweep_anchor, theta, center, current = theta, trial, cand, s
                    if cand.feasible and score(cand) <= score(best_feasible or cand):
                        best_feasible = cand
                else:
                    break
        if best_feasible is not None:
            rel = (sweep_start - current) / max(abs(sweep_start), 1e-12)
            if rel < IMPROVE_RTOL:
                break
        if not improved:
            step *= 0.5
    if best_feasible is not None:
        return best_feasible.gains
    bad = center
    return Infeasible(
        best_objective=bad.objective if bad is not None else np.inf,
        coupling_upper=bad.coupling.upper if bad is not None and bad.coupling else None,
        disturbance_upper=bad.disturbance.upper if bad is not None and bad.disturbance else None,
        evaluations=evals)


def _gains_stub(sub: Subsystem, cross: dict[int, CrossGain]) -> GainSet:
    """Gain container with the cross gains fixed and the local gain still zero."""
    return GainSet(L=np.zeros((sub.n, sub.p)), cross=cross,
                   Q=np.zeros(sub.n), R=np.ones(max(sub.p, 1)),
                   P=np.zeros((sub.n, sub.n)), dare_residual=0.0)


@dataclass(frozen=True)
class LseDesign:
    """Everything produced for one subsystem: gains, certificate, invariant set."""

    gains: GainSet
    report: SmallGainReport
    rpi: "rpi.RpiSet"
    necessary: analysis.NecessaryCheck


def design_lse(sub: Subsystem, parents: dict[int, ParentData],
               delta: dict[int, int] | None = None,
               options: SynthesisOptions = SynthesisOptions()) -> LseDesign:
    """Full three-step design of one local estimator.

    `delta` chooses per-parent output communication (default 1 for every
    parent).  A cross gain that comes back numerically zero flips its switch
    to 0, since transmitting that parent's output would buy nothing.  Raises
    NecessaryConditionError, GainSearchInfeasibleError or ContainmentError
    with the failing stage's diagnostics.
    """
    delta = delta or {}
    H_i = sub.error_set.facet_normals
    cross: dict[int, CrossGain] = {}
    for j in sorted(sub.parents):
        pd = parents[j]
        d_ij = int(delta.get(j, 1))
        if d_ij == 1:
            L_ij, _ = attenuate_coupling(H_i, sub.couplings[j], pd.C,
                                         pd.error_set.facet_pinv, norm=options.norm)
            if np.linalg.norm(L_ij, "fro") < NEGLIGIBLE_GAIN:
                d_ij = 0
                L_ij = np.zeros((sub.n, pd.C.shape[0]))
        else:
            L_ij = np.zeros((sub.n, pd.C.shape[0]))
        cross[j] = CrossGain(L=L_ij, delta=d_ij)

    psi = analysis.lumped_disturbance(sub, _gains_stub(sub, cross), parents)
    nec = analysis.necessary_condition(sub.error_set, psi)
    if not nec.satisfied:
        raise NecessaryConditionError(sub.id, nec.margin)

    # The spectral-radius cap only steers the search; when the invariant-set
    # truncation cannot finish under the found gains, retry with a tighter
    # cap rather than giving up (a faster design shrinks the set and its
    # horizon together).
    caps = [options.rho_cap] + [c for c in (0.90, 0.85) if c < options.rho_cap]
    blocked: ContainmentError | None = None
    for attempt, cap in enumerate(caps):
        result = search_qr(sub, cross, parents, replace(options, rho_cap=cap))
        if isinstance(result, Infeasible):
            if attempt == 0:
                raise GainSearchInfeasibleError(sub.id, result)
            raise blocked
        gains = result
        try:
            rpi_set = rpi.mrpi_outer(local_error_matrix(sub, gains), psi,
                                     sub.error_set,
                                     epsilon_ladder=options.epsilon_ladder,
                                     horizon_cap=options.horizon_cap,
                                     subsystem_id=sub.id)
            break
        except ContainmentError as exc:
            blocked = exc
    else:
        raise blocked

    report = analysis.small_gain_report(sub, gains, parents,
                                        depth_cap=options.depth_cap,
                                        tail_tol=options.tail_tol)
    return LseDesign(gains=gains, report=report, rpi=rpi_set, necessary=nec)
