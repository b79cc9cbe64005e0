"""Small-gain certification of the local error dynamics.

The two scalar quantities certified here are infinite series of matrix
norms of the closed local dynamics' impulse response:

* coupling gain: sum over parents j of sum_k ||H_i Abar_ii^k Abar_ij Hj^b||,
* disturbance gain: sum_k ||H_i Abar_ii^k Psi_i|| where Psi_i stacks the
  generator images of all parent error sets plus the local disturbance map.

Both use the induced inf-norm (max absolute row sum).  The series are
truncated with a certified geometric tail: once some power k0 satisfies
q = ||H A^k0 H^b|| < 1, every later term factors through that contraction
(H A^{k0+k} M = (H A^{k0} H^b)(H A^k M) because H^b H = I), so the block of
k0 terms starting at m*k0 is bounded by q^m times the first block's sum.
Reports carry [lower, upper] with upper - lower below the tail tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotSchurError, SeriesInconclusiveError
from .model import GainSet, ParentData, Subsystem, cross_error_matrix, local_error_matrix
from .zonotope import Zonotope, contains_zonotope, linear_image, minkowski_concat

DEFAULT_DEPTH_CAP = 2000
DEFAULT_TAIL_TOL = 1e-9
SCHUR_MARGIN = 1e-9

# Prefer a strong contraction certificate: a small q costs a few more terms
# up front but shrinks the tail by half per block.
_Q_TARGET = 0.5


def matrix_inf_norm(M) -> float:
    """Induced inf-norm: max absolute row sum (0 for empty matrices)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.abs(M).sum(axis=1).max())


def spectral_radius(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(M)).max())


def is_schur(M, margin: float = SCHUR_MARGIN) -> tuple[bool, float]:
    """Strict stability test; returns the verdict and the spectral radius."""
    rho = spectral_radius(M)
    return rho < 1.0 - margin, rho


@dataclass(frozen=True)
class CertifiedSum:
    """Certified bracket of a nonnegative series: lower <= value <= upper."""

    lower: float
    upper: float
    depth: int
    tail: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def certified_norm_series(H, A_bar, blocks, H_pinv,
                          depth_cap: int = DEFAULT_DEPTH_CAP,
                          tail_tol: float = DEFAULT_TAIL_TOL,
                          partial_cap: float | None = None) -> CertifiedSum:
    """Certified value of sum_k sum_b ||(H A^k) B_b||_inf.

    The power is accumulated on the left (P <- P A), one product per term.
    Raises SeriesInconclusiveError when no contraction power q < 1 exists
    within the cap or the tail does not shrink below tolerance in time.
    With `partial_cap`, the scan also aborts as soon as the partial sum (a
    lower bound on the series) crosses the cap: the exact value can no
    longer matter to a feasibility test against that threshold.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    A_bar = np.atleast_2d(np.asarray(A_bar, dtype=float))
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    blocks = [b for b in blocks if b.size]
    if not blocks:
        return CertifiedSum(0.0, 0.0, 0, 0.0)

    def term_at(P):
        return sum(matrix_inf_norm(P @ b) for b in blocks)

    # Phase 1: accumulate terms while scanning for a contraction power.
    # P always equals H A^{len(terms)-1} after the last term was taken.
    P = H.copy()
    terms = [term_at(P)]
    k0 = q = None
    weak = None
    while k0 is None and len(terms) < depth_cap:
        P = P @ A_bar
        k = len(terms)
        qk = matrix_inf_norm(P @ H_pinv)
        terms.append(term_at(P))
        if partial_cap is not None and sum(terms) >= partial_cap:
            raise SeriesInconclusiveError(sum(terms), len(terms))
        if qk < 1.0:
            if weak is None:
                weak = (k, qk)
            if qk <= _Q_TARGET:
                k0, q = k, qk
    if k0 is None:
        if weak is None:
            raise SeriesInconclusiveError(sum(terms), len(terms))
        k0, q = weak

    block0 = sum(terms[:k0])
    partial = sum(terms)
    # Phase 2: extend one term at a time; at every complete block of k0 terms
    # the remaining tail is bounded by block0 * q^{m+1} / (1-q) where m is the
    # index of the last completed block.
    while True:
        n = len(terms)
        if n % k0 == 0:
            m = n // k0 - 1
            tail = block0 * q ** (m + 1) / (1.0 - q)
            if tail <= tail_tol:
                return CertifiedSum(partial, partial + tail, n, tail)
        if n >= depth_cap:
            raise SeriesInconclusiveError(partial, n)
        if partial_cap is not None and partial >= partial_cap:
            raise SeriesInconclusiveError(partial, n)
        P = P @ A_bar
        t = term_at(P)
        terms.append(t)
        partial += t


def certified_norm_series_multi(H, A_bar, groups, H_pinv,
                                depth_cap: int = DEFAULT_DEPTH_CAP,
                                tail_tol: float = DEFAULT_TAIL_TOL,
                                partial_cap: float | None = None
                                ) -> list[CertifiedSum]:
    """Several series sharing the same power recurrence, certified together.

    `groups` is a list of block lists; each group gets its own CertifiedSum
    but the (expensive) power accumulation and contraction certificate are
    computed once.  Aborts like the single-series version when any group's
    partial sum crosses `partial_cap`.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    A_bar = np.atleast_2d(np.asarray(A_bar, dtype=float))
    groups = [[np.atleast_2d(np.asarray(b, dtype=float)) for b in grp]
              for grp in groups]
    groups = [[b for b in grp if b.size] for grp in groups]
    live = [i for i, grp in enumerate(groups) if grp]
    out: list[CertifiedSum | None] = [CertifiedSum(0.0, 0.0, 0, 0.0)
                                      if not grp else None for grp in groups]
    if not live:
        return out

    def terms_at(P):
        return [sum(matrix_inf_norm(P @ b) for b in groups[i]) for i in live]

    P = H.copy()
    terms = [terms_at(P)]
    k0 = q = None
    weak = None
    while k0 is None and len(terms) < depth_cap:
        P = P @ A_bar
        k = len(terms)
        qk = matrix_inf_norm(P @ H_pinv)
        terms.append(terms_at(P))
        if partial_cap is not None:
            for pos in range(len(live)):
                tot = sum(t[pos] for t in terms)
                if tot >= partial_cap:
                    raise SeriesInconclusiveError(tot, len(terms))
        if qk < 1.0:
            if weak is None:
                weak = (k, qk)
            if qk <= _Q_TARGET:
                k0, q = k, qk
    if k0 is None:
        if weak is None:
            raise SeriesInconclusiveError(max(sum(t[pos] for t in terms)
                                              for pos in range(len(live))),
                                          len(terms))
        k0, q = weak

    block0 = [sum(t[pos] for t in terms[:k0]) for pos in range(len(live))]
    partial = [sum(t[pos] for t in terms) for pos in range(len(live))]
    while True:
        n = len(terms)
        if n % k0 == 0:
            m = n // k0 - 1
            factor = q ** (m + 1) / (1.0 - q)
            tails = [b * factor for b in block0]
            if all(t <= tail_tol for t in tails):
                for pos, i in enumerate(live):
                    out[i] = CertifiedSum(partial[pos], partial[pos] + tails[pos],
                                          n, tails[pos])
                return out
        if n >= depth_cap:
            raise SeriesInconclusiveError(max(partial), n)
        if partial_cap is not None and max(partial) >= partial_cap:
            raise SeriesInconclusiveError(max(partial), n)
        P = P @ A_bar
        t = terms_at(P)
        terms.append(t)
        for pos in range(len(live)):
            partial[pos] += t[pos]


def coupling_gain(sub: Subsystem, gains: GainSet, parents: dict[int, ParentData],
                  depth_cap: int = DEFAULT_DEPTH_CAP,
                  tail_tol: float = DEFAULT_TAIL_TOL,
                  partial_cap: float | None = None) -> CertifiedSum:
    """Certified total gain of all parent couplings on the local error.

    Requires the closed local matrix to be Schur; the per-parent blocks are
    the closed coupling matrices scaled by the parent facet pseudo-inverse.
    """
    A_loc = local_error_matrix(sub, gains)
    ok, rho = is_schur(A_loc)
    if not ok:
        raise NotSchurError(rho, f"closed local matrix of subsystem {sub.id}")
    if not parents:
        return CertifiedSum(0.0, 0.0, 0, 0.0)
    H = sub.error_set.facet_normals
    blocks = [cross_error_matrix(sub, gains, j, parents[j].C) @ parents[j].error_set.facet_pinv
              for j in sorted(parents)]
    return certified_norm_series(H, A_loc, blocks, sub.error_set.facet_pinv,
                                 depth_cap=depth_cap, tail_tol=tail_tol,
                                 partial_cap=partial_cap)


def lumped_disturbance(sub: Subsystem, gains: GainSet,
                       parents: dict[int, ParentData]) -> np.ndarray:
    """Generators of the lumped local disturbance set.

    Concatenates the closed coupling images of every parent's error set and,
    when a disturbance set is present, the image of its generators.
    """
    parts = np.zeros((sub.n, 0))
    for j in sorted(sub.parents):
        pd = parents[j]
        block = linear_image(cross_error_matrix(sub, gains, j, pd.C), pd.error_set)
        parts = minkowski_concat(parts, block)
    if sub.dist_set is not None:
        parts = minkowski_concat(parts, linear_image(sub.D, sub.dist_set))
    return parts


def disturbance_gain(sub: Subsystem, gains: GainSet, psi: np.ndarray,
                     depth_cap: int = DEFAULT_DEPTH_CAP,
                     tail_tol: float = DEFAULT_TAIL_TOL,
                     partial_cap: float | None = None) -> CertifiedSum:
    """Certified total gain from the lumped disturbance to the local error."""
    A_loc = local_error_matrix(sub, gains)
    ok, rho = is_schur(A_loc)
    if not ok:
        raise NotSchurError(rho, f"closed local matrix of subsystem {sub.id}")
    if psi.size == 0:
        return CertifiedSum(0.0, 0.0, 0, 0.0)
    return certified_norm_series(sub.error_set.facet_normals, A_loc, [psi],
                                 sub.error_set.facet_pinv,
                                 depth_cap=depth_cap, tail_tol=tail_tol,
                                 partial_cap=partial_cap)


@dataclass(frozen=True)
class NecessaryCheck:
    """Outcome of the pre-design feasibility test, with the check used."""

    satisfied: bool
    margin: float
    method: str


def necessary_condition(error_set: Zonotope, psi: np.ndarray) -> NecessaryCheck:
    """Necessary condition for an invariant error set to exist.

    Any robust invariant set for e+ = A e + v, v in V contains V itself
    (take e = 0), so V inside the error constraint set is necessary.  The
    lumped set is generator-only and the constraint set carries facets, so
    the facet-support test decides this exactly.
    """
    res = contains_zonotope(psi, error_set)
    return NecessaryCheck(satisfied=res.contained, margin=res.margin,
                          method="facet-support")


@dataclass(frozen=True)
class SmallGainReport:
    """Per-subsystem certification summary."""

    subsystem_id: int
    schur_local: bool
    rho_local: float
    coupling: CertifiedSum | None
    disturbance: CertifiedSum | None

    @property
    def certified(self) -> bool:
        if not self.schur_local:
            return False
        if self.coupling is not None and self.coupling.upper >= 1.0:
            return False
        if self.disturbance is not None and self.disturbance.upper >= 1.0:
            return False
        return True


def small_gain_report(sub: Subsystem, gains: GainSet, parents: dict[int, ParentData],
                      depth_cap: int = DEFAULT_DEPTH_CAP,
                      tail_tol: float = DEFAULT_TAIL_TOL) -> SmallGainReport:
    """Full local certification: stability plus both gain series.

    Gains are reported only when the local matrix is Schur.  Reads only the
    subsystem's own data and the fixed parameters of its parents.
    """
    ok, rho = is_schur(local_error_matrix(sub, gains))
    if not ok:
        return SmallGainReport(sub.id, False, rho, None, None)
    cg = coupling_gain(sub, gains, parents, depth_cap=depth_cap, tail_tol=tail_tol)
    psi = lumped_disturbance(sub, gains, parents)
    dg = disturbance_gain(sub, gains, psi, depth_cap=depth_cap, tail_tol=tail_tol)
    return SmallGainReport(sub.id, True, rho, cg, dg)
