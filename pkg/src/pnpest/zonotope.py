"""Geometry kernel: origin-centered zonotopes in dual representation.

A constraint set is stored as a pair (generators, facet_normals): the
generator matrix G maps the unit inf-norm ball onto the set, while the
facet matrix H describes the same set as {z : H z <= 1}.  Derived sets
(linear images, Minkowski sums) are kept in generator-only form as plain
arrays; every containment question the pipeline asks compares a generator
set against a facet set, which the support function answers exactly.
Facet enumeration of general zonotopes is combinatorial in dimension and
is deliberately not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import RankDeficientError

# Relative tolerance for the facet/generator consistency invariant: every
# facet row must be tight (support exactly 1) for the two representations
# to describe the same set.
CONSISTENCY_RTOL = 1e-8

# Absolute slack absorbing float dust in containment verdicts.
CONTAINMENT_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Zonotope:
    """Origin-centered zonotope with both generator and facet data.

    Attributes
    ----------
    generators : ndarray, shape (dim, g)
        Columns span the set as the image of the unit inf-norm ball.
    facet_normals : ndarray, shape (f, dim)
        Rows h define the same set as {z : h @ z <= 1}.
    """

    generators: np.ndarray
    facet_normals: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.generators, dtype=float))
        H = np.atleast_2d(np.asarray(self.facet_normals, dtype=float))
        object.__setattr__(self, "generators", G)
        object.__setattr__(self, "facet_normals", H)
        if H.shape[1] != G.shape[0]:
            raise ValueError(
                f"facet columns ({H.shape[1]}) must match ambient dimension ({G.shape[0]})"
            )
        if np.linalg.matrix_rank(H) < G.shape[0]:
            raise ValueError("facet matrix must have full column rank")
        sup = np.abs(H @ G).sum(axis=1)
        if np.any(np.abs(sup - 1.0) > CONSISTENCY_RTOL):
            worst = int(np.argmax(np.abs(sup - 1.0)))
            raise ValueError(
                f"facet row {worst} is not tight: support {sup[worst]:.12g} != 1"
            )

    @property
    def dim(self) -> int:
        return self.generators.shape[0]

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    @property
    def n_facets(self) -> int:
        return self.facet_normals.shape[0]

    @property
    def facet_pinv(self) -> np.ndarray:
        """Left inverse of the facet matrix (cached on first use)."""
        cached = getattr(self, "_facet_pinv", None)
        if cached is None:
            cached = pseudo_inverse(self.facet_normals)
            object.__setattr__(self, "_facet_pinv", cached)
        return cached


def from_box(half_widths) -> Zonotope:
    """Axis-aligned box with the given per-coordinate half-widths."""
    w = np.atleast_1d(np.asarray(half_widths, dtype=float))
    if w.ndim != 1 or w.size == 0:
        raise ValueError("half_widths must be a nonempty vector")
    if np.any(w <= 0):
        raise ValueError("half_widths must be strictly positive")
    eye = np.eye(w.size)
    facets = np.vstack([eye / w[:, None], -eye / w[:, None]])
    return Zonotope(generators=np.diag(w), facet_normals=facets)


def normalized_facets(generators, facets) -> Zonotope:
    """Build a zonotope from user-supplied facets, rescaling rows to tightness.

    Each row is divided by the support of the generator set along it so the
    consistency invariant holds exactly; rows with zero support are rejected.
    """
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    H = np.atleast_2d(np.asarray(facets, dtype=float))
    sup = np.abs(H @ G).sum(axis=1)
    if np.any(sup <= 0):
        raise ValueError("facet row orthogonal to all generators cannot be normalized")
    return Zonotope(generators=G, facet_normals=H / sup[:, None])


def linear_image(M, Z) -> np.ndarray:
    """Generators of M * Z; accepts a Zonotope or a raw generator matrix."""
    G = Z.generators if isinstance(Z, Zonotope) else np.atleast_2d(np.asarray(Z, float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != G.shape[0]:
        raise ValueError(f"matrix has {M.shape[1]} columns, set lives in R^{G.shape[0]}")
    return M @ G


def minkowski_concat(A, B) -> np.ndarray:
    """Generator matrix of the Minkowski sum (horizontal concatenation)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"ambient dimensions differ: {A.shape[0]} vs {B.shape[0]}")
    return np.hstack([A, B])


def support(G, direction) -> float:
    """Exact support function of a generator set: sum_k |direction . g_k|."""
    G = G.generators if isinstance(G, Zonotope) else np.atleast_2d(np.asarray(G, float))
    d = np.asarray(direction, dtype=float)
    if d.shape[0] != G.shape[0]:
        raise ValueError(f"direction has dimension {d.shape[0]}, set {G.shape[0]}")
    return float(np.abs(d @ G).sum())


@dataclass(frozen=True)
class Containment:
    contained: bool
    margin: float


def contains_zonotope(inner, outer: Zonotope) -> Containment:
    """Exact test of generator set `inner` against the facets of `outer`.

    The margin is 1 minus the largest facet support of the inner set; it is
    nonnegative exactly when the inner set fits.
    """
    G = inner.generators if isinstance(inner, Zonotope) else np.atleast_2d(np.asarray(inner, float))
    if G.shape[0] != outer.dim:
        raise ValueError(f"dimension mismatch: inner {G.shape[0]}, outer {outer.dim}")
    if G.shape[1] == 0:
        return Containment(True, 1.0)
    sup = np.abs(outer.facet_normals @ G).sum(axis=1)
    margin = float(1.0 - sup.max())
    return Containment(margin >= -CONTAINMENT_EPS, margin)


def generator_membership(G, point, tol: float = 1e-9) -> tuple[bool, float]:
    """Decide point = G d with ||d||_inf <= 1 + tol; returns (member, coeff).

    `coeff` is the inf-norm of the best coefficient vector found (inf when the
    point is outside the column span).  A minimum-2-norm solve handles almost
    every query; the exact min-inf-norm LP runs only when that solution lands
    outside the box but the point may still be representable.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    p = np.asarray(point, dtype=float)
    scale = 1.0 + float(np.abs(p).max(initial=0.0))
    if G.shape[1] == 0:
        inside = bool(np.abs(p).max(initial=0.0) <= tol * scale)
        return inside, 0.0 if inside else np.inf
    # Min-2-norm solve through the normal equations (much cheaper than an
    # SVD for wide generator matrices); fall back to lstsq when the Gram
    # matrix is too ill-conditioned to trust.
    d = None
    try:
        d = G.T @ np.linalg.solve(G @ G.T, p)
        if float(np.abs(G @ d - p).max()) > tol * scale:
            d = None
    except np.linalg.LinAlgError:
        d = None
    if d is None:
        d, *_ = np.linalg.lstsq(G, p, rcond=None)
    residual = float(np.abs(G @ d - p).max())
    if residual > tol * scale:
        return False, np.inf
    coeff = float(np.abs(d).max())
    if coeff <= 1.0 + tol:
        return True, coeff
    # Exact min-inf-norm refinement.  The reconstruction constraint carries a
    # small residual band (matching the fast path's tolerance): an exact
    # equality through near-zero generator columns is numerically brittle for
    # the solver, and anything inside the band is indistinguishable anyway.
    g = G.shape[1]
    n = G.shape[0]
    sigma = tol * scale
    c = np.zeros(g + 1)
    c[-1] = 1.0
    A_ub = np.zeros((2 * n + 2 * g, g + 1))
    b_ub = np.zeros(2 * n + 2 * g)
    A_ub[:n, :g] = G
    b_ub[:n] = p + sigma
    A_ub[n:2 * n, :g] = -G
    b_ub[n:2 * n] = -p + sigma
    A_ub[2 * n:2 * n + g, :g] = np.eye(g)
    A_ub[2 * n:2 * n + g, -1] = -1.0
    A_ub[2 * n + g:, :g] = -np.eye(g)
    A_ub[2 * n + g:, -1] = -1.0
    bounds = [(None, None)] * g + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        return False, min(coeff, np.inf)
    lp_coeff = float(res.x[-1])
    coeff = min(coeff, lp_coeff)
    return coeff <= 1.0 + tol, coeff


def contains_point(Z: Zonotope, point, tol: float = 1e-9) -> bool:
    """Membership of a point, decided through the generator representation."""
    p = np.asarray(point, dtype=float)
    if p.shape[0] != Z.dim:
        raise ValueError(f"point has dimension {p.shape[0]}, set {Z.dim}")
    member, _ = generator_membership(Z.generators, p, tol=tol)
    return member


def pseudo_inverse(M, cond_limit: float = 1e10) -> np.ndarray:
    """Left pseudo-inverse (M^T M)^{-1} M^T of a full-column-rank matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if np.linalg.cond(M) > cond_limit:
        raise RankDeficientError(
            f"matrix of shape {M.shape} is rank deficient (cond > {cond_limit:g})"
        )
    return np.linalg.solve(M.T @ M, M.T)
