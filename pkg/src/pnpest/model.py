"""Plant decomposition: subsystems, interconnection graph, collective assembly.

A plant is a list of discrete-time LTI subsystems coupled through their
states.  Subsystem j is a parent of i when the block A_ij is present; the
children map is the transpose of that relation.  The collective error
matrix assembled here is used only for certification and test oracles,
never by the runtime estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .zonotope import Zonotope


@dataclass(eq=False)
class Subsystem:
    """One LTI subsystem with its coupling blocks and constraint sets.

    Matrices: A (n x n) local dynamics, B (n x m) input map, C (p x n)
    output map, D (n x r) disturbance map.  `couplings` maps each parent id
    j to the block A_ij.  `error_set` bounds the admissible estimation
    error, `dist_set` the process disturbance (None means no disturbance).
    """

    id: int
    A: np.ndarray
    C: np.ndarray
    error_set: Zonotope
    B: np.ndarray | None = None
    D: np.ndarray | None = None
    couplings: dict[int, np.ndarray] = field(default_factory=dict)
    dist_set: Zonotope | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.B = (np.zeros((n, 0)) if self.B is None
                  else np.atleast_2d(np.asarray(self.B, dtype=float)))
        self.D = (np.zeros((n, 0)) if self.D is None
                  else np.atleast_2d(np.asarray(self.D, dtype=float)))
        self.couplings = {int(j): np.atleast_2d(np.asarray(M, dtype=float))
                          for j, M in self.couplings.items()}

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def r(self) -> int:
        return self.D.shape[1]

    @property
    def parents(self) -> tuple[int, ...]:
        return tuple(sorted(self.couplings))


@dataclass(frozen=True, eq=False)
class CrossGain:
    """Gain on one parent's output innovation plus its communication switch."""

    L: np.ndarray
    delta: int

    def __post_init__(self):
        object.__setattr__(self, "L", np.atleast_2d(np.asarray(self.L, dtype=float)))
        if self.delta not in (0, 1):
            raise ValueError(f"delta must be 0 or 1, got {self.delta}")
        if self.delta == 0 and np.any(self.L != 0.0):
            raise ValueError("disabled cross gain must be stored as zero")


@dataclass(frozen=True, eq=False)
class GainSet:
    """Observer gains for one local estimator.

    L is the local output-injection gain (n x p); `cross` holds one
    CrossGain per parent.  Q, R are the diagonal weights that produced L
    through the Riccati solve with solution P (kept for auditing).
    """

    L: np.ndarray
    cross: dict[int, CrossGain]
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    dare_residual: float

    def __post_init__(self):
        object.__setattr__(self, "L", np.atleast_2d(np.asarray(self.L, dtype=float)))
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "P", np.atleast_2d(np.asarray(self.P, dtype=float)))
        object.__setattr__(self, "cross", dict(self.cross))


def zero_gains(sub: Subsystem) -> GainSet:
    """All-zero gains (delta = 0 everywhere); the error matrix equals the plant's."""
    cross = {j: CrossGain(np.zeros((sub.n, 1)), 0) for j in sub.couplings}
    return GainSet(L=np.zeros((sub.n, sub.p)), cross=cross,
                   Q=np.zeros(sub.n), R=np.ones(max(sub.p, 1)),
                   P=np.zeros((sub.n, sub.n)), dare_residual=0.0)


def local_error_matrix(sub: Subsystem, gains: GainSet) -> np.ndarray:
    """Closed local error dynamics A + L C."""
    return sub.A + gains.L @ sub.C


def cross_error_matrix(sub: Subsystem, gains: GainSet, j: int, C_j: np.ndarray) -> np.ndarray:
    """Closed coupling block A_ij + delta_ij L_ij C_j."""
    A_ij = sub.couplings[j]
    cg = gains.cross.get(j)
    if cg is None or cg.delta == 0:
        return A_ij
    return A_ij + cg.L @ np.atleast_2d(np.asarray(C_j, dtype=float))


@dataclass(frozen=True, eq=False)
class ParentData:
    """The slice of a parent another subsystem's design is allowed to read."""

    C: np.ndarray
    error_set: Zonotope


@dataclass(eq=False)
class PlantGraph:
    """Immutable-by-convention ordered collection of subsystems."""

    subsystems: list[Subsystem]

    def __post_init__(self):
        ids = [s.id for s in self.subsystems]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate subsystem ids: {sorted(ids)}")
        self._by_id = {s.id: s for s in self.subsystems}

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.subsystems)

    def __getitem__(self, sub_id: int) -> Subsystem:
        return self._by_id[sub_id]

    def __contains__(self, sub_id: int) -> bool:
        return sub_id in self._by_id

    def children(self, sub_id: int) -> tuple[int, ...]:
        """Ids that list `sub_id` as a parent."""
        return tuple(sorted(s.id for s in self.subsystems if sub_id in s.couplings))

    def parent_data(self, sub_id: int) -> dict[int, ParentData]:
        """Fixed parent parameters available to one subsystem's design."""
        sub = self._by_id[sub_id]
        out = {}
        for j in sub.parents:
            parent = self._by_id.get(j)
            if parent is None:
                raise KeyError(f"subsystem {sub_id} references unknown parent {j}")
            out[j] = ParentData(C=parent.C, error_set=parent.error_set)
        return out

    def without_subsystem(self, sub_id: int) -> "PlantGraph":
        """New graph with one subsystem removed and all references to it dropped."""
        if sub_id not in self._by_id:
            raise KeyError(f"unknown subsystem id {sub_id}")
        survivors = []
        for s in self.subsystems:
            if s.id == sub_id:
                continue
            couplings = {j: M for j, M in s.couplings.items() if j != sub_id}
            survivors.append(Subsystem(id=s.id, A=s.A, B=s.B, C=s.C, D=s.D,
                                       couplings=couplings, error_set=s.error_set,
                                       dist_set=s.dist_set))
        return PlantGraph(survivors)

    def with_subsystem(self, new_sub: Subsystem,
                       child_couplings: dict[int, np.ndarray] | None = None) -> "PlantGraph":
        """New graph with a subsystem appended.

        `child_couplings` maps existing ids j to the new block A_{j,new}; those
        subsystems become the children of the inserted one.
        """
        if new_sub.id in self._by_id:
            raise ValueError(f"subsystem id {new_sub.id} already present")
        child_couplings = child_couplings or {}
        subs = []
        for s in self.subsystems:
            if s.id in child_couplings:
                couplings = dict(s.couplings)
                couplings[new_sub.id] = np.atleast_2d(
                    np.asarray(child_couplings[s.id], dtype=float))
                subs.append(Subsystem(id=s.id, A=s.A, B=s.B, C=s.C, D=s.D,
                                      couplings=couplings, error_set=s.error_set,
                                      dist_set=s.dist_set))
            else:
                subs.append(s)
        subs.append(new_sub)
        return PlantGraph(subs)


@dataclass(frozen=True)
class Finding:
    code: str
    subsystem_id: int | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings


def validate_graph(graph: PlantGraph) -> ValidationReport:
    """Structural checks: dimensions, dangling parents, self-couplings, sets."""
    findings: list[Finding] = []

    def add(code, sid, msg):
        findings.append(Finding(code, sid, msg))

    for s in graph.subsystems:
        n = s.n
        if s.A.shape != (n, n):
            add("bad-dim", s.id, f"A must be square, got {s.A.shape}")
        if s.B.shape[0] != n:
            add("bad-dim", s.id, f"B has {s.B.shape[0]} rows, expected {n}")
        if s.C.shape[1] != n:
            add("bad-dim", s.id, f"C has {s.C.shape[1]} columns, expected {n}")
        if s.D.shape[0] != n:
            add("bad-dim", s.id, f"D has {s.D.shape[0]} rows, expected {n}")
        if s.error_set.dim != n:
            add("bad-set", s.id, f"error set lives in R^{s.error_set.dim}, state in R^{n}")
        if s.dist_set is not None and s.dist_set.dim != s.r:
            add("bad-set", s.id,
                f"disturbance set lives in R^{s.dist_set.dim}, disturbance in R^{s.r}")
        for j, M in s.couplings.items():
            if j == s.id:
                add("self-coupling", s.id, "subsystem lists itself as a parent")
                continue
            if j not in graph:
                add("unknown-parent", s.id, f"unknown parent {j}")
                continue
            expected = (n, graph[j].n)
            if M.shape != expected:
                add("bad-dim", s.id,
                    f"coupling to {j}: expected shape {expected}, got {M.shape}")
            if not np.any(M):
                add("zero-coupling", s.id, f"coupling block to {j} is identically zero")
    return ValidationReport(tuple(findings))


def assemble_collective(graph: PlantGraph,
                        gains: dict[int, GainSet] | None = None
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Collective error matrix and block-diagonal disturbance map.

    Block (i, i) is A_ii + L_ii C_i and block (i, j) is A_ij + delta L_ij C_j
    for each parent j.  With `gains` None all gains are zero, which reproduces
    the open-loop plant blocks.
    """
    order = graph.ids
    offs = {}
    total = 0
    for i in order:
        offs[i] = total
        total += graph[i].n
    gains = gains if gains is not None else {i: zero_gains(graph[i]) for i in order}

    A_bar = np.zeros((total, total))
    for i in order:
        sub = graph[i]
        g = gains[i]
        if g.L.shape != (sub.n, sub.p):
            raise DimensionMismatchError(f"L[{i},{i}]", (sub.n, sub.p), g.L.shape)
        oi = offs[i]
        A_bar[oi:oi + sub.n, oi:oi + sub.n] = local_error_matrix(sub, g)
        for j in sub.parents:
            if j not in graph:
                raise KeyError(f"subsystem {i} references unknown parent {j}")
            parent = graph[j]
            if sub.couplings[j].shape != (sub.n, parent.n):
                raise DimensionMismatchError(f"A[{i},{j}]", (sub.n, parent.n),
                                             sub.couplings[j].shape)
            cg = g.cross.get(j)
            if cg is not None and cg.delta == 1 and cg.L.shape != (sub.n, parent.p):
                raise DimensionMismatchError(f"L[{i},{j}]", (sub.n, parent.p), cg.L.shape)
            oj = offs[j]
            A_bar[oi:oi + sub.n, oj:oj + parent.n] = cross_error_matrix(sub, g, j, parent.C)

    r_total = sum(graph[i].r for i in order)
    D = np.zeros((total, r_total))
    roff = 0
    for i in order:
        sub = graph[i]
        D[offs[i]:offs[i] + sub.n, roff:roff + sub.r] = sub.D
        roff += sub.r
    return A_bar, D
