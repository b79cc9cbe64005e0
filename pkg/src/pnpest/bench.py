"""Planar mass array benchmark: spring-coupled masses on a damped plane.

Masses sit on a regular grid, each connected to its four grid neighbors by
springs acting along each axis independently (the x and y dynamics of a
connection do not mix), and each mass rides on a damper to the frame on
both axes.  Per-mass state is (px, vx, py, vy): displacements from the
equilibrium grid point and the two velocities.  Boundary masses have no
wall springs; the restoring terms a mass feels from an out-of-group
neighbor stay in its own group's local matrix, while the neighbor's motion
enters through a coupling block, so local blocks are anchored (stable).

Each group measures the displacements of two masses and the velocities of
the other two; the measured-position pair is the group diagonal, which
keeps the local pairs far enough from their invariant zeros for the gain
series to contract.  Grid indexing is row-major: mass f = row * cols + col.
Groups tile the grid; subsystem ids count groups row-major starting at 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .model import PlantGraph, Subsystem
from .zonotope import from_box

# State offsets within one mass block.
_PX, _VX, _PY, _VY = 0, 1, 2, 3


@dataclass(frozen=True)
class MassArrayConfig:
    rows: int = 4
    cols: int = 4
    group_rows: int = 2
    group_cols: int = 2
    mass_range: tuple[float, float] = (5.0, 10.0)
    spring_k: float = 0.5
    damper_c: float = 0.5
    sample_time: float = 0.2
    force_scale: float = 100.0
    pos_error: float = 1.0
    vel_error: float = 1.5
    dist_bound: float = 0.015
    with_disturbance: bool = True
    # Canonical mass draw: chosen so the design is feasible with margin for
    # both communication configurations (the draw is otherwise arbitrary).
    seed: int = 23

    def __post_init__(self):
        if self.rows % self.group_rows or self.cols % self.group_cols:
            raise ValueError("grid dimensions must be divisible by the group shape")
        for name in ("spring_k", "damper_c", "sample_time", "force_scale",
                     "pos_error", "vel_error"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_masses(self) -> int:
        return self.rows * self.cols

    @property
    def masses_per_group(self) -> int:
        return self.group_rows * self.group_cols

    def group_of(self, row: int, col: int) -> int:
        """Subsystem id (1-based) owning the mass at (row, col)."""
        return (row // self.group_rows) * (self.cols // self.group_cols) \
            + (col // self.group_cols) + 1

    def local_index(self, row: int, col: int) -> int:
        """Row-major index of a mass within its group."""
        return (row % self.group_rows) * self.group_cols + (col % self.group_cols)


def draw_masses(cfg: MassArrayConfig, seed: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    lo, hi = cfg.mass_range
    return rng.uniform(lo, hi, cfg.n_masses)


@dataclass(frozen=True, eq=False)
class ContinuousGroup:
    """Continuous-time matrices of one group, couplings keyed by neighbor id."""

    A: np.ndarray
    B: np.ndarray
    couplings: dict[int, np.ndarray]
    masses: np.ndarray


def build_continuous(cfg: MassArrayConfig,
                     masses: np.ndarray | None = None) -> dict[int, ContinuousGroup]:
    """Continuous-time group models from Newton's law on the grid."""
    masses = draw_masses(cfg) if masses is None else np.asarray(masses, dtype=float)
    if masses.shape != (cfg.n_masses,):
        raise ValueError(f"expected {cfg.n_masses} masses, got {masses.shape}")
    n_groups = (cfg.rows // cfg.group_rows) * (cfg.cols // cfg.group_cols)
    n_i = 4 * cfg.masses_per_group
    A = {g: np.zeros((n_i, n_i)) for g in range(1, n_groups + 1)}
    B = {g: np.zeros((n_i, 2 * cfg.masses_per_group)) for g in range(1, n_groups + 1)}
    coup: dict[int, dict[int, np.ndarray]] = {g: {} for g in range(1, n_groups + 1)}
    group_masses = {g: np.zeros(cfg.masses_per_group) for g in range(1, n_groups + 1)}

    k, c = cfg.spring_k, cfg.damper_c
    for row in range(cfg.rows):
        for col in range(cfg.cols):
            gid = cfg.group_of(row, col)
            li = cfg.local_index(row, col)
            m = masses[row * cfg.cols + col]
            group_masses[gid][li] = m
            base = 4 * li
            A[gid][base + _PX, base + _VX] = 1.0
            A[gid][base + _PY, base + _VY] = 1.0
            A[gid][base + _VX, base + _VX] -= c / m
            A[gid][base + _VY, base + _VY] -= c / m
            B[gid][base + _VX, 2 * li] = cfg.force_scale / m
            B[gid][base + _VY, 2 * li + 1] = cfg.force_scale / m
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = row + dr, col + dc
                if not (0 <= nr < cfg.rows and 0 <= nc < cfg.cols):
                    continue
                ngid = cfg.group_of(nr, nc)
                nli = cfg.local_index(nr, nc)
                nbase = 4 * nli
                # Spring restoring terms always act on this mass's own
                # coordinates, whichever group owns the neighbor.
                for pos, vel in ((_PX, _VX), (_PY, _VY)):
                    A[gid][base + vel, base + pos] -= k / m
                target = A[gid] if ngid == gid else coup[gid].setdefault(
                    ngid, np.zeros((n_i, n_i)))
                for pos, vel in ((_PX, _VX), (_PY, _VY)):
                    target[base + vel, nbase + pos] += k / m

    return {g: ContinuousGroup(A=A[g], B=B[g], couplings=coup[g],
                               masses=group_masses[g])
            for g in range(1, n_groups + 1)}


def discretize_zoh(A_c, B_c, couplings_c: dict, T: float
                   ) -> tuple[np.ndarray, np.ndarray, dict[int, np.ndarray]]:
    """Zero-order-hold discretization with couplings held as exogenous signals.

    The local map is exp(A T); every exogenous map M (inputs and coupling
    blocks alike) becomes the integral of exp(A s) M over one sample period,
    read off the upper-right block of the augmented matrix exponential.
    """
    if T <= 0:
        raise ValueError("sample time must be positive")
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    n = A_c.shape[0]

    def held(M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        q = M.shape[1]
        if q == 0:
            return np.zeros((n, 0))
        aug = np.zeros((n + q, n + q))
        aug[:n, :n] = A_c
        aug[:n, n:] = M
        return scipy.linalg.expm(aug * T)[:n, n:]

    A_d = scipy.linalg.expm(A_c * T)
    B_d = held(B_c)
    coup_d = {j: held(M) for j, M in couplings_c.items()}
    return A_d, B_d, coup_d


def build_outputs(cfg: MassArrayConfig) -> np.ndarray:
    """Output selector for a group: positions of the diagonal mass pair
    (local indices 0 and 3, both axes), velocities of the anti-diagonal pair
    (1 and 2).  Groups of any other size measure the full state."""
    npg = cfg.masses_per_group
    if npg != 4:
        return np.eye(4 * npg)
    C = np.zeros((8, 16))
    row = 0
    for mass in (0, 3):
        for comp in (_PX, _PY):
            C[row, 4 * mass + comp] = 1.0
            row += 1
    for mass in (1, 2):
        for comp in (_VX, _VY):
            C[row, 4 * mass + comp] = 1.0
            row += 1
    return C


def _error_box(cfg: MassArrayConfig, n_masses: int):
    per_mass = [cfg.pos_error, cfg.vel_error, cfg.pos_error, cfg.vel_error]
    return from_box(np.tile(per_mass, n_masses))


def build_benchmark(cfg: MassArrayConfig = MassArrayConfig(),
                    masses: np.ndarray | None = None) -> PlantGraph:
    """Discretized benchmark plant with constraint sets attached."""
    groups = build_continuous(cfg, masses)
    C = build_outputs(cfg)
    subs = []
    for gid, grp in sorted(groups.items()):
        A_d, B_d, coup_d = discretize_zoh(grp.A, grp.B, grp.couplings, cfg.sample_time)
        n_i = A_d.shape[0]
        if cfg.with_disturbance:
            D = np.ones((n_i, 1))
            dist = from_box([cfg.dist_bound])
        else:
            D = None
            dist = None
        subs.append(Subsystem(id=gid, A=A_d, B=B_d, C=C, D=D,
                              couplings=coup_d,
                              error_set=_error_box(cfg, n_i // 4),
                              dist_set=dist))
    return PlantGraph(subs)


def build_extension(cfg: MassArrayConfig = MassArrayConfig(),
                    seed: int = 100, coupling_scale: float = 0.25
                    ) -> tuple[Subsystem, dict[int, np.ndarray]]:
    """A fifth group attachable to the default 4x4 benchmark.

    The new 2x2 group sits to the right of the grid, spanning global rows 1-2,
    and connects by scaled-down springs to the two adjacent boundary masses,
    one owned by the upper-right group and one by the lower-right group.
    Returns the new subsystem and the coupling blocks its children gain
    toward it.  The children's local matrices are left as they are; the
    added links act on them purely as cross terms.
    """
    if (cfg.rows, cfg.cols, cfg.group_rows, cfg.group_cols) != (4, 4, 2, 2):
        raise ValueError("extension is defined for the default 4x4 / 2x2 layout")
    rng = np.random.default_rng(seed)
    lo, hi = cfg.mass_range
    masses = rng.uniform(lo, hi, 4)
    k = cfg.spring_k * coupling_scale
    new_id = (cfg.rows // cfg.group_rows) * (cfg.cols // cfg.group_cols) + 1

    # Internal dynamics: isolated 2x2 block (rows 1-2, cols 4-5), plus
    # anchoring from the two outbound links.
    sub_cfg = replace(cfg, rows=2, cols=2, group_rows=2, group_cols=2, seed=seed)
    grp = build_continuous(sub_cfg, masses)[1]
    A_c = grp.A.copy()
    B_c = grp.B

    # Link (new local mass 0) <-> existing grid mass (1, 3); (new local mass 2)
    # <-> grid mass (2, 3).  Local mass 0 is the top-left of the new block.
    base_masses = draw_masses(cfg)
    base_groups = build_continuous(cfg, base_masses)
    links = [(0, (1, 3)), (2, (2, 3))]
    coup_c: dict[int, np.ndarray] = {}
    child_coup_c: dict[int, np.ndarray] = {}
    for local, (grow, gcol) in links:
        m_new = masses[local]
        base = 4 * local
        child_id = cfg.group_of(grow, gcol)
        cbase = 4 * cfg.local_index(grow, gcol)
        block = coup_c.setdefault(child_id, np.zeros((16, 16)))
        for pos, vel in ((_PX, _VX), (_PY, _VY)):
            A_c[base + vel, base + pos] -= k / m_new
            block[base + vel, cbase + pos] += k / m_new
        # The child feels the new mass through scaled spring terms; its own
        # local matrix stays untouched, so no anchoring is added there.
        child_mass = base_masses[grow * cfg.cols + gcol]
        child = child_coup_c.setdefault(child_id, np.zeros((16, 16)))
        for pos, vel in ((_PX, _VX), (_PY, _VY)):
            child[cbase + vel, base + pos] += k / child_mass

    T = cfg.sample_time
    A_d, B_d, coup_d = discretize_zoh(A_c, B_c, coup_c, T)
    child_couplings = {}
    for child_id, M in child_coup_c.items():
        # Discretize the child-side block against the child's own local
        # dynamics, because the hold integral runs under that flow.
        _, _, held = discretize_zoh(base_groups[child_id].A, np.zeros((16, 0)),
                                    {new_id: M}, T)
        child_couplings[child_id] = held[new_id]

    if cfg.with_disturbance:
        D = np.ones((16, 1))
        dist = from_box([cfg.dist_bound])
    else:
        D = None
        dist = None
    new_sub = Subsystem(id=new_id, A=A_d, B=B_d, C=build_outputs(cfg), D=D,
                        couplings=coup_d, error_set=_error_box(cfg, 4),
                        dist_set=dist)
    return new_sub, child_couplings
