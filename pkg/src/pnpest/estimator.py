"""Runtime of the distributed estimator network.

All local estimators update synchronously: every update reads the
time-t values of its own state, input and output and of its parents'
estimates (and outputs, when the communication switch is on), never a
freshly updated neighbor.  This matches the one-step error recursion the
certification reasons about; a sequential in-place sweep would not.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DisturbanceBoundError
from .model import GainSet, PlantGraph
from .rpi import RpiSet
from .zonotope import contains_point, generator_membership


@dataclass(eq=False)
class InputSchedule:
    """Per-step input policy; `kind` is recorded in run manifests."""

    kind: str
    amplitude: float = 0.0
    series: dict[int, np.ndarray] | None = None

    def at(self, t: int, sub_id: int, m: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(m)
        if self.kind == "constant":
            return np.full(m, self.amplitude)
        if self.kind == "sine":
            return np.full(m, self.amplitude * np.sin(float(t)))
        if self.kind == "series":
            return np.asarray(self.series[sub_id][t], dtype=float)
        raise ValueError(f"unknown input schedule {self.kind!r}")


def input_zero() -> InputSchedule:
    return InputSchedule("zero")


def input_constant(value: float) -> InputSchedule:
    return InputSchedule("constant", amplitude=value)


def input_sine(amplitude: float = 0.1) -> InputSchedule:
    return InputSchedule("sine", amplitude=amplitude)


def input_series(series: dict[int, np.ndarray]) -> InputSchedule:
    return InputSchedule("series", series={k: np.asarray(v, float) for k, v in series.items()})


@dataclass
class DisturbancePolicy:
    """Per-step disturbance draw for each subsystem's admissible set."""

    kind: str
    seed: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def at(self, sub) -> np.ndarray:
        if sub.dist_set is None or self.kind == "zero":
            return np.zeros(sub.r)
        gen = sub.dist_set.generators
        if self.kind == "uniform":
            return gen @ self._rng.uniform(-1.0, 1.0, gen.shape[1])
        if self.kind == "vertices":
            signs = self._rng.integers(0, 2, gen.shape[1]) * 2.0 - 1.0
            return gen @ signs
        raise ValueError(f"unknown disturbance policy {self.kind!r}")


def dist_zero() -> DisturbancePolicy:
    return DisturbancePolicy("zero")


def dist_uniform(seed: int = 0) -> DisturbancePolicy:
    return DisturbancePolicy("uniform", seed=seed)


def dist_vertices(seed: int = 0) -> DisturbancePolicy:
    return DisturbancePolicy("vertices", seed=seed)


@dataclass(eq=False)
class Trace:
    """Recorded trajectories with per-step constraint membership flags."""

    ids: tuple[int, ...]
    times: list[int] = field(default_factory=list)
    x: dict[int, list[np.ndarray]] = field(default_factory=dict)
    x_hat: dict[int, list[np.ndarray]] = field(default_factory=dict)
    error: dict[int, list[np.ndarray]] = field(default_factory=dict)
    in_error_set: dict[int, list[bool]] = field(default_factory=dict)
    in_rpi_set: dict[int, list[bool]] | None = None

    def max_abs_error(self, t_index: int = -1) -> float:
        return max(float(np.abs(self.error[i][t_index]).max()) for i in self.ids)

    def all_in_error_set(self) -> bool:
        return all(all(flags) for flags in self.in_error_set.values())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "subsystem", "component", "x", "x_hat", "e",
                             "in_E", "in_S"])
            for ti, t in enumerate(self.times):
                for i in self.ids:
                    in_e = self.in_error_set[i][ti]
                    in_s = "" if self.in_rpi_set is None else self.in_rpi_set[i][ti]
                    for c in range(self.x[i][ti].shape[0]):
                        writer.writerow([t, i, c,
                                         repr(float(self.x[i][ti][c])),
                                         repr(float(self.x_hat[i][ti][c])),
                                         repr(float(self.error[i][ti][c])),
                                         in_e, in_s])


class EstimatorNetwork:
    """Plant and estimator states stepped together.

    `output_reads` counts every access a local estimator makes to a parent's
    output, keyed (reader, parent); estimators with the communication switch
    off never touch the parent's output by construction, which this counter
    makes auditable.
    """

    def __init__(self, graph: PlantGraph, gains: dict[int, GainSet],
                 rpi: dict[int, RpiSet] | None = None,
                 x0: dict[int, np.ndarray] | None = None,
                 x_hat0: dict[int, np.ndarray] | None = None):
        self.graph = graph
        self.gains = gains
        self.rpi = rpi
        self.t = 0
        self.x = {}
        self.x_hat = {}
        for sub in graph.subsystems:
            xi = np.zeros(sub.n) if x0 is None or sub.id not in x0 \
                else np.asarray(x0[sub.id], dtype=float)
            self.x[sub.id] = xi.copy()
            self.x_hat[sub.id] = xi.copy() if x_hat0 is None or sub.id not in x_hat0 \
                else np.asarray(x_hat0[sub.id], dtype=float)
        self.output_reads: dict[tuple[int, int], int] = {}

    def set_initial_error(self, sub_id: int, e0, validate: bool = True) -> None:
        """Offset one estimate so the initial error equals e0.

        With `validate`, e0 must belong to the subsystem's invariant set
        (when available) so the runtime guarantee applies from step 0.
        """
        e0 = np.asarray(e0, dtype=float)
        if validate and self.rpi is not None and sub_id in self.rpi:
            member, _ = generator_membership(self.rpi[sub_id].generators, e0, tol=1e-7)
            if not member:
                raise ValueError(f"initial error for subsystem {sub_id} "
                                 "lies outside its invariant set")
        self.x_hat[sub_id] = self.x[sub_id] - e0

    def errors(self) -> dict[int, np.ndarray]:
        return {i: self.x[i] - self.x_hat[i] for i in self.graph.ids}

    def step(self, u: dict[int, np.ndarray] | None = None,
             w: dict[int, np.ndarray] | None = None) -> dict[int, np.ndarray]:
        """Advance plant and estimators one step; returns the new errors.

        Disturbances are validated against each subsystem's admissible set
        before anything moves.
        """
        g = self.graph
        u = u or {}
        w = w or {}
        for sub in g.subsystems:
            wi = w.get(sub.id)
            if wi is None:
                continue
            wi = np.asarray(wi, dtype=float)
            if sub.dist_set is None:
                if wi.size and np.abs(wi).max() > 0.0:
                    raise DisturbanceBoundError(sub.id)
            elif not contains_point(sub.dist_set, wi, tol=1e-9):
                raise DisturbanceBoundError(sub.id)

        y = {sub.id: sub.C @ self.x[sub.id] for sub in g.subsystems}
        new_x = {}
        new_x_hat = {}
        for sub in g.subsystems:
            i = sub.id
            ui = np.asarray(u.get(i, np.zeros(sub.m)), dtype=float)
            wi = np.asarray(w.get(i, np.zeros(sub.r)), dtype=float)
            gain = self.gains[i]

            xi = sub.A @ self.x[i] + sub.B @ ui + sub.D @ wi
            xh = sub.A @ self.x_hat[i] + sub.B @ ui \
                - gain.L @ (y[i] - sub.C @ self.x_hat[i])
            for j in sub.parents:
                parent = g[j]
                xi = xi + sub.couplings[j] @ self.x[j]
                xh = xh + sub.couplings[j] @ self.x_hat[j]
                cg = gain.cross.get(j)
                if cg is not None and cg.delta == 1:
                    self.output_reads[(i, j)] = self.output_reads.get((i, j), 0) + 1
                    xh = xh - cg.L @ (y[j] - parent.C @ self.x_hat[j])
            new_x[i] = xi
            new_x_hat[i] = xh
        self.x = new_x
        self.x_hat = new_x_hat
        self.t += 1
        return self.errors()

    def simulate(self, schedule: InputSchedule, policy: DisturbancePolicy,
                 horizon: int, check_rpi: bool = False) -> Trace:
        """Run `horizon` steps recording states, errors and membership flags.

        Error-set flags are the direct facet evaluation H e <= 1; invariant
        set flags cost a feasibility solve per step and are off by default.
        """
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        g = self.graph
        trace = Trace(ids=g.ids)
        if check_rpi and self.rpi is not None:
            trace.in_rpi_set = {i: [] for i in g.ids}
        for i in g.ids:
            trace.x[i] = []
            trace.x_hat[i] = []
            trace.error[i] = []
            trace.in_error_set[i] = []

        def record():
            trace.times.append(self.t)
            for sub in g.subsystems:
                i = sub.id
                e = self.x[i] - self.x_hat[i]
                trace.x[i].append(self.x[i].copy())
                trace.x_hat[i].append(self.x_hat[i].copy())
                trace.error[i].append(e)
                trace.in_error_set[i].append(
                    bool((sub.error_set.facet_normals @ e).max() <= 1.0))
                if trace.in_rpi_set is not None:
                    member, _ = generator_membership(self.rpi[i].generators, e, tol=1e-7)
                    trace.in_rpi_set[i].append(member)

        record()
        for _ in range(horizon):
            u = {sub.id: schedule.at(self.t, sub.id, sub.m) for sub in g.subsystems}
            w = {sub.id: policy.at(sub) for sub in g.subsystems}
            self.step(u, w)
            record()
        return trace
