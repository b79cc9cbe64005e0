"""Offline plug-in / unplug transactions over a designed estimator network.

Both operations are pure transformations: they take the current graph and
the per-subsystem designs and return new values, leaving the inputs intact.
A rejected plug-in therefore cannot corrupt anything.  Plugging in touches
exactly the new subsystem and its children; unplugging redesigns nothing
(survivor certificates are re-verified rather than trusted) unless the
optional performance redesign of former children is requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .errors import (ContainmentError, GainSearchInfeasibleError,
                     NecessaryConditionError, PnpestError)
from .model import PlantGraph, Subsystem, validate_graph
from .synthesis import LseDesign, SynthesisOptions, design_lse


@dataclass(frozen=True)
class Rejection:
    reason: str
    failing_id: int
    stage: str
    detail: str = ""


@dataclass(frozen=True)
class PnpTransaction:
    kind: str                       # "plug_in" | "unplug"
    target: int
    redesigned: tuple[int, ...]     # ids whose design correctness required
    optional_redesigned: tuple[int, ...] = ()
    rejection: Rejection | None = None

    @property
    def accepted(self) -> bool:
        return self.rejection is None


@dataclass
class PnpResult:
    transaction: PnpTransaction
    graph: PlantGraph
    designs: dict[int, LseDesign]
    design_calls: tuple[int, ...] = field(default=())


def _classify(exc: PnpestError) -> tuple[str, str]:
    if isinstance(exc, NecessaryConditionError):
        return "NecessaryConditionViolated", "necessary-condition"
    if isinstance(exc, GainSearchInfeasibleError):
        return "Step2Infeasible", "gain-search"
    if isinstance(exc, ContainmentError):
        return "ContainmentFailed", "containment"
    return type(exc).__name__, "design"


def plug_in(graph: PlantGraph, designs: dict[int, LseDesign], new_sub: Subsystem,
            child_couplings: dict[int, np.ndarray] | None = None,
            delta: dict[int, int] | None = None,
            options: SynthesisOptions = SynthesisOptions()) -> PnpResult:
    """Add a subsystem, designing its estimator and redesigning its children.

    `child_couplings` maps existing ids to their new coupling block toward the
    inserted subsystem; exactly those ids are redesigned after the newcomer.
    Any design failure rejects the transaction and returns the original graph
    and designs unchanged.
    """
    child_couplings = child_couplings or {}
    candidate = graph.with_subsystem(new_sub, child_couplings)
    report = validate_graph(candidate)
    calls: list[int] = []
    if not report.ok:
        first = report.findings[0]
        rejection = Rejection(reason="InvalidSubsystem",
                              failing_id=first.subsystem_id if first.subsystem_id is not None
                              else new_sub.id,
                              stage="validate", detail=first.message)
        txn = PnpTransaction("plug_in", new_sub.id, (), rejection=rejection)
        return PnpResult(txn, graph, designs, tuple(calls))

    to_design = [new_sub.id] + sorted(child_couplings)
    new_designs = dict(designs)
    for sid in to_design:
        calls.append(sid)
        try:
            new_designs[sid] = design_lse(candidate[sid], candidate.parent_data(sid),
                                          delta=delta, options=options)
        except PnpestError as exc:
            reason, stage = _classify(exc)
            rejection = Rejection(reason=reason, failing_id=sid, stage=stage,
                                  detail=str(exc))
            txn = PnpTransaction("plug_in", new_sub.id, (), rejection=rejection)
            return PnpResult(txn, graph, designs, tuple(calls))
    txn = PnpTransaction("plug_in", new_sub.id, tuple(to_design))
    return PnpResult(txn, candidate, new_designs, tuple(calls))


def unplug(graph: PlantGraph, designs: dict[int, LseDesign], sub_id: int,
           redesign_children: bool = False,
           options: SynthesisOptions = SynthesisOptions()) -> PnpResult:
    """Remove a subsystem; survivors keep their gains and invariant sets.

    Former children lose one coupling term, so their gain certificates can
    only shrink; they are recomputed here (with gains unchanged) to refresh
    the stored reports rather than assumed.  With `redesign_children`, a
    full redesign of each former child is run afterwards and recorded as an
    optional performance improvement.
    """
    if sub_id not in graph:
        raise KeyError(f"unknown subsystem id {sub_id}")
    children = graph.children(sub_id)
    new_graph = graph.without_subsystem(sub_id)
    new_designs = {}
    calls: list[int] = []
    for sid in new_graph.ids:
        old = designs[sid]
        if sid in children:
            gains = old.gains
            if sub_id in gains.cross:
                cross = {j: cg for j, cg in gains.cross.items() if j != sub_id}
                gains = type(gains)(L=gains.L, cross=cross, Q=gains.Q, R=gains.R,
                                    P=gains.P, dare_residual=gains.dare_residual)
            report = analysis.small_gain_report(new_graph[sid], gains,
                                                new_graph.parent_data(sid),
                                                depth_cap=options.depth_cap,
                                                tail_tol=options.tail_tol)
            new_designs[sid] = LseDesign(gains=gains, report=report,
                                         rpi=old.rpi, necessary=old.necessary)
        else:
            new_designs[sid] = old
    optional: list[int] = []
    if redesign_children:
        for sid in children:
            calls.append(sid)
            try:
                new_designs[sid] = design_lse(new_graph[sid], new_graph.parent_data(sid),
                                              options=options)
                optional.append(sid)
            except PnpestError:
                # Optional improvement only: keep the still-valid prior design.
                pass
    txn = PnpTransaction("unplug", sub_id, (), optional_redesigned=tuple(optional))
    return PnpResult(txn, new_graph, new_designs, tuple(calls))
