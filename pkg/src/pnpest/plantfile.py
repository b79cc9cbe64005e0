"""JSON persistence: plant descriptions, design bundles, run manifests.

Plant schema (one object):

    {"name": "...",                      # optional
     "subsystems": [
       {"id": 1,
        "A": [[...]], "B": [[...]] | null, "C": [[...]], "D": [[...]] | null,
        "couplings": {"2": [[...]]},
        "error_set": {"box": [..]} | {"generators": [[..]], "facets": [[..]]},
        "dist_set":  {"box": [..]} | {"generators": [[..]], "facets": [[..]]} | null},
       ...]}

Numbers round-trip losslessly (repr-based JSON floats).  A design bundle is
keyed by the content hash of the plant it was produced for, so stale
pairings are detected instead of silently accepted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .analysis import CertifiedSum, NecessaryCheck, SmallGainReport
from .errors import PlantFormatError, StaleDesignError
from .model import CrossGain, GainSet, PlantGraph, Subsystem, validate_graph
from .rpi import RpiSet
from .synthesis import LseDesign
from .zonotope import Zonotope, from_box, normalized_facets

TOOL_VERSION = "0.1.0"


def _matrix(data, what: str) -> np.ndarray:
    try:
        return np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise PlantFormatError(f"{what}: not a numeric matrix") from exc


def _set_from_json(data, what: str) -> Zonotope | None:
    if data is None:
        return None
    if not isinstance(data, dict):
        raise PlantFormatError(f"{what}: expected an object or null")
    if "box" in data:
        try:
            return from_box(np.asarray(data["box"], dtype=float))
        except ValueError as exc:
            raise PlantFormatError(f"{what}: {exc}") from exc
    if "generators" in data and "facets" in data:
        try:
            return normalized_facets(_matrix(data["generators"], what),
                                     _matrix(data["facets"], what))
        except ValueError as exc:
            raise PlantFormatError(f"{what}: {exc}") from exc
    raise PlantFormatError(f"{what}: need 'box' or 'generators'+'facets'")


def _set_to_json(z: Zonotope | None):
    if z is None:
        return None
    return {"generators": z.generators.tolist(),
            "facets": z.facet_normals.tolist()}


def subsystem_from_json(entry: dict) -> Subsystem:
    if "id" not in entry:
        raise PlantFormatError("subsystem entry without 'id'")
    sid = int(entry["id"])
    what = f"subsystem {sid}"
    for key in ("A", "C", "error_set"):
        if key not in entry:
            raise PlantFormatError(f"{what}: missing field {key!r}")
    couplings = {}
    for j, M in (entry.get("couplings") or {}).items():
        couplings[int(j)] = _matrix(M, f"{what} coupling to {j}")
    B = entry.get("B")
    D = entry.get("D")
    return Subsystem(
        id=sid,
        A=_matrix(entry["A"], f"{what} A"),
        B=None if B is None else _matrix(B, f"{what} B"),
        C=_matrix(entry["C"], f"{what} C"),
        D=None if D is None else _matrix(D, f"{what} D"),
        couplings=couplings,
        error_set=_set_from_json(entry["error_set"], f"{what} error_set"),
        dist_set=_set_from_json(entry.get("dist_set"), f"{what} dist_set"),
    )


def subsystem_to_json(s: Subsystem) -> dict:
    return {
        "id": s.id,
        "A": s.A.tolist(),
        "B": s.B.tolist() if s.m else None,
        "C": s.C.tolist(),
        "D": s.D.tolist() if s.r else None,
        "couplings": {str(j): M.tolist() for j, M in sorted(s.couplings.items())},
        "error_set": _set_to_json(s.error_set),
        "dist_set": _set_to_json(s.dist_set),
    }


def graph_to_json(graph: PlantGraph, name: str | None = None) -> dict:
    doc = {"subsystems": [subsystem_to_json(s) for s in graph.subsystems]}
    if name:
        doc["name"] = name
    return doc


def graph_from_json(doc: dict) -> PlantGraph:
    if not isinstance(doc, dict) or "subsystems" not in doc:
        raise PlantFormatError("plant file must contain a 'subsystems' list")
    subs = [subsystem_from_json(e) for e in doc["subsystems"]]
    graph = PlantGraph(subs)
    report = validate_graph(graph)
    if not report.ok:
        lines = "; ".join(f"[{f.code}] subsystem {f.subsystem_id}: {f.message}"
                          for f in report.findings)
        raise PlantFormatError(f"invalid plant: {lines}")
    return graph


def canonical_dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def plant_hash(graph: PlantGraph) -> str:
    return hashlib.sha256(canonical_dumps(graph_to_json(graph)).encode()).hexdigest()


def load_plant(path) -> PlantGraph:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlantFormatError(f"{path}: {exc}") from exc
    return graph_from_json(doc)


def save_plant(graph: PlantGraph, path, name: str | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_json(graph, name), fh, indent=1, sort_keys=True)
        fh.write("\n")


# --- design bundles ---------------------------------------------------------

def _certified_to_json(c: CertifiedSum | None):
    if c is None:
        return None
    return {"lower": c.lower, "upper": c.upper, "depth": c.depth, "tail": c.tail}


def _certified_from_json(d) -> CertifiedSum | None:
    if d is None:
        return None
    return CertifiedSum(d["lower"], d["upper"], int(d["depth"]), d["tail"])


def design_to_json(design: LseDesign) -> dict:
    g = design.gains
    return {
        "gains": {
            "L": g.L.tolist(),
            "cross": {str(j): {"L": cg.L.tolist(), "delta": cg.delta}
                      for j, cg in sorted(g.cross.items())},
            "Q": np.asarray(g.Q).tolist(),
            "R": np.asarray(g.R).tolist(),
            "P": g.P.tolist(),
            "dare_residual": g.dare_residual,
        },
        "report": {
            "schur_local": design.report.schur_local,
            "rho_local": design.report.rho_local,
            "coupling_gain": _certified_to_json(design.report.coupling),
            "disturbance_gain": _certified_to_json(design.report.disturbance),
        },
        "necessary_condition": {
            "satisfied": design.necessary.satisfied,
            "margin": design.necessary.margin,
            "method": design.necessary.method,
        },
        "rpi": {
            "generators": design.rpi.generators.tolist(),
            "epsilon": design.rpi.epsilon,
            "horizon": design.rpi.horizon,
            "containment_margin": design.rpi.containment_margin,
        },
    }


def design_from_json(sid: int, d: dict) -> LseDesign:
    g = d["gains"]
    cross = {int(j): CrossGain(L=np.array(e["L"], dtype=float), delta=int(e["delta"]))
             for j, e in g["cross"].items()}
    gains = GainSet(L=np.array(g["L"], dtype=float), cross=cross,
                    Q=np.array(g["Q"], dtype=float), R=np.array(g["R"], dtype=float),
                    P=np.array(g["P"], dtype=float),
                    dare_residual=float(g["dare_residual"]))
    r = d["report"]
    report = SmallGainReport(
        subsystem_id=sid,
        schur_local=bool(r["schur_local"]),
        rho_local=float(r["rho_local"]),
        coupling=_certified_from_json(r["coupling_gain"]),
        disturbance=_certified_from_json(r["disturbance_gain"]))
    nc = d["necessary_condition"]
    necessary = NecessaryCheck(satisfied=bool(nc["satisfied"]),
                               margin=float(nc["margin"]), method=nc["method"])
    rp = d["rpi"]
    generators = np.array(rp["generators"], dtype=float)
    if generators.size == 0:
        generators = generators.reshape((len(rp["generators"]), 0))
    rpi_set = RpiSet(generators=generators, epsilon=float(rp["epsilon"]),
                     horizon=int(rp["horizon"]),
                     containment_margin=float(rp["containment_margin"]))
    return LseDesign(gains=gains, report=report, rpi=rpi_set, necessary=necessary)


def bundle_to_json(designs: dict[int, LseDesign], plant_hash_hex: str,
                   options: dict | None = None) -> dict:
    return {
        "plant_hash": plant_hash_hex,
        "tool_version": TOOL_VERSION,
        "options": options or {},
        "subsystems": {str(i): design_to_json(d) for i, d in sorted(designs.items())},
    }


def save_designs(designs: dict[int, LseDesign], graph: PlantGraph, path,
                 options: dict | None = None) -> None:
    doc = bundle_to_json(designs, plant_hash(graph), options)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_designs(path, graph: PlantGraph | None = None) -> dict[int, LseDesign]:
    """Load a design bundle; with a graph given, reject stale pairings."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlantFormatError(f"{path}: {exc}") from exc
    if "subsystems" not in doc:
        raise PlantFormatError(f"{path}: not a design bundle")
    if graph is not None and doc.get("plant_hash") != plant_hash(graph):
        raise StaleDesignError(
            f"{path}: design bundle was produced for a different plant")
    return {int(sid): design_from_json(int(sid), d)
            for sid, d in doc["subsystems"].items()}


# --- extensions (plug-in payloads) ------------------------------------------

def extension_to_json(new_sub: Subsystem, child_couplings: dict[int, np.ndarray]) -> dict:
    return {"subsystem": subsystem_to_json(new_sub),
            "child_couplings": {str(j): M.tolist()
                                for j, M in sorted(child_couplings.items())}}


def extension_from_json(doc: dict) -> tuple[Subsystem, dict[int, np.ndarray]]:
    if "subsystem" not in doc:
        raise PlantFormatError("extension file must contain 'subsystem'")
    sub = subsystem_from_json(doc["subsystem"])
    child = {int(j): _matrix(M, f"child coupling {j}")
             for j, M in (doc.get("child_couplings") or {}).items()}
    return sub, child


def load_extension(path) -> tuple[Subsystem, dict[int, np.ndarray]]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlantFormatError(f"{path}: {exc}") from exc
    return extension_from_json(doc)


def save_extension(new_sub: Subsystem, child_couplings: dict[int, np.ndarray],
                   path) -> None:
    with open(path, "w") as fh:
        json.dump(extension_to_json(new_sub, child_couplings), fh,
                  indent=1, sort_keys=True)
        fh.write("\n")


# --- run manifests -----------------------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    command: str
    seed: int | None
    config_hash: str
    tool_version: str
    outputs: tuple[str, ...]
    summary: dict
    created: str

    def to_json(self) -> dict:
        return {"command": self.command, "seed": self.seed,
                "config_hash": self.config_hash, "tool_version": self.tool_version,
                "outputs": list(self.outputs), "summary": self.summary,
                "created": self.created}


def manifest_hash(doc: dict) -> str:
    """Content hash of a manifest with the timestamp excluded."""
    stripped = {k: v for k, v in doc.items() if k != "created"}
    return hashlib.sha256(canonical_dumps(stripped).encode()).hexdigest()
