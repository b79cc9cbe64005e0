"""Command-line entry point.

Subcommands: synthesize, certify, simulate, plug-in, unplug, bench.
Exit codes: 0 success, 2 usage error, 3 synthesis failure, 4 certification
failure, 5 plug-and-play rejection.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone

import numpy as np

from . import analysis, bench, estimator, plantfile, pnp
from .errors import PlantFormatError, PnpestError, StaleDesignError
from .synthesis import SynthesisOptions, design_lse

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SYNTHESIS = 3
EXIT_CERTIFICATION = 4
EXIT_PNP = 5


def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _manifest(command, seed, config_hash, outputs, summary):
    return plantfile.RunManifest(
        command=command, seed=seed, config_hash=config_hash,
        tool_version=plantfile.TOOL_VERSION, outputs=tuple(str(p) for p in outputs),
        summary=summary, created=datetime.now(timezone.utc).isoformat()).to_json()


def _parse_delta(args) -> dict[int, dict[int, int]]:
    """--delta i,j,v overrides plus the blanket --delta-all value."""
    table: dict[int, dict[int, int]] = {}
    for spec in args.delta or []:
        try:
            i, j, v = (int(part) for part in spec.split(","))
        except ValueError:
            raise SystemExit(EXIT_USAGE)
        table.setdefault(i, {})[j] = v
    return table


def _delta_for(table, args, sub):
    base = {} if args.delta_all is None else {j: args.delta_all for j in sub.parents}
    base.update(table.get(sub.id, {}))
    return base


def _options(args) -> SynthesisOptions:
    return SynthesisOptions(norm=args.norm, eval_budget=args.eval_budget)


def cmd_synthesize(args) -> int:
    graph = plantfile.load_plant(args.plant)
    table = _parse_delta(args)
    options = _options(args)
    jobs = [(sub, graph.parent_data(sub.id), _delta_for(table, args, sub))
            for sub in graph.subsystems]
    designs = {}
    try:
        if args.jobs > 1:
            # Designs are pure per-subsystem functions, so they parallelize
            # without any shared state.
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = {sub.id: pool.submit(design_lse, sub, parents,
                                               delta, options)
                           for sub, parents, delta in jobs}
                for sid, fut in futures.items():
                    designs[sid] = fut.result()
        else:
            for sub, parents, delta in jobs:
                designs[sub.id] = design_lse(sub, parents, delta=delta,
                                             options=options)
    except PnpestError as exc:
        sid = getattr(exc, "subsystem_id", "?")
        print(f"synthesis failed at subsystem {sid}: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    plantfile.save_designs(designs, graph, args.out,
                           options={"norm": options.norm,
                                    "eval_budget": options.eval_budget})
    summary = {str(i): {
        "rho_local": d.report.rho_local,
        "coupling_upper": d.report.coupling.upper if d.report.coupling else None,
        "disturbance_upper": d.report.disturbance.upper if d.report.disturbance else None,
        "rpi_margin": d.rpi.containment_margin,
    } for i, d in designs.items()}
    manifest = _manifest("synthesize", args.seed, plantfile.plant_hash(graph),
                         [args.out], summary)
    if args.manifest:
        _write_json(manifest, args.manifest)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_certify(args) -> int:
    graph = plantfile.load_plant(args.plant)
    designs = plantfile.load_designs(args.designs, graph)
    report_doc = {}
    failed = []
    for sub in graph.subsystems:
        design = designs.get(sub.id)
        if design is None:
            print(f"no design for subsystem {sub.id}", file=sys.stderr)
            return EXIT_CERTIFICATION
        report = analysis.small_gain_report(sub, design.gains,
                                            graph.parent_data(sub.id))
        psi = analysis.lumped_disturbance(sub, design.gains, graph.parent_data(sub.id))
        nec = analysis.necessary_condition(sub.error_set, psi)
        report_doc[str(sub.id)] = {
            "schur_local": report.schur_local,
            "rho_local": report.rho_local,
            "coupling_gain": None if report.coupling is None else
                [report.coupling.lower, report.coupling.upper],
            "disturbance_gain": None if report.disturbance is None else
                [report.disturbance.lower, report.disturbance.upper],
            "necessary_condition": nec.satisfied,
            "truncation_depth": report.coupling.depth if report.coupling else 0,
        }
        if not (report.certified and nec.satisfied):
            failed.append(sub.id)
    if args.out:
        _write_json(report_doc, args.out)
    print(json.dumps(report_doc, indent=1, sort_keys=True))
    if failed:
        print(f"certification failed for subsystems {failed}", file=sys.stderr)
        return EXIT_CERTIFICATION
    return EXIT_OK


def _input_schedule(args) -> estimator.InputSchedule:
    kind = args.input
    if kind == "zero":
        return estimator.input_zero()
    if kind.startswith("const:"):
        return estimator.input_constant(float(kind.split(":", 1)[1]))
    if kind.startswith("sin:"):
        return estimator.input_sine(float(kind.split(":", 1)[1]))
    if kind == "sin":
        return estimator.input_sine()
    if kind.startswith("file:"):
        with open(kind.split(":", 1)[1]) as fh:
            series = {int(k): np.asarray(v, dtype=float)
                      for k, v in json.load(fh).items()}
        return estimator.input_series(series)
    raise SystemExit(EXIT_USAGE)


def cmd_simulate(args) -> int:
    if args.horizon < 1:
        print("horizon must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    graph = plantfile.load_plant(args.plant)
    try:
        designs = plantfile.load_designs(args.designs, graph)
    except StaleDesignError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    gains = {i: d.gains for i, d in designs.items()}
    rpi_sets = {i: d.rpi for i, d in designs.items()}
    net = estimator.EstimatorNetwork(graph, gains, rpi=rpi_sets)
    rng = np.random.default_rng(args.seed)
    for sub in graph.subsystems:
        G = rpi_sets[sub.id].generators
        if args.init_error == "rpi" and G.shape[1]:
            e0 = G @ rng.uniform(-1.0, 1.0, G.shape[1])
            net.set_initial_error(sub.id, e0)
    schedule = _input_schedule(args)
    policy = estimator.DisturbancePolicy(args.disturbance, seed=args.seed)
    trace = net.simulate(schedule, policy, args.horizon, check_rpi=args.check_rpi)
    csv_path = f"{args.out_prefix}.csv"
    trace.to_csv(csv_path)
    summary = {
        "all_in_error_set": trace.all_in_error_set(),
        "final_max_abs_error": trace.max_abs_error(-1),
        "horizon": args.horizon,
        "input": args.input,
        "disturbance": args.disturbance,
    }
    manifest = _manifest("simulate", args.seed, plantfile.plant_hash(graph),
                         [csv_path], summary)
    _write_json(manifest, f"{args.out_prefix}.manifest.json")
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def _transaction_doc(result: pnp.PnpResult) -> dict:
    txn = result.transaction
    doc = {"kind": txn.kind, "target": txn.target,
           "redesigned": list(txn.redesigned),
           "optional_redesigned": list(txn.optional_redesigned),
           "accepted": txn.accepted}
    if txn.rejection is not None:
        doc["rejection"] = {"reason": txn.rejection.reason,
                            "failing_id": txn.rejection.failing_id,
                            "stage": txn.rejection.stage,
                            "detail": txn.rejection.detail}
    return doc


def cmd_plug_in(args) -> int:
    graph = plantfile.load_plant(args.plant)
    designs = plantfile.load_designs(args.designs, graph)
    new_sub, child_couplings = plantfile.load_extension(args.extension)
    result = pnp.plug_in(graph, designs, new_sub, child_couplings,
                         options=_options(args))
    _write_json(_transaction_doc(result), f"{args.out_prefix}.transaction.json")
    if not result.transaction.accepted:
        rej = result.transaction.rejection
        print(f"plug-in rejected at subsystem {rej.failing_id} "
              f"({rej.stage}): {rej.reason}", file=sys.stderr)
        return EXIT_PNP
    plantfile.save_plant(result.graph, f"{args.out_prefix}.plant.json")
    plantfile.save_designs(result.designs, result.graph,
                           f"{args.out_prefix}.designs.json")
    print(json.dumps(_transaction_doc(result), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_unplug(args) -> int:
    graph = plantfile.load_plant(args.plant)
    designs = plantfile.load_designs(args.designs, graph)
    if args.id not in graph:
        print(f"unknown subsystem id {args.id}", file=sys.stderr)
        return EXIT_USAGE
    result = pnp.unplug(graph, designs, args.id,
                        redesign_children=args.redesign, options=_options(args))
    _write_json(_transaction_doc(result), f"{args.out_prefix}.transaction.json")
    plantfile.save_plant(result.graph, f"{args.out_prefix}.plant.json")
    plantfile.save_designs(result.designs, result.graph,
                           f"{args.out_prefix}.designs.json")
    print(json.dumps(_transaction_doc(result), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = bench.MassArrayConfig(seed=args.seed)
    if args.bench_command == "generate":
        graph = bench.build_benchmark(cfg)
        plantfile.save_plant(graph, args.out, name=f"mass-array-seed{args.seed}")
        print(f"wrote {args.out}")
        return EXIT_OK
    if args.bench_command == "extension":
        new_sub, child = bench.build_extension(cfg, seed=args.ext_seed)
        plantfile.save_extension(new_sub, child, args.out)
        print(f"wrote {args.out}")
        return EXIT_OK
    raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnpest",
        description="Design, certify and simulate distributed state estimators "
                    "with guaranteed error sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_design_flags(p):
        p.add_argument("--norm", choices=("fro", "one"), default="fro",
                       help="norm minimized by the coupling attenuation step")
        p.add_argument("--eval-budget", type=int, default=500,
                       help="max objective evaluations per weight search")
        p.add_argument("--jobs", type=int, default=1,
                       help="design subsystems in parallel processes")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synthesize", help="design all local estimators")
    p.add_argument("plant")
    p.add_argument("--out", default="designs.json")
    p.add_argument("--manifest", default=None)
    p.add_argument("--delta", action="append", metavar="i,j,{0|1}",
                   help="override one communication switch (repeatable)")
    p.add_argument("--delta-all", type=int, choices=(0, 1), default=None,
                   help="set every communication switch")
    add_design_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("certify", help="recompute certificates for stored gains")
    p.add_argument("plant")
    p.add_argument("designs")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="run the estimator network")
    p.add_argument("plant")
    p.add_argument("designs")
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--input", default="zero",
                   help="zero | const:<v> | sin | sin:<amp> | file:<path>")
    p.add_argument("--disturbance", choices=("zero", "uniform", "vertices"),
                   default="zero")
    p.add_argument("--init-error", choices=("zero", "rpi"), default="rpi",
                   help="start estimates offset by a random point of each "
                        "invariant set, or exactly on the state")
    p.add_argument("--check-rpi", action="store_true",
                   help="also record invariant-set membership (slower)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", default="trace")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plug-in", help="add a subsystem from an extension file")
    p.add_argument("plant")
    p.add_argument("designs")
    p.add_argument("extension")
    p.add_argument("--out-prefix", default="plugged")
    add_design_flags(p)
    p.set_defaults(func=cmd_plug_in)

    p = sub.add_parser("unplug", help="remove a subsystem")
    p.add_argument("plant")
    p.add_argument("designs")
    p.add_argument("id", type=int)
    p.add_argument("--redesign", action="store_true",
                   help="also redesign former children for performance")
    p.add_argument("--out-prefix", default="unplugged")
    add_design_flags(p)
    p.set_defaults(func=cmd_unplug)

    p = sub.add_parser("bench", help="benchmark plant generation")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)
    pg = bench_sub.add_parser("generate", help="write the mass-array plant file")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", default="plant.json")
    pg.set_defaults(func=cmd_bench)
    pe = bench_sub.add_parser("extension", help="write a pluggable fifth group")
    pe.add_argument("--seed", type=int, default=0,
                    help="seed of the base plant the extension attaches to")
    pe.add_argument("--ext-seed", type=int, default=100)
    pe.add_argument("--out", default="extension.json")
    pe.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (PlantFormatError, StaleDesignError, FileNotFoundError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except PnpestError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SYNTHESIS


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
