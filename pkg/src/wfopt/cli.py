"""Command-line surface: compile, count, select, sweep, hetero-eval, route,
simulate, validate, report.

Conventions shared by every command:

* exit codes: 0 success, 2 input/validation error, 3 infeasible request,
  4 internal invariant violation;
* errors print one JSON diagnostic object to stderr plus a human line;
* stochastic commands take explicit seeds (scenario files carry their own
  simulation seed) -- there are no wall-clock defaults anywhere;
* commands that write an output file also write ``<out>.manifest.json``
  recording input paths, content hashes, flags, and wall time, so a run
  can be reproduced or its inputs audited later;
* flag values beat config-file values (``--config``), which beat defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InfeasibleError, ValidationError, WfoptError
from .explorer import (
    CompiledSet,
    explore,
    load_compiled_set,
    nondominated_sort_2d,
    reduction_report,
    save_compiled_set,
)
from .ir import load_workflow_spec
from .metrics import calibrated_mae, hypervolume_2d, pairwise_agreement, spearman
from .profiles import load_profiles_path
from .proxy import ExecutionModel
from .report import (
    build_report,
    measurements_to_csv,
    parse_measurements_csv,
    render_figures,
    report_to_csv,
)
from .rng import uniform_stream
from .selector import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_KNN_K,
    Preference,
    UtilityContext,
    evaluate_heterogeneous,
    knn_route,
    load_routing_records,
    select_by_preference,
    select_latency_constrained,
    sweep_fixed,
)
from .simulator import (
    brute_force_frontier,
    load_restriction,
    load_scenario,
    measure_many,
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_path, command: str, inputs: list, flags: dict,
                   outputs: list, wall_time_s: float) -> Path:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "flags": flags,
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
        "wall_time_s": round(wall_time_s, 3),
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def verify_manifest(manifest_path) -> list[str]:
    """Paths whose current hash no longer matches the manifest."""
    doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    stale = []
    for rec in doc.get("inputs", []) + doc.get("outputs", []):
        p = Path(rec["path"])
        if not p.is_file() or _sha256(p) != rec["sha256"]:
            stale.append(rec["path"])
    return stale


def _manifest_input(artifact_path, suffix: str):
    """Look up an input path recorded in the artifact's compile manifest."""
    mpath = Path(str(artifact_path) + ".manifest.json")
    if not mpath.is_file():
        return None
    doc = json.loads(mpath.read_text(encoding="utf-8"))
    for rec in doc.get("inputs", []):
        if rec["path"].endswith(suffix):
            return rec["path"]
    return None


def _resolve_spec_path(args) -> str:
    if getattr(args, "spec", None):
        return args.spec
    found = _manifest_input(args.artifact, ".workflow.json") or _manifest_input(
        args.artifact, "spec.json"
    )
    if found is None:
        raise ValidationError(
            "cannot locate the workflow spec: pass --spec or keep the compile "
            "manifest next to the artifact"
        )
    return found


def _exec_model(name: str) -> ExecutionModel:
    try:
        return ExecutionModel(name)
    except ValueError:
        raise ValidationError(f"unknown execution model {name!r}") from None


def _warn_exec_mismatch(cs: CompiledSet, exec_name) -> None:
    if exec_name and cs.meta.execution_model and exec_name != cs.meta.execution_model:
        print(
            json.dumps({
                "warning": "execution-model-mismatch",
                "artifact": cs.meta.execution_model,
                "requested": exec_name,
            }),
            file=sys.stderr,
        )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_compile(args) -> int:
    t0 = time.time()
    spec = load_workflow_spec(args.spec)
    table = load_profiles_path(args.profiles)
    exec_model = _exec_model(args.exec_model)
    cs = explore(spec, table, exec_model, args.epsilon, workers=args.workers)
    save_compiled_set(cs, args.out)
    wall = time.time() - t0
    write_manifest(
        args.out, "compile", [args.spec, args.profiles],
        {"exec": exec_model.value, "epsilon": args.epsilon, "workers": args.workers},
        [args.out], wall,
    )
    print(f"spec            {cs.meta.spec_name}")
    print(f"structures      {cs.meta.structure_count}")
    print(f"full space      {cs.meta.full_space_size:,}")
    print(f"pruned space    {cs.meta.pruned_space_size:,}")
    print(f"frontier        {len(cs)} entries")
    print(f"wrote           {args.out} (+manifest) in {wall:.2f}s")
    return 0


def cmd_count(args) -> int:
    spec = load_workflow_spec(args.spec)
    table = load_profiles_path(args.profiles)
    stats = reduction_report(spec, table, args.epsilon)
    print(f"{'role':<16}{'options':>8}{'kept':>6}")
    for role, (before, after) in sorted(stats.per_role.items()):
        print(f"{role:<16}{before:>8}{after:>6}")
    print(f"full space   {stats.full_space:,}")
    print(f"pruned space {stats.pruned_space:,}")
    if args.out:
        doc = {
            "per_role": {r: {"before": b, "after": a} for r, (b, a) in stats.per_role.items()},
            "full_space_size": stats.full_space,
            "pruned_space_size": stats.pruned_space,
        }
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def _entry_json(entry) -> str:
    return json.dumps({
        "id": entry.config.id,
        "structural": entry.config.structural_map(),
        "assignment": {
            r: {"model": c.model, "budget": c.budget}
            for r, c in entry.config.assignment
        },
        "est_accuracy": entry.estimate.accuracy,
        "est_latency_s": entry.estimate.latency_s,
    }, indent=2)


def cmd_select(args) -> int:
    cs = load_compiled_set(args.artifact)
    _warn_exec_mismatch(cs, args.exec_model)
    if (args.budget is None) == (args.alpha is None):
        raise ValidationError("pass exactly one of --budget or --alpha (with --lmax)")
    if args.budget is not None:
        entry = select_latency_constrained(cs, args.budget)
    else:
        if args.lmax is None:
            raise ValidationError("--alpha requires --lmax")
        entry = select_by_preference(cs, Preference(args.alpha), UtilityContext(args.lmax))
    print(_entry_json(entry))
    return 0


def cmd_sweep(args) -> int:
    cs = load_compiled_set(args.artifact)
    alphas = DEFAULT_ALPHA_GRID
    if args.alphas:
        alphas = tuple(float(x) for x in args.alphas.split(","))
    measured = None
    if args.measured:
        pts = parse_measurements_csv(Path(args.measured).read_text(encoding="utf-8"))
        measured = {p.config_id: (p.accuracy, p.latency_s) for p in pts}
    rows = sweep_fixed(cs, UtilityContext(args.lmax), alphas, measured)
    lines = ["alpha,selected_id,proxy_utility,measured_utility"]
    for a, cid, pu, mu in rows:
        lines.append(f"{a},{cid},{pu!r},{'' if mu is None else repr(mu)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out} ({len(rows)} rows)")
    else:
        print(text, end="")
    return 0


def cmd_hetero_eval(args) -> int:
    cs = load_compiled_set(args.artifact)
    pts = parse_measurements_csv(Path(args.measured).read_text(encoding="utf-8"))
    measured = {p.config_id: (p.accuracy, p.latency_s) for p in pts}
    res = evaluate_heterogeneous(
        cs, UtilityContext(args.lmax), measured, args.queries, args.repetitions, args.seed
    )
    print(f"expected utility {res.mean:.6f} +/- {res.std:.6f} "
          f"({res.repetitions} repetitions{', degenerate std' if res.degenerate else ''})")
    if args.out:
        lines = ["repetition,mean_utility"]
        lines += [f"{i},{u!r}" for i, u in enumerate(res.per_repetition)]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_route(args) -> int:
    cs = load_compiled_set(args.artifact)
    records = load_routing_records(args.records)
    pref = Preference(args.alpha)
    ctx = UtilityContext(args.lmax)
    if (args.query is None) == (args.queries is None):
        raise ValidationError("pass exactly one of --query or --queries")
    if args.query is not None:
        feats = [float(x) for x in args.query.split(",")]
        entry = knn_route(feats, records, cs, args.k, pref, ctx)
        print(_entry_json(entry))
        return 0
    doc = json.loads(Path(args.queries).read_text(encoding="utf-8"))
    lines = ["query_index,selected_id"]
    for i, feats in enumerate(doc["queries"]):
        entry = knn_route(feats, records, cs, args.k, pref, ctx)
        lines.append(f"{i},{entry.config.id}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_simulate(args) -> int:
    t0 = time.time()
    cs = load_compiled_set(args.artifact)
    scenario = load_scenario(args.scenario)
    spec = load_workflow_spec(_resolve_spec_path(args))
    exec_model = _exec_model(args.exec_model)
    _warn_exec_mismatch(cs, exec_model.value)
    configs = [e.config for e in cs.entries]
    if args.limit is not None:
        configs = configs[: args.limit]
    points = measure_many(spec, configs, scenario, args.n, exec_model, args.workers)
    Path(args.out).write_text(measurements_to_csv(points), encoding="utf-8")
    wall = time.time() - t0
    write_manifest(
        args.out, "simulate", [args.artifact, args.scenario],
        {"n": args.n, "exec": exec_model.value, "workers": args.workers,
         "scenario_seed": scenario.seed},
        [args.out], wall,
    )
    print(f"measured {len(points)} configurations x {args.n} queries in {wall:.1f}s -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    t0 = time.time()
    cs = load_compiled_set(args.artifact)
    scenario = load_scenario(args.scenario)
    spec = load_workflow_spec(_resolve_spec_path(args))
    exec_model = ExecutionModel(cs.meta.execution_model or "sequential-edge")

    if args.mode == "frontier":
        if not args.restriction:
            raise ValidationError("frontier mode requires --restriction")
        profiles_path = args.profiles or _manifest_input(args.artifact, ".profiles.json")
        if profiles_path is None:
            raise ValidationError(
                "cannot locate the profile table: pass --profiles or keep the "
                "compile manifest next to the artifact"
            )
        table = load_profiles_path(profiles_path)
        restriction = load_restriction(args.restriction)
        from .proxy import estimate
        from .simulator import enumerate_restricted

        configs = enumerate_restricted(spec, table, restriction, cap=args.cap)
        points, measured_frontier = brute_force_frontier(
            spec, table, scenario, restriction, args.n, exec_model, args.cap, args.workers
        )
        ests = [estimate(spec, c.structural_map(), c.assignment_map(), table, exec_model)
                for c in configs]
        proxy_frontier = nondominated_sort_2d(
            [(e.accuracy, e.latency_s, c.id) for e, c in zip(ests, configs)]
        )
        lat_max = max(p.latency_s for p in points)
        ref = (0.0, lat_max)
        hv_measured = hypervolume_2d(
            [(points[i].accuracy, points[i].latency_s) for i in measured_frontier], ref
        )
        hv_proxy = hypervolume_2d(
            [(points[i].accuracy, points[i].latency_s) for i in proxy_frontier], ref
        )
        ratio = hv_proxy / hv_measured if hv_measured > 0 else float("nan")
        print(f"configurations     {len(points)}")
        print(f"measured frontier  {len(measured_frontier)} points")
        print(f"proxy frontier     {len(proxy_frontier)} points")
        print(f"reference point    accuracy 0.0, latency {lat_max!r}s")
        print(f"hypervolume ratio  {ratio:.4f}")
        if args.out:
            meas_set = set(measured_frontier)
            proxy_set = set(proxy_frontier)
            lines = ["config_id,est_accuracy,est_latency_s,meas_accuracy,meas_latency_s,"
                     "proxy_frontier,measured_frontier"]
            for i, (c, e, p) in enumerate(zip(configs, ests, points)):
                lines.append(
                    f"{c.id},{e.accuracy!r},{e.latency_s!r},{p.accuracy!r},"
                    f"{p.latency_s!r},{int(i in proxy_set)},{int(i in meas_set)}"
                )
            Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
            write_manifest(
                args.out, "validate", [args.artifact, args.scenario, args.restriction],
                {"mode": "frontier", "n": args.n, "seed": args.seed,
                 "scenario_seed": scenario.seed, "hypervolume_ratio": ratio},
                [args.out], time.time() - t0,
            )
        return 0

    # order mode: sample entries, measure, compare orderings
    k = min(args.samples, len(cs.entries))
    u = uniform_stream(args.seed, "order-sample", len(cs.entries))
    chosen = sorted(np.argsort(u, kind="stable")[:k])
    sample = [cs.entries[i] for i in chosen]
    points = measure_many(spec, [e.config for e in sample], scenario, args.n,
                          exec_model, args.workers)
    est_acc = [e.estimate.accuracy for e in sample]
    est_lat = [e.estimate.latency_s for e in sample]
    m_acc = [p.accuracy for p in points]
    m_lat = [p.latency_s for p in points]
    results = {
        "accuracy_spearman": spearman(est_acc, m_acc),
        "accuracy_pairwise": pairwise_agreement(est_acc, m_acc),
        "accuracy_cmae": calibrated_mae(est_acc, m_acc),
        "latency_spearman": spearman(est_lat, m_lat),
        "latency_pairwise": pairwise_agreement(est_lat, m_lat),
        "latency_cmae": calibrated_mae(est_lat, m_lat),
    }
    for k_, v in results.items():
        print(f"{k_:<20}{v: .6f}")
    if args.out:
        lines = ["config_id,est_accuracy,est_latency_s,meas_accuracy,meas_latency_s"]
        for e, p in zip(sample, points):
            lines.append(f"{e.config.id},{e.estimate.accuracy!r},{e.estimate.latency_s!r},"
                         f"{p.accuracy!r},{p.latency_s!r}")
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        write_manifest(
            args.out, "validate", [args.artifact, args.scenario],
            {"mode": "order", "n": args.n, "samples": args.samples, "seed": args.seed,
             "scenario_seed": scenario.seed, **results},
            [args.out], time.time() - t0,
        )
    return 0


def cmd_report(args) -> int:
    artifacts = []
    labels = args.label or []
    for i, path in enumerate(args.artifact):
        label = labels[i] if i < len(labels) else Path(path).stem.replace(".", "_")
        artifacts.append((label, load_compiled_set(path)))
    measurements = []
    for mpath in args.measurements or []:
        measurements.extend(
            parse_measurements_csv(Path(mpath).read_text(encoding="utf-8"))
        )
    rows = build_report(artifacts, measurements)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "report.csv"
    csv_path.write_text(report_to_csv(rows), encoding="utf-8")
    written = [csv_path]
    if not args.no_figures:
        written += render_figures(rows, outdir)
    for p in written:
        print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wfopt",
        description="Compile-time accuracy/latency optimizer for structured workflows",
    )
    p.add_argument("--version", action="version", version=f"wfopt {__version__}")
    p.add_argument("--config", help="JSON config file with per-command defaults")
    sub = p.add_subparsers(dest="command", required=True)
    p._wfopt_subparsers = sub.choices  # command name -> subparser

    c = sub.add_parser("compile", help="explore the design space and write the trade-off artifact")
    c.add_argument("--spec", required=True)
    c.add_argument("--profiles", required=True)
    c.add_argument("--exec", dest="exec_model", default="sequential-edge",
                   choices=[m.value for m in ExecutionModel])
    c.add_argument("--epsilon", type=float, default=0.0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compile)

    c = sub.add_parser("count", help="report option pruning and space sizes")
    c.add_argument("--spec", required=True)
    c.add_argument("--profiles", required=True)
    c.add_argument("--epsilon", type=float, default=0.0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_count)

    c = sub.add_parser("select", help="pick one entry by latency budget or preference")
    c.add_argument("--artifact", required=True)
    c.add_argument("--budget", type=float)
    c.add_argument("--alpha", type=float)
    c.add_argument("--lmax", type=float)
    c.add_argument("--exec", dest="exec_model",
                   choices=[m.value for m in ExecutionModel])
    c.set_defaults(func=cmd_select)

    c = sub.add_parser("sweep", help="fixed-preference sweep over an alpha grid")
    c.add_argument("--artifact", required=True)
    c.add_argument("--lmax", type=float, required=True)
    c.add_argument("--alphas", help="comma-separated grid (default 0.05..0.95 step 0.05)")
    c.add_argument("--measured", help="measurement CSV to score selections against")
    c.add_argument("--out")
    c.set_defaults(func=cmd_sweep)

    c = sub.add_parser("hetero-eval", help="expected utility under per-query random preferences")
    c.add_argument("--artifact", required=True)
    c.add_argument("--measured", required=True)
    c.add_argument("--lmax", type=float, required=True)
    c.add_argument("--queries", type=int, required=True)
    c.add_argument("--repetitions", type=int, default=10)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_hetero_eval)

    c = sub.add_parser("route", help="per-query KNN selection over the compiled set")
    c.add_argument("--artifact", required=True)
    c.add_argument("--records", required=True)
    c.add_argument("--k", type=int, default=DEFAULT_KNN_K)
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--lmax", type=float, required=True)
    c.add_argument("--query", help="comma-separated feature vector")
    c.add_argument("--queries", help="JSON file with a 'queries' array of feature vectors")
    c.add_argument("--out")
    c.set_defaults(func=cmd_route)

    c = sub.add_parser("simulate", help="measure compiled entries under a scenario")
    c.add_argument("--artifact", required=True)
    c.add_argument("--scenario", required=True)
    c.add_argument("--spec", help="workflow spec (default: from the compile manifest)")
    c.add_argument("--n", type=int, default=10000)
    c.add_argument("--exec", dest="exec_model", default="sequential-edge",
                   choices=[m.value for m in ExecutionModel])
    c.add_argument("--limit", type=int)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("validate", help="check the estimator against the simulation oracle")
    c.add_argument("--artifact", required=True)
    c.add_argument("--scenario", required=True)
    c.add_argument("--mode", choices=["frontier", "order"], required=True)
    c.add_argument("--spec", help="workflow spec (default: from the compile manifest)")
    c.add_argument("--profiles", help="profile table (frontier mode; default from manifest)")
    c.add_argument("--restriction", help="restricted-space JSON (frontier mode)")
    c.add_argument("--n", type=int, default=20000)
    c.add_argument("--samples", type=int, default=20)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--cap", type=int, default=1000)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_validate)

    c = sub.add_parser("report", help="emit plot-ready CSV and trade-off figures")
    c.add_argument("--artifact", action="append", required=True)
    c.add_argument("--label", action="append")
    c.add_argument("--measurements", action="append")
    c.add_argument("--outdir", required=True)
    c.add_argument("--no-figures", action="store_true")
    c.set_defaults(func=cmd_report)

    return p


def _apply_config(args, parser) -> None:
    """Fill in options the user left at their defaults from --config."""
    if not getattr(args, "config", None):
        return
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    section = doc.get(args.command, {})
    sub = parser._wfopt_subparsers[args.command]
    defaults = {a.dest: a.default for a in sub._actions}
    for key, value in section.items():
        if key in defaults and getattr(args, key, None) == defaults[key]:
            setattr(args, key, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, parser)
        return args.func(args)
    except WfoptError as e:
        print(json.dumps({
            "error": type(e).__name__,
            "message": str(e),
            "exit_code": e.exit_code,
        }), file=sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(json.dumps({"error": "OSError", "message": str(e), "exit_code": 2}),
              file=sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
