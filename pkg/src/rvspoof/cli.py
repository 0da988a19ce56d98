"""Command-line entry point: ``rvspoof <flows|catalog|sim|optimize|loopclosure>``.

Exit codes: 0 success, 1 domain failure, 2 usage or parse failure.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import replace

from . import __version__
from .catalog import Feasibility, Status, coverage_report, load_catalog, query_vectors
from .errors import BudgetExhausted, InputError, RvSpoofError
from .flows import Sensor, build_reference_graph, enumerate_action_flows, format_flows, parse_sensor


def _digest(*parts) -> str:
    return hashlib.sha256("|".join(str(p) for p in parts).encode()).hexdigest()[:16]


def _header(cmd, args, *config) -> str:
    return f"# rvspoof {cmd} config={_digest(cmd, *config)} seed={args.seed}"


def _emit(args, text: str, summary: str | None = None):
    """Write to --out if given (printing ``summary`` instead), else to stdout."""
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise InputError(f"cannot write {args.out}: {exc.strerror}") from None
        if summary:
            print(summary)
    else:
        sys.stdout.write(text)


# flows


def _sensor_list(text: str):
    if text.strip().lower() == "all":
        return list(Sensor)
    return [parse_sensor(name.strip()) for name in text.split(",") if name.strip()]


def cmd_flows(args) -> int:
    sensors = _sensor_list(args.sensors)
    flows = enumerate_action_flows(build_reference_graph(), sensors)
    body = format_flows(flows)
    if args.format == "report":
        counts = {}
        for f in flows:
            key = "two-round" if f.rounds == 2 else f.sensor_text
            counts[key] = counts.get(key, 0) + 1
        head = _header("flows", args, ",".join(s.value for s in sensors))
        tail = " ".join(f"{k}={v}" for k, v in counts.items())
        body = f"{head}\n{body}# count={len(flows)} {tail}\n"
    _emit(args, body, f"{len(flows)} flows written to {args.out}")
    return 0


# catalog


def cmd_catalog(args) -> int:
    catalog = load_catalog(args.catalog)
    clauses = {}
    if args.cls:
        clauses["feasibility"] = Feasibility(args.cls)
    if args.status:
        clauses["status"] = Status(args.status)
    if args.pattern:
        clauses["pattern"] = args.pattern
    if args.sensor:
        clauses["sensor"] = parse_sensor(args.sensor)
    if args.attack:
        clauses["attack"] = args.attack
    head = _header("catalog", args, args.catalog or "reference", sorted((k, str(v)) for k, v in clauses.items()))
    if clauses:
        recs = query_vectors(catalog, **clauses)
        body = "".join(r.to_line() + "\n" for r in recs)
        if args.format == "report":
            body = f"{head}\n{body}# count={len(recs)}\n"
        _emit(args, body, f"count={len(recs)}")
        return 0
    rep = coverage_report(catalog)
    body = rep.as_report() if args.format == "report" else rep.as_table()
    if args.format == "report":
        body = f"{head}\n{body}"
    _emit(args, body, rep.summary_line())
    return 0


# sim


def _load_sim_inputs(args):
    from .sim import load_scenario, load_shipped, parse_spoofs, shipped_scenarios

    if os.path.exists(args.scenario):
        scenario, specs = load_scenario(args.scenario), []
    elif args.scenario in shipped_scenarios():
        scenario, specs = load_shipped(args.scenario)
    else:
        raise InputError(f"no scenario file or shipped scenario named {args.scenario!r}")
    if args.spoofs:
        try:
            with open(args.spoofs, encoding="utf-8") as fh:
                specs = parse_spoofs(fh.read(), args.spoofs)
        except OSError as exc:
            raise InputError(f"cannot read spoof file {args.spoofs}: {exc.strerror}") from None
    if args.baseline:
        specs = []
    return scenario, specs


def cmd_sim(args) -> int:
    from .sim import run_scenario, shipped_scenarios, trace_text

    if args.list:
        print("\n".join(shipped_scenarios()))
        return 0
    if not args.scenario:
        raise InputError("sim needs a scenario (file path or shipped name); see --list")
    scenario, specs = _load_sim_inputs(args)
    trace, report = run_scenario(scenario, specs, args.seed)
    text = trace_text(trace, report)
    if args.format == "report":
        _emit(args, text, report.line())
    else:
        summary = f"scenario={scenario.name} steps={len(trace.steps)} spoofs={len(specs)} trace={trace.digest()[:16]}\n{report.line()}"
        _emit(args, summary + "\n" if not args.out else text, summary)
    if args.expect:
        got = report.realized_path.value if report.realized_path else "none"
        return 0 if got == args.expect else 1
    if specs:
        return 0 if report.realized_path is not None else 1
    return 0 if report.outcome is None else 1


# optimize


def _optimizer_config(args):
    from .placement import OptimizerConfig, load_optimizer_config

    cfg = load_optimizer_config(args.config) if args.config else OptimizerConfig()
    overrides = {
        k: getattr(args, k)
        for k in ("iterations", "samples", "epsilon", "threshold")
        if getattr(args, k) is not None
    }
    if args.per_sample_update:
        overrides["per_sample_update"] = True
    return replace(cfg, seed=args.seed, **overrides)


def cmd_optimize(args) -> int:
    from .placement import PlacementLoss, grid_search, load_scene, optimize

    scene = load_scene(args.scene)
    cfg = _optimizer_config(args)
    loss_fn = PlacementLoss(scene, objective=cfg.objective, bounds=cfg.bounds)  # raises TargetNotFound
    res = optimize(loss_fn, cfg)
    lines = [
        _header("optimize", args, args.scene or "reference", cfg),
        f"initial={res.initial}",
        f"placement={res.placement}",
        f"loss={res.loss:.6f}",
        f"skipped_iterations={res.skipped}",
        "history=" + ",".join(f"{v:.6f}" for v in res.history),
    ]
    summary = f"loss={res.loss:.6f}"
    if args.oracle:
        oracle_s, oracle = grid_search(loss_fn, cfg.bounds, args.grid_step)
        ratio = res.loss / oracle if oracle > 0 else 1.0
        verdict = "optimizer/oracle >= 0.90" if ratio >= 0.9 else f"optimizer/oracle = {ratio:.3f} < 0.90"
        lines += [f"oracle_placement={oracle_s}", f"oracle_loss={oracle:.6f}", f"ratio={ratio:.6f}", verdict]
        summary += f" oracle={oracle:.6f} {verdict}"
    _emit(args, "\n".join(lines) + "\n", summary)
    return 0


# loop closure


def cmd_loopclosure(args) -> int:
    from .loopclosure import (
        LoopClosureConfig,
        detect_loop_closure,
        inject_features,
        load_fixture,
        load_loopclosure_config,
        match_keyframes,
        relocalize,
    )

    fx = load_fixture(args.fixture)
    cfg = load_loopclosure_config(args.config) if args.config else LoopClosureConfig()
    overrides = {k: getattr(args, k) for k in ("min_matches", "min_groups") if getattr(args, k) is not None}
    cfg = replace(cfg, **overrides)
    head = _header("loopclosure", args, args.fixture or "reference", cfg, args.budget)
    db = fx.db
    before = detect_loop_closure(fx.current, db, cfg)
    b_text = "none" if before is None else f"closure:{before[0]}"
    try:
        frame, injected = inject_features(fx.current, fx.target, cfg, args.budget, db)
    except BudgetExhausted as exc:
        line = f"before={b_text} after=none injected={len(exc.injected)} similarity={exc.similarity} reason=budget_exhausted"
        _emit(args, f"{head}\n{line}\n", line)
        return 1
    after = detect_loop_closure(frame, db, cfg)
    m = match_keyframes(frame, fx.target, cfg)
    pose = relocalize(fx.current.pose, fx.target) if after is not None else fx.current.pose
    line = (
        f"before={b_text} after={'closure' if after is not None else 'none'} injected={len(injected)} "
        f"similarity={m.similarity} groups={m.consistent_groups} target={fx.target.id}"
    )
    text = f"{head}\n{line}\nrelocalized={pose.x:g},{pose.y:g},{pose.heading:g}\n"
    _emit(args, text, line)
    return 0


# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for stochastic steps (default 0)")
    common.add_argument("--out", help="write the full output to this file")
    common.add_argument("--format", choices=("table", "report"), default="table")

    p = argparse.ArgumentParser(prog="rvspoof", description="Sensor-spoofing threat model and attack toolkit for robotic vehicles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("flows", parents=[common], help="enumerate action flows")
    f.add_argument("--sensors", default="all", help="'all' or a comma-separated sensor list")
    f.set_defaults(func=cmd_flows)

    c = sub.add_parser("catalog", parents=[common], help="attack-vector coverage and queries")
    c.add_argument("catalog", nargs="?", help="catalog file (default: the shipped reference catalog)")
    c.add_argument("--class", dest="cls", choices=[str(x) for x in Feasibility])
    c.add_argument("--status", choices=[str(x) for x in Status])
    c.add_argument("--pattern")
    c.add_argument("--sensor")
    c.add_argument("--attack")
    c.set_defaults(func=cmd_catalog)

    s = sub.add_parser("sim", parents=[common], help="run a closed-loop scenario")
    s.add_argument("scenario", nargs="?", help="scenario TOML file or shipped scenario name")
    s.add_argument("--spoofs", help="spoof file (shipped scenarios bring their own)")
    s.add_argument("--baseline", action="store_true", help="run without any spoofs")
    s.add_argument("--expect", help="expected path (AtkPath1..7) or 'none'; exit 1 on mismatch")
    s.add_argument("--list", action="store_true", help="list shipped scenarios")
    s.set_defaults(func=cmd_sim)

    o = sub.add_parser("optimize", parents=[common], help="black-box placement optimization")
    o.add_argument("scene", nargs="?", help="scene file (default: the shipped reference scene)")
    o.add_argument("--oracle", action="store_true", help="also run the brute-force grid oracle")
    o.add_argument("--config", help="optimizer config TOML (OptimizerConfig field names)")
    o.add_argument("--iterations", type=int, help="N (default 50)")
    o.add_argument("--samples", type=int, help="m (default 20)")
    o.add_argument("--epsilon", type=float, help="step and probe size (default 0.1)")
    o.add_argument("--threshold", type=float, help="acceptance gate (default 0)")
    o.add_argument("--grid-step", type=float, default=0.25)
    o.add_argument("--per-sample-update", action="store_true", help="take a sign step after every sample")
    o.set_defaults(func=cmd_optimize)

    lc = sub.add_parser("loopclosure", parents=[common], help="spoof a loop closure by feature injection")
    lc.add_argument("fixture", nargs="?", help="keyframe fixture (default: the shipped fixture)")
    lc.add_argument("--budget", type=int, default=34)
    lc.add_argument("--config", help="loop-closure config TOML (LoopClosureConfig field names)")
    lc.add_argument("--min-matches", type=int, help="similarity threshold (default 34)")
    lc.add_argument("--min-groups", type=int, help="angle groups required (default 3)")
    lc.set_defaults(func=cmd_loopclosure)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"rvspoof {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"rvspoof {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RvSpoofError as exc:
        print(f"rvspoof {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
