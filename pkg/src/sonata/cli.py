"""Command-line entry points.

Four subcommands cover the workflow: `gen-trace` builds a synthetic trace
plus its ground-truth sidecar, `plan` learns refinement plans for a query
file against a training trace, `run` executes saved plans over a trace,
and `baselines` runs one of the fixed reference strategies.  All outputs
are byte-stable: the same inputs produce identical files.

Exit codes: 0 on success, 2 when no plan fits the switch capacities, and
1 for any other toolkit error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, load_toml, parse_run_config
from .errors import ConfigError, InfeasiblePlanError, SonataError
from .fields import finest_level
from .packets import parse_trace, write_trace
from .planner import PlanRequest, dump_plans, load_plans, plan_multi
from .qlang import parse_query_file, validate_file
from .refine import original_threshold
from .runner import (FULL_GRID, fixed_refinement_plans, metrics_text,
                     part_of_plans, part_pisa_plans, run_plans,
                     stream_only_plans, summary_text, windows_from_packets)
from .tracegen import generate, truth_text

BASELINES = {
    "stream-only": lambda queries, training: stream_only_plans(queries),
    "part-of": lambda queries, training: part_of_plans(queries),
    "part-pisa": lambda queries, training: part_pisa_plans(queries),
    "fixed": lambda queries, training: fixed_refinement_plans(queries, training),
}


def _load_queries(path: str):
    return validate_file(parse_query_file(Path(path).read_text(encoding="utf-8")))


def _window_seconds(cfg: RunConfig, queries) -> float:
    if cfg.window is not None:
        return float(cfg.window)
    sizes = {vq.window for vq in queries.values()}
    if len(sizes) != 1:
        raise ConfigError(
            f"queries use windows {sorted(sizes)}; set [run] window to pick one")
    return sizes.pop()


def _load_run_inputs(config_path: str):
    cfg = parse_run_config(load_toml(Path(config_path)))
    queries = _load_queries(cfg.queries_path)
    packets = parse_trace(cfg.trace_path)
    windows = windows_from_packets(packets, _window_seconds(cfg, queries))
    return cfg, queries, windows


def _default_ladder(key: str) -> tuple[int, ...]:
    finest = finest_level(key)
    return tuple(l for l in FULL_GRID if l < finest) + (finest,)


def _requests(cfg: RunConfig, queries) -> list[PlanRequest]:
    requests = []
    for name, vq in queries.items():
        key = cfg.refine_keys.get(name)
        levels = cfg.levels.get(name)
        if key is None and levels:
            if not vq.refinement_keys:
                raise ConfigError(
                    f"query {name!r} has a level ladder but no refinement key")
            key = vq.refinement_keys[0]
        if key is None:
            requests.append(PlanRequest(vq))
            continue
        if key not in vq.refinement_keys:
            raise ConfigError(
                f"{key!r} is not a refinement key of query {name!r}")
        ladder = tuple(sorted(int(l) for l in levels)) if levels \
            else _default_ladder(key)
        overrides = cfg.thresholds.get(name)
        thresholds = None
        if overrides:
            if not isinstance(overrides, dict):
                raise ConfigError(
                    f"[thresholds.{name}] must map levels to bounds")
            thresholds = {int(l): float(v) for l, v in overrides.items()}
            thresholds.setdefault(finest_level(key), original_threshold(vq))
            missing = set(ladder) - set(thresholds)
            if missing:
                raise ConfigError(
                    f"[thresholds.{name}] misses levels {sorted(missing)}")
        requests.append(PlanRequest(vq, key, ladder, thresholds))
    return requests


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _cmd_gen_trace(args) -> int:
    spec = load_toml(Path(args.spec))
    packets, truth = generate(spec)
    write_trace(packets, args.output)
    if args.truth:
        _write(args.truth, truth_text(truth))
    print(f"wrote {len(packets)} packets to {args.output}")
    return 0


def _cmd_plan(args) -> int:
    cfg, queries, windows = _load_run_inputs(args.config)
    training = windows[:cfg.training_windows]
    if not training:
        raise ConfigError("trace has no training windows")
    requests = _requests(cfg, queries)
    alpha, plans = plan_multi(requests, training, cfg.n_max, cfg.b_max,
                              alpha=cfg.alpha, seed=cfg.seed, known=queries)
    _write(args.output, dump_plans([plans[r.vq.name] for r in requests]))
    refined = sum(1 for p in plans.values() if p.key is not None)
    print(f"planned {len(plans)} queries ({refined} refined) "
          f"at alpha={alpha:g}; wrote {args.output}")
    return 0


def _run_and_write(queries, plans, windows, seed, args) -> None:
    result = run_plans(queries, plans, windows, seed=seed)
    _write(args.output, metrics_text(result))
    if args.summary:
        _write(args.summary, summary_text(result, plans))
    detections = sum(len(v) for v in result.detections.values())
    print(f"ran {len(windows)} windows: {result.union_reports} mirrored "
          f"tuples, {detections} distinct detections; wrote {args.output}")


def _cmd_run(args) -> int:
    cfg, queries, windows = _load_run_inputs(args.config)
    plans = {p.query: p for p in load_plans(Path(args.plans).read_text(encoding="utf-8"))}
    unknown = set(plans) - set(queries)
    if unknown:
        raise ConfigError(f"plans name unknown queries {sorted(unknown)}")
    _run_and_write(queries, plans, windows, cfg.seed, args)
    return 0


def _cmd_baselines(args) -> int:
    cfg, queries, windows = _load_run_inputs(args.config)
    training = windows[:cfg.training_windows]
    plans = BASELINES[args.kind](queries, training)
    if args.plans_out:
        _write(args.plans_out, dump_plans(list(plans.values())))
    _run_and_write(queries, plans, windows, cfg.seed, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonata",
        description="Partitioned telemetry queries over switch and stream")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-trace", help="generate a synthetic trace")
    gen.add_argument("spec", help="trace spec (TOML)")
    gen.add_argument("-o", "--output", required=True, help="trace file to write")
    gen.add_argument("--truth", help="ground-truth JSON to write")
    gen.set_defaults(handler=_cmd_gen_trace)

    plan = sub.add_parser("plan", help="learn refinement plans from a trace")
    plan.add_argument("config", help="run configuration (TOML)")
    plan.add_argument("-o", "--output", required=True, help="plan file to write")
    plan.set_defaults(handler=_cmd_plan)

    run = sub.add_parser("run", help="execute saved plans over a trace")
    run.add_argument("config", help="run configuration (TOML)")
    run.add_argument("--plans", required=True, help="plan file from `sonata plan`")
    run.add_argument("-o", "--output", required=True, help="metrics CSV to write")
    run.add_argument("--summary", help="summary JSON to write")
    run.set_defaults(handler=_cmd_run)

    base = sub.add_parser("baselines", help="run a fixed reference strategy")
    base.add_argument("config", help="run configuration (TOML)")
    base.add_argument("--kind", required=True, choices=sorted(BASELINES))
    base.add_argument("-o", "--output", required=True, help="metrics CSV to write")
    base.add_argument("--summary", help="summary JSON to write")
    base.add_argument("--plans-out", help="also save the baseline plans")
    base.set_defaults(handler=_cmd_baselines)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except InfeasiblePlanError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except (SonataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
