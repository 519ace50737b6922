"""Windowed runtime: execute selected plans over a trace, emit metrics.

Each window, every query runs its current plan step: the in-plane prefix
of the step's refined chain executes on a shared switch model, mirrored
report tuples finish in the stream engine, and the step's outputs decide
the next window.  Non-empty output one level down the ladder arms the
zoom gate with the crossing buckets; a finest-level window or an empty
output restarts the walk at the coarsest step.  Queries that join against
another query see that partner's most recent full-resolution output from
earlier windows, coarsened to the consumer's current level when the join
field is the refinement key.

Per window and query the runner records the mirrored tuple count, the
post-window state bits, the step's emitted records, and its
full-resolution detections.  The summary carries per-key first-detection
delays measured in walk length: a detection in the step the walk entered
at its k-th window has delay k, so a one-step plan detects with delay 1
and a full eight-level ladder with delay 8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import UnsupportedPlanError
from .fields import finest_level, ipv4_to_str, mask_value
from .packets import window_partition
from .partition import is_supported
from .pisa import InstalledQuery, PisaSwitch
from .planner import PlanRequest, PlanStep, QueryPlan, _join_entries_per_window
from .qlang import ValidatedQuery
from .refine import backtrack_thresholds, refine_query
from .stream import records_from_packets, run_suffix

STATELESS_PLANE_OPS = ("filter", "sample", "join")


def windows_from_packets(packets, window_seconds: float) -> list[list[tuple]]:
    """Split a packet list into per-window record lists, gaps included."""
    return [records_from_packets(w.packets)
            for w in window_partition(packets, window_seconds)]


@dataclass(frozen=True)
class WindowMetrics:
    window: int
    query: str
    n_raw: int
    b_raw: int
    reports: int
    detections: int


@dataclass
class _QueryState:
    step: int = 0
    entries: frozenset = frozenset()
    latest_finest: frozenset = frozenset()


@dataclass(frozen=True)
class RunResult:
    metrics: tuple[WindowMetrics, ...]
    detections: dict            # query -> {key: {"window": w, "delay": d}}
    union_reports: int
    packets: int


def _step_chain(vq: ValidatedQuery, plan: QueryPlan, state: _QueryState,
                known) -> ValidatedQuery:
    if plan.key is None:
        return vq
    step = plan.steps[state.step]
    zoom_level = plan.steps[state.step - 1].level if state.step >= 1 else None
    threshold = None
    if step.level != plan.steps[-1].level:
        threshold = dict(plan.thresholds).get(step.level)
    return refine_query(vq, plan.key, step.level, zoom_level=zoom_level,
                        zoom_entries=state.entries if state.step >= 1 else None,
                        threshold=threshold, known=known).query


def _join_entries(vq: ValidatedQuery, plan: QueryPlan, step: PlanStep,
                  states: dict[str, _QueryState]):
    if vq.join_target is None:
        return None
    entries = states[vq.join_target].latest_finest
    if plan.key is not None and vq.join_field == plan.key and \
            step.level != plan.steps[-1].level:
        return frozenset(mask_value(e, plan.key, step.level) for e in entries)
    return frozenset(entries)


def run_plans(queries: dict[str, ValidatedQuery], plans: dict[str, QueryPlan],
              window_records, seed: int = 0, known=None) -> RunResult:
    """Execute one plan per query over consecutive windows."""
    known = known if known is not None else queries
    for name, plan in plans.items():
        target = queries[name].join_target
        if target is not None and target not in plans:
            raise UnsupportedPlanError(
                f"query {name!r} joins {target!r}, which has no plan to run")
    states = {name: _QueryState() for name in plans}
    metrics: list[WindowMetrics] = []
    detections: dict = {name: {} for name in plans}
    union_total = 0
    packet_total = 0
    for t, records in enumerate(window_records):
        packet_total += len(records)
        chains: dict[str, ValidatedQuery] = {}
        joined: dict[str, frozenset | None] = {}
        installed = []
        for name, plan in plans.items():
            vq = queries[name]
            state = states[name]
            step = plan.steps[state.step]
            chains[name] = _step_chain(vq, plan, state, known)
            joined[name] = _join_entries(vq, plan, step, states)
            installed.append(InstalledQuery(name, chains[name], step.p,
                                            sketch=step.sketch))
        switch = PisaSwitch(installed, seed=seed)
        for name in plans:
            if joined[name] is not None and \
                    "join" in switch.pipelines[name].dynamic_tables():
                switch.install_filter_entries(name, joined[name], table="join")
        report_tuples, _ = switch.process_window(records, window=t)
        union_total += len(report_tuples)
        finished: dict[str, frozenset] = {}
        for name, plan in plans.items():
            state = states[name]
            step = plan.steps[state.step]
            chain = chains[name]
            mirrored = switch.reports_for(report_tuples, name)
            result = run_suffix(chain, step.p, mirrored, joined=joined[name])
            is_finest = plan.key is None or step.level == plan.steps[-1].level
            if plan.key is not None:
                ki = chain.output_schema.index(plan.key)
                outputs = frozenset(r[ki] for r in result.outputs)
            elif len(chain.output_schema) == 1:
                outputs = frozenset(r[0] for r in result.outputs)
            else:
                outputs = frozenset(result.outputs)
            finished[name] = outputs
            metrics.append(WindowMetrics(
                window=t, query=name, n_raw=len(mirrored),
                b_raw=switch.query_bits(name), reports=len(result.outputs),
                detections=len(result.outputs) if is_finest else 0))
            if is_finest:
                for key in sorted(outputs):
                    if key not in detections[name]:
                        detections[name][key] = {"window": t,
                                                 "delay": state.step + 1}
        # advance walks and publish full-resolution outputs for joiners
        for name, plan in plans.items():
            state, outputs = states[name], finished[name]
            step = plan.steps[state.step]
            is_finest = plan.key is None or step.level == plan.steps[-1].level
            # An unrefined partner publishes every window (strict previous-
            # window join); a refined one only replaces its last full-
            # resolution sighting, since most of its windows are coarse.
            if is_finest and (outputs or plan.key is None):
                state.latest_finest = outputs
            if not is_finest and outputs:
                state.step += 1
                state.entries = outputs
            else:
                state.step = 0
                state.entries = frozenset()
    return RunResult(metrics=tuple(metrics), detections=detections,
                     union_reports=union_total, packets=packet_total)


# -- output formats ------------------------------------------------------


def metrics_text(result: RunResult) -> str:
    lines = ["window,query,n_raw,b_raw,reports,detections"]
    for row in result.metrics:
        lines.append(f"{row.window},{row.query},{row.n_raw},{row.b_raw},"
                     f"{row.reports},{row.detections}")
    return "\n".join(lines) + "\n"


def _key_text(key) -> str:
    if isinstance(key, int) and 0 <= key < 2 ** 32:
        return ipv4_to_str(key)
    return str(key)


def summary_dict(result: RunResult, plans: dict[str, QueryPlan]) -> dict:
    per_query = {}
    for name in plans:
        rows = [r for r in result.metrics if r.query == name]
        per_query[name] = {
            "mirrored_tuples": sum(r.n_raw for r in rows),
            "max_state_bits": max((r.b_raw for r in rows), default=0),
            "reports": sum(r.reports for r in rows),
            "detections": sum(r.detections for r in rows),
            "first_detections": {
                _key_text(k): v for k, v in
                sorted(result.detections[name].items(),
                       key=lambda item: (item[1]["window"], str(item[0])))},
        }
    total_mirrored = sum(q["mirrored_tuples"] for q in per_query.values())
    return {
        "windows": max((r.window for r in result.metrics), default=-1) + 1,
        "packets": result.packets,
        "union_reports": result.union_reports,
        "per_query": per_query,
        "cross_check": {
            "sum_of_query_tuples": total_mirrored,
            "union_never_exceeds_sum": result.union_reports <= total_mirrored,
        },
    }


def summary_text(result: RunResult, plans: dict[str, QueryPlan]) -> str:
    return json.dumps(summary_dict(result, plans), indent=2, sort_keys=True) + "\n"


# -- baseline plan builders ----------------------------------------------


def _single_step(vq: ValidatedQuery, p: int, sketch: bool = False) -> QueryPlan:
    return QueryPlan(query=vq.name, key=None, alpha=0.5, seed=0,
                     window=vq.window,
                     steps=(PlanStep(1, None, p, sketch),),
                     thresholds=(), training=())


def stream_only_plans(queries: dict[str, ValidatedQuery]) -> dict[str, QueryPlan]:
    """Everything in the stream engine: no prefix, no refinement."""
    return {name: _single_step(vq, 0) for name, vq in queries.items()}


def part_of_plans(queries: dict[str, ValidatedQuery]) -> dict[str, QueryPlan]:
    """Match-table-only switch: the prefix stops at the first rewrite or store."""
    out = {}
    for name, vq in queries.items():
        p = 0
        for node in vq.operators:
            if node.kind not in STATELESS_PLANE_OPS:
                break
            p += 1
        out[name] = _single_step(vq, p)
    return out


def part_pisa_plans(queries: dict[str, ValidatedQuery]) -> dict[str, QueryPlan]:
    """Deepest realizable prefix, sketched stores when the chain allows."""
    out = {}
    for name, vq in queries.items():
        chosen = (0, False)
        for p in range(vq.num_operators, 0, -1):
            if is_supported(vq, p, sketch=True):
                chosen = (p, True)
                break
            if is_supported(vq, p):
                chosen = (p, False)
                break
        out[name] = _single_step(vq, *chosen)
    return out


FULL_GRID = (4, 8, 12, 16, 20, 24, 28, 32)


def fixed_refinement_plans(queries: dict[str, ValidatedQuery],
                           training_windows, known=None,
                           levels=FULL_GRID) -> dict[str, QueryPlan]:
    """Walk the whole level grid every time, deepest exact prefix per step."""
    known = known if known is not None else queries
    out = {}
    for name, vq in queries.items():
        if not vq.refinement_keys:
            out[name] = _single_step(vq, 0)
            continue
        key = vq.refinement_keys[0]
        ladder = tuple(l for l in levels if l < finest_level(key))
        ladder = ladder + (finest_level(key),)
        joined = _join_entries_per_window(PlanRequest(vq, key, ladder),
                                          training_windows, known)
        thresholds = backtrack_thresholds(vq, key, ladder, training_windows,
                                          joined_per_window=joined, known=known)
        steps = []
        for i, level in enumerate(ladder):
            chain = refine_query(
                vq, key, level, zoom_level=ladder[i - 1] if i else None,
                threshold=thresholds[level] if level != ladder[-1] else None,
                known=known).query
            p = 0
            for q in range(chain.num_operators, 0, -1):
                if is_supported(chain, q):
                    p = q
                    break
            steps.append(PlanStep(i + 1, level, p, False))
        out[name] = QueryPlan(query=name, key=key, alpha=0.5, seed=0,
                              window=vq.window, steps=tuple(steps),
                              thresholds=tuple(sorted(thresholds.items())),
                              training=())
    return out
