"""Iterative refinement: run coarse first, zoom into what crossed.

A refinable query names a hierarchical field that every stateful operator
keys on, so coarsening that field merges state upward and bucket
aggregates can only absorb, never lose, the traffic of their members.  A
refined variant masks the field to a chosen level right after the query's
leading run of plain filters, optionally gated by a zoom filter that only
admits packets whose field falls in a bucket that crossed at the previous
(coarser) level.

Coarse levels need their own thresholds.  Backtracking derives them from
training windows: at each coarse level, take the bucket aggregate of every
bucket that contains at least one key satisfying the original query, keep
the least favorable of those per window (the smallest for thresholds that
grow, the largest for ones that shrink), and keep the minimum over windows
so no training victim would have been screened out.  Coarse comparisons
are made non-strict so a bucket exactly at the bound still zooms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import QueryValidationError
from .fields import finest_level, mask_value
from .qlang import (AGG_FIELD, MapItem, OperatorNode, ValidatedQuery, validate)
from .stream import execute_window

UPWARD_OPS = {">": ">=", ">=": ">="}
DOWNWARD_OPS = {"<": "<=", "<=": "<="}


def insertion_index(vq: ValidatedQuery) -> int:
    """Where zoom and mask slot in: after the leading plain filters."""
    index = 0
    for node in vq.operators:
        if node.kind != "filter":
            break
        index += 1
    return index


def threshold_filter_index(vq: ValidatedQuery) -> int | None:
    """The first filter over the last reduce's aggregate field, if any."""
    last_reduce = None
    for i, node in enumerate(vq.operators):
        if node.kind == "reduce":
            last_reduce = i
    if last_reduce is None:
        return None
    agg = AGG_FIELD[vq.operators[last_reduce].reduce_func]
    for i in range(last_reduce + 1, vq.num_operators):
        node = vq.operators[i]
        if node.kind != "filter":
            continue
        if any(o.kind == "field" and o.field == agg
               for o in (node.predicate.lhs, node.predicate.rhs)):
            return i
    return None


def original_threshold(vq: ValidatedQuery) -> float:
    """The aggregate bound the query's own threshold filter enforces."""
    ti = threshold_filter_index(vq)
    if ti is None:
        raise QueryValidationError(
            f"{vq.name!r} has no aggregate threshold filter")
    pred = vq.operators[ti].predicate
    return pred.rhs.value if pred.rhs.kind == "const" else pred.lhs.value


def _coarse_op(op: str) -> str:
    if op in UPWARD_OPS:
        return UPWARD_OPS[op]
    if op in DOWNWARD_OPS:
        return DOWNWARD_OPS[op]
    raise QueryValidationError(f"threshold comparator {op!r} cannot be coarsened")


@dataclass(frozen=True)
class RefinedVariant:
    """One level of a refined query, ready to execute or install."""

    query: ValidatedQuery
    key: str
    level: int
    zoom_level: int | None


def refine_query(vq: ValidatedQuery, key: str, level: int,
                 zoom_level: int | None = None, zoom_entries=None,
                 threshold: float | None = None,
                 known: dict[str, ValidatedQuery] | None = None) -> RefinedVariant:
    """Build the variant of ``vq`` that watches ``key`` at ``level``.

    Args:
        vq: validated base query; ``key`` must be one of its refinement keys.
        level: mask level this variant observes the key at.
        zoom_level: level of the previous (coarser) step whose outputs gate
            this one; None for the first step.
        zoom_entries: bucket values (at ``zoom_level``) admitted by the gate.
        threshold: replacement aggregate bound for coarse levels; the
            comparator is made non-strict.  None keeps the original filter.
        known: join targets, as for validation.
    """
    if key not in vq.refinement_keys:
        raise QueryValidationError(f"{key!r} is not a refinement key of {vq.name!r}")
    at = insertion_index(vq)
    inserted = []
    if zoom_level is not None:
        inserted.append(OperatorNode(kind="join", key_fields=(key,),
                                     mask_level=zoom_level,
                                     entries=frozenset(zoom_entries or ())))
    if level != finest_level(key):
        inserted.append(OperatorNode(
            kind="map", items=(MapItem(field=key, mask_level=level),)))
    operators = list(vq.ast.operators)
    operators[at:at] = inserted
    shift = len(inserted)
    if threshold is not None:
        ti = threshold_filter_index(vq)
        if ti is None:
            raise QueryValidationError(
                f"{vq.name!r} has no aggregate threshold filter to retarget")
        node = operators[ti + shift]
        pred = node.predicate
        if pred.rhs.kind == "const":
            pred = replace(pred, op=_coarse_op(pred.op),
                           rhs=replace(pred.rhs, value=threshold))
        else:
            flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}[pred.op]
            pred = replace(pred, op=_coarse_op(flipped), lhs=pred.lhs,
                           rhs=replace(pred.lhs, value=threshold))
        operators[ti + shift] = replace(node, predicate=pred)
    ast = replace(vq.ast, operators=tuple(operators))
    refined = validate(ast, known or {})
    return RefinedVariant(query=refined, key=key, level=level,
                         zoom_level=zoom_level)


def _truncate_after_last_reduce(vq: ValidatedQuery,
                                known: dict[str, ValidatedQuery] | None) -> ValidatedQuery:
    last = None
    for i, node in enumerate(vq.operators):
        if node.kind == "reduce":
            last = i
    if last is None:
        raise QueryValidationError(f"{vq.name!r} has no reduce to backtrack from")
    ast = replace(vq.ast, operators=vq.ast.operators[:last + 1])
    return validate(ast, known or {})


def bucket_aggregates(vq: ValidatedQuery, key: str, level: int, records,
                      joined=None,
                      known: dict[str, ValidatedQuery] | None = None) -> dict:
    """Aggregate value per ``key`` bucket at ``level``, thresholds ignored."""
    variant = refine_query(vq, key, level, known=known)
    probe = _truncate_after_last_reduce(variant.query, known)
    if joined is not None and vq.join_field == key and level != finest_level(key):
        joined = frozenset(mask_value(e, key, level) for e in joined)
    result = execute_window(probe, records, joined=joined)
    schema = probe.output_schema
    ki = schema.index(key)
    out = {}
    for rec in result.outputs:
        out[rec[ki]] = rec[-1]
    return out


def satisfying_keys(vq: ValidatedQuery, key: str, records, joined=None) -> frozenset:
    """Finest-level key values that pass the original query on this window."""
    result = execute_window(vq, records, joined=joined)
    if key not in vq.output_schema:
        raise QueryValidationError(
            f"{key!r} not in {vq.name!r} output; cannot identify satisfied keys")
    ki = vq.output_schema.index(key)
    return frozenset(rec[ki] for rec in result.outputs)


def backtrack_thresholds(vq: ValidatedQuery, key: str, levels,
                         training_windows, joined_per_window=None,
                         known: dict[str, ValidatedQuery] | None = None) -> dict[int, float]:
    """Per-level aggregate bounds learned from training windows.

    Returns {level: threshold} for every level in ``levels``; the finest
    level keeps the original bound.  Windows where nothing satisfies the
    original query contribute nothing, and if no window has a satisfying
    key a coarse level inherits the original bound.
    """
    levels = sorted(levels)
    finest = finest_level(key)
    if levels[-1] != finest:
        raise QueryValidationError(
            f"finest level of the ladder must be {finest}, got {levels[-1]}")
    ti = threshold_filter_index(vq)
    if ti is None:
        raise QueryValidationError(f"{vq.name!r} has no aggregate threshold filter")
    pred = vq.operators[ti].predicate
    const = pred.rhs.value if pred.rhs.kind == "const" else pred.lhs.value
    op = pred.op if pred.rhs.kind == "const" else \
        {"<": ">", "<=": ">=", ">": "<", ">=": "<="}[pred.op]
    upward = op in UPWARD_OPS
    pick = min if upward else max

    out = {finest: const}
    per_window_satisfied = []
    for w, records in enumerate(training_windows):
        joined = joined_per_window[w] if joined_per_window is not None else None
        per_window_satisfied.append((records, joined,
                                     satisfying_keys(vq, key, records, joined=joined)))
    for level in levels[:-1]:
        bounds = []
        for records, joined, satisfied in per_window_satisfied:
            if not satisfied:
                continue
            buckets = bucket_aggregates(vq, key, level, records, joined=joined,
                                        known=known)
            hit = {mask_value(k, key, level) for k in satisfied}
            candidates = [agg for bucket, agg in buckets.items() if bucket in hit]
            if candidates:
                bounds.append(pick(candidates))
        out[level] = pick(bounds) if bounds else const
    return out


@dataclass(frozen=True)
class RefinementStep:
    """One window of the zoom loop."""

    window: int
    level: int
    zoom_entries: frozenset
    outputs: frozenset
    detections: frozenset


def iterate_refinement(vq: ValidatedQuery, key: str, levels, thresholds,
                       window_records, joined_per_window=None,
                       known: dict[str, ValidatedQuery] | None = None) -> list[RefinementStep]:
    """Stream-only zoom loop: one level per window, coarse to fine.

    Window t runs the current ladder level gated by the previous window's
    crossing buckets.  Non-empty output advances one level; empty output
    restarts at the coarsest level ungated; a finest-level window always
    restarts the cycle.  Detections are finest-level outputs, so a ladder
    of L levels needs L windows per detection and a one-level ladder
    detects every window.
    """
    levels = sorted(levels)
    steps: list[RefinementStep] = []
    li = 0
    entries: frozenset = frozenset()
    for t, records in enumerate(window_records):
        level = levels[li]
        zoom_level = levels[li - 1] if li > 0 else None
        variant = refine_query(
            vq, key, level, zoom_level=zoom_level,
            zoom_entries=entries if li > 0 else None,
            threshold=None if level == levels[-1] else thresholds[level],
            known=known)
        joined = joined_per_window[t] if joined_per_window is not None else None
        if joined is not None and vq.join_field == key and level != levels[-1]:
            # probes reach the join already coarsened, so coarsen entries too
            joined = frozenset(mask_value(e, key, level) for e in joined)
        result = execute_window(variant.query, records, joined=joined)
        ki = variant.query.output_schema.index(key)
        outputs = frozenset(rec[ki] for rec in result.outputs)
        detections = outputs if level == levels[-1] else frozenset()
        steps.append(RefinementStep(window=t, level=level,
                                    zoom_entries=entries, outputs=outputs,
                                    detections=detections))
        if outputs and li < len(levels) - 1:
            li += 1
            entries = outputs
        else:
            li = 0
            entries = frozenset()
    return steps
