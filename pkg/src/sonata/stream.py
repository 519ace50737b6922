"""Exact streaming execution of validated queries.

This engine is the ground truth the switch model is measured against.  It
runs one window at a time: stateless operators apply per record, stateful
ones hold window-local state, and reduce emits one record per key when the
window closes.  Outputs are sorted by their canonical byte encoding so
results are stable across runs.

The same operator interpreter also runs partition suffixes: when the data
plane executed a prefix that includes a reduce, the mirrored records carry
running aggregates, so the suffix first collapses them to the last record
per reduce key before applying the remaining operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from operator import itemgetter

from .encoding import record_bytes
from .errors import QueryValidationError
from .fields import FIELDS, mask_value
from .qlang import ValidatedQuery, resolved_key_fields

DEFAULT_INPUT_SCHEMA = tuple(FIELDS)


def records_from_packets(packets, schema=DEFAULT_INPUT_SCHEMA) -> list[tuple]:
    """Project packets onto a flat record schema; absent fields become None."""
    return [tuple(pkt.get(name) for name in schema) for pkt in packets]


@dataclass
class WindowResult:
    """Output of one window: final records plus the engine's input load."""

    outputs: list[tuple]
    tuples_processed: int


def _getter(schema, field_names):
    idxs = tuple(schema.index(f) for f in field_names)
    if len(idxs) == 1:
        i = idxs[0]
        return lambda rec: (rec[i],)
    return itemgetter(*idxs)


def _compile_predicate(pred, schema):
    def operand_fn(operand):
        if operand.kind == "const":
            value = operand.value
            return lambda rec: value
        i = schema.index(operand.field)
        return lambda rec: rec[i]

    left, right = operand_fn(pred.lhs), operand_fn(pred.rhs)
    op = pred.op

    def evaluate(rec):
        lv, rv = left(rec), right(rec)
        if lv is None or rv is None:
            return False
        if op == "==":
            return lv == rv
        if op == "!=":
            return lv != rv
        if op == ">":
            return lv > rv
        if op == ">=":
            return lv >= rv
        if op == "<":
            return lv < rv
        return lv <= rv

    return evaluate


def _entropy(counts) -> float:
    total = sum(counts)
    if total == 0:
        return 0.0
    acc = 0.0
    for c in counts:
        p = c / total
        acc -= p * math.log2(p)
    return acc


def _membership_set(node, joined):
    """Resolve a join node's entry set and the level entries are stored at."""
    if node.entries is not None:
        return node.entries, node.mask_level
    if joined is None:
        members, level = frozenset(), node.mask_level
    elif isinstance(joined, tuple) and len(joined) == 2 and not isinstance(joined, frozenset):
        level, members = joined
    else:
        members, level = joined, node.mask_level
    return frozenset(members), level


def _apply_operator(vq: ValidatedQuery, index: int, records, joined):
    node = vq.operators[index]
    schema = vq.schemas[index]

    if node.kind == "filter":
        pred = _compile_predicate(node.predicate, schema)
        return [r for r in records if pred(r)]

    if node.kind == "map":
        in_place = (len(node.items) == 1 and node.items[0].field is not None
                    and node.items[0].mask_level is not None)
        if in_place:
            item = node.items[0]
            i = schema.index(item.field)
            level, field = item.mask_level, item.field
            out = []
            for r in records:
                if r[i] is None:
                    continue
                out.append(r[:i] + (mask_value(r[i], field, level),) + r[i + 1:])
            return out
        parts = []
        for item in node.items:
            if item.field is None:
                const = item.const
                parts.append(lambda rec, c=const: c)
            else:
                i = schema.index(item.field)
                if item.mask_level is not None:
                    fld, lvl = item.field, item.mask_level
                    parts.append(lambda rec, i=i, fld=fld, lvl=lvl:
                                 None if rec[i] is None else mask_value(rec[i], fld, lvl))
                else:
                    parts.append(lambda rec, i=i: rec[i])
        out = []
        for r in records:
            values = tuple(p(r) for p in parts)
            if any(v is None for v in values):
                continue
            out.append(values)
        return out

    if node.kind == "distinct":
        keys = resolved_key_fields(node, schema)
        get_key = _getter(schema, keys)
        seen = set()
        out = []
        for r in records:
            k = get_key(r)
            if None in k or k in seen:
                continue
            seen.add(k)
            out.append(r)
        return out

    if node.kind == "reduce":
        get_key = _getter(schema, node.key_fields)
        value_fields = [f for f in schema if f not in node.key_fields]
        func = node.reduce_func
        if func == "count":
            groups: dict = {}
            for r in records:
                k = get_key(r)
                if None in k:
                    continue
                groups[k] = groups.get(k, 0) + 1
            return [k + (v,) for k, v in groups.items()]
        vi = schema.index(value_fields[0])
        if func == "entropy":
            dists: dict = {}
            for r in records:
                k, v = get_key(r), r[vi]
                if None in k or v is None:
                    continue
                d = dists.setdefault(k, {})
                d[v] = d.get(v, 0) + 1
            return [k + (_entropy(tuple(d.values())),) for k, d in dists.items()]
        groups = {}
        for r in records:
            k, v = get_key(r), r[vi]
            if None in k or v is None:
                continue
            if k not in groups:
                groups[k] = v
            elif func == "sum":
                groups[k] += v
            elif func == "min":
                groups[k] = v if v < groups[k] else groups[k]
            else:
                groups[k] = v if v > groups[k] else groups[k]
        return [k + (v,) for k, v in groups.items()]

    if node.kind == "sample":
        rate = node.rate
        return [r for idx, r in enumerate(records) if idx % rate == 0]

    if node.kind == "join":
        members, level = _membership_set(node, joined if node.join_query else None)
        probe_field = node.key_fields[0] if node.key_fields else vq.join_field
        i = schema.index(probe_field)
        out = []
        for r in records:
            v = r[i]
            if v is None:
                continue
            probe = mask_value(v, probe_field, level) if level is not None else v
            if probe in members:
                out.append(r)
        return out

    raise QueryValidationError(f"unknown operator kind {node.kind!r}")


def _run_range(vq, start, records, joined):
    for index in range(start, vq.num_operators):
        records = _apply_operator(vq, index, records, joined)
    return records


def _sorted_outputs(records) -> list[tuple]:
    return sorted(records, key=record_bytes)


def execute_window(vq: ValidatedQuery, records, joined=None) -> WindowResult:
    """Run the whole query over one window of input records.

    Args:
        vq: validated query.
        records: records in the query's input schema (see
            `records_from_packets`).
        joined: the join target's previous-window output keys, either a
            set or a (level, set) pair when the target ran coarsened.
    """
    records = list(records)
    outputs = _run_range(vq, 0, records, joined)
    return WindowResult(outputs=_sorted_outputs(outputs), tuples_processed=len(records))


def last_reduce_before(vq: ValidatedQuery, p: int) -> int | None:
    last = None
    for index in range(p):
        if vq.operators[index].kind == "reduce":
            last = index
    return last


def run_suffix(vq: ValidatedQuery, p: int, reports, joined=None) -> WindowResult:
    """Finish a query whose first ``p`` operators ran in the data plane.

    ``reports`` are the mirrored records in the schema after stage ``p``.
    A reduce inside the prefix streams running aggregates, one per update;
    only the last record per reduce key reflects the closed window, so
    those are collapsed first.  Every operator from ``p`` on then runs
    exactly as in pure streaming.
    """
    reports = list(reports)
    records = reports
    j = last_reduce_before(vq, p)
    if j is not None:
        key_fields = vq.operators[j].key_fields
        schema = vq.schemas[p]
        missing = [k for k in key_fields if k not in schema]
        if missing:
            raise QueryValidationError(
                f"cannot finish partition p={p}: reduce keys {missing} were "
                f"projected away in the data plane")
        get_key = _getter(schema, key_fields)
        collapsed: dict = {}
        for r in records:
            collapsed[get_key(r)] = r
        records = list(collapsed.values())
    outputs = _run_range(vq, p, records, joined)
    return WindowResult(outputs=_sorted_outputs(outputs), tuples_processed=len(reports))


def output_keys(result: WindowResult, vq: ValidatedQuery, field: str) -> frozenset:
    """Project a window result onto one output field."""
    i = vq.output_schema.index(field)
    return frozenset(r[i] for r in result.outputs)


def execute_stream(vq: ValidatedQuery, window_records, join_outputs=None) -> list[WindowResult]:
    """Run consecutive windows; window t joins against output t-1.

    Args:
        vq: validated query.
        window_records: per-window record lists.
        join_outputs: per-window key sets from the join target (aligned
            with `window_records`); window t uses entry t-1, window 0 an
            empty set.  Ignored for queries without a join.
    """
    results = []
    for t, records in enumerate(window_records):
        joined = None
        if vq.join_target is not None:
            if join_outputs is not None and t >= 1:
                joined = join_outputs[t - 1]
            else:
                joined = frozenset()
        results.append(execute_window(vq, records, joined=joined))
    return results


def run_queries(vqs: dict[str, ValidatedQuery], window_records) -> dict[str, list[WindowResult]]:
    """Co-schedule a query file over shared windows, wiring joins.

    Queries run in declaration order, which validation already forced to
    topologically precede any join reference.
    """
    results: dict[str, list[WindowResult]] = {}
    for name, vq in vqs.items():
        join_outputs = None
        if vq.join_target is not None:
            partner = vqs[vq.join_target]
            field_index = partner.output_schema.index(vq.join_field)
            join_outputs = [
                frozenset(r[field_index] for r in res.outputs)
                for res in results[vq.join_target]
            ]
        results[name] = execute_stream(vq, window_records, join_outputs=join_outputs)
    return results
