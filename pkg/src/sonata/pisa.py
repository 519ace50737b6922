"""Switch-pipeline model: per-packet execution of query prefixes.

Each installed query compiles to a stage sequence mirroring its operator
prefix.  Filters become match tables (a two-outcome pair when predicated on
a computed aggregate), maps rewrite shadow metadata and never real headers,
distinct and reduce become exact keyed stores or their sketched stand-ins
(bloom filter, count-min), membership filters become match tables whose
entries arrive at runtime, and sample keeps one arrival counter.  Queries
execute sequentially per packet, never interleaved; a packet is mirrored to
the stream processor when any query's report bit is set, carrying the
metadata of every reporting query.

Stateful semantics are per packet: distinct passes first occurrences,
reduce writes back the running aggregate, and a threshold filter reads that
running value, so reports start at the crossing packet and continue from
there.  The stream engine's suffix collapse reconstructs exact window
results from such report streams.

State accounting is deterministic: exact stores charge one slot per
observed key (1 bit for membership, 32 per counter), sketches charge their
fixed geometry, match tables charge entries times matched width, and every
installed query with a non-empty prefix adds one report bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from random import Random

from .encoding import value_bytes
from .errors import UnsupportedPlanError
from .fields import mask_value
from .qlang import AGG_FIELD, ValidatedQuery, resolved_key_fields
from .sketches import (BloomFilter, CountMinSketch, draw_seeds, key_bytes,
                       sketch_dimensions)

_WIRE_BITS = {"u8": 8, "u16": 16, "u32": 32, "ipv4": 32, "float": 64}


def wire_bits(wire: str, value=None) -> int:
    if wire == "str":
        return 8 * len(value.encode("utf-8")) if isinstance(value, str) else 32
    return _WIRE_BITS[wire]


@dataclass(frozen=True)
class InstalledQuery:
    """One query's slice of the pipeline: its prefix length and store mode."""

    name: str
    query: ValidatedQuery
    p: int
    sketch: bool = False


@dataclass(frozen=True)
class ReportTuple:
    """One mirrored packet with the metadata of every reporting query."""

    window: int | None
    metadata: tuple[tuple[str, tuple], ...]


class _Stage:
    """Executable pipeline stage with ledger hooks."""

    __slots__ = ("kind", "op_index", "run", "bits", "reset", "dynamic_table",
                 "table", "label")

    def __init__(self, kind, op_index, run, bits, reset=None, dynamic_table=None,
                 table=None, label=""):
        self.kind = kind
        self.op_index = op_index
        self.run = run
        self.bits = bits
        self.reset = reset
        self.dynamic_table = dynamic_table   # "join" | "zoom" | None
        self.table = table
        self.label = label


class _EntryTable:
    """Runtime-populated membership table for join and zoom filters."""

    def __init__(self, field, wire, level):
        self.field = field
        self.wire = wire
        self.level = level
        self.entries: frozenset = frozenset()

    def install(self, entries, level=None):
        self.entries = frozenset(entries)
        if level is not None:
            self.level = level

    def bits(self) -> int:
        return sum(wire_bits(self.wire, e) for e in self.entries)


def _operand_reader(operand, schema):
    if operand.kind == "const":
        value = operand.value
        return lambda rec: value
    i = schema.index(operand.field)
    return lambda rec: rec[i]


def _compile_filter(node, vq, index):
    schema = vq.schemas[index]
    left = _operand_reader(node.predicate.lhs, schema)
    right = _operand_reader(node.predicate.rhs, schema)
    op = node.predicate.op

    def run(rec):
        lv, rv = left(rec), right(rec)
        if lv is None or rv is None:
            return None
        if op == "==":
            ok = lv == rv
        elif op == "!=":
            ok = lv != rv
        elif op == ">":
            ok = lv > rv
        elif op == ">=":
            ok = lv >= rv
        elif op == "<":
            ok = lv < rv
        else:
            ok = lv <= rv
        return rec if ok else None

    # A filter over a computed aggregate needs one table per outcome; a
    # static header filter needs a single entry.
    aggregate_names = set(AGG_FIELD.values())
    predicated = any(o.kind == "field" and o.field in aggregate_names
                     for o in (node.predicate.lhs, node.predicate.rhs))
    entries = 2 if predicated else 1
    width = 0
    for operand in (node.predicate.lhs, node.predicate.rhs):
        if operand.kind == "field":
            width += wire_bits(vq.wire_of(index, operand.field))
        elif isinstance(operand.value, str):
            width += wire_bits("str", operand.value)
    total = entries * width
    return _Stage("match_table", index, run, lambda: total,
                  label=f"filter[{'2-outcome' if predicated else 'static'}]")


def _compile_map(node, vq, index):
    schema = vq.schemas[index]
    in_place = (len(node.items) == 1 and node.items[0].field is not None
                and node.items[0].mask_level is not None)
    if in_place:
        item = node.items[0]
        i = schema.index(item.field)
        field, level = item.field, item.mask_level

        def run(rec):
            v = rec[i]
            if v is None:
                return None
            return rec[:i] + (mask_value(v, field, level),) + rec[i + 1:]

        return _Stage("action", index, run, lambda: 0, label=f"mask {field}/{level}")

    readers = []
    for item in node.items:
        if item.field is None:
            readers.append(lambda rec, c=item.const: c)
        elif item.mask_level is not None:
            i = schema.index(item.field)
            readers.append(lambda rec, i=i, f=item.field, L=item.mask_level:
                           None if rec[i] is None else mask_value(rec[i], f, L))
        else:
            i = schema.index(item.field)
            readers.append(lambda rec, i=i: rec[i])

    def run(rec):
        values = tuple(reader(rec) for reader in readers)
        if any(v is None for v in values):
            return None
        return values

    return _Stage("action", index, run, lambda: 0, label="project")


def _key_reader(schema, key_fields):
    idxs = tuple(schema.index(f) for f in key_fields)

    def read(rec):
        key = tuple(rec[i] for i in idxs)
        if None in key:
            return None
        return key

    return read


def _compile_distinct(node, vq, index, sketch, sketch_geometry, rng):
    schema = vq.schemas[index]
    read_key = _key_reader(schema, resolved_key_fields(node, schema))
    if sketch:
        m, k = sketch_geometry
        bloom = BloomFilter(m, k, draw_seeds(rng, k))

        def run(rec):
            key = read_key(rec)
            if key is None:
                return None
            return None if bloom.add(key_bytes(key)) else rec

        return _Stage("bloom", index, run, lambda: bloom.state_bits,
                      reset=bloom.reset, label=f"distinct bloom m={m} k={k}")

    seen: set = set()

    def run(rec):
        key = read_key(rec)
        if key is None or key in seen:
            return None
        seen.add(key)
        return rec

    return _Stage("exact_store", index, run, lambda: len(seen), reset=seen.clear,
                  label="distinct exact (1 bit/slot)")


def _compile_reduce(node, vq, index, sketch, sketch_geometry, rng):
    schema = vq.schemas[index]
    read_key = _key_reader(schema, node.key_fields)
    func = node.reduce_func
    if func == "count":
        read_value = lambda rec: 1
    else:
        value_fields = [f for f in schema if f not in node.key_fields]
        vi = schema.index(value_fields[0])
        read_value = lambda rec: rec[vi]

    if sketch:
        if func not in ("sum", "count"):
            raise UnsupportedPlanError(
                f"sketch mode requires a linear reduce, got {func!r}")
        m, k = sketch_geometry
        cm = CountMinSketch(m, k, draw_seeds(rng, k))

        def run(rec):
            key = read_key(rec)
            if key is None:
                return None
            value = read_value(rec)
            if value is None:
                return None
            return key + (cm.update(key_bytes(key), value),)

        return _Stage("count_min", index, run, lambda: cm.state_bits,
                      reset=cm.reset, label=f"reduce {func} count-min m={m} k={k}")

    slots: dict = {}

    if func in ("sum", "count"):
        def run(rec):
            key = read_key(rec)
            if key is None:
                return None
            value = read_value(rec)
            if value is None:
                return None
            total = slots.get(key, 0) + value
            slots[key] = total
            return key + (total,)
    elif func in ("min", "max"):
        better = (lambda new, old: new < old) if func == "min" else (lambda new, old: new > old)

        def run(rec):
            key = read_key(rec)
            if key is None:
                return None
            value = read_value(rec)
            if value is None:
                return None
            if key not in slots or better(value, slots[key]):
                slots[key] = value
            return key + (slots[key],)
    else:
        raise UnsupportedPlanError(f"reduce func {func!r} has no in-plane form")

    return _Stage("exact_store", index, run, lambda: 32 * len(slots),
                  reset=slots.clear, label=f"reduce {func} exact (32 bit/slot)")


def _compile_sample(node, index):
    counter = [0]
    rate = node.rate

    def run(rec):
        i = counter[0]
        counter[0] = i + 1
        return rec if i % rate == 0 else None

    def reset():
        counter[0] = 0

    return _Stage("exact_store", index, run, lambda: 32, reset=reset,
                  label=f"sample 1-in-{rate} (arrival counter)")


def _compile_join(node, vq, index):
    schema = vq.schemas[index]
    field = node.key_fields[0] if node.key_fields else vq.join_field
    i = schema.index(field)
    table = _EntryTable(field, vq.wire_of(index, field), node.mask_level)
    if node.entries is not None:
        table.install(node.entries)
    kind = "zoom" if node.join_query is None else "join"

    def run(rec):
        v = rec[i]
        if v is None:
            return None
        level = table.level
        probe = mask_value(v, field, level) if level is not None else v
        return rec if probe in table.entries else None

    return _Stage("match_table", index, run, table.bits, dynamic_table=kind,
                  table=table, label=f"{kind} table on {field}")


class _QueryPipeline:
    """Compiled prefix of one installed query."""

    def __init__(self, installed: InstalledQuery, rng: Random):
        vq = installed.query
        if not 0 <= installed.p <= vq.num_operators:
            raise UnsupportedPlanError(
                f"partition {installed.p} outside 0..{vq.num_operators}")
        geometry = sketch_dimensions(vq.error_tolerance)
        stages: list[_Stage] = []
        for index in range(installed.p):
            node = vq.operators[index]
            if node.kind == "filter":
                stages.append(_compile_filter(node, vq, index))
            elif node.kind == "map":
                stages.append(_compile_map(node, vq, index))
            elif node.kind == "distinct":
                stages.append(_compile_distinct(node, vq, index, installed.sketch,
                                                geometry, rng))
            elif node.kind == "reduce":
                stages.append(_compile_reduce(node, vq, index, installed.sketch,
                                              geometry, rng))
            elif node.kind == "sample":
                stages.append(_compile_sample(node, index))
            elif node.kind == "join":
                stages.append(_compile_join(node, vq, index))
            else:
                raise UnsupportedPlanError(f"operator {node.kind!r} has no stage form")
        self.installed = installed
        self.stages = stages
        self.report_bits = 1 if installed.p >= 1 else 0

    def dynamic_tables(self) -> dict[str, _EntryTable]:
        tables = {}
        for stage in self.stages:
            if stage.dynamic_table:
                tables[stage.dynamic_table] = stage.table
        return tables


class PisaSwitch:
    """A switch running one or more query prefixes over shadow metadata."""

    def __init__(self, installed: list[InstalledQuery], seed: int = 0):
        rng = Random(seed)
        self.pipelines: dict[str, _QueryPipeline] = {}
        for item in installed:
            if item.name in self.pipelines:
                raise UnsupportedPlanError(f"query {item.name!r} installed twice")
            self.pipelines[item.name] = _QueryPipeline(item, rng)
        self.union_reports = 0

    # -- runtime ---------------------------------------------------------

    def process_packet(self, record, window: int | None = None) -> ReportTuple | None:
        """Run one packet (a record in the input schema) through every query."""
        metadata = []
        for name, pipeline in self.pipelines.items():
            rec = record
            for stage in pipeline.stages:
                rec = stage.run(rec)
                if rec is None:
                    break
            if rec is not None:
                metadata.append((name, rec))
        if not metadata:
            return None
        self.union_reports += 1
        return ReportTuple(window=window, metadata=tuple(metadata))

    def process_window(self, records, window: int | None = None,
                       capture: bool = False):
        """Replay a window; optionally capture per-stage survivor records.

        Returns (report_tuples, captures) where captures maps query name to
        a list indexed by prefix depth: captures[name][p] holds the records
        that survived the first p stages, so captures[name][p] is exactly
        the report stream partition p would have mirrored.
        """
        report_tuples = []
        captures = {}
        if capture:
            for name, pipeline in self.pipelines.items():
                captures[name] = [list(records) if p == 0 else []
                                  for p in range(len(pipeline.stages) + 1)]
        for record in records:
            metadata = []
            for name, pipeline in self.pipelines.items():
                rec = record
                if capture:
                    depth = 0
                    store = captures[name]
                    for stage in pipeline.stages:
                        rec = stage.run(rec)
                        if rec is None:
                            break
                        depth += 1
                        store[depth].append(rec)
                else:
                    for stage in pipeline.stages:
                        rec = stage.run(rec)
                        if rec is None:
                            break
                if rec is not None:
                    metadata.append((name, rec))
            if metadata:
                self.union_reports += 1
                report_tuples.append(ReportTuple(window=window, metadata=tuple(metadata)))
        return report_tuples, captures

    def reports_for(self, report_tuples, name: str) -> list[tuple]:
        return [rec for rt in report_tuples for q, rec in rt.metadata if q == name]

    # -- control ---------------------------------------------------------

    def install_filter_entries(self, name: str, entries, table: str | None = None,
                               level=None) -> None:
        """Replace a query's join or zoom table contents."""
        pipeline = self.pipelines[name]
        tables = pipeline.dynamic_tables()
        if not tables:
            raise UnsupportedPlanError(f"query {name!r} has no runtime table in-plane")
        if table is None:
            if len(tables) > 1:
                raise UnsupportedPlanError(
                    f"query {name!r} has tables {sorted(tables)}; pick one")
            table = next(iter(tables))
        if table not in tables:
            raise UnsupportedPlanError(f"query {name!r} has no {table!r} table in-plane")
        tables[table].install(entries, level=level)

    def reset_window(self) -> None:
        """Zero stores, sketches, and counters; match entries persist."""
        for pipeline in self.pipelines.values():
            for stage in pipeline.stages:
                if stage.reset is not None:
                    stage.reset()

    # -- ledger ----------------------------------------------------------

    def state_bits(self) -> int:
        return sum(self.query_bits(name) for name in self.pipelines)

    def query_bits(self, name: str, p: int | None = None) -> int:
        """State bits charged to one query's prefix (first p stages if given)."""
        pipeline = self.pipelines[name]
        limit = len(pipeline.stages) if p is None else p
        total = sum(stage.bits() for stage in pipeline.stages[:limit])
        if limit >= 1:
            total += 1   # report bit
        return total

    def ledger(self) -> list[tuple[str, int, str, str, int]]:
        """Per-stage accounting rows: (query, op index, kind, label, bits)."""
        rows = []
        for name, pipeline in self.pipelines.items():
            for stage in pipeline.stages:
                rows.append((name, stage.op_index, stage.kind, stage.label,
                             stage.bits()))
            if pipeline.report_bits:
                rows.append((name, -1, "report_bit", "mirror gate", 1))
        return rows
