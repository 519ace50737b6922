"""Query partitioning: which prefixes can run in-plane, and at what cost.

A prefix is refusable for two kinds of reason.  Hardware limits: entropy
has no incremental form, domain-name masking needs variable string surgery,
and sketched stores only exist for membership (bloom) and linear aggregates
(count-min).  Semantic limits: a prefix that ends after a reduce mirrors
running aggregates, and the stream side can only collapse those exactly
when the reduce keys survive to the cut, no later stateful operator mixes
the stream, and any filter over the running value is closed under the
aggregate's direction of movement (sum, count and max only grow, min only
shrinks), so a record that passes once passes forever after.

Costs are measured, not modeled: compile the prefix, replay a window, and
read off the mirrored-tuple count and the state ledger.  One capture pass
yields every partition depth at once, because the contents of stage j
depend only on the records that reached it, never on deeper stages.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnsupportedPlanError
from .fields import hierarchy_kind
from .pisa import InstalledQuery, PisaSwitch
from .qlang import AGG_FIELD, ValidatedQuery

_UPWARD = {"sum": (">", ">="), "count": (">", ">="), "max": (">", ">="),
           "min": ("<", "<=")}


@dataclass(frozen=True)
class PartitionPlan:
    """Run the first p operators in-plane, the rest in the stream engine."""

    p: int
    sketch: bool = False


@dataclass(frozen=True)
class CostPair:
    """Measured load of one partition over one window."""

    n_raw: int
    b_raw: int
    n: float
    b: float


def _sketchable(node) -> bool:
    if node.kind == "distinct":
        return True
    return node.kind == "reduce" and node.reduce_func in ("sum", "count")


def is_supported(vq: ValidatedQuery, p: int, sketch: bool = False) -> bool:
    """True when the first p operators have an exact in-plane realization."""
    if not 0 <= p <= vq.num_operators:
        return False
    if p == 0:
        return not sketch
    last_reduce = None
    for index in range(p):
        node = vq.operators[index]
        if node.kind == "reduce":
            if node.reduce_func == "entropy":
                return False
            if last_reduce is not None:
                return False          # running outputs re-aggregated
            last_reduce = index
        elif node.kind in ("distinct", "sample"):
            if last_reduce is not None:
                return False          # would subsample running aggregates
        elif node.kind == "map":
            for item in node.items:
                if item.mask_level is not None and item.field is not None \
                        and hierarchy_kind(item.field) == "domain":
                    return False      # no in-plane label surgery
        elif node.kind == "filter" and last_reduce is not None:
            agg = AGG_FIELD[vq.operators[last_reduce].reduce_func]
            for operand in (node.predicate.lhs, node.predicate.rhs):
                if operand.kind == "field" and operand.field == agg:
                    allowed = _UPWARD[vq.operators[last_reduce].reduce_func]
                    if node.predicate.op not in allowed:
                        return False  # early pass could later fail
        elif node.kind == "join" and last_reduce is not None:
            field = node.key_fields[0] if node.key_fields else vq.join_field
            if field not in vq.operators[last_reduce].key_fields:
                return False          # probe value not fixed per key
    if last_reduce is not None and p > last_reduce + 1:
        keys = vq.operators[last_reduce].key_fields
        if any(k not in vq.schemas[p] for k in keys):
            return False              # stream side cannot collapse
    if sketch:
        stateful = [vq.operators[i] for i in range(p)
                    if vq.operators[i].kind in ("distinct", "reduce")]
        if not stateful or not all(_sketchable(node) for node in stateful):
            return False
    return True


def enumerate_partitions(vq: ValidatedQuery) -> list[PartitionPlan]:
    """All realizable partitions: exact depths plus sketched variants."""
    plans = []
    for p in range(vq.num_operators + 1):
        if is_supported(vq, p):
            plans.append(PartitionPlan(p, sketch=False))
            if p >= 1 and is_supported(vq, p, sketch=True):
                plans.append(PartitionPlan(p, sketch=True))
    return plans


def profile_costs(vq: ValidatedQuery, records, plans, n_max: int, b_max: int,
                  seed: int = 0, join_entries=None,
                  zoom_entries=None) -> dict[PartitionPlan, CostPair]:
    """Measure every requested partition of one query over one window.

    Partitions sharing a store mode share a single capture replay; the
    records reaching stage j are identical whichever later stage the cut
    falls on, so per-depth report streams and per-depth state bits can all
    be read from the deepest compiled prefix.
    """
    if n_max <= 0 or b_max <= 0:
        raise ValueError("normalization capacities must be positive")
    for plan in plans:
        if not is_supported(vq, plan.p, plan.sketch):
            raise UnsupportedPlanError(
                f"partition p={plan.p} sketch={plan.sketch} of {vq.name!r}")
    out: dict[PartitionPlan, CostPair] = {}
    for mode in (False, True):
        depths = sorted(plan.p for plan in plans if plan.sketch is mode)
        if not depths:
            continue
        if depths == [0]:
            for plan in plans:
                if plan.sketch is mode:
                    n_raw = len(records)
                    out[plan] = CostPair(n_raw, 0, n_raw / n_max, 0.0)
            continue
        switch = PisaSwitch(
            [InstalledQuery(vq.name, vq, max(depths), sketch=mode)], seed=seed)
        _install_tables(switch, vq, join_entries, zoom_entries)
        _, captures = switch.process_window(records, capture=True)
        store = captures[vq.name]
        for plan in plans:
            if plan.sketch is not mode:
                continue
            n_raw = len(store[plan.p])
            b_raw = switch.query_bits(vq.name, plan.p)
            out[plan] = CostPair(n_raw, b_raw, n_raw / n_max, b_raw / b_max)
    return out


def get_cost(vq: ValidatedQuery, plan: PartitionPlan, records, n_max: int,
             b_max: int, seed: int = 0, join_entries=None,
             zoom_entries=None) -> CostPair:
    """Measured (tuples, bits) load of one partition over one window."""
    return profile_costs(vq, records, [plan], n_max, b_max, seed=seed,
                         join_entries=join_entries,
                         zoom_entries=zoom_entries)[plan]


def _install_tables(switch: PisaSwitch, vq: ValidatedQuery, join_entries,
                    zoom_entries) -> None:
    tables = switch.pipelines[vq.name].dynamic_tables()
    if join_entries is not None and "join" in tables:
        switch.install_filter_entries(vq.name, join_entries, table="join")
    if zoom_entries is not None and "zoom" in tables:
        switch.install_filter_entries(vq.name, zoom_entries, table="zoom")
