"""Plan search: choose a refinement walk and partition for each query.

A query's plan space is a layered graph.  A vertex fixes what one window
of the walk runs: a mask level, an in-plane prefix length, and whether
stateful stages are sketched.  Interval 1 vertices run ungated, later
intervals run gated by the previous vertex's crossing buckets, and edges
only move strictly coarser to finer, so every Src-to-Tgt path is a
coarse-to-fine walk ending at the native level.  The interval budget is
the allowed detection delay in windows, capped by the ladder height.

Edge costs are measured, not modeled: each training window is replayed
through the source-gated, destination-configured pipeline and the mirrored
tuple count and state bits are read off and normalized by the switch
capacities.  An edge that alone exceeds either capacity is pruned.  The
scalar weight blends the two normalized loads as alpha*n + (1-alpha)*b.

Across training windows the best path differs, so selection minimizes the
root-mean-square regret against each window's own optimum.  Multi-query
planning shares one alpha, checks the summed worst-step loads against the
capacities, and escapes violations by bisecting alpha toward the violated
dimension, then by greedy plan swaps, then by bounded exhaustive search,
so an infeasibility verdict on a small space is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import InfeasiblePlanError, QueryValidationError
from .fields import finest_level, mask_value
from .partition import PartitionPlan, enumerate_partitions, profile_costs
from .qlang import ValidatedQuery
from .refine import backtrack_thresholds, refine_query
from .stream import execute_window

SRC = "src"
TGT = "tgt"


@dataclass(frozen=True, order=True)
class Vertex:
    """One interval's configuration: (interval, level, prefix, sketch)."""

    interval: int
    level: int
    p: int
    sketch: bool = False

    @property
    def plan(self) -> PartitionPlan:
        return PartitionPlan(self.p, self.sketch)


class PlanGraph:
    """Layered plan space of one query.

    ``key=None`` degenerates to a single unrefined interval whose vertices
    are just the base query's partitions.
    """

    def __init__(self, vq: ValidatedQuery, key: str | None, levels=(),
                 thresholds=None, known=None, intervals: int | None = None,
                 partitions=None):
        self.vq = vq
        self.key = key
        self.known = known or {}
        if key is None:
            self.levels = (None,)
            self.intervals = 1
            self.thresholds = {}
        else:
            if key not in vq.refinement_keys:
                raise QueryValidationError(
                    f"{key!r} is not a refinement key of {vq.name!r}")
            self.levels = tuple(sorted(levels))
            if not self.levels or self.levels[-1] != finest_level(key):
                raise QueryValidationError(
                    f"ladder for {key!r} must end at level {finest_level(key)}")
            budget = int(vq.d_max / vq.window)
            self.intervals = min(budget, len(self.levels))
            if intervals is not None:
                self.intervals = min(self.intervals, intervals)
            if self.intervals < 1:
                raise QueryValidationError(
                    f"query {vq.name!r} allows no full interval within dmax")
            self.thresholds = dict(thresholds or {})
        self._variant_cache: dict = {}
        self._build(partitions)

    # -- structure -------------------------------------------------------

    def variant(self, level, gated: bool) -> ValidatedQuery:
        """The chain one vertex executes; entries and gates stay abstract."""
        if self.key is None:
            return self.vq
        cached = self._variant_cache.get((level, gated))
        if cached is None:
            zoom_level = 0 if gated else None
            threshold = None if level == self.levels[-1] else \
                self.thresholds.get(level)
            cached = refine_query(self.vq, self.key, level,
                                  zoom_level=zoom_level, threshold=threshold,
                                  known=self.known).query
            self._variant_cache[(level, gated)] = cached
        return cached

    def _build(self, partitions) -> None:
        def plans_for(level, gated):
            chain = self.variant(level, gated)
            plans = enumerate_partitions(chain)
            if partitions is not None:
                wanted = {(q.p, q.sketch) if isinstance(q, PartitionPlan)
                          else (q, False) for q in partitions}
                plans = [pl for pl in plans if (pl.p, pl.sketch) in wanted]
            return plans

        finest = self.levels[-1]
        self.vertices: list[Vertex] = []
        for i in range(1, self.intervals + 1):
            for li, level in enumerate(self.levels):
                if i >= 2 and li == 0:
                    continue               # nothing coarser to come from
                if i == self.intervals and level != finest and \
                        self.intervals > 1:
                    continue               # cannot reach the target in time
                if level != finest and i == self.intervals == 1:
                    continue
                for plan in plans_for(level, gated=i >= 2):
                    self.vertices.append(Vertex(i, self._rank(level), plan.p,
                                                plan.sketch))
        self.vertices.sort()
        self._succ: dict = {SRC: []}
        for v in self.vertices:
            self._succ.setdefault(v, [])
        finest_rank = len(self.levels) - 1
        for v in self.vertices:
            if v.interval == 1:
                self._succ[SRC].append(v)
            if v.level == finest_rank:
                self._succ[v].append(TGT)
            for u in self.vertices:
                if u.interval == v.interval + 1 and u.level > v.level:
                    self._succ[v].append(u)
        for u in self._succ:
            self._succ[u].sort(key=lambda x: (0,) if x == TGT else (1, x))

    def _rank(self, level) -> int:
        return self.levels.index(level)

    def level_of(self, vertex: Vertex):
        return self.levels[vertex.level]

    def successors(self, u):
        return self._succ.get(u, ())

    def count_paths(self) -> int:
        memo = {TGT: 1}

        def walk(u):
            if u not in memo:
                memo[u] = sum(walk(v) for v in self.successors(u))
            return memo[u]

        return walk(SRC)

    def paths(self):
        """Every Src-to-Tgt walk as a tuple of vertices, in sorted order."""
        stack: list = []

        def walk(u):
            if u == TGT:
                yield tuple(stack)
                return
            for v in self.successors(u):
                if v != TGT:
                    stack.append(v)
                    yield from walk(v)
                    stack.pop()
                else:
                    yield from walk(v)

        yield from walk(SRC)


# -- measured costs ------------------------------------------------------


class WindowCosts:
    """Edge costs of one graph measured over one training window.

    Costs are cached by (source level, destination level, partition): the
    interval index never changes what a step does, so a walk's cost is a
    sum of pair costs.  Gate entries come from running the source level
    ungated on the same window, the stationary-training idealization; join
    partners contribute their exact full-resolution output on the window.
    """

    def __init__(self, graph: PlanGraph, records, n_max: int, b_max: int,
                 seed: int = 0, join_entries=None):
        if n_max <= 0 or b_max <= 0:
            raise InfeasiblePlanError("switch capacities must be positive",
                                      binding="tuples" if n_max <= 0 else "state")
        self.graph = graph
        self.records = list(records)
        self.n_max = n_max
        self.b_max = b_max
        self.seed = seed
        self.join_entries = join_entries
        self._gate_cache: dict = {}
        self._pair_cache: dict = {}

    def _joined_at(self, level):
        if self.join_entries is None:
            return None
        vq, key = self.graph.vq, self.graph.key
        if key is not None and vq.join_field == key and \
                level != self.graph.levels[-1]:
            return frozenset(mask_value(e, key, level) for e in self.join_entries)
        return frozenset(self.join_entries)

    def _gate_entries(self, level) -> frozenset:
        """Buckets at ``level`` that cross their threshold on this window."""
        if level not in self._gate_cache:
            chain = self.graph.variant(level, gated=False)
            joined = self._joined_at(level)
            result = execute_window(chain, self.records, joined=joined)
            ki = chain.output_schema.index(self.graph.key)
            self._gate_cache[level] = frozenset(r[ki] for r in result.outputs)
        return self._gate_cache[level]

    def edge(self, u, v) -> "CostPoint":
        if v == TGT:
            return CostPoint(0, 0, 0.0, 0.0)
        src_level = None if u == SRC else self.graph.level_of(u)
        dst_level = self.graph.level_of(v)
        key = (src_level, dst_level, v.p, v.sketch)
        if key not in self._pair_cache:
            self._measure_pair(src_level, dst_level)
        return self._pair_cache[key]

    def _measure_pair(self, src_level, dst_level) -> None:
        graph = self.graph
        if graph.key is None:
            chain = graph.vq
        else:
            gated = src_level is not None
            threshold = None if dst_level == graph.levels[-1] else \
                graph.thresholds.get(dst_level)
            chain = refine_query(
                graph.vq, graph.key, dst_level,
                zoom_level=src_level if gated else None,
                zoom_entries=self._gate_entries(src_level) if gated else None,
                threshold=threshold, known=graph.known).query
        plans = enumerate_partitions(chain)
        costs = profile_costs(chain, self.records, plans, self.n_max,
                              self.b_max, seed=self.seed,
                              join_entries=self._joined_at(dst_level))
        for plan, pair in costs.items():
            self._pair_cache[(src_level, dst_level, plan.p, plan.sketch)] = \
                CostPoint(pair.n_raw, pair.b_raw, pair.n, pair.b)


@dataclass(frozen=True)
class CostPoint:
    n_raw: int
    b_raw: int
    n: float
    b: float

    def weight(self, alpha: float) -> float | None:
        if self.n > 1 or self.b > 1:
            return None
        return alpha * self.n + (1 - alpha) * self.b


# -- path evaluation -----------------------------------------------------


def path_edges(path):
    prev = SRC
    for vertex in path:
        yield prev, vertex
        prev = vertex
    yield prev, TGT


def path_cost(path, costs: WindowCosts, alpha: float) -> float | None:
    """Left-to-right sum of edge weights; None when any edge is pruned."""
    total = 0.0
    for u, v in path_edges(path):
        w = costs.edge(u, v).weight(alpha)
        if w is None:
            return None
        total += w
    return total


def path_raws(path, costs: WindowCosts) -> tuple[int, int]:
    """Worst-step raw loads (tuples, bits) of a walk on one window."""
    worst_n = worst_b = 0
    for u, v in path_edges(path):
        point = costs.edge(u, v)
        worst_n = max(worst_n, point.n_raw)
        worst_b = max(worst_b, point.b_raw)
    return worst_n, worst_b


def shortest_path(graph: PlanGraph, costs: WindowCosts, alpha: float):
    """Cheapest walk under one window's weights, deterministically broken.

    Ties fall to the shorter walk, then the lexicographically least vertex
    sequence; weights accumulate left to right exactly as `path_cost` does
    so exhaustive comparison reproduces the same floats.
    """
    best = {SRC: (0.0, 0, (), ())}
    order = [SRC] + graph.vertices
    for u in order:
        if u not in best:
            continue
        dist, length, seq, path = best[u]
        for v in graph.successors(u):
            w = costs.edge(u, v).weight(alpha)
            if w is None:
                continue
            if v == TGT:
                cand = (dist + w, length, seq, path)
            else:
                cand = (dist + w, length + 1, seq + (v,), path + (v,))
            if v not in best or cand[:3] < best[v][:3]:
                best[v] = cand
    hit = best.get(TGT)
    return None if hit is None else hit[3]


def _mean_costs(window_costs: list[WindowCosts]) -> dict:
    """Edge -> averaged CostPoint; pruned anywhere means pruned here."""
    graph = window_costs[0].graph
    out = {}
    for u in [SRC] + graph.vertices:
        for v in graph.successors(u):
            points = [costs.edge(u, v) for costs in window_costs]
            if any(p.n > 1 or p.b > 1 for p in points):
                out[(u, v)] = None
                continue
            m = len(points)
            out[(u, v)] = CostPoint(
                max(p.n_raw for p in points), max(p.b_raw for p in points),
                sum(p.n for p in points) / m, sum(p.b for p in points) / m)
    return out


def k_best_paths(graph: PlanGraph, window_costs: list[WindowCosts],
                 alpha: float, k: int) -> list[tuple]:
    """The k cheapest everywhere-feasible walks under averaged weights."""
    mean = _mean_costs(window_costs)
    best: dict = {SRC: [(0.0, 0, (), ())]}
    for u in [SRC] + graph.vertices:
        if u not in best:
            continue
        for v in graph.successors(u):
            point = mean[(u, v)]
            w = None if point is None else point.weight(alpha)
            if w is None:
                continue
            bucket = best.setdefault(v, [])
            for dist, length, seq, path in best[u]:
                if v == TGT:
                    bucket.append((dist + w, length, seq, path))
                else:
                    bucket.append((dist + w, length + 1, seq + (v,), path + (v,)))
            bucket.sort(key=lambda c: c[:3])
            del bucket[k:]
    return [entry[3] for entry in best.get(TGT, [])]


@dataclass(frozen=True)
class Candidate:
    """A feasible walk with its training-regret and per-window loads."""

    path: tuple
    rmse: float
    raws: tuple[tuple[int, int], ...]


def _pruning_binding(window_costs: list[WindowCosts]) -> str:
    over_n = over_b = 0
    graph = window_costs[0].graph
    for costs in window_costs:
        for u in [SRC] + graph.vertices:
            for v in graph.successors(u):
                point = costs.edge(u, v)
                if point.n > 1:
                    over_n += 1
                if point.b > 1:
                    over_b += 1
    if over_n and over_b:
        return "both"
    return "tuples" if over_n else "state"


def evaluate_candidates(graph: PlanGraph, window_costs: list[WindowCosts],
                        alpha: float, k: int = 100,
                        path_cap: int = 10_000) -> list[Candidate]:
    """Everywhere-feasible walks ranked by RMSE regret.

    The regret of a walk is measured against each window's own optimum;
    candidates are every walk when the space is small, otherwise each
    window's optimum plus the k best under averaged weights.
    """
    optima = []
    for costs in window_costs:
        path = shortest_path(graph, costs, alpha)
        if path is None:
            raise InfeasiblePlanError(
                f"no walk of {graph.vq.name!r} fits the switch in every window",
                binding=_pruning_binding(window_costs))
        optima.append((path, path_cost(path, costs, alpha)))
    if graph.count_paths() <= path_cap:
        candidates = list(graph.paths())
    else:
        seen = {path for path, _ in optima}
        candidates = sorted(seen) + \
            [p for p in k_best_paths(graph, window_costs, alpha, k)
             if p not in seen]
    ranked = []
    for path in candidates:
        per_window = []
        feasible = True
        for costs in window_costs:
            cost = path_cost(path, costs, alpha)
            if cost is None:
                feasible = False
                break
            per_window.append(cost)
        if not feasible:
            continue
        regret = [cost - opt for cost, (_, opt) in zip(per_window, optima)]
        rmse = math.sqrt(sum(r * r for r in regret) / len(regret))
        raws = tuple(path_raws(path, costs) for costs in window_costs)
        ranked.append(Candidate(path=path, rmse=rmse, raws=raws))
    if not ranked:
        raise InfeasiblePlanError(
            f"no walk of {graph.vq.name!r} fits the switch in every window",
            binding=_pruning_binding(window_costs))
    ranked.sort(key=lambda c: (c.rmse, len(c.path), c.path))
    return ranked


# -- plans ---------------------------------------------------------------


@dataclass(frozen=True)
class PlanStep:
    interval: int
    level: int | None
    p: int
    sketch: bool = False


@dataclass(frozen=True)
class QueryPlan:
    """A selected walk, ready to serialize or execute."""

    query: str
    key: str | None
    alpha: float
    seed: int
    window: float
    steps: tuple[PlanStep, ...]
    thresholds: tuple[tuple[int | None, float], ...]
    training: tuple[tuple[int, int], ...]
    rmse: float = 0.0


def _plan_from_candidate(graph: PlanGraph, cand: Candidate, alpha: float,
                         seed: int) -> QueryPlan:
    steps = tuple(PlanStep(v.interval, graph.level_of(v), v.p, v.sketch)
                  for v in cand.path)
    thresholds = tuple(sorted(graph.thresholds.items()))
    return QueryPlan(query=graph.vq.name, key=graph.key, alpha=alpha,
                     seed=seed, window=graph.vq.window, steps=steps,
                     thresholds=thresholds, training=cand.raws, rmse=cand.rmse)


def plan_to_dict(plan: QueryPlan) -> dict:
    return {
        "format": "sonata-plan/1",
        "query": plan.query,
        "refinement_key": plan.key,
        "alpha": plan.alpha,
        "seed": plan.seed,
        "window_seconds": plan.window,
        "steps": [{"interval": s.interval, "level": s.level, "partition": s.p,
                   "sketch": s.sketch} for s in plan.steps],
        "thresholds": {str(level): value for level, value in plan.thresholds},
        "training": [{"window": i, "tuples": n, "bits": b}
                     for i, (n, b) in enumerate(plan.training)],
        "rmse": plan.rmse,
    }


def plan_from_dict(data: dict) -> QueryPlan:
    if data.get("format") != "sonata-plan/1":
        raise QueryValidationError(
            f"unknown plan format {data.get('format')!r}")
    steps = tuple(PlanStep(s["interval"], s["level"], s["partition"],
                           bool(s.get("sketch", False)))
                  for s in data["steps"])
    thresholds = tuple(sorted(
        (None if k == "None" else int(k), v)
        for k, v in data.get("thresholds", {}).items()))
    training = tuple((row["tuples"], row["bits"])
                     for row in data.get("training", []))
    return QueryPlan(query=data["query"], key=data.get("refinement_key"),
                     alpha=data["alpha"], seed=data.get("seed", 0),
                     window=data["window_seconds"], steps=steps,
                     thresholds=thresholds, training=training,
                     rmse=data.get("rmse", 0.0))


def dump_plans(plans: list[QueryPlan]) -> str:
    """Stable text form: identical inputs give identical bytes."""
    return json.dumps([plan_to_dict(p) for p in plans], indent=2,
                      sort_keys=True) + "\n"


def load_plans(text: str) -> list[QueryPlan]:
    return [plan_from_dict(d) for d in json.loads(text)]


# -- planning entry points -----------------------------------------------


@dataclass(frozen=True)
class PlanRequest:
    """One query's planning inputs: what to refine and over which ladder."""

    vq: ValidatedQuery
    key: str | None = None
    levels: tuple = ()
    thresholds: dict | None = None   # per-level overrides; None backtracks


def _join_entries_per_window(request: PlanRequest, training_windows,
                             known: dict) -> list | None:
    """Partner outputs per window: full-resolution, same-window idealization."""
    vq = request.vq
    if vq.join_target is None:
        return None
    partner = known.get(vq.join_target)
    if partner is None:
        raise QueryValidationError(
            f"join target {vq.join_target!r} of {vq.name!r} not available")
    ji = partner.output_schema.index(vq.join_field)
    out = []
    for records in training_windows:
        result = execute_window(partner, records)
        out.append(frozenset(r[ji] for r in result.outputs))
    return out


def build_graph(request: PlanRequest, known=None, intervals=None,
                partitions=None, thresholds=None,
                training_windows=()) -> PlanGraph:
    """Construct the plan space, backtracking thresholds when needed."""
    vq, key = request.vq, request.key
    if key is None:
        return PlanGraph(vq, None)
    if thresholds is None:
        thresholds = request.thresholds
    if thresholds is None:
        joined = _join_entries_per_window(request, training_windows, known or {})
        thresholds = backtrack_thresholds(vq, key, request.levels,
                                          training_windows,
                                          joined_per_window=joined,
                                          known=known)
    return PlanGraph(vq, key, request.levels, thresholds, known=known,
                     intervals=intervals, partitions=partitions)


def measure_windows(graph: PlanGraph, training_windows, n_max: int,
                    b_max: int, seed: int = 0, known=None) -> list[WindowCosts]:
    request = PlanRequest(graph.vq, graph.key, graph.levels)
    joined = _join_entries_per_window(request, training_windows, known or {})
    out = []
    for w, records in enumerate(training_windows):
        entries = joined[w] if joined is not None else None
        out.append(WindowCosts(graph, records, n_max, b_max, seed=seed,
                               join_entries=entries))
    return out


def plan_single(vq: ValidatedQuery, key: str | None, levels, training_windows,
                n_max: int, b_max: int, alpha: float = 0.5, seed: int = 0,
                known=None, intervals=None, partitions=None,
                thresholds=None) -> QueryPlan:
    """Plan one query alone against the full switch capacities."""
    request = PlanRequest(vq, key, tuple(levels))
    graph = build_graph(request, known=known, intervals=intervals,
                        partitions=partitions, thresholds=thresholds,
                        training_windows=training_windows)
    costs = measure_windows(graph, training_windows, n_max, b_max, seed=seed,
                            known=known)
    best = evaluate_candidates(graph, costs, alpha)[0]
    return _plan_from_candidate(graph, best, alpha, seed)


def tune_alpha(probe, start: float = 0.5, resolution: float = 2 ** -10):
    """Bisect the blend only as far as needed to escape infeasibility.

    ``probe(alpha)`` returns (plans, tuples_violated, state_violated).  The
    first feasible probe wins, so a workload that fits at the midpoint is
    never re-weighted.  Tuple pressure pushes alpha up (mirrored traffic
    costs more), state pressure pushes it down; pressure on both at once,
    or running out of resolution, is a verdict of infeasibility.
    """
    lo, hi, alpha = 0.0, 1.0, start
    while True:
        plans, n_viol, b_viol = probe(alpha)
        if not n_viol and not b_viol:
            return alpha, plans
        if n_viol and b_viol:
            raise InfeasiblePlanError(
                "both capacities exceeded at every plan blend", binding="both")
        if n_viol:
            lo, nxt = alpha, (alpha + hi) / 2
        else:
            hi, nxt = alpha, (lo + alpha) / 2
        if abs(nxt - alpha) < resolution:
            raise InfeasiblePlanError(
                "capacity still exceeded at the finest blend step",
                binding="tuples" if n_viol else "state")
        alpha = nxt


def _window_totals(chosen: dict[str, Candidate], window_count: int):
    totals = []
    for w in range(window_count):
        totals.append((sum(c.raws[w][0] for c in chosen.values()),
                       sum(c.raws[w][1] for c in chosen.values())))
    return totals


def _excess(totals, n_max, b_max) -> tuple[float, float]:
    over_n = max((n - n_max) / n_max for n, _ in totals)
    over_b = max((b - b_max) / b_max for _, b in totals)
    return max(over_n, 0.0), max(over_b, 0.0)


def _repair(candidates: dict[str, list[Candidate]], chosen: dict[str, int],
            window_count: int, n_max: int, b_max: int,
            rounds: int = 100) -> dict[str, int]:
    """Greedy swaps toward feasibility, deterministic and monotone.

    Each round applies the swap with the best violation reduction per unit
    of added regret; rounds stop at feasibility or when no swap helps.
    """
    def picked(assignment):
        return {name: candidates[name][i] for name, i in assignment.items()}

    def violation(assignment) -> float:
        over_n, over_b = _excess(_window_totals(picked(assignment),
                                                window_count), n_max, b_max)
        return over_n + over_b

    current = dict(chosen)
    for _ in range(rounds):
        now = violation(current)
        if now == 0.0:
            break
        best_swap, best_score = None, None
        for name in sorted(candidates):
            held = current[name]
            for j, cand in enumerate(candidates[name]):
                if j == held:
                    continue
                trial = dict(current)
                trial[name] = j
                gain = now - violation(trial)
                if gain <= 0.0:
                    continue
                added = max(cand.rmse - candidates[name][held].rmse, 1e-12)
                score = (-gain / added, name, j)
                if best_score is None or score < best_score:
                    best_swap, best_score = (name, j), score
        if best_swap is None:
            break
        current[best_swap[0]] = best_swap[1]
    return current


def _exhaustive(candidates: dict[str, list[Candidate]], window_count: int,
                n_max: int, b_max: int, cap: int = 20_000):
    """Scan every combination when the space is small; None when too big."""
    total = 1
    for options in candidates.values():
        total *= len(options)
        if total > cap:
            return None, False
    names = sorted(candidates)
    best = None

    def walk(i, assignment):
        nonlocal best
        if i == len(names):
            picked = {n: candidates[n][assignment[n]] for n in names}
            over_n, over_b = _excess(_window_totals(picked, window_count),
                                     n_max, b_max)
            if over_n == 0.0 and over_b == 0.0:
                score = (sum(c.rmse for c in picked.values()),
                         tuple(assignment[n] for n in names))
                if best is None or score < best[0]:
                    best = (score, dict(assignment))
            return
        for j in range(len(candidates[names[i]])):
            assignment[names[i]] = j
            walk(i + 1, assignment)

    walk(0, {})
    if best is None:
        return None, True
    return best[1], True


def plan_multi(requests: list[PlanRequest], training_windows, n_max: int,
               b_max: int, alpha: float | None = None, seed: int = 0,
               known=None, intervals=None,
               partitions=None) -> tuple[float, dict[str, QueryPlan]]:
    """Plan a query set under shared capacities and one shared blend.

    Feasibility is judged per training window on summed worst-step raw
    loads.  A fixed ``alpha`` is checked as-is; otherwise the blend is
    tuned from 0.5.  Violations fall through plan swaps and, on small
    candidate spaces, exhaustive search before infeasibility is declared.
    """
    known = known or {}
    graphs: dict[str, PlanGraph] = {}
    costs: dict[str, list[WindowCosts]] = {}
    for request in requests:
        graph = build_graph(request, known=known, intervals=intervals,
                            partitions=partitions,
                            training_windows=training_windows)
        graphs[request.vq.name] = graph
        costs[request.vq.name] = measure_windows(graph, training_windows,
                                                 n_max, b_max, seed=seed,
                                                 known=known)
    window_count = len(training_windows)

    def probe(a: float):
        candidates = {name: evaluate_candidates(graphs[name], costs[name], a)
                      for name in graphs}
        chosen = {name: 0 for name in candidates}
        picked = {name: candidates[name][0] for name in candidates}
        over_n, over_b = _excess(_window_totals(picked, window_count),
                                 n_max, b_max)
        if over_n or over_b:
            chosen = _repair(candidates, chosen, window_count, n_max, b_max)
            picked = {name: candidates[name][chosen[name]]
                      for name in candidates}
            over_n, over_b = _excess(_window_totals(picked, window_count),
                                     n_max, b_max)
        if over_n or over_b:
            assignment, decisive = _exhaustive(candidates, window_count,
                                               n_max, b_max)
            if assignment is not None:
                chosen = assignment
                picked = {name: candidates[name][chosen[name]]
                          for name in candidates}
                over_n, over_b = _excess(_window_totals(picked, window_count),
                                         n_max, b_max)
            elif decisive:
                raise InfeasiblePlanError(
                    "no combination of candidate plans fits the switch",
                    binding="tuples" if over_n >= over_b else "state")
        plans = {name: _plan_from_candidate(graphs[name], picked[name], a, seed)
                 for name in picked}
        return plans, over_n > 0, over_b > 0

    if alpha is not None:
        plans, n_viol, b_viol = probe(alpha)
        if n_viol or b_viol:
            raise InfeasiblePlanError(
                "query set exceeds switch capacity at the fixed blend",
                binding="both" if n_viol and b_viol
                else ("tuples" if n_viol else "state"))
        return alpha, plans
    return tune_alpha(probe)
