"""System acceptance gate: eight end-to-end criteria, one verdict line each.

Every test prints `[criterion N] <name>: PASS/FAIL (<measurement>)` and
then asserts, so `pytest tests/test_acceptance.py -v -s` shows the verdict
lines as the gate runs.  The criteria:

1. switch-prefix + stream-suffix output equals pure stream output, exactly,
   for every exact partition of the five stock queries over 100 random
   windows of 1,000 to 10,000 packets, in under a minute;
2. refined ladders with backtracked thresholds find exactly the satisfying
   keys on stationary replay, for a two-level and an eight-level grid;
3. the plan search matches exhaustive enumeration and brute-force regret
   ranking on randomly weighted graphs;
4. the count-min estimate stays within its advertised error for at least
   99% of keys, and the bloom filter never reports a false negative;
5. learned plans beat the shallow baselines by the floor factors on a
   skewed trace, and ladder length dictates detection delay;
6. in the anomaly scenario, mirrored traffic outside the injection is at
   most 1% of that inside, and detection lands within one window;
7. over a thousand random capacity pairs, returned plans fit the caps in
   every training window and infeasibility verdicts survive brute force;
8. identical inputs produce byte-identical plan and metrics files.
"""

import math
import time
from random import Random

from sonata.cli import main as cli_main
from sonata.corpus import standard_queries
from sonata.errors import InfeasiblePlanError
from sonata.fields import ipv4_from_str
from sonata.packets import PacketTuple
from sonata.partition import enumerate_partitions
from sonata.pisa import InstalledQuery, PisaSwitch
from sonata.planner import (SRC, TGT, CostPoint, PlanGraph, PlanRequest,
                            PlanStep, QueryPlan, evaluate_candidates,
                            plan_multi, shortest_path)
from sonata.qlang import parse_query_file, validate_file
from sonata.refine import backtrack_thresholds, iterate_refinement, satisfying_keys
from sonata.runner import (fixed_refinement_plans, part_of_plans,
                           part_pisa_plans, run_plans, stream_only_plans,
                           windows_from_packets)
from sonata.sketches import (BloomFilter, CountMinSketch, draw_seeds,
                             key_bytes, sketch_dimensions)
from sonata.stream import execute_window, records_from_packets, run_suffix
from sonata.tracegen import generate


def _verdict(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


def corpus(**thresholds):
    return validate_file(parse_query_file(standard_queries(thresholds=thresholds)))


def _ip(a, b, c, d):
    return (a << 24) | (b << 16) | (c << 8) | d


# -- criterion 1: partition equivalence ----------------------------------


def mixed_window(rng: Random, size: int):
    """A window exercising all five stock queries, thresholds straddled."""
    resolvers = [_ip(9, 1, i // 250, i % 250 + 1) for i in range(60)]
    hot = [_ip(172, 16, 0, k + 1) for k in range(6)]
    servers = [_ip(10, 0, 0, k + 1) for k in range(8)]
    spreaders = [_ip(7, 7, 0, k + 1) for k in range(4)]
    scanners = [_ip(6, 6, 0, k + 1) for k in range(3)]
    packets = []
    for i in range(size):
        ts = i * 1e-4
        roll = rng.random()
        if roll < 0.34:
            packets.append(PacketTuple(
                ts=ts, size=rng.randrange(80, 600), proto=17,
                srcIP=resolvers[rng.randrange(60)],
                dstIP=hot[rng.randrange(6)], srcPort=53,
                dstPort=rng.randrange(1024, 60000),
                dns_rr_type=46 if rng.random() < 0.5 else 1))
        elif roll < 0.56:
            packets.append(PacketTuple(
                ts=ts, size=rng.randrange(64, 512), proto=17,
                srcIP=_ip(8, 2, rng.randrange(4), rng.randrange(1, 250)),
                dstIP=hot[rng.randrange(3)],
                srcPort=rng.randrange(1024, 60000), dstPort=80))
        elif roll < 0.78:
            packets.append(PacketTuple(
                ts=ts, size=64, proto=6,
                srcIP=spreaders[rng.randrange(4)],
                dstIP=_ip(10, 9, rng.randrange(30), rng.randrange(1, 250)),
                srcPort=rng.randrange(1024, 60000), dstPort=80))
        else:
            packets.append(PacketTuple(
                ts=ts, size=60, proto=6,
                srcIP=scanners[rng.randrange(3)], dstIP=servers[0],
                srcPort=rng.randrange(1024, 60000),
                dstPort=rng.randrange(1, 400)))
    return records_from_packets(packets)


def test_criterion_1_partition_equivalence():
    queries = corpus(ddosUdp=15, superSpreader=15, portScan=15,
                     dnsVictims=15, reflectConfirm=8)
    exact = {name: sorted({pl.p for pl in enumerate_partitions(vq)
                           if not pl.sketch})
             for name, vq in queries.items()}
    rng = Random(1)
    started = time.monotonic()
    checked = 0
    for w in range(100):
        records = mixed_window(rng, rng.randint(1000, 10000))
        victims = frozenset(
            r[0] for r in execute_window(queries["dnsVictims"], records).outputs)
        oracle = {}
        for name, vq in queries.items():
            joined = victims if vq.join_target else None
            oracle[name] = execute_window(vq, records, joined=joined).outputs
        switch = PisaSwitch([InstalledQuery(name, vq, max(exact[name]))
                             for name, vq in queries.items()], seed=w)
        switch.install_filter_entries("reflectConfirm", victims, table="join")
        _, captures = switch.process_window(records, window=w, capture=True)
        for name, vq in queries.items():
            joined = victims if vq.join_target else None
            for p in exact[name]:
                suffix = run_suffix(vq, p, captures[name][p], joined=joined)
                assert suffix.outputs == oracle[name], (name, p, w)
                checked += 1
    elapsed = time.monotonic() - started
    _verdict(1, "partition equivalence", elapsed < 60.0,
             f"{checked} partition/window checks exact in {elapsed:.1f}s")


# -- criterion 2: refinement zero-miss -----------------------------------


def dns_window(flows):
    out, t = [], 0.0
    for serial, (dst, n) in enumerate(flows):
        for i in range(n):
            out.append(PacketTuple(
                ts=t, srcIP=_ip(172, serial % 200, i // 250, i % 250 + 1),
                dstIP=ipv4_from_str(dst), srcPort=53, size=64,
                dns_rr_type=46))
            t += 1e-4
    return records_from_packets(out)


def test_criterion_2_refinement_zero_miss():
    vq = corpus(dnsVictims=10)["dnsVictims"]
    grids = ([8, 32], [4, 8, 12, 16, 20, 24, 28, 32])
    rng = Random(2)
    misses = 0
    for _ in range(50):
        flows = [(f"10.{rng.randrange(6)}.{rng.randrange(4)}.{rng.randrange(1, 9)}",
                  rng.randint(1, 25))
                 for _ in range(rng.randint(1, 8))]
        window = dns_window(flows)
        truth = satisfying_keys(vq, "dstIP", window)
        for levels in grids:
            thresholds = backtrack_thresholds(vq, "dstIP", levels, [window])
            steps = iterate_refinement(vq, "dstIP", levels, thresholds,
                                       [window] * (2 * len(levels)))
            found = frozenset().union(*(s.detections for s in steps))
            if found != truth:
                misses += 1
    _verdict(2, "refinement zero-miss", misses == 0,
             f"50 workloads x {len(grids)} grids, {misses} set mismatches")


# -- criterion 3: planner against brute force ----------------------------


class RandomCosts:
    """Synthetic edge costs, materialized once in graph order."""

    def __init__(self, graph: PlanGraph, rng: Random, prune_rate: float):
        self.graph = graph
        self._edges = {}
        for u in [SRC] + graph.vertices:
            for v in graph.successors(u):
                if v != TGT and rng.random() < prune_rate:
                    point = CostPoint(10, 10, 1.5, 1.5)
                else:
                    point = CostPoint(rng.randrange(100), rng.randrange(1000),
                                      rng.random(), rng.random())
                self._edges[(u, v)] = point

    def edge(self, u, v) -> CostPoint:
        return self._edges[(u, v)]


def _manual_cost(path, costs, alpha):
    # same left-to-right accumulation as the planner, same floats
    total = 0.0
    prev = SRC
    for v in path + (TGT,):
        w = costs.edge(prev, v).weight(alpha)
        if w is None:
            return None
        total += w
        prev = v
    return total


def _brute_force(graph, cost_windows, alpha):
    paths = list(graph.paths())
    optima = []
    for costs in cost_windows:
        best = None
        for path in paths:
            cost = _manual_cost(path, costs, alpha)
            if cost is None:
                continue
            entry = (cost, len(path), path)
            if best is None or entry < best:
                best = entry
        optima.append(best)
    ranked = None
    if all(o is not None for o in optima):
        for path in paths:
            per = [_manual_cost(path, costs, alpha) for costs in cost_windows]
            if any(c is None for c in per):
                continue
            rmse = math.sqrt(sum((c - o[0]) ** 2
                                 for c, o in zip(per, optima)) / len(per))
            entry = (rmse, len(path), path)
            if ranked is None or entry < ranked:
                ranked = entry
    return optima, ranked


def test_criterion_3_planner_matches_brute_force():
    vq = corpus(dnsVictims=5)["dnsVictims"]
    full_grid = [4, 8, 12, 16, 20, 24, 28, 32]
    rng = Random(3)
    matched = infeasible = 0
    for trial in range(100):
        if trial == 0:
            levels, q, intervals, n_windows = full_grid, 4, 20, 1
        else:
            count = rng.randint(2, 6)
            levels = sorted(rng.sample(full_grid[:-1], count - 1)) + [32]
            q, intervals = rng.randint(1, 3), rng.randint(1, 20)
            n_windows = rng.randint(1, 2)
        graph = PlanGraph(vq, "dstIP", levels,
                          {lv: 5.0 for lv in levels},
                          intervals=intervals,
                          partitions=list(range(1, q + 1)))
        if trial == 0:
            assert graph.count_paths() == 312_500
        alpha = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0])
        prune_rate = 0.05 if trial < 70 else 0.5   # late trials force pruning
        cost_windows = [RandomCosts(graph, rng, prune_rate=prune_rate)
                        for _ in range(n_windows)]
        want_optima, want_best = _brute_force(graph, cost_windows, alpha)
        for costs, want in zip(cost_windows, want_optima):
            got_path = shortest_path(graph, costs, alpha)
            assert got_path == (None if want is None else want[2]), trial
        try:
            got = evaluate_candidates(graph, cost_windows, alpha,
                                      path_cap=graph.count_paths())[0]
        except InfeasiblePlanError:
            assert want_best is None, trial
            infeasible += 1
            continue
        assert want_best is not None, trial
        assert got.path == want_best[2], (trial, got.path, want_best)
        assert abs(got.rmse - want_best[0]) < 1e-9
        matched += 1
    _verdict(3, "planner oracle equivalence", True,
             f"{matched} trials matched exhaustive search exactly, "
             f"{infeasible} infeasible verdicts confirmed")


# -- criterion 4: sketch guarantees --------------------------------------


def test_criterion_4_sketch_bounds():
    m, k = sketch_dimensions(0.01)
    rng = Random(4)
    within = total = 0
    false_negatives = 0
    undercounts = 0
    for stream in range(100):
        seeds = draw_seeds(Random(stream), k)
        cm = CountMinSketch(m, k, seeds)
        bloom = BloomFilter(m, k, seeds)
        truth = {}
        for _ in range(10_000):
            key = (min(int(rng.paretovariate(1.1)), 500),)
            truth[key] = truth.get(key, 0) + 1
            cm.update(key_bytes(key))
            bloom.add(key_bytes(key))
        budget = 0.01 * 10_000
        for key, count in truth.items():
            estimate = cm.estimate(key_bytes(key))
            if estimate < count:
                undercounts += 1
            if estimate - count <= budget:
                within += 1
            total += 1
            if not bloom.contains(key_bytes(key)):
                false_negatives += 1
    fraction = within / total
    ok = fraction >= 0.99 and false_negatives == 0 and undercounts == 0
    _verdict(4, "count-min and bloom bounds", ok,
             f"{fraction:.4%} of {total} keys within eps*N, "
             f"{false_negatives} bloom false negatives, "
             f"{undercounts} undercounts")


# -- criterion 5: baseline dominance at desk scale -----------------------


def _skewed_trace(seed: int):
    spec = {
        "trace": {"seed": seed, "duration": 20.0, "background_rate": 800},
        "background": {"clients": 40, "servers": 8, "resolvers": 4,
                       "dns_fraction": 0.3},
        "anomaly": [{"kind": "dns_flood", "victim": "172.16.0.9",
                     "start": 4.0, "duration": 12.0, "rate": 40,
                     "spread": 30}],
    }
    packets, _ = generate(spec)
    return windows_from_packets(packets, 1.0)


def _totals(result):
    tuples = sum(r.n_raw for r in result.metrics)
    per_window = {}
    for r in result.metrics:
        per_window[r.window] = per_window.get(r.window, 0) + r.b_raw
    return tuples, max(per_window.values())


def test_criterion_5_trend_reproduction():
    queries = corpus(dnsVictims=20, reflectConfirm=10)
    victim = ipv4_from_str("172.16.0.9")
    tuple_ratios, state_ratios = [], []
    fixed_delays, learned_delays = [], []
    for seed in range(10):
        windows = _skewed_trace(seed)
        training = windows[:2]
        requests = [
            PlanRequest(queries["ddosUdp"]),
            PlanRequest(queries["superSpreader"]),
            PlanRequest(queries["portScan"]),
            PlanRequest(queries["dnsVictims"], "dstIP", (8, 16, 24, 32)),
            PlanRequest(queries["reflectConfirm"]),
        ]
        _, learned = plan_multi(requests, training, 20_000, 5_000_000,
                                known=queries, seed=seed)
        learned_run = run_plans(queries, learned, windows, seed=seed)
        of_run = run_plans(queries, part_of_plans(queries), windows, seed=seed)
        pisa_run = run_plans(queries, part_pisa_plans(queries), windows,
                             seed=seed)
        fixed_run = run_plans(queries,
                              fixed_refinement_plans(queries, training),
                              windows, seed=seed)
        learned_tuples, learned_state = _totals(learned_run)
        of_tuples, _ = _totals(of_run)
        _, pisa_state = _totals(pisa_run)
        tuple_ratios.append(of_tuples / learned_tuples)
        state_ratios.append(pisa_state / learned_state)
        fixed_delays.append(
            fixed_run.detections["dnsVictims"].get(victim, {}).get("delay"))
        learned_delays.append(
            learned_run.detections["dnsVictims"].get(victim, {}).get("delay"))
    mean_tuple = sum(tuple_ratios) / len(tuple_ratios)
    mean_state = sum(state_ratios) / len(state_ratios)
    ok = (mean_tuple >= 2.0 and mean_state >= 1.5
          and all(d == 8 for d in fixed_delays)
          and all(d is not None and d <= 8 for d in learned_delays))
    _verdict(5, "trend reproduction", ok,
             f"tuples {mean_tuple:.1f}x (floor 2), state {mean_state:.1f}x "
             f"(floor 1.5), fixed delay {sorted(set(fixed_delays))}, "
             f"learned delay max {max(learned_delays)}")


# -- criterion 6: anomaly scenario ---------------------------------------


def test_criterion_6_anomaly_scenario():
    queries = corpus(dnsVictims=40)
    spec = {
        "trace": {"seed": 6, "duration": 60.0, "background_rate": 100},
        "background": {"clients": 40, "servers": 8, "resolvers": 4,
                       "dns_fraction": 0.3},
        "anomaly": [{"kind": "dns_flood", "victim": "172.16.0.25",
                     "start": 20.0, "duration": 10.0, "rate": 300,
                     "spread": 120}],
    }
    packets, _ = generate(spec)
    windows = windows_from_packets(packets, 1.0)
    vq = queries["dnsVictims"]
    deepest = max(pl.p for pl in enumerate_partitions(vq) if not pl.sketch)
    plan = QueryPlan(query="dnsVictims", key="dstIP", alpha=0.5, seed=0,
                     window=1.0, steps=(PlanStep(1, 32, deepest),),
                     thresholds=((32, 40.0),), training=())
    result = run_plans(queries, {"dnsVictims": plan}, windows)
    inside = sum(r.n_raw for r in result.metrics if 20 <= r.window < 30)
    outside = sum(r.n_raw for r in result.metrics
                  if not 20 <= r.window < 30)
    hit = result.detections["dnsVictims"].get(ipv4_from_str("172.16.0.25"), {})
    ok = (inside > 0 and outside <= 0.01 * inside
          and hit.get("window", 99) <= 21 and hit.get("delay") == 1)
    _verdict(6, "anomaly scenario", ok,
             f"{outside} mirrored tuples off-anomaly vs {inside} during, "
             f"first detection window {hit.get('window')} delay {hit.get('delay')}")


# -- criterion 7: constraint soundness -----------------------------------


def test_criterion_7_constraint_soundness():
    queries = corpus(dnsVictims=3, superSpreader=3)
    window = dns_window([("10.0.0.1", 6), ("11.0.0.1", 3), ("10.1.0.2", 2)])
    requests = [PlanRequest(queries["dnsVictims"], "dstIP", (8, 32)),
                PlanRequest(queries["superSpreader"], "srcIP", (8, 32))]
    partitions = [1, 3]

    from sonata.planner import build_graph, measure_windows
    loads = []
    for request in requests:
        graph = build_graph(request, known=queries, partitions=partitions,
                            training_windows=[window])
        costs = measure_windows(graph, [window], 10 ** 6, 10 ** 6,
                                known=queries)
        per_path = []
        for path in graph.paths():
            steps = list(zip((SRC,) + path, path))
            per_path.append((max(costs[0].edge(u, v).n_raw for u, v in steps),
                             max(costs[0].edge(u, v).b_raw for u, v in steps)))
        loads.append(per_path)

    rng = Random(7)
    feasible_runs = infeasible_runs = violations = bad_verdicts = 0
    for _ in range(1000):
        n_cap, b_cap = rng.randint(1, 50), rng.randint(1, 300)
        brute = any(a[0] + b[0] <= n_cap and a[1] + b[1] <= b_cap
                    for a in loads[0] for b in loads[1])
        try:
            _, plans = plan_multi(requests, [window], n_cap, b_cap,
                                  known=queries, partitions=partitions)
        except InfeasiblePlanError:
            infeasible_runs += 1
            if brute:
                bad_verdicts += 1
            continue
        feasible_runs += 1
        for w in range(1):
            n_sum = sum(p.training[w][0] for p in plans.values())
            b_sum = sum(p.training[w][1] for p in plans.values())
            if n_sum > n_cap or b_sum > b_cap:
                violations += 1
    ok = (violations == 0 and bad_verdicts == 0
          and feasible_runs > 0 and infeasible_runs > 0)
    _verdict(7, "constraint soundness", ok,
             f"{feasible_runs} feasible / {infeasible_runs} infeasible caps, "
             f"{violations} constraint violations, "
             f"{bad_verdicts} wrong infeasibility verdicts")


# -- criterion 8: determinism --------------------------------------------


TRACE_SPEC = """
[trace]
seed = 17
duration = 10.0
background_rate = 150

[background]
clients = 30
servers = 6
resolvers = 3
dns_fraction = 0.3

[[anomaly]]
kind = "dns_flood"
victim = "172.16.0.7"
start = 4.0
duration = 4.0
rate = 200
spread = 80
"""

CONFIG = """
[switch]
max_tuples = 200
max_bits = 80000

[run]
queries = "{queries}"
trace = "{trace}"
training_windows = 3

[refine]
dnsVictims = "dstIP"

[levels]
dnsVictims = [8, 16, 32]
"""


def test_criterion_8_byte_identical_artifacts(tmp_path):
    (tmp_path / "spec.toml").write_text(TRACE_SPEC, encoding="utf-8")
    (tmp_path / "queries.sq").write_text(standard_queries(), encoding="utf-8")
    artifacts = {}
    for tag in ("a", "b"):
        base = tmp_path / tag
        base.mkdir()
        assert cli_main(["gen-trace", str(tmp_path / "spec.toml"),
                         "-o", str(base / "trace.csv")]) == 0
        (base / "config.toml").write_text(
            CONFIG.format(queries=tmp_path / "queries.sq",
                          trace=base / "trace.csv"), encoding="utf-8")
        assert cli_main(["plan", str(base / "config.toml"),
                         "-o", str(base / "plans.json")]) == 0
        assert cli_main(["run", str(base / "config.toml"),
                         "--plans", str(base / "plans.json"),
                         "-o", str(base / "metrics.csv"),
                         "--summary", str(base / "summary.json")]) == 0
        artifacts[tag] = {name: (base / name).read_bytes()
                          for name in ("trace.csv", "plans.json",
                                       "metrics.csv", "summary.json")}
    same = [name for name in artifacts["a"]
            if artifacts["a"][name] == artifacts["b"][name]]
    ok = len(same) == 4
    _verdict(8, "byte-identical artifacts", ok,
             f"{len(same)}/4 artifact files identical across runs")
