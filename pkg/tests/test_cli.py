"""Command-line workflow: gen-trace, plan, run, baselines."""

from pathlib import Path

import pytest

from sonata.cli import main
from sonata.corpus import standard_queries
from sonata.planner import load_plans

TRACE_SPEC = """
[trace]
seed = 5
duration = 8.0
background_rate = 120

[background]
clients = 30
servers = 6
resolvers = 3
dns_fraction = 0.3

[[anomaly]]
kind = "dns_flood"
victim = "172.16.0.7"
start = 4.0
duration = 3.0
rate = 250
spread = 90
"""

CONFIG = """
[switch]
max_tuples = 160
max_bits = 60000

[run]
queries = "{queries}"
trace = "{trace}"
training_windows = 3

[refine]
dnsVictims = "dstIP"

[levels]
dnsVictims = [8, 16, 32]
"""


@pytest.fixture()
def workdir(tmp_path):
    (tmp_path / "spec.toml").write_text(TRACE_SPEC, encoding="utf-8")
    (tmp_path / "queries.sq").write_text(standard_queries(), encoding="utf-8")
    assert main(["gen-trace", str(tmp_path / "spec.toml"),
                 "-o", str(tmp_path / "trace.csv"),
                 "--truth", str(tmp_path / "truth.json")]) == 0
    (tmp_path / "config.toml").write_text(
        CONFIG.format(queries=tmp_path / "queries.sq",
                      trace=tmp_path / "trace.csv"), encoding="utf-8")
    return tmp_path


def test_samples_match_stock_queries():
    """The checked-in sample query file is the stock corpus, verbatim."""
    source = Path(__file__).resolve().parent.parent / "samples" / "queries.sq"
    assert source.read_text(encoding="utf-8") == standard_queries()


def test_gen_trace_writes_trace_and_truth(workdir):
    trace = (workdir / "trace.csv").read_text(encoding="utf-8")
    assert trace.splitlines()[0].startswith("ts:float,")
    assert '"query": "dnsVictims"' in (workdir / "truth.json").read_text()


def test_plan_then_run(workdir, capsys):
    assert main(["plan", str(workdir / "config.toml"),
                 "-o", str(workdir / "plans.json")]) == 0
    plans = load_plans((workdir / "plans.json").read_text(encoding="utf-8"))
    assert {p.query for p in plans} == {"ddosUdp", "superSpreader", "portScan",
                                        "dnsVictims", "reflectConfirm"}
    refined = {p.query: p for p in plans}["dnsVictims"]
    assert refined.key == "dstIP"
    assert refined.steps[-1].level == 32
    assert main(["run", str(workdir / "config.toml"),
                 "--plans", str(workdir / "plans.json"),
                 "-o", str(workdir / "metrics.csv"),
                 "--summary", str(workdir / "summary.json")]) == 0
    metrics = (workdir / "metrics.csv").read_text(encoding="utf-8")
    assert metrics.splitlines()[0] == "window,query,n_raw,b_raw,reports,detections"
    assert "172.16.0.7" in (workdir / "summary.json").read_text(encoding="utf-8")
    out = capsys.readouterr().out
    assert "planned 5 queries" in out and "ran 8 windows" in out


def test_identical_runs_identical_bytes(workdir):
    for suffix in ("a", "b"):
        assert main(["plan", str(workdir / "config.toml"),
                     "-o", str(workdir / f"plans_{suffix}.json")]) == 0
        assert main(["run", str(workdir / "config.toml"),
                     "--plans", str(workdir / f"plans_{suffix}.json"),
                     "-o", str(workdir / f"metrics_{suffix}.csv"),
                     "--summary", str(workdir / f"summary_{suffix}.json")]) == 0
    for stem in ("plans_{}.json", "metrics_{}.csv", "summary_{}.json"):
        a = (workdir / stem.format("a")).read_bytes()
        assert a == (workdir / stem.format("b")).read_bytes()


def test_baselines_command(workdir):
    for kind in ("stream-only", "part-pisa"):
        assert main(["baselines", str(workdir / "config.toml"), "--kind", kind,
                     "-o", str(workdir / f"{kind}.csv"),
                     "--plans-out", str(workdir / f"{kind}.json")]) == 0
        assert (workdir / f"{kind}.csv").exists()
        assert load_plans((workdir / f"{kind}.json").read_text(encoding="utf-8"))


def test_threshold_overrides_reach_the_plan(workdir):
    config = (workdir / "config.toml").read_text(encoding="utf-8") + (
        "\n[thresholds.dnsVictims]\n8 = 55.0\n16 = 48.0\n")
    (workdir / "override.toml").write_text(config, encoding="utf-8")
    assert main(["plan", str(workdir / "override.toml"),
                 "-o", str(workdir / "plans.json")]) == 0
    plans = {p.query: p for p in
             load_plans((workdir / "plans.json").read_text(encoding="utf-8"))}
    got = dict(plans["dnsVictims"].thresholds)
    assert got[8] == 55.0 and got[16] == 48.0 and got[32] == 40.0


def test_partial_threshold_override_is_rejected(workdir, capsys):
    config = (workdir / "config.toml").read_text(encoding="utf-8") + (
        "\n[thresholds.dnsVictims]\n8 = 55.0\n")
    (workdir / "override.toml").write_text(config, encoding="utf-8")
    assert main(["plan", str(workdir / "override.toml"),
                 "-o", str(workdir / "plans.json")]) == 1
    assert "misses levels" in capsys.readouterr().err


def test_infeasible_caps_exit_two(workdir, capsys):
    config = CONFIG.format(queries=workdir / "queries.sq",
                           trace=workdir / "trace.csv")
    config = config.replace("max_tuples = 160", "max_tuples = 2")
    config = config.replace("max_bits = 60000", "max_bits = 10")
    (workdir / "tiny.toml").write_text(config, encoding="utf-8")
    assert main(["plan", str(workdir / "tiny.toml"),
                 "-o", str(workdir / "plans.json")]) == 2
    assert "infeasible" in capsys.readouterr().err


def test_missing_trace_exits_one(workdir, capsys):
    config = CONFIG.format(queries=workdir / "queries.sq",
                           trace=workdir / "gone.csv")
    (workdir / "missing.toml").write_text(config, encoding="utf-8")
    assert main(["plan", str(workdir / "missing.toml"),
                 "-o", str(workdir / "plans.json")]) == 1
    assert "error:" in capsys.readouterr().err
