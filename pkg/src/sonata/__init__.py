"""Declarative network telemetry with switch/stream partitioned execution."""

from .errors import (ConfigError, InfeasiblePlanError, QueryParseError,
                     QueryValidationError, SonataError, TraceFormatError,
                     UnsupportedPlanError)
from .packets import PacketTuple, TraceWindow, parse_trace, window_partition, write_trace
from .planner import (PlanRequest, QueryPlan, dump_plans, load_plans,
                      plan_multi, plan_single)
from .qlang import (QueryAST, ValidatedQuery, parse_query, parse_query_file,
                    print_query, validate, validate_file)
from .runner import run_plans, windows_from_packets
from .stream import execute_window, run_queries
from .tracegen import generate

__version__ = "0.1.0"
