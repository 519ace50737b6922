"""The declarative query language: parsing, validation, printing.

A query is a named dataflow over a packet stream::

    victims = pktStream(1)
        .filter(srcPort == 53)
        .map(dstIP, srcIP)
        .distinct(key=(dstIP, srcIP))
        .map(dstIP, 1)
        .reduce(key=(dstIP), func=sum)
        .filter(count > 40)
        .map(dstIP)
        [dmax=8, err=0.01]

Membership filters (``filter(dstIP in victims)``) and the ``join(victims)``
sugar both denote the same thing: filtering against the named query's
previous-window output.  ``map(f -> f/8)`` with a single item coarsens
``f`` in place, which is how refinement rewrites inject mask stages.

Parsing is whitespace-insensitive and ``#`` starts a comment.  The printer
emits a canonical multi-line form; parse(print(parse(x))) equals parse(x)
structurally.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import QueryParseError, QueryValidationError
from .fields import (FIELDS, HIERARCHICAL_FIELDS, NATIVE_LEVEL, hierarchy_kind,
                     ipv4_from_str, ipv4_to_str)

DEFAULT_ERROR_TOLERANCE = 0.01
DEFAULT_DMAX_WINDOWS = 8

REDUCE_FUNCS = ("sum", "count", "min", "max", "entropy")
COMPARATORS = ("==", "!=", ">=", "<=", ">", "<")

# Output column named by the aggregate so downstream filters can address it.
AGG_FIELD = {"sum": "count", "count": "count", "min": "min",
             "max": "max", "entropy": "entropy"}

STATEFUL_KINDS = ("distinct", "reduce")


@dataclass(frozen=True)
class Operand:
    """One side of a comparison: a field reference or a literal."""

    kind: str              # "field" | "const"
    field: str | None = None
    value: object = None
    wire: str | None = None   # literal wire type hint ("ipv4" for dotted quads)


@dataclass(frozen=True)
class Compare:
    lhs: Operand
    op: str
    rhs: Operand


@dataclass(frozen=True)
class MapItem:
    """One projection item: a field (optionally masked) or a constant."""

    field: str | None = None
    mask_level: int | None = None
    const: object = None


@dataclass(frozen=True)
class OperatorNode:
    """A single dataflow operator.

    ``join`` nodes cover both named membership filters (join_query set) and
    refinement zoom filters (join_query None, entries materialized by the
    runtime); ``mask_level`` coarsens the probe field before the test.
    """

    kind: str
    predicate: Compare | None = None
    items: tuple[MapItem, ...] = ()
    key_fields: tuple[str, ...] = ()
    reduce_func: str | None = None
    rate: int | None = None
    join_query: str | None = None
    mask_level: int | None = None
    entries: frozenset | None = None


@dataclass(frozen=True)
class QueryAST:
    name: str
    window: float
    operators: tuple[OperatorNode, ...]
    d_max: float | None = None
    error_tolerance: float | None = None


# --------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<ipv4>\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})
  | (?P<number>\d+\.\d+|\.\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<arrow>->)
  | (?P<cmp>==|!=|>=|<=|>|<)
  | (?P<sym>[().,=\[\]/])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise QueryParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = match.lastgroup
        raw = match.group()
        if kind != "ws":
            tokens.append(_Token(kind, raw, line, col))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = match.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# --------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def fail(self, message: str):
        token = self.peek()
        raise QueryParseError(message, token.line, token.col)

    def expect(self, kind: str, text: str | None = None) -> _Token:
        token = self.peek()
        if token.kind != kind or (text is not None and token.text != text):
            want = text if text is not None else kind
            got = token.text if token.text else token.kind
            self.fail(f"expected {want!r}, got {got!r}")
        return self.advance()

    def accept(self, kind: str, text: str | None = None) -> _Token | None:
        token = self.peek()
        if token.kind == kind and (text is None or token.text == text):
            return self.advance()
        return None

    def number(self) -> float | int:
        token = self.expect("number")
        if "." in token.text:
            return float(token.text)
        return int(token.text)

    # query := IDENT '=' 'pktStream' '(' NUMBER ')' op* opts?
    def query(self) -> QueryAST:
        name = self.expect("ident").text
        self.expect("sym", "=")
        self.expect("ident", "pktStream")
        self.expect("sym", "(")
        window = float(self.number())
        self.expect("sym", ")")
        operators = []
        while self.accept("sym", "."):
            operators.append(self.operator())
        d_max = err = None
        if self.accept("sym", "["):
            d_max, err = self.options()
        return QueryAST(name=name, window=window, operators=tuple(operators),
                        d_max=d_max, error_tolerance=err)

    def options(self):
        d_max = err = None
        while True:
            key = self.expect("ident").text
            self.expect("sym", "=")
            value = float(self.number())
            if key == "dmax":
                d_max = value
            elif key == "err":
                err = value
            else:
                self.fail(f"unknown option {key!r}")
            if not self.accept("sym", ","):
                break
        self.expect("sym", "]")
        return d_max, err

    def operator(self) -> OperatorNode:
        name = self.expect("ident").text
        self.expect("sym", "(")
        if name == "filter":
            node = self.filter_body()
        elif name == "map":
            node = OperatorNode(kind="map", items=self.map_items())
        elif name == "distinct":
            node = OperatorNode(kind="distinct", key_fields=self.keyword_fields("key"))
        elif name == "reduce":
            node = self.reduce_body()
        elif name == "sample":
            rate = self.number()
            if not isinstance(rate, int) or rate < 1:
                self.fail("sample rate must be a positive integer")
            node = OperatorNode(kind="sample", rate=rate)
        elif name == "join":
            target = self.expect("ident").text
            node = OperatorNode(kind="join", join_query=target)
        else:
            self.fail(f"unknown operator {name!r}")
        self.expect("sym", ")")
        return node

    def filter_body(self) -> OperatorNode:
        lhs = self.operand()
        if self.peek().kind == "sym" and self.peek().text == "/":
            # masked membership: field/level in target
            if lhs.kind != "field":
                self.fail("mask applies to a field")
            self.advance()
            level = self.number()
            self.expect("ident", "in")
            target = self.expect("ident").text
            return OperatorNode(kind="join", key_fields=(lhs.field,),
                                mask_level=int(level), join_query=target)
        if self.peek().kind == "ident" and self.peek().text == "in":
            if lhs.kind != "field":
                self.fail("membership tests apply to a field")
            self.advance()
            target = self.expect("ident").text
            return OperatorNode(kind="join", key_fields=(lhs.field,), join_query=target)
        token = self.peek()
        if token.kind != "cmp":
            self.fail(f"expected comparator, got {token.text!r}")
        op = self.advance().text
        rhs = self.operand()
        return OperatorNode(kind="filter", predicate=Compare(lhs, op, rhs))

    def operand(self) -> Operand:
        token = self.peek()
        if token.kind == "ident":
            # Comparison operands must resolve to a field name now; a leftover
            # symbolic threshold (Th1) should fail here, not at validation.
            if token.text not in FIELDS and token.text not in AGG_FIELD.values():
                self.fail(f"{token.text!r} is neither a field nor a numeric literal")
            self.advance()
            return Operand(kind="field", field=token.text)
        if token.kind == "ipv4":
            self.advance()
            try:
                value = ipv4_from_str(token.text)
            except ValueError as exc:
                raise QueryParseError(str(exc), token.line, token.col) from None
            return Operand(kind="const", value=value, wire="ipv4")
        if token.kind == "number":
            return Operand(kind="const", value=self.number())
        self.fail(f"expected field or literal, got {token.text!r}")

    def map_items(self) -> tuple[MapItem, ...]:
        items = [self.map_item(first=True)]
        while self.accept("sym", ","):
            items.append(self.map_item(first=False))
        return tuple(items)

    def map_item(self, first: bool) -> MapItem:
        token = self.peek()
        if token.kind == "ident":
            field = self.advance().text
            if first and self.accept("arrow"):
                # mask spec: '-> field/level' or '-> /level'
                spec = self.peek()
                if spec.kind == "ident":
                    if self.advance().text != field:
                        self.fail(f"mask target must repeat {field!r}")
                self.expect("sym", "/")
                level = self.number()
                return MapItem(field=field, mask_level=int(level))
            return MapItem(field=field)
        if token.kind in ("number", "ipv4"):
            return MapItem(const=self.operand().value)
        self.fail(f"expected field or constant, got {token.text!r}")

    def keyword_fields(self, keyword: str) -> tuple[str, ...]:
        self.expect("ident", keyword)
        self.expect("sym", "=")
        if self.accept("sym", "("):
            names = [self.expect("ident").text]
            while self.accept("sym", ","):
                names.append(self.expect("ident").text)
            self.expect("sym", ")")
            return tuple(names)
        return (self.expect("ident").text,)

    def reduce_body(self) -> OperatorNode:
        keys = self.keyword_fields("key")
        self.expect("sym", ",")
        self.expect("ident", "func")
        self.expect("sym", "=")
        func = self.expect("ident").text
        if func not in REDUCE_FUNCS:
            self.fail(f"unknown reduce func {func!r}")
        return OperatorNode(kind="reduce", key_fields=keys, reduce_func=func)


def parse_query(text: str) -> QueryAST:
    """Parse exactly one query definition."""
    parser = _Parser(text)
    ast = parser.query()
    if parser.peek().kind != "eof":
        parser.fail("trailing input after query")
    return ast


def parse_query_file(text: str) -> list[QueryAST]:
    """Parse a sequence of query definitions, preserving order."""
    parser = _Parser(text)
    queries = []
    while parser.peek().kind != "eof":
        queries.append(parser.query())
    names = [q.name for q in queries]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise QueryParseError(f"duplicate query name {dup!r}")
    return queries


# --------------------------------------------------------------------------
# Printer

def _format_number(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return repr(value)


def _format_operand(operand: Operand) -> str:
    if operand.kind == "field":
        return operand.field
    if operand.wire == "ipv4":
        return ipv4_to_str(operand.value)
    return _format_number(operand.value)


def _format_operator(node: OperatorNode) -> str:
    if node.kind == "filter":
        pred = node.predicate
        return f"filter({_format_operand(pred.lhs)} {pred.op} {_format_operand(pred.rhs)})"
    if node.kind == "map":
        parts = []
        for item in node.items:
            if item.field is None:
                parts.append(_format_number(item.const))
            elif item.mask_level is not None:
                parts.append(f"{item.field} -> {item.field}/{item.mask_level}")
            else:
                parts.append(item.field)
        return f"map({', '.join(parts)})"
    if node.kind == "distinct":
        return f"distinct(key=({', '.join(node.key_fields)}))"
    if node.kind == "reduce":
        return f"reduce(key=({', '.join(node.key_fields)}), func={node.reduce_func})"
    if node.kind == "sample":
        return f"sample({node.rate})"
    if node.kind == "join":
        target = node.join_query if node.join_query is not None else "<prev>"
        if not node.key_fields:
            return f"join({target})"
        probe = node.key_fields[0]
        if node.mask_level is not None:
            probe = f"{probe}/{node.mask_level}"
        return f"filter({probe} in {target})"
    raise ValueError(f"unknown operator kind {node.kind!r}")


def print_query(ast: QueryAST) -> str:
    """Canonical multi-line rendering of a query."""
    lines = [f"{ast.name} = pktStream({_format_number(ast.window)})"]
    for node in ast.operators:
        lines.append(f"    .{_format_operator(node)}")
    opts = []
    if ast.d_max is not None:
        opts.append(f"dmax={_format_number(ast.d_max)}")
    if ast.error_tolerance is not None:
        opts.append(f"err={_format_number(ast.error_tolerance)}")
    if opts:
        lines.append(f"    [{', '.join(opts)}]")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Validation

_NUMERIC_WIRES = {"u8", "u16", "u32", "float", "ipv4"}


@dataclass(frozen=True)
class ValidatedQuery:
    """A type-checked query with per-stage schemas resolved.

    ``schemas[i]`` is the record schema entering operator ``i``;
    ``schemas[P]`` is the output schema.  ``types`` carries the wire type
    for each schema in matching positions.
    """

    ast: QueryAST
    schemas: tuple[tuple[str, ...], ...]
    types: tuple[tuple[str, ...], ...]
    stateful_indices: tuple[int, ...]
    refinement_keys: tuple[str, ...]
    join_target: str | None
    join_field: str | None
    window: float
    d_max: float
    error_tolerance: float

    @property
    def name(self) -> str:
        return self.ast.name

    @property
    def operators(self) -> tuple[OperatorNode, ...]:
        return self.ast.operators

    @property
    def num_operators(self) -> int:
        return len(self.ast.operators)

    @property
    def output_schema(self) -> tuple[str, ...]:
        return self.schemas[-1]

    def wire_of(self, stage: int, field: str) -> str:
        schema = self.schemas[stage]
        return self.types[stage][schema.index(field)]


def _default_input_schema() -> tuple[tuple[str, ...], tuple[str, ...]]:
    names = tuple(FIELDS)
    wires = tuple(FIELDS[n].wire_type for n in names)
    return names, wires


def _check_compare(pred: Compare, schema, wires, where: str):
    def wire_for(operand: Operand) -> str:
        if operand.kind == "field":
            if operand.field not in schema:
                raise QueryValidationError(
                    f"{where}: unknown field {operand.field!r} (have {', '.join(schema)})")
            return wires[schema.index(operand.field)]
        if operand.wire:
            return operand.wire
        return "float" if isinstance(operand.value, float) else "u32"

    lw, rw = wire_for(pred.lhs), wire_for(pred.rhs)
    l_num, r_num = lw in _NUMERIC_WIRES, rw in _NUMERIC_WIRES
    if l_num != r_num:
        raise QueryValidationError(
            f"{where}: cannot compare {lw} with {rw}")
    if not l_num and pred.op not in ("==", "!="):
        raise QueryValidationError(
            f"{where}: ordering comparator {pred.op!r} needs numeric operands")
    if pred.lhs.kind == "const" and pred.rhs.kind == "const":
        raise QueryValidationError(f"{where}: comparison has no field operand")


def _check_mask(field: str, level, wires, schema, where: str):
    if field not in HIERARCHICAL_FIELDS:
        raise QueryValidationError(f"{where}: field {field!r} has no hierarchy to mask")
    kind = hierarchy_kind(field)
    if kind == "ipv4" and not 0 <= level <= 32:
        raise QueryValidationError(f"{where}: IPv4 mask level {level} outside 0..32")
    if kind == "domain" and level < 0:
        raise QueryValidationError(f"{where}: negative domain mask level {level}")


def validate(ast: QueryAST, known: dict[str, "ValidatedQuery"] | None = None) -> ValidatedQuery:
    """Type-check a query and resolve per-stage schemas.

    Args:
        ast: parsed query.
        known: previously validated queries addressable by join; a join
            target absent from this mapping is an error, which also rules
            out self-joins and forward references.
    """
    known = known or {}
    if not ast.operators:
        raise QueryValidationError(f"query {ast.name!r} has no operators")
    if ast.window <= 0:
        raise QueryValidationError(f"query {ast.name!r}: window {ast.window} not positive")
    err = ast.error_tolerance if ast.error_tolerance is not None else DEFAULT_ERROR_TOLERANCE
    if not 0 < err < 1:
        raise QueryValidationError(f"query {ast.name!r}: error tolerance {err} outside (0,1)")
    d_max = ast.d_max if ast.d_max is not None else DEFAULT_DMAX_WINDOWS * ast.window
    if d_max < ast.window:
        raise QueryValidationError(
            f"query {ast.name!r}: dmax {d_max} below window {ast.window}")

    schema, wires = _default_input_schema()
    schemas = [schema]
    types = [wires]
    stateful = []
    join_target = join_field = None

    for index, node in enumerate(ast.operators):
        where = f"query {ast.name!r}, operator {index + 1} ({node.kind})"
        if node.kind == "filter":
            _check_compare(node.predicate, schema, wires, where)
        elif node.kind == "map":
            if not node.items:
                raise QueryValidationError(f"{where}: empty projection")
            in_place = (len(node.items) == 1 and node.items[0].field is not None
                        and node.items[0].mask_level is not None)
            if in_place:
                field = node.items[0].field
                if field not in schema:
                    raise QueryValidationError(f"{where}: unknown field {field!r}")
                _check_mask(field, node.items[0].mask_level, wires, schema, where)
                # schema unchanged: the field is coarsened where it sits
            else:
                new_schema, new_wires = [], []
                lit_index = 0
                for item in node.items:
                    if item.field is not None:
                        if item.field not in schema:
                            raise QueryValidationError(f"{where}: unknown field {item.field!r}")
                        if item.mask_level is not None:
                            _check_mask(item.field, item.mask_level, wires, schema, where)
                        if item.field in new_schema:
                            raise QueryValidationError(f"{where}: duplicate field {item.field!r}")
                        new_schema.append(item.field)
                        new_wires.append(wires[schema.index(item.field)])
                    else:
                        new_schema.append(f"_lit{lit_index}")
                        lit_index += 1
                        new_wires.append("float" if isinstance(item.const, float) else "u32")
                schema, wires = tuple(new_schema), tuple(new_wires)
        elif node.kind == "distinct":
            keys = node.key_fields or schema
            for key in keys:
                if key not in schema:
                    raise QueryValidationError(f"{where}: key {key!r} not in schema")
            stateful.append(index)
        elif node.kind == "reduce":
            for key in node.key_fields:
                if key not in schema:
                    raise QueryValidationError(f"{where}: key {key!r} not in schema")
            if not node.key_fields:
                raise QueryValidationError(f"{where}: reduce needs key fields")
            value_fields = [f for f in schema if f not in node.key_fields]
            if node.reduce_func in ("sum", "min", "max"):
                if len(value_fields) != 1:
                    raise QueryValidationError(
                        f"{where}: {node.reduce_func} needs exactly one value field, "
                        f"schema has {len(value_fields)}")
                vw = wires[schema.index(value_fields[0])]
                if vw not in _NUMERIC_WIRES:
                    raise QueryValidationError(f"{where}: cannot {node.reduce_func} over {vw}")
            elif node.reduce_func == "entropy":
                if len(value_fields) != 1:
                    raise QueryValidationError(
                        f"{where}: entropy needs exactly one value field")
            agg = AGG_FIELD[node.reduce_func]
            agg_wire = "float" if node.reduce_func == "entropy" else "u32"
            key_wires = tuple(wires[schema.index(k)] for k in node.key_fields)
            schema = tuple(node.key_fields) + (agg,)
            wires = key_wires + (agg_wire,)
            stateful.append(index)
        elif node.kind == "sample":
            pass
        elif node.kind == "join" and node.join_query is None:
            # zoom filter injected by refinement; entries arrive at runtime
            if not node.key_fields:
                raise QueryValidationError(f"{where}: zoom filter needs a probe field")
            probe = node.key_fields[0]
            if probe not in schema:
                raise QueryValidationError(f"{where}: zoom field {probe!r} not in schema")
            if node.mask_level is not None:
                _check_mask(probe, node.mask_level, wires, schema, where)
        elif node.kind == "join":
            if join_target is not None:
                raise QueryValidationError(f"{where}: at most one join per query")
            target = known.get(node.join_query)
            if target is None:
                raise QueryValidationError(
                    f"{where}: join target {node.join_query!r} not declared earlier")
            if node.key_fields:
                probe = node.key_fields[0]
            else:
                if len(target.output_schema) != 1:
                    raise QueryValidationError(
                        f"{where}: join({node.join_query}) needs the target to output "
                        f"one field, it outputs {len(target.output_schema)}")
                probe = target.output_schema[0]
            if probe not in schema:
                raise QueryValidationError(f"{where}: join field {probe!r} not in schema")
            if probe not in target.output_schema:
                raise QueryValidationError(
                    f"{where}: join field {probe!r} not produced by {node.join_query!r}")
            if node.mask_level is not None:
                _check_mask(probe, node.mask_level, wires, schema, where)
            join_target, join_field = node.join_query, probe
        else:
            raise QueryValidationError(f"{where}: unknown operator kind")
        schemas.append(schema)
        types.append(wires)

    vq = ValidatedQuery(
        ast=ast, schemas=tuple(schemas), types=tuple(types),
        stateful_indices=tuple(stateful), refinement_keys=(),
        join_target=join_target, join_field=join_field,
        window=ast.window, d_max=d_max, error_tolerance=err)
    return replace(vq, refinement_keys=find_refinement_keys(vq))


def validate_file(asts: list[QueryAST]) -> dict[str, ValidatedQuery]:
    """Validate queries in declaration order, wiring joins to earlier ones."""
    known: dict[str, ValidatedQuery] = {}
    for ast in asts:
        known[ast.name] = validate(ast, known)
    return known


def find_refinement_keys(vq: ValidatedQuery) -> tuple[str, ...]:
    """Fields eligible to drive iterative refinement.

    A field qualifies only if it is hierarchical and appears in the key set
    of every stateful operator: coarsening such a field merges state
    upward at every stage, so bucket aggregates can only grow and no
    satisfying traffic is lost.  A hierarchical field keyed in some but not
    all stateful stages (a distinct key later aggregated away, say) would
    undercount when coarsened.
    """
    candidate: set[str] | None = None
    for index in vq.stateful_indices:
        node = vq.operators[index]
        keys = set(node.key_fields or vq.schemas[index])
        candidate = keys if candidate is None else (candidate & keys)
    if not candidate:
        return ()
    ordered = [f for f in vq.schemas[0] if f in candidate and f in HIERARCHICAL_FIELDS]
    return tuple(ordered)


def resolved_key_fields(node: OperatorNode, schema: tuple[str, ...]) -> tuple[str, ...]:
    """Distinct keys default to the whole record."""
    if node.kind == "distinct" and not node.key_fields:
        return schema
    return node.key_fields
