"""Tokenizer, parser and evaluator for the validated SQL subset.

The grammar is deliberately small so every query the text-to-SQL step can
produce is either fully validated or rejected with a precise error:

    SELECT (* | col [, col ...]) FROM table
        [WHERE predicate]
        [ORDER BY col [ASC|DESC] [, ...]]
        [LIMIT n]
        [;]

Predicates support =, <>, !=, <, >, <=, >=, AND, OR, IN (...), LIKE and
NOT IN / NOT LIKE over literals, with parentheses.  Anything else (DDL, DML,
joins, aggregates, arithmetic, subqueries) is reported rather than parsed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ExecutionFailure

MAX_ROWS = 10
MAX_COLUMNS = 50

NOT_SELECT = "NOT_SELECT"
UNKNOWN_COLUMN = "UNKNOWN_COLUMN"
LIMIT_EXCEEDED = "LIMIT_EXCEEDED"
SYNTAX = "SYNTAX"
FORBIDDEN_CLAUSE = "FORBIDDEN_CLAUSE"

_DML_DDL = {
    "INSERT", "UPDATE", "DELETE", "DROP", "CREATE", "ALTER", "TRUNCATE",
    "MERGE", "GRANT", "REVOKE", "EXEC", "PRAGMA", "ATTACH",
}
_FORBIDDEN = {
    "GROUP", "HAVING", "JOIN", "UNION", "DISTINCT", "INNER", "LEFT",
    "RIGHT", "OUTER", "CROSS", "OFFSET", "CASE", "AS",
}
_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "IN", "LIKE",
    "ORDER", "BY", "ASC", "DESC", "LIMIT", "NULL", "IS",
} | _DML_DDL | _FORBIDDEN

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<qident>"(?:[^"]|"")*"|`[^`]*`)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|=|<|>)
  | (?P<punct>[(),.;*])
  | (?P<arith>[-+/%])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # KEYWORD | IDENT | STRING | NUMBER | OP | PUNCT | ARITH | EOF
    value: str
    pos: int


@dataclass
class ValidationError:
    code: str
    message: str
    location: int

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "location": self.location}


@dataclass
class QueryValidationReport:
    ok: bool
    errors: list[ValidationError] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "errors": [e.to_dict() for e in self.errors]}


class _Problem(Exception):
    def __init__(self, code: str, message: str, pos: int):
        super().__init__(message)
        self.code = code
        self.pos = pos


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise _Problem(SYNTAX, f"unexpected character {sql[pos]!r}", pos)
        if m.lastgroup != "ws":
            text = m.group()
            if m.lastgroup == "ident":
                upper = text.upper()
                kind = "KEYWORD" if upper in _KEYWORDS else "IDENT"
                tokens.append(Token(kind, upper if kind == "KEYWORD" else text, pos))
            elif m.lastgroup == "qident":
                tokens.append(Token("IDENT", text[1:-1].replace('""', '"'), pos))
            elif m.lastgroup == "string":
                tokens.append(Token("STRING", text[1:-1].replace("''", "'"), pos))
            elif m.lastgroup == "number":
                tokens.append(Token("NUMBER", text, pos))
            elif m.lastgroup == "op":
                tokens.append(Token("OP", "<>" if text == "!=" else text, pos))
            elif m.lastgroup == "arith":
                tokens.append(Token("ARITH", text, pos))
            else:
                tokens.append(Token("PUNCT", text, pos))
        pos = m.end()
    tokens.append(Token("EOF", "", len(sql)))
    return tokens


# ---------------------------------------------------------------------------
# AST


@dataclass
class Comparison:
    column: str
    op: str
    value: str | float
    pos: int


@dataclass
class InList:
    column: str
    values: list[str | float]
    negated: bool
    pos: int


@dataclass
class LikeMatch:
    column: str
    pattern: str
    negated: bool
    pos: int


@dataclass
class BoolOp:
    op: str  # "and" | "or"
    items: list


@dataclass
class Query:
    columns: list[tuple[str, int]] | None  # None means SELECT *
    table: str
    table_pos: int
    where: object | None
    order_by: list[tuple[str, bool, int]]  # (column, ascending, pos)
    limit: int | None
    limit_pos: int


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_keyword(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind == "KEYWORD" and tok.value == word:
            return self.advance()
        raise _Problem(SYNTAX, f"expected {word}", tok.pos)

    def forbid(self, tok: Token) -> None:
        if tok.kind == "KEYWORD" and tok.value in _FORBIDDEN:
            raise _Problem(FORBIDDEN_CLAUSE, f"{tok.value} is not allowed", tok.pos)
        if tok.kind == "ARITH":
            raise _Problem(FORBIDDEN_CLAUSE, "calculations are not allowed", tok.pos)

    def parse(self) -> Query:
        first = self.peek()
        if not (first.kind == "KEYWORD" and first.value == "SELECT"):
            if first.kind == "KEYWORD" and first.value in _DML_DDL:
                raise _Problem(NOT_SELECT, f"{first.value} statements are not allowed", first.pos)
            raise _Problem(NOT_SELECT, "statement must be a single SELECT", first.pos)
        self.advance()

        columns = self.parse_select_list()
        self.expect_keyword("FROM")
        table_tok = self.parse_name()
        where = None
        if self.peek().kind == "KEYWORD" and self.peek().value == "WHERE":
            self.advance()
            where = self.parse_or()
        order_by: list[tuple[str, bool, int]] = []
        if self.peek().kind == "KEYWORD" and self.peek().value == "ORDER":
            self.advance()
            self.expect_keyword("BY")
            order_by = self.parse_order_list()
        limit = None
        limit_pos = -1
        if self.peek().kind == "KEYWORD" and self.peek().value == "LIMIT":
            limit_pos = self.advance().pos
            tok = self.peek()
            if tok.kind != "NUMBER" or "." in tok.value or "e" in tok.value.lower():
                raise _Problem(SYNTAX, "LIMIT requires an integer", tok.pos)
            limit = int(self.advance().value)
        if self.peek().kind == "PUNCT" and self.peek().value == ";":
            self.advance()
        tail = self.peek()
        if tail.kind != "EOF":
            self.forbid(tail)
            raise _Problem(SYNTAX, f"unexpected trailing input {tail.value!r}", tail.pos)
        return Query(columns, table_tok.value, table_tok.pos, where, order_by, limit, limit_pos)

    def parse_select_list(self) -> list[tuple[str, int]] | None:
        tok = self.peek()
        self.forbid(tok)
        if tok.kind == "PUNCT" and tok.value == "*":
            self.advance()
            return None
        columns = [self.parse_column_ref()]
        while self.peek().kind == "PUNCT" and self.peek().value == ",":
            self.advance()
            columns.append(self.parse_column_ref())
        return columns

    def parse_name(self) -> Token:
        tok = self.peek()
        self.forbid(tok)
        if tok.kind != "IDENT":
            raise _Problem(SYNTAX, "expected a name", tok.pos)
        return self.advance()

    def parse_column_ref(self) -> tuple[str, int]:
        tok = self.parse_name()
        name, pos = tok.value, tok.pos
        if self.peek().kind == "PUNCT" and self.peek().value == ".":
            self.advance()
            name = self.parse_name().value  # table-qualified: keep the column part
        if self.peek().kind == "PUNCT" and self.peek().value == "(":
            raise _Problem(FORBIDDEN_CLAUSE, f"function call {name}() is not allowed", pos)
        self.forbid(self.peek())
        return name, pos

    def parse_order_list(self) -> list[tuple[str, bool, int]]:
        items = []
        while True:
            name, pos = self.parse_column_ref()
            ascending = True
            tok = self.peek()
            if tok.kind == "KEYWORD" and tok.value in ("ASC", "DESC"):
                ascending = tok.value == "ASC"
                self.advance()
            items.append((name, ascending, pos))
            if self.peek().kind == "PUNCT" and self.peek().value == ",":
                self.advance()
                continue
            return items

    def parse_or(self):
        items = [self.parse_and()]
        while self.peek().kind == "KEYWORD" and self.peek().value == "OR":
            self.advance()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else BoolOp("or", items)

    def parse_and(self):
        items = [self.parse_term()]
        while self.peek().kind == "KEYWORD" and self.peek().value == "AND":
            self.advance()
            items.append(self.parse_term())
        return items[0] if len(items) == 1 else BoolOp("and", items)

    def parse_term(self):
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.value == "(":
            self.advance()
            inner = self.parse_or()
            close = self.peek()
            if not (close.kind == "PUNCT" and close.value == ")"):
                raise _Problem(SYNTAX, "expected )", close.pos)
            self.advance()
            return inner
        return self.parse_predicate()

    def parse_predicate(self):
        column, pos = self.parse_column_ref()
        tok = self.peek()
        negated = False
        if tok.kind == "KEYWORD" and tok.value == "NOT":
            self.advance()
            negated = True
            tok = self.peek()
        if tok.kind == "KEYWORD" and tok.value == "IN":
            self.advance()
            open_tok = self.peek()
            if not (open_tok.kind == "PUNCT" and open_tok.value == "("):
                raise _Problem(SYNTAX, "expected ( after IN", open_tok.pos)
            self.advance()
            values = [self.parse_literal()]
            while self.peek().kind == "PUNCT" and self.peek().value == ",":
                self.advance()
                values.append(self.parse_literal())
            close = self.peek()
            if not (close.kind == "PUNCT" and close.value == ")"):
                raise _Problem(SYNTAX, "expected ) after IN list", close.pos)
            self.advance()
            return InList(column, values, negated, pos)
        if tok.kind == "KEYWORD" and tok.value == "LIKE":
            self.advance()
            pattern = self.peek()
            if pattern.kind != "STRING":
                raise _Problem(SYNTAX, "LIKE requires a string literal", pattern.pos)
            self.advance()
            return LikeMatch(column, pattern.value, negated, pos)
        if negated:
            raise _Problem(SYNTAX, "NOT is only supported with IN or LIKE", tok.pos)
        if tok.kind == "KEYWORD" and tok.value == "IS":
            raise _Problem(FORBIDDEN_CLAUSE, "IS NULL tests are not allowed", tok.pos)
        if tok.kind != "OP":
            raise _Problem(SYNTAX, "expected a comparison operator", tok.pos)
        op = self.advance().value
        return Comparison(column, op, self.parse_literal(), pos)

    def parse_literal(self) -> str | float:
        tok = self.peek()
        negative = False
        if tok.kind == "ARITH" and tok.value == "-":
            self.advance()
            negative = True
            tok = self.peek()
        if tok.kind == "STRING":
            if negative:
                raise _Problem(SYNTAX, "cannot negate a string literal", tok.pos)
            return self.advance().value
        if tok.kind == "NUMBER":
            value = float(self.advance().value)
            return -value if negative else value
        if tok.kind == "IDENT":
            raise _Problem(SYNTAX, f"expected a literal, got column {tok.value!r}", tok.pos)
        self.forbid(tok)
        raise _Problem(SYNTAX, "expected a literal", tok.pos)


def parse_query(sql: str) -> Query:
    """Parse `sql`, raising a :class:`_Problem` carrying code and offset."""
    return _Parser(tokenize(sql)).parse()


def referenced_columns(query: Query) -> list[tuple[str, int]]:
    """All column references with their character offsets (select, where, order by)."""
    refs: list[tuple[str, int]] = list(query.columns or [])

    def walk(node) -> None:
        if isinstance(node, BoolOp):
            for item in node.items:
                walk(item)
        elif isinstance(node, (Comparison, InList, LikeMatch)):
            refs.append((node.column, node.pos))

    if query.where is not None:
        walk(query.where)
    refs.extend((name, pos) for name, _, pos in query.order_by)
    return refs


def validate(sql: str, column_names: list[str], table_name: str) -> QueryValidationReport:
    """Validate `sql` against a single table with the given columns."""
    try:
        query = parse_query(sql)
    except _Problem as problem:
        return QueryValidationReport(
            ok=False,
            errors=[ValidationError(problem.code, str(problem), problem.pos)],
        )

    errors: list[ValidationError] = []
    known = {name.lower(): name for name in column_names}
    if query.table.lower() != table_name.lower():
        errors.append(ValidationError(SYNTAX, f"unknown table {query.table!r}", query.table_pos))
    for name, pos in referenced_columns(query):
        if name.lower() not in known:
            errors.append(ValidationError(UNKNOWN_COLUMN, f"unknown column {name!r}", pos))
    if query.limit is not None and query.limit > MAX_ROWS:
        errors.append(
            ValidationError(
                LIMIT_EXCEEDED, f"LIMIT {query.limit} exceeds the {MAX_ROWS}-row cap", query.limit_pos
            )
        )
    selected = len(query.columns) if query.columns is not None else len(column_names)
    if selected > MAX_COLUMNS:
        errors.append(
            ValidationError(LIMIT_EXCEEDED, f"{selected} columns exceed the {MAX_COLUMNS}-column cap", 0)
        )
    return QueryValidationReport(ok=not errors, errors=errors)


# ---------------------------------------------------------------------------
# Evaluation


def _as_number(value) -> float | None:
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            number = float(value)
        except ValueError:
            return None
        return number if number == number and abs(number) != float("inf") else None
    return None


def cell_text(value) -> str:
    """Canonical text form of a cell, used by LIKE and group keys."""
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def cells_equal(cell, literal) -> bool:
    if cell is None:
        return False
    a, b = _as_number(cell), _as_number(literal)
    if a is not None and b is not None:
        return a == b
    return str(cell) == str(literal)


def _compare_ordered(cell, literal, op: str, pos: int) -> bool:
    a, b = _as_number(cell), _as_number(literal)
    if a is not None and b is not None:
        left, right = a, b
    elif isinstance(cell, str) and isinstance(literal, str):
        left, right = cell, literal
    else:
        raise ExecutionFailure(
            f"cannot order-compare {cell!r} with {literal!r} at offset {pos}"
        )
    if op == "<":
        return left < right
    if op == ">":
        return left > right
    if op == "<=":
        return left <= right
    return left >= right


def _like_to_regex(pattern: str) -> re.Pattern:
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out), re.DOTALL)


def evaluate_predicate(node, row: dict) -> bool:
    """Evaluate a WHERE tree over a row mapping of lowercase column -> cell."""
    if node is None:
        return True
    if isinstance(node, BoolOp):
        if node.op == "and":
            return all(evaluate_predicate(item, row) for item in node.items)
        return any(evaluate_predicate(item, row) for item in node.items)
    cell = row[node.column.lower()]
    if isinstance(node, Comparison):
        if cell is None:
            return False
        if node.op == "=":
            return cells_equal(cell, node.value)
        if node.op == "<>":
            return not cells_equal(cell, node.value)
        return _compare_ordered(cell, node.value, node.op, node.pos)
    if isinstance(node, InList):
        if cell is None:
            return False
        hit = any(cells_equal(cell, value) for value in node.values)
        return not hit if node.negated else hit
    if isinstance(node, LikeMatch):
        if cell is None:
            return False
        hit = _like_to_regex(node.pattern).fullmatch(cell_text(cell)) is not None
        return not hit if node.negated else hit
    raise ExecutionFailure(f"unsupported predicate node {node!r}")


def order_key(cell):
    """Sort key placing nulls last; numeric cells compare numerically."""
    if cell is None:
        return (2, 0)
    number = _as_number(cell)
    if number is not None:
        return (0, number)
    return (1, str(cell))


class _ReverseOrder:
    """Inverts comparisons so one stable pass can sort a column descending
    while still keeping nulls last."""

    __slots__ = ("key",)

    def __init__(self, key):
        self.key = key

    def __lt__(self, other: "_ReverseOrder") -> bool:
        return other.key < self.key


def directed_order_key(cell, ascending: bool):
    key = order_key(cell)
    return (cell is None, key if ascending else _ReverseOrder(key))
