"""GBNF-subset grammars: parse, synthesize from token sets, match, and print.

Supported notation: ``name ::= body`` rules, quoted literals, ``[a-z]`` char
classes (ranges, negation), alternation ``|``, grouping ``( )``, the
repetitions ``* + ?``, and ``#`` comments. Left-recursive grammars are
rejected at parse time so matching is a memoized recursive descent that
always terminates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

RULE_NAME_START = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
RULE_NAME_CHARS = RULE_NAME_START + "0123456789-_"

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\", "]": "]", "[": "[", "-": "-"}
_PRINT_ESCAPES = {"\n": "\\n", "\t": "\\t", "\r": "\\r", '"': '\\"', "\\": "\\\\"}


class GrammarError(Exception):
    """Base class for grammar construction failures."""


class GrammarParseError(GrammarError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class LeftRecursionError(GrammarError):
    def __init__(self, cycle: list[str]):
        super().__init__(f"left recursion through rule(s): {' -> '.join(cycle)}")
        self.cycle = cycle


class UndefinedRuleError(GrammarError):
    pass


# -- AST ----------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class CharClass:
    ranges: tuple[tuple[str, str], ...]
    negated: bool = False

    def contains(self, ch: str) -> bool:
        inside = any(lo <= ch <= hi for lo, hi in self.ranges)
        return inside != self.negated


@dataclass(frozen=True)
class RuleRef:
    name: str


@dataclass(frozen=True)
class Sequence:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Alternation:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Repeat:
    item: "Expr"
    min: int  # 0 or 1
    max: int | None  # 1 or None (unbounded)


Expr = Union[Literal, CharClass, RuleRef, Sequence, Alternation, Repeat]


@dataclass
class Grammar:
    rules: dict[str, Expr]
    root: str

    def __post_init__(self):
        if self.root not in self.rules:
            raise UndefinedRuleError(f"root rule {self.root!r} is not defined")


# -- parsing ------------------------------------------------------------


class _Scanner:
    def __init__(self, source: str):
        self.source = source
        self.pos = 0

    def at_end(self) -> bool:
        return self.pos >= len(self.source)

    def peek(self) -> str:
        return self.source[self.pos] if self.pos < len(self.source) else ""

    def advance(self) -> str:
        ch = self.source[self.pos]
        self.pos += 1
        return ch

    def location(self, pos: int | None = None) -> tuple[int, int]:
        pos = self.pos if pos is None else pos
        line = self.source.count("\n", 0, pos) + 1
        column = pos - (self.source.rfind("\n", 0, pos) + 1) + 1
        return line, column

    def error(self, message: str, pos: int | None = None) -> GrammarParseError:
        line, column = self.location(pos)
        return GrammarParseError(message, line, column)

    def skip_space(self) -> None:
        while not self.at_end():
            ch = self.peek()
            if ch.isspace():
                self.pos += 1
            elif ch == "#":
                while not self.at_end() and self.peek() != "\n":
                    self.pos += 1
            else:
                return

    def at_rule_header(self) -> bool:
        """True when the cursor sits on ``name ::=``."""
        i = self.pos
        src = self.source
        if i >= len(src) or src[i] not in RULE_NAME_START:
            return False
        while i < len(src) and src[i] in RULE_NAME_CHARS:
            i += 1
        while i < len(src) and src[i] in " \t":
            i += 1
        return src.startswith("::=", i)


def parse_gbnf(source: str) -> Grammar:
    """Parse grammar text, resolving rule references and rejecting left recursion.

    The root is the rule named ``root`` when present, otherwise the first rule.
    """
    if not source or not source.strip():
        raise GrammarParseError("empty grammar source", 1, 1)
    scanner = _Scanner(source)
    rules: dict[str, Expr] = {}
    refs: list[tuple[str, int]] = []

    scanner.skip_space()
    while not scanner.at_end():
        if not scanner.at_rule_header():
            raise scanner.error("expected a rule definition 'name ::= ...'")
        start = scanner.pos
        name = _parse_name(scanner)
        scanner.skip_space()
        if not scanner.source.startswith("::=", scanner.pos):
            raise scanner.error("expected '::=' after rule name")
        scanner.pos += 3
        if name in rules:
            raise scanner.error(f"rule {name!r} defined twice", start)
        rules[name] = _parse_alternation(scanner, refs)
        scanner.skip_space()

    for name, pos in refs:
        if name not in rules:
            line, column = scanner.location(pos)
            raise UndefinedRuleError(
                f"reference to undefined rule {name!r} (line {line}, column {column})"
            )
    root = "root" if "root" in rules else next(iter(rules))
    grammar = Grammar(rules=rules, root=root)
    _reject_left_recursion(grammar)
    return grammar


def _parse_name(scanner: _Scanner) -> str:
    start = scanner.pos
    while not scanner.at_end() and scanner.peek() in RULE_NAME_CHARS:
        scanner.advance()
    return scanner.source[start : scanner.pos]


def _parse_alternation(scanner: _Scanner, refs: list[tuple[str, int]]) -> Expr:
    branches = [_parse_sequence(scanner, refs)]
    while True:
        scanner.skip_space()
        if scanner.peek() == "|":
            scanner.advance()
            branches.append(_parse_sequence(scanner, refs))
        else:
            break
    return branches[0] if len(branches) == 1 else Alternation(tuple(branches))


def _parse_sequence(scanner: _Scanner, refs: list[tuple[str, int]]) -> Expr:
    items: list[Expr] = []
    while True:
        scanner.skip_space()
        if scanner.at_end() or scanner.peek() in "|)":
            break
        if scanner.at_rule_header():
            break
        items.append(_parse_repetition(scanner, refs))
    if not items:
        raise scanner.error("empty expression")
    return items[0] if len(items) == 1 else Sequence(tuple(items))


def _parse_repetition(scanner: _Scanner, refs: list[tuple[str, int]]) -> Expr:
    item = _parse_primary(scanner, refs)
    suffix = scanner.peek()
    if suffix == "*":
        scanner.advance()
        return Repeat(item, 0, None)
    if suffix == "+":
        scanner.advance()
        return Repeat(item, 1, None)
    if suffix == "?":
        scanner.advance()
        return Repeat(item, 0, 1)
    return item


def _parse_primary(scanner: _Scanner, refs: list[tuple[str, int]]) -> Expr:
    scanner.skip_space()
    if scanner.at_end():
        raise scanner.error("unexpected end of grammar")
    ch = scanner.peek()
    if ch == '"':
        return _parse_literal(scanner)
    if ch == "[":
        return _parse_char_class(scanner)
    if ch == "(":
        scanner.advance()
        inner = _parse_alternation(scanner, refs)
        scanner.skip_space()
        if scanner.peek() != ")":
            raise scanner.error("expected ')'")
        scanner.advance()
        return inner
    if ch in RULE_NAME_START:
        pos = scanner.pos
        name = _parse_name(scanner)
        refs.append((name, pos))
        return RuleRef(name)
    raise scanner.error(f"unexpected character {ch!r}")


def _parse_literal(scanner: _Scanner) -> Literal:
    start = scanner.pos
    scanner.advance()  # opening quote
    chars: list[str] = []
    while True:
        if scanner.at_end():
            raise scanner.error("unterminated literal", start)
        ch = scanner.advance()
        if ch == '"':
            break
        if ch == "\\":
            chars.append(_parse_escape(scanner, start))
        else:
            chars.append(ch)
    if not chars:
        raise scanner.error("empty literal", start)
    return Literal("".join(chars))


def _parse_escape(scanner: _Scanner, start: int) -> str:
    if scanner.at_end():
        raise scanner.error("dangling escape", start)
    ch = scanner.advance()
    if ch in _ESCAPES:
        return _ESCAPES[ch]
    if ch == "x":
        digits = scanner.source[scanner.pos : scanner.pos + 2]
        if len(digits) < 2 or any(d not in "0123456789abcdefABCDEF" for d in digits):
            raise scanner.error("\\x escape needs two hex digits", start)
        scanner.pos += 2
        return chr(int(digits, 16))
    raise scanner.error(f"unknown escape '\\{ch}'", start)


def _parse_char_class(scanner: _Scanner) -> CharClass:
    start = scanner.pos
    scanner.advance()  # opening bracket
    negated = False
    if scanner.peek() == "^":
        negated = True
        scanner.advance()
    ranges: list[tuple[str, str]] = []
    while True:
        if scanner.at_end():
            raise scanner.error("unterminated character class", start)
        ch = scanner.advance()
        if ch == "]":
            break
        if ch == "\\":
            ch = _parse_escape(scanner, start)
        lo = hi = ch
        if scanner.peek() == "-" and scanner.source[scanner.pos + 1 : scanner.pos + 2] not in ("]", ""):
            scanner.advance()
            hi = scanner.advance()
            if hi == "\\":
                hi = _parse_escape(scanner, start)
            if hi < lo:
                raise scanner.error(f"inverted range {lo!r}-{hi!r}", start)
        ranges.append((lo, hi))
    if not ranges:
        raise scanner.error("empty character class", start)
    return CharClass(tuple(ranges), negated)


# -- validation ---------------------------------------------------------


def _nullable_map(grammar: Grammar) -> dict[str, bool]:
    nullable = {name: False for name in grammar.rules}

    def expr_nullable(expr: Expr) -> bool:
        if isinstance(expr, (Literal, CharClass)):
            return False
        if isinstance(expr, RuleRef):
            return nullable[expr.name]
        if isinstance(expr, Sequence):
            return all(expr_nullable(item) for item in expr.items)
        if isinstance(expr, Alternation):
            return any(expr_nullable(item) for item in expr.items)
        if isinstance(expr, Repeat):
            return expr.min == 0 or expr_nullable(expr.item)
        raise TypeError(expr)

    changed = True
    while changed:
        changed = False
        for name, body in grammar.rules.items():
            value = expr_nullable(body)
            if value and not nullable[name]:
                nullable[name] = True
                changed = True
    return nullable


def _left_refs(expr: Expr, nullable: dict[str, bool]) -> set[str]:
    """Rules reachable at the leftmost edge of ``expr`` before any character is consumed."""
    if isinstance(expr, (Literal, CharClass)):
        return set()
    if isinstance(expr, RuleRef):
        return {expr.name}
    if isinstance(expr, Alternation):
        refs: set[str] = set()
        for item in expr.items:
            refs |= _left_refs(item, nullable)
        return refs
    if isinstance(expr, Sequence):
        refs = set()
        for item in expr.items:
            refs |= _left_refs(item, nullable)
            if not _expr_nullable(item, nullable):
                break
        return refs
    if isinstance(expr, Repeat):
        return _left_refs(expr.item, nullable)
    raise TypeError(expr)


def _expr_nullable(expr: Expr, nullable: dict[str, bool]) -> bool:
    if isinstance(expr, (Literal, CharClass)):
        return False
    if isinstance(expr, RuleRef):
        return nullable[expr.name]
    if isinstance(expr, Sequence):
        return all(_expr_nullable(item, nullable) for item in expr.items)
    if isinstance(expr, Alternation):
        return any(_expr_nullable(item, nullable) for item in expr.items)
    if isinstance(expr, Repeat):
        return expr.min == 0 or _expr_nullable(expr.item, nullable)
    raise TypeError(expr)


def _reject_left_recursion(grammar: Grammar) -> None:
    nullable = _nullable_map(grammar)
    edges = {name: _left_refs(body, nullable) for name, body in grammar.rules.items()}

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in grammar.rules}
    stack: list[str] = []

    def visit(name: str) -> None:
        color[name] = GRAY
        stack.append(name)
        for target in sorted(edges[name]):
            if color[target] == GRAY:
                cycle = stack[stack.index(target) :] + [target]
                raise LeftRecursionError(cycle)
            if color[target] == WHITE:
                visit(target)
        stack.pop()
        color[name] = BLACK

    for name in grammar.rules:
        if color[name] == WHITE:
            visit(name)


# -- matching -----------------------------------------------------------


class _MatchEngine:
    """Memoized recursive descent over one candidate string.

    For an expression at a position it computes the set of end positions of
    complete matches inside the text, plus a flag saying whether some string
    in the expression's language consumes the whole remaining text and keeps
    going (used for prefix validity).
    """

    def __init__(self, grammar: Grammar, text: str):
        self.grammar = grammar
        self.text = text
        self.n = len(text)
        self._expr_memo: dict[tuple[int, int], tuple[frozenset[int], bool]] = {}
        self._rule_memo: dict[tuple[str, int], tuple[frozenset[int], bool]] = {}
        self._in_progress: set[tuple[str, int]] = set()

    def ends(self, expr: Expr, pos: int) -> tuple[frozenset[int], bool]:
        key = (id(expr), pos)
        cached = self._expr_memo.get(key)
        if cached is not None:
            return cached
        result = self._compute(expr, pos)
        self._expr_memo[key] = result
        return result

    def _compute(self, expr: Expr, pos: int) -> tuple[frozenset[int], bool]:
        text, n = self.text, self.n
        if isinstance(expr, Literal):
            lit = expr.text
            if text.startswith(lit, pos) and pos + len(lit) <= n:
                return frozenset((pos + len(lit),)), False
            remaining = text[pos:]
            if len(lit) > len(remaining) and lit.startswith(remaining):
                return frozenset(), True
            return frozenset(), False
        if isinstance(expr, CharClass):
            if pos >= n:
                return frozenset(), True
            if expr.contains(text[pos]):
                return frozenset((pos + 1,)), False
            return frozenset(), False
        if isinstance(expr, RuleRef):
            return self._rule(expr.name, pos)
        if isinstance(expr, Alternation):
            ends: set[int] = set()
            extends = False
            for item in expr.items:
                item_ends, item_ext = self.ends(item, pos)
                ends |= item_ends
                extends |= item_ext
            return frozenset(ends), extends
        if isinstance(expr, Sequence):
            frontier: set[int] = {pos}
            extends = False
            for item in expr.items:
                step: set[int] = set()
                for p in frontier:
                    item_ends, item_ext = self.ends(item, p)
                    step |= item_ends
                    extends |= item_ext
                frontier = step
                if not frontier:
                    break
            return frozenset(frontier), extends
        if isinstance(expr, Repeat):
            return self._repeat(expr, pos)
        raise TypeError(expr)

    def _rule(self, name: str, pos: int) -> tuple[frozenset[int], bool]:
        key = (name, pos)
        cached = self._rule_memo.get(key)
        if cached is not None:
            return cached
        if key in self._in_progress:
            # unreachable for validated grammars (left recursion rejected)
            return frozenset(), False
        self._in_progress.add(key)
        try:
            result = self.ends(self.grammar.rules[name], pos)
        finally:
            self._in_progress.discard(key)
        self._rule_memo[key] = result
        return result

    def _repeat(self, expr: Repeat, pos: int) -> tuple[frozenset[int], bool]:
        first_ends, extends = self.ends(expr.item, pos)
        if expr.max == 1:  # the '?' form
            return frozenset(first_ends | {pos}), extends
        # unbounded: fixpoint over positions reachable after >= 1 iterations
        reachable: set[int] = set(first_ends)
        frontier = set(first_ends)
        while frontier:
            step: set[int] = set()
            for p in frontier:
                item_ends, item_ext = self.ends(expr.item, p)
                extends |= item_ext
                step |= item_ends
            frontier = step - reachable
            reachable |= frontier
        if expr.min == 0:
            reachable.add(pos)
        return frozenset(reachable), extends


def matches(grammar: Grammar, candidate: str) -> bool:
    """True iff ``candidate`` is exactly a member of the grammar's language."""
    engine = _MatchEngine(grammar, candidate)
    ends, _ = engine.ends(grammar.rules[grammar.root], 0)
    return len(candidate) in ends


def prefix_valid(grammar: Grammar, prefix: str) -> bool:
    """True iff some member of the grammar's language starts with ``prefix``."""
    engine = _MatchEngine(grammar, prefix)
    ends, extends = engine.ends(grammar.rules[grammar.root], 0)
    return extends or len(prefix) in ends


# -- token grammars -----------------------------------------------------


def grammar_from_tokens(tokens: list[str]) -> Grammar:
    """Grammar whose language is exactly the given token set."""
    if not tokens:
        raise ValueError("token list must be non-empty")
    seen: set[str] = set()
    for token in tokens:
        if not token:
            raise ValueError("tokens must be non-empty")
        if token in seen:
            raise ValueError(f"duplicate token {token!r}")
        seen.add(token)
    literals = tuple(Literal(t) for t in tokens)
    root: Expr = literals[0] if len(literals) == 1 else Alternation(literals)
    return Grammar(rules={"root": root}, root="root")


def extract_token(grammar: Grammar, raw_output: str) -> str | None:
    """The last whitespace-delimited word of ``raw_output`` in the grammar's language."""
    for word in reversed(raw_output.split()):
        if matches(grammar, word):
            return word
    return None


# -- printing -----------------------------------------------------------


def _print_char(ch: str, in_class: bool) -> str:
    if in_class:
        if ch in ("]", "\\", "^", "-"):
            return "\\" + ch if ch != "^" else "\\x5e"
        if ch in ("\n", "\t", "\r"):
            return _PRINT_ESCAPES[ch]
        return ch
    return _PRINT_ESCAPES.get(ch, ch)


def _print_expr(expr: Expr, parent: str) -> str:
    if isinstance(expr, Literal):
        return '"' + "".join(_print_char(c, False) for c in expr.text) + '"'
    if isinstance(expr, CharClass):
        body = "".join(
            _print_char(lo, True) if lo == hi else f"{_print_char(lo, True)}-{_print_char(hi, True)}"
            for lo, hi in expr.ranges
        )
        return f"[^{body}]" if expr.negated else f"[{body}]"
    if isinstance(expr, RuleRef):
        return expr.name
    if isinstance(expr, Sequence):
        text = " ".join(_print_expr(item, "seq") for item in expr.items)
        return f"({text})" if parent in ("repeat",) else text
    if isinstance(expr, Alternation):
        text = " | ".join(_print_expr(item, "alt") for item in expr.items)
        return f"({text})" if parent in ("seq", "repeat") else text
    if isinstance(expr, Repeat):
        suffix = {(0, None): "*", (1, None): "+", (0, 1): "?"}[(expr.min, expr.max)]
        text = _print_expr(expr.item, "repeat") + suffix
        return f"({text})" if parent == "repeat" else text
    raise TypeError(expr)


def print_gbnf(grammar: Grammar) -> str:
    """Canonical textual form; ``parse_gbnf(print_gbnf(g))`` reproduces ``g``."""
    ordered = [grammar.root] + [name for name in grammar.rules if name != grammar.root]
    lines = [f"{name} ::= {_print_expr(grammar.rules[name], 'top')}" for name in ordered]
    return "\n".join(lines) + "\n"
