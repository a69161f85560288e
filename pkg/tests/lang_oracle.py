"""Independent language enumerator used as the oracle for grammar matching.

``enumerate_language`` returns every string of the grammar's language up to a
length budget, computed directly from the AST by set combination (no shared
code with the matcher). Grammars must be free of left recursion, which the
parser guarantees.
"""

from oceanarium.grammar import (
    Alternation,
    CharClass,
    Grammar,
    Literal,
    Repeat,
    RuleRef,
    Sequence,
)


class LanguageTooLarge(Exception):
    pass


def enumerate_language(grammar: Grammar, max_len: int, cap: int = 50_000) -> set[str]:
    memo: dict[tuple[str, int], set[str]] = {}

    def expand(expr, budget: int) -> set[str]:
        if isinstance(expr, Literal):
            return {expr.text} if len(expr.text) <= budget else set()
        if isinstance(expr, CharClass):
            if expr.negated:
                raise ValueError("the enumeration oracle does not support negated classes")
            if budget < 1:
                return set()
            chars = set()
            for lo, hi in expr.ranges:
                for code in range(ord(lo), ord(hi) + 1):
                    chars.add(chr(code))
            return chars
        if isinstance(expr, RuleRef):
            key = (expr.name, budget)
            if key not in memo:
                memo[key] = set()  # non-left-recursive grammars never revisit this key mid-computation
                memo[key] = expand(grammar.rules[expr.name], budget)
            return memo[key]
        if isinstance(expr, Alternation):
            out: set[str] = set()
            for item in expr.items:
                out |= expand(item, budget)
                _check(out, cap)
            return out
        if isinstance(expr, Sequence):
            parts = {""}
            for item in expr.items:
                grown: set[str] = set()
                for prefix in parts:
                    for suffix in expand(item, budget - len(prefix)):
                        grown.add(prefix + suffix)
                        _check(grown, cap)
                parts = grown
                if not parts:
                    break
            return parts
        if isinstance(expr, Repeat):
            once = expand(expr.item, budget)
            if expr.max == 1:
                return once | {""}
            out = set(once)
            if expr.min == 0:
                out.add("")
            frontier = set(once)
            while frontier:
                grown = set()
                for prefix in frontier:
                    remaining = budget - len(prefix)
                    if remaining < 0:
                        continue
                    for suffix in expand(expr.item, remaining):
                        candidate = prefix + suffix
                        if len(candidate) <= budget and candidate not in out:
                            grown.add(candidate)
                out |= grown
                _check(out, cap)
                frontier = grown
            return out
        raise TypeError(expr)

    return expand(grammar.rules[grammar.root], max_len)


def _check(strings: set, cap: int) -> None:
    if len(strings) > cap:
        raise LanguageTooLarge(f"more than {cap} strings")
