"""
Finite-trace LTL monitor.

Formulas are written in ASCII:

    G (boot_active -> !(IRQ | DMA | DEBUG))
    (G !MSG_SEND) | (!MSG_SEND U INIT_UART)

Operators by binding strength, loosest first: ``->`` (right associative),
``|``, ``&``, ``U`` (right associative), then the prefix operators ``!``,
``X``, ``G`` and ``F``. Propositions are event kind names plus the names in
the proposition table passed to eval_ltl.

Semantics on a trace of n events, evaluated at position i: X p is false at
the last position, G p needs p at every position from i on, F p at some
position, p U q needs q at some j >= i with p everywhere before j.
"""
import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Union

from ..errors import FormulaSyntaxError, TraceFormatError, UnknownProposition
from ..trace import Event, EventKind, Trace

logger = logging.getLogger(__name__)

Predicate = Callable[[Event], bool]


@dataclass(frozen=True)
class Prop:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Not:
    arg: "Formula"

    def __str__(self) -> str:
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} | {_wrap(self.right)}"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} -> {_wrap(self.right)}"


@dataclass(frozen=True)
class Next:
    arg: "Formula"

    def __str__(self) -> str:
        return f"X {_wrap(self.arg)}"


@dataclass(frozen=True)
class Globally:
    arg: "Formula"

    def __str__(self) -> str:
        return f"G {_wrap(self.arg)}"


@dataclass(frozen=True)
class Finally:
    arg: "Formula"

    def __str__(self) -> str:
        return f"F {_wrap(self.arg)}"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} U {_wrap(self.right)}"


Formula = Union[Prop, Const, Not, And, Or, Implies, Next, Globally, Finally, Until]

_UNARY = {"!": Not, "X": Next, "G": Globally, "F": Finally}


def _wrap(f: Formula) -> str:
    return str(f) if isinstance(f, (Prop, Const)) else f"({f})"


def propositions(f: Formula) -> List[str]:
    if isinstance(f, Prop):
        return [f.name]
    if isinstance(f, Const):
        return []
    if isinstance(f, (Not, Next, Globally, Finally)):
        return propositions(f.arg)
    return propositions(f.left) + propositions(f.right)


# parser

_TOKENS = re.compile(r"\s*(->|[!&|()]|[A-Za-z_][A-Za-z0-9_]*)")


def _tokenize(text: str) -> List[str]:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        match = _TOKENS.match(text, pos)
        if not match:
            raise FormulaSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r} at {pos}")
        tokens.append(match.group(1))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> Optional[str]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: Optional[str] = None) -> str:
        token = self.peek()
        if token is None:
            raise FormulaSyntaxError("unexpected end of formula")
        if expected is not None and token != expected:
            raise FormulaSyntaxError(f"expected {expected!r}, got {token!r}")
        self.pos += 1
        return token

    def parse(self) -> Formula:
        f = self.implication()
        if self.peek() is not None:
            raise FormulaSyntaxError(f"trailing input at {self.peek()!r}")
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.until()
        while self.peek() == "&":
            self.take()
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        left = self.unary()
        if self.peek() == "U":
            self.take()
            return Until(left, self.until())
        return left

    def unary(self) -> Formula:
        token = self.take()
        if token in _UNARY:
            return _UNARY[token](self.unary())
        if token == "(":
            f = self.implication()
            self.take(")")
            return f
        if token in ("true", "false"):
            return Const(token == "true")
        if token in ("->", "&", "|", ")", "U"):
            raise FormulaSyntaxError(f"unexpected {token!r}")
        return Prop(token)


def parse_formula(text: str) -> Formula:
    return _Parser(text).parse()


# propositions

def default_propositions() -> Dict[str, Predicate]:
    table: Dict[str, Predicate] = {kind.value: (lambda e, k=kind: e.kind is k) for kind in EventKind}
    table["boot_active"] = lambda e: e.boot_active
    table["frame_fail"] = lambda e: e.kind is EventKind.FRAME_VERIFY and e.get("verdict") == "fail"
    table["access_denied"] = lambda e: e.kind is EventKind.MEM_ACCESS and e.get("verdict") == "denied"
    table["unprivileged"] = lambda e: e.kind is EventKind.MEM_ACCESS and e.get("privileged") is False
    return table


# evaluation

class LtlResult(NamedTuple):
    holds: bool
    witness: Optional[int] = None  # ordinal of the first violating event


class _Evaluator:
    """Truth tables per subformula, filled backwards; index n is the empty suffix."""

    def __init__(self, events, table: Mapping[str, Predicate]):
        self.events = events
        self.n = len(events)
        self.table = table
        self.cache: Dict[Formula, List[bool]] = {}

    def values(self, f: Formula) -> List[bool]:
        if f in self.cache:
            return self.cache[f]
        n = self.n
        out = [False] * (n + 1)
        if isinstance(f, Const):
            out = [f.value] * n + [f.value]
        elif isinstance(f, Prop):
            predicate = self.table[f.name]
            out = [bool(predicate(e)) for e in self.events] + [False]
        elif isinstance(f, Not):
            out = [not v for v in self.values(f.arg)]
        elif isinstance(f, And):
            a, b = self.values(f.left), self.values(f.right)
            out = [x and y for x, y in zip(a, b)]
        elif isinstance(f, Or):
            a, b = self.values(f.left), self.values(f.right)
            out = [x or y for x, y in zip(a, b)]
        elif isinstance(f, Implies):
            a, b = self.values(f.left), self.values(f.right)
            out = [(not x) or y for x, y in zip(a, b)]
        elif isinstance(f, Next):
            a = self.values(f.arg)
            out = [i + 1 < n and a[i + 1] for i in range(n)] + [False]
        elif isinstance(f, Globally):
            a = self.values(f.arg)
            out[n] = True
            for i in range(n - 1, -1, -1):
                out[i] = a[i] and out[i + 1]
        elif isinstance(f, Finally):
            a = self.values(f.arg)
            for i in range(n - 1, -1, -1):
                out[i] = a[i] or out[i + 1]
        elif isinstance(f, Until):
            a, b = self.values(f.left), self.values(f.right)
            for i in range(n - 1, -1, -1):
                out[i] = b[i] or (a[i] and out[i + 1])
        else:
            raise TypeError(f"not a formula: {f!r}")
        self.cache[f] = out
        return out

    def witness(self, f: Formula, i: int) -> int:
        """Position that makes f false at i."""
        if isinstance(f, Globally):
            a = self.values(f.arg)
            j = next(j for j in range(i, self.n) if not a[j])
            return self.witness(f.arg, j)
        if isinstance(f, And):
            # first position at which some false conjunct is refuted
            return min(self.witness(g, i) for g in (f.left, f.right) if not self.values(g)[i])
        if isinstance(f, Implies):
            return self.witness(f.right, i)
        if isinstance(f, Or):
            # both disjuncts are false at i; refuted once the later one is
            return max(self.witness(f.left, i), self.witness(f.right, i))
        # an unmet X, F or U obligation is charged to the position that raised it
        return i


def eval_ltl(f: Formula, trace: Trace, table: Optional[Mapping[str, Predicate]] = None) -> LtlResult:
    if not trace.finalized:
        raise TraceFormatError("LTL is only evaluated over finalized traces")
    table = dict(default_propositions(), **(table or {}))
    for name in propositions(f):
        if name not in table:
            raise UnknownProposition(f"no proposition named {name!r}")
    events = trace.events
    evaluator = _Evaluator(events, table)
    if evaluator.values(f)[0]:
        return LtlResult(True)
    if not events:
        return LtlResult(False)
    position = min(evaluator.witness(f, 0), len(events) - 1)
    return LtlResult(False, events[position].ordinal)
