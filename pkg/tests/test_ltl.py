import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sracare.errors import FormulaSyntaxError, TraceFormatError, UnknownProposition
from sracare.properties.ltl import (
    And,
    Const,
    Finally,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    Prop,
    Until,
    eval_ltl,
    parse_formula,
)
from sracare.trace import Event, EventKind, Trace

# four propositions over a four-event alphabet, deliberately overlapping
PROPS = {
    "p": lambda e: bool(e.get("v") & 1),
    "q": lambda e: bool(e.get("v") & 2),
    "r": lambda e: e.get("v") == 0,
    "s": lambda e: e.get("v") == 3,
}
UNARY = (Not, Next, Globally, Finally)
BINARY = (And, Or, Implies, Until)


def make_trace(values):
    return Trace(Event(i + 1, EventKind.IRQ, {"v": v}) for i, v in enumerate(values)).finalize()


def holds(f, events, i):
    """Finite-trace semantics written straight from the definitions."""
    n = len(events)
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Prop):
        return i < n and PROPS[f.name](events[i])
    if isinstance(f, Not):
        return not holds(f.arg, events, i)
    if isinstance(f, And):
        return holds(f.left, events, i) and holds(f.right, events, i)
    if isinstance(f, Or):
        return holds(f.left, events, i) or holds(f.right, events, i)
    if isinstance(f, Implies):
        return not holds(f.left, events, i) or holds(f.right, events, i)
    if isinstance(f, Next):
        return i + 1 < n and holds(f.arg, events, i + 1)
    if isinstance(f, Globally):
        return all(holds(f.arg, events, j) for j in range(i, n))
    if isinstance(f, Finally):
        return any(holds(f.arg, events, j) for j in range(i, n))
    if isinstance(f, Until):
        return any(
            holds(f.right, events, j) and all(holds(f.left, events, k) for k in range(i, j))
            for j in range(i, n)
        )
    raise TypeError(f)


def formulas(depth):
    atoms = [Prop(name) for name in PROPS]
    if depth == 1:
        return atoms
    smaller = formulas(depth - 1)
    return (
        atoms
        + [op(f) for op in UNARY for f in smaller]
        + [op(a, b) for op in BINARY for a in smaller for b in smaller]
    )


def traces(max_len):
    for n in range(max_len + 1):
        yield from itertools.product(range(4), repeat=n)


def agree(f, values):
    trace = make_trace(values)
    result = eval_ltl(f, trace, PROPS)
    assert result.holds == holds(f, trace.events, 0), (str(f), values)
    if not result.holds and values:
        assert 1 <= result.witness <= len(values)


@pytest.mark.slow
def test_matches_definition_depth2_all_traces_to_length6():
    fs = formulas(2)
    for values in traces(6):
        for f in fs:
            agree(f, values)


@pytest.mark.slow
def test_matches_definition_depth3_all_traces_to_length3():
    fs = formulas(3)
    for values in traces(3):
        for f in fs:
            agree(f, values)


formula_strategy = st.recursive(
    st.sampled_from([Prop(name) for name in PROPS]),
    lambda children: st.one_of(
        st.builds(lambda op, a: op(a), st.sampled_from(UNARY), children),
        st.builds(lambda op, a, b: op(a, b), st.sampled_from(BINARY), children, children),
    ),
    max_leaves=4,
)


@given(formula_strategy, st.lists(st.integers(0, 3), max_size=6))
@settings(max_examples=500, deadline=None)
def test_matches_definition_sampled(f, values):
    agree(f, values)


@given(formula_strategy)
@settings(max_examples=200, deadline=None)
def test_printed_formula_parses_back(f):
    assert parse_formula(str(f)) == f


@pytest.mark.parametrize("text,expected", [
    ("p -> q -> r", Implies(Prop("p"), Implies(Prop("q"), Prop("r")))),
    ("p | q & r", Or(Prop("p"), And(Prop("q"), Prop("r")))),
    ("p & q U r", And(Prop("p"), Until(Prop("q"), Prop("r")))),
    ("p U q U r", Until(Prop("p"), Until(Prop("q"), Prop("r")))),
    ("G !p", Globally(Not(Prop("p")))),
    ("!p U q", Until(Not(Prop("p")), Prop("q"))),
    ("X (p -> F q)", Next(Implies(Prop("p"), Finally(Prop("q"))))),
    ("true & !false", And(Const(True), Not(Const(False)))),
])
def test_precedence(text, expected):
    assert parse_formula(text) == expected


@pytest.mark.parametrize("text", ["", "p &", "(p", "p q", "-> p", "p $ q", "G"])
def test_syntax_errors(text):
    with pytest.raises(FormulaSyntaxError):
        parse_formula(text)


def test_unknown_proposition():
    with pytest.raises(UnknownProposition):
        eval_ltl(parse_formula("G nope"), make_trace([0]))


def test_unfinalized_trace_is_refused():
    with pytest.raises(TraceFormatError):
        eval_ltl(parse_formula("G IRQ"), Trace())


def test_next_is_false_at_the_end():
    assert not eval_ltl(parse_formula("X p"), make_trace([1]), PROPS).holds
    assert eval_ltl(parse_formula("X p"), make_trace([0, 1]), PROPS).holds


def test_empty_trace():
    empty = make_trace([])
    assert eval_ltl(parse_formula("G p"), empty, PROPS).holds
    result = eval_ltl(parse_formula("F p"), empty, PROPS)
    assert not result.holds and result.witness is None


def test_globally_witness_is_first_violation():
    result = eval_ltl(parse_formula("G !s"), make_trace([0, 1, 3, 3]), PROPS)
    assert result == (False, 3)


def test_implication_witness_points_at_the_trigger():
    result = eval_ltl(parse_formula("G (p -> F r)"), make_trace([0, 1, 2, 1, 2]), PROPS)
    assert result == (False, 2)


def test_disjunction_witness_is_where_both_sides_have_failed():
    # G !s fails at ordinal 2, G !r only at ordinal 4
    trace = make_trace([1, 3, 1, 0, 1])
    assert eval_ltl(parse_formula("(G !s) | (G !r)"), trace, PROPS) == (False, 4)
    assert eval_ltl(parse_formula("(G !r) | (G !s)"), trace, PROPS) == (False, 4)


def test_conjunction_witness_is_the_earlier_failure():
    trace = make_trace([1, 3, 1, 0, 1])
    assert eval_ltl(parse_formula("(G !r) & (G !s)"), trace, PROPS) == (False, 2)
    assert eval_ltl(parse_formula("(G !s) & (G !r)"), trace, PROPS) == (False, 2)


def test_event_kind_and_builtin_propositions():
    trace = Trace()
    trace.emit(EventKind.BOOT_START)
    trace.emit(EventKind.FRAME_VERIFY, frame_number=0, verdict="fail")
    trace.emit(EventKind.BOOT_END)
    trace.emit(EventKind.MEM_ACCESS, start=0, length=1, mode="write", verdict="denied", privileged=False)
    trace.finalize()
    assert eval_ltl(parse_formula("F (frame_fail & boot_active)"), trace).holds
    assert eval_ltl(parse_formula("G (access_denied -> unprivileged & !boot_active)"), trace).holds
    assert eval_ltl(parse_formula("!BOOT_END U BOOT_START"), trace).holds
