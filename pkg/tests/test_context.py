import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltt.context import (
    ASCEND, DeterministicContext, Descend, Emit, ScopeSet, Tracer, VariableFeatureVector,
    annotate_identifiers, classify_identifier, trace, update_context, walk_events,
)
from ltt.minilang import parse
from ltt.synth import Habits, ProgramGenerator
from ltt.trees import GLOBAL, LOCAL, StructureError, Token, TokenKind, depth_first_productions


def ident(text):
    return Token(text, TokenKind.IDENTIFIER)


def test_initial_context():
    ctx = DeterministicContext()
    assert ctx.depth == 0 and ctx.ancestor_history == () and ctx.last_tokens == ()


def test_descend_history():
    ctx = DeterministicContext()
    for ev in (Descend("CompilationUnit", 0), Descend("FunctionDecl", 0), Descend("Block", 3)):
        ctx = update_context(ctx, ev)
    assert ctx.depth == 2
    assert ctx.ancestor_history == (("CompilationUnit", 0), ("FunctionDecl", 3))
    assert ctx.parent_kind == "FunctionDecl"


def test_last_tokens_fifo():
    ctx = DeterministicContext()
    for i in range(12):
        ctx = update_context(ctx, Emit(ident(f"t{i}")))
    assert ctx.last_tokens == tuple(f"t{i}" for i in range(2, 12))


def test_ascend_past_root():
    with pytest.raises(StructureError):
        update_context(DeterministicContext(), ASCEND)


def test_depth_cap():
    ctx = DeterministicContext()
    for i in range(40):
        ctx = update_context(ctx, Descend("Block", 0))
    assert ctx.depth == 39 and ctx.depth_bucket == "deep"
    assert len(ctx.ancestor_history) == 10


def _scope_at(src, stop_text):
    """Scope right after the first emitted token equal to ``stop_text``."""
    tr = Tracer()
    for ev in walk_events(parse(src)):
        tr.apply(ev)
        if isinstance(ev, Emit) and ev.token.text == stop_text:
            return tr.scope
    raise AssertionError("token not found")


def test_empty_program_scope():
    steps = trace(parse(""))
    assert all(s.scope in (None, ()) for s in steps)


def test_for_initializer_declares():
    scope = _scope_at("fn f ( ) { for ( int i = 0 ; i < 3 ; ++ i ) { } }", "0")
    assert scope.vectors() == (VariableFeatureVector("i", "int", 0, 0),)


def test_shadowing_and_restore():
    src = "fn f ( ) { int x = 1 ; { bool x = true ; print ( x ) ; } print ( x ) ; }"
    tr = Tracer()
    seen = []
    for ev in walk_events(parse(src)):
        tr.apply(ev)
        if isinstance(ev, Emit) and ev.token.text == "print":
            seen.append(tr.scope.lookup("x").declared_type)
    assert seen == ["bool", "int"]


def test_classify():
    s = ScopeSet()
    s.declare("i", "int")
    assert classify_identifier(s, ident("i")) == LOCAL
    assert classify_identifier(ScopeSet(), ident("Math")) == GLOBAL


def test_out_of_block_identifier_is_global():
    t = annotate_identifiers(parse("fn f ( ) { { int x = 1 ; x = 3 ; } x = 2 ; }"))
    kinds = [p.parent_kind for p in depth_first_productions(t) if p.parent_kind.startswith("IdentifierName")]
    # the declarator name, the in-block use, the use after the block closed
    assert kinds == ["IdentifierName@global", "IdentifierName@local", "IdentifierName@global"]


def test_params_and_globals_in_scope():
    t = annotate_identifiers(parse("int g = 1 ; fn f ( int a ) { return a + g ; }"))
    kinds = [p.parent_kind for p in depth_first_productions(t) if p.parent_kind.startswith("IdentifierName")]
    # declaration names themselves are generated before they are in scope
    assert kinds == ["IdentifierName@global", "IdentifierName@global", "IdentifierName@local",
                     "IdentifierName@local"]


def test_assignment_rank():
    scope = _scope_at("fn f ( ) { int a = 0 ; int b = 0 ; a = 5 ; }", "5")
    # "a" was assigned after "b" was declared
    assert scope.lookup("a").assign_rank == 0 and scope.lookup("b").assign_rank == 1
    assert scope.lookup("b").decl_rank == 0 and scope.lookup("a").decl_rank == 1


def _program(seed):
    rng = np.random.default_rng(seed)
    return parse(ProgramGenerator(Habits.draw(rng), rng).program())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_ranks_are_permutations_and_trace_is_deterministic(seed):
    tree = _program(seed)
    tr = Tracer()
    for ev in walk_events(tree):
        tr.apply(ev)
        vecs = tr.scope.vectors()
        assert sorted(v.decl_rank for v in vecs) == list(range(len(vecs)))
        assert sorted(v.assign_rank for v in vecs) == list(range(len(vecs)))
        assert len({v.identifier for v in vecs}) == len(vecs)
    assert trace(tree) == trace(tree)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_scope_balance(seed):
    tree = _program(seed)
    tr = Tracer()
    for ev in walk_events(tree):
        tr.apply(ev)
    top_level = [c for c in tree.root.children if c.kind == "FieldDeclaration"]
    names = {d.children[0].children[1].children[0].text for d in top_level}
    assert {v.identifier for v in tr.scope.vectors()} == names


def test_from_vectors_reproduces_ranks():
    s = ScopeSet()
    for n in "abc":
        s.declare(n, "int")
    s.assign("a")
    assert ScopeSet.from_vectors(s.vectors()).vectors() == s.vectors()


def test_array_parameter_type():
    steps = trace(parse("fn f ( int [ ] xs ) { return xs [ 0 ] ; }"))
    last = [s.scope for s in steps if s.scope][-1]
    assert last == (VariableFeatureVector("xs", "int[]", 0, 0),)
