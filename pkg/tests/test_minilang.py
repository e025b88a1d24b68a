import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltt.corpus import load_bundled
from ltt.minilang import LexError, MiniLangSyntaxError, lex, parse, unparse
from ltt.synth import Habits, ProgramGenerator
from ltt.trees import Node, Token, TokenKind

P, K, I, N = TokenKind.PUNCTUATION, TokenKind.KEYWORD, TokenKind.IDENTIFIER, TokenKind.INT_LITERAL


def test_lex_empty():
    assert lex("") == []


def test_lex_for_header():
    toks = lex("for(int i=0;")
    assert [t.text for t in toks] == ["for", "(", "int", "i", "=", "0", ";"]
    assert [t.kind for t in toks] == [K, P, K, I, P, N, P]


def test_lex_error_position():
    with pytest.raises(LexError) as e:
        lex("int x@;")
    assert (e.value.line, e.value.column) == (1, 6)


def test_lex_maximal_munch():
    assert [t.text for t in lex("++i<=j==k!=!a&&b||c")] == \
        ["++", "i", "<=", "j", "==", "k", "!=", "!", "a", "&&", "b", "||", "c"]
    assert lex("true")[0].kind == TokenKind.BOOL_LITERAL
    assert lex('"hi there"')[0].kind == TokenKind.STRING_LITERAL


def test_parse_empty_main():
    root = parse("fn main() { }").root
    assert root.kind == "CompilationUnit"
    fn = root.children[0]
    assert fn.kind == "FunctionDecl"
    assert [c.kind if isinstance(c, Node) else c.text for c in fn.children] == ["fn", "main", "ParamList", "Block"]
    assert fn.children[1].kind == TokenKind.IDENTIFIER


def test_parse_single_param():
    fn = parse("fn f(int a) { return a; }").root.children[0]
    params = fn.children[2]
    plist = [c for c in params.children if isinstance(c, Node)]
    assert len(plist) == 1 and plist[0].kind == "Param"
    type_node, name = plist[0].children
    assert type_node.kind == "PredefinedType" and type_node.children[0].text == "int"
    assert name.kind == "IdentifierName" and name.children[0].text == "a"


def test_parse_error():
    with pytest.raises(MiniLangSyntaxError):
        parse("fn f( {")


def test_precedence_and_associativity():
    e = parse("a - b - c * d", root="SubtractExpression").root
    # (a - b) - (c * d)
    assert e.children[0].kind == "SubtractExpression"
    assert e.children[2].kind == "MultiplyExpression"
    assert parse("a || b && c", root="LogicalOrExpression").root.children[2].kind == "LogicalAndExpression"


def test_unparse_idempotent():
    src = "fn main ( ) { }"
    assert unparse(parse(src)) == src
    assert unparse(parse(unparse(parse(src)))) == src


def test_empty_block_unparse():
    assert unparse(parse("{ }", root="Block")) == "{ }"


def test_statement_roots():
    t = parse("for ( int i = 0 ; i < n ; ++ i ) { x = x + i ; }", root="ForStatement")
    assert t.root.kind == "ForStatement"
    assert unparse(t).startswith("for (")


def test_bundled_corpus_round_trip():
    _, trees, _ = load_bundled()
    assert len(trees) >= 300
    for t in trees:
        assert parse(unparse(t)) == t


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_programs_round_trip(seed):
    rng = np.random.default_rng(seed)
    text = ProgramGenerator(Habits.draw(rng), rng).program()
    t = parse(text)
    assert list(t.tokens()) == lex(text)
    assert parse(unparse(t)) == t
