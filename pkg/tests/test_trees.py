import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltt.minilang import lex, parse
from ltt.trees import (
    AstParseError, Node, StructureError, Token, TokenKind, Tree, children_key,
    depth_first_productions, deserialize_ast, read_corpus, serialize_ast, write_corpus,
)

EQ = Token("=", TokenKind.PUNCTUATION)
SUM = Token("sum", TokenKind.IDENTIFIER)
EQUALS_SUM = Tree(Node("EqualsValueClause", (EQ, Node("IdentifierName", (SUM,)))))


def recursive_productions(node):
    """Independent pre-order enumeration."""
    out = [(node.kind, children_key(node))]
    for c in node.children:
        if isinstance(c, Node):
            out += recursive_productions(c)
    return out


tokens = st.builds(Token, st.text("abcxyz", min_size=1, max_size=3), st.sampled_from(list(TokenKind)))
kinds = st.sampled_from(["Block", "IfStatement", "AddExpression", "IdentifierName", "Literal"])
nodes = st.recursive(
    st.builds(lambda k, t: Node(k, (t,)), kinds, tokens),
    lambda inner: st.builds(lambda k, cs: Node(k, tuple(cs)), kinds,
                            st.lists(st.one_of(inner, tokens), min_size=1, max_size=4)),
    max_leaves=25,
)


def test_equals_value_clause_production():
    prods = depth_first_productions(EQUALS_SUM)
    assert prods[0].parent_kind == "EqualsValueClause"
    assert prods[0].children == (EQ, "IdentifierName")
    assert [p.parent_kind for p in prods] == ["EqualsValueClause", "IdentifierName"]


def test_single_node_tree():
    t = Tree(Node("Literal", (Token("0", TokenKind.INT_LITERAL),)))
    assert len(depth_first_productions(t)) == 1


def test_function_production_order():
    t = parse("fn f(){return 0;}")
    kinds = [p.parent_kind for p in depth_first_productions(t)]
    assert kinds == ["CompilationUnit", "FunctionDecl", "ParamList", "Block", "ReturnStatement", "Literal"]
    assert [(p.parent_kind, p.children) for p in depth_first_productions(t)] == recursive_productions(t.root)


def test_empty_internal_node_rejected():
    with pytest.raises(StructureError):
        depth_first_productions(Tree(Node("Block", (Node("Block", ()),))))


@settings(max_examples=200, deadline=None)
@given(nodes)
def test_productions_match_recursive_order(root):
    t = Tree(root)
    prods = depth_first_productions(t)
    assert [(p.parent_kind, p.children) for p in prods] == recursive_productions(root)
    assert len(prods) == sum(1 for _ in t.internal_nodes())
    assert [p.step for p in prods] == list(range(len(prods)))
    leaf_order = [s for p in prods for s in p.children if isinstance(s, Token)]
    # tokens of each production appear in source order when reassembled by pre-order
    assert sorted(map(repr, leaf_order)) == sorted(map(repr, t.tokens()))


@settings(max_examples=200, deadline=None)
@given(nodes)
def test_serialization_round_trip(root):
    t = Tree(root)
    assert deserialize_ast(serialize_ast(t)) == t


def test_token_order_matches_lexer():
    src = "fn main ( ) { int x = 1 ; for ( int i = 0 ; i < 3 ; ++ i ) { x = x * 2 ; } print ( x ) ; }"
    assert list(parse(src).tokens()) == lex(src)


def test_empty_unit_round_trips():
    t = Tree(Node("CompilationUnit", ()))
    assert deserialize_ast(serialize_ast(t)) == t
    assert depth_first_productions(t)[0].children == ()


def test_fragment_round_trip_keeps_productions():
    again = deserialize_ast(serialize_ast(EQUALS_SUM))
    assert depth_first_productions(again) == depth_first_productions(EQUALS_SUM)


def test_missing_kind_is_schema_error():
    doc = json.dumps({"kind": "Block", "children": [{"children": []}]})
    with pytest.raises(AstParseError) as e:
        deserialize_ast(doc)
    assert "children[0]" in e.value.path


def test_unknown_token_kind():
    with pytest.raises(AstParseError):
        deserialize_ast(json.dumps({"token": "x", "tokenKind": "Word"}))


def test_corpus_file_round_trip(tmp_path, small_trees):
    path = tmp_path / "c.asts.jsonl"
    write_corpus(small_trees, path)
    assert read_corpus(path) == small_trees
    assert len(path.read_text().splitlines()) == len(small_trees)


def test_corpus_error_names_line(tmp_path):
    path = tmp_path / "bad.asts.jsonl"
    path.write_text(serialize_ast(EQUALS_SUM) + "\n" + '{"children": []}\n')
    with pytest.raises(AstParseError) as e:
        read_corpus(path)
    assert e.value.path.startswith("line 2")
