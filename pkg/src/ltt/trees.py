"""Syntax trees, tokens, children tuples and the depth-first production order.

A tree is made of :class:`Node` objects whose leaves are :class:`Token` objects.
Every internal node expands into an ordered children tuple; the unit a model
predicts is the *symbol* tuple, where an internal child is represented by its
kind string and a token child by the token itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Union


class TokenKind(str, Enum):
    IDENTIFIER = "Identifier"
    KEYWORD = "Keyword"
    PUNCTUATION = "Punctuation"
    INT_LITERAL = "IntLiteral"
    STRING_LITERAL = "StringLiteral"
    BOOL_LITERAL = "BoolLiteral"


# Closed set of internal node kinds produced by the MiniLang frontend.
NODE_KINDS = (
    "CompilationUnit",
    "FunctionDecl",
    "ParamList",
    "Param",
    "FieldDeclaration",
    "LocalDeclarationStatement",
    "VariableDeclaration",
    "EqualsValueClause",
    "PredefinedType",
    "ArrayType",
    "Block",
    "IfStatement",
    "ForStatement",
    "WhileStatement",
    "ReturnStatement",
    "ExpressionStatement",
    "AssignExpression",
    "PreIncrementExpression",
    "LogicalOrExpression",
    "LogicalAndExpression",
    "EqualsExpression",
    "NotEqualsExpression",
    "LessThanExpression",
    "LessThanOrEqualExpression",
    "AddExpression",
    "SubtractExpression",
    "MultiplyExpression",
    "DivideExpression",
    "ModuloExpression",
    "NegateExpression",
    "LogicalNotExpression",
    "InvocationExpression",
    "ArgumentList",
    "Argument",
    "ElementAccessExpression",
    "ParenthesizedExpression",
    "IdentifierName",
    "Literal",
    # Chain grammar used for the HMM reduction and synthetic experiments.
    "Next",
)

IDENTIFIER_NAME = "IdentifierName"
LOCAL = "local"
GLOBAL = "global"
ANNOTATION_SEP = "@"


def annotate(kind: str, annotation: str) -> str:
    return f"{kind}{ANNOTATION_SEP}{annotation}"


def base_kind(kind: str) -> str:
    return kind.split(ANNOTATION_SEP, 1)[0]


def annotation_of(kind: str) -> str | None:
    parts = kind.split(ANNOTATION_SEP, 1)
    return parts[1] if len(parts) == 2 else None


ALL_KINDS = frozenset(NODE_KINDS) | {
    annotate(IDENTIFIER_NAME, LOCAL),
    annotate(IDENTIFIER_NAME, GLOBAL),
}


class StructureError(ValueError):
    """Raised for malformed trees or impossible traversal events."""


class AstParseError(ValueError):
    """Raised when an interchange document violates the schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.reason = message


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        if not isinstance(self.kind, TokenKind):
            object.__setattr__(self, "kind", TokenKind(self.kind))

    def __repr__(self):
        return f"Token({self.text!r}, {self.kind.value})"


@dataclass(frozen=True)
class Node:
    kind: str
    children: tuple = ()

    def __post_init__(self):
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    def __repr__(self):
        return f"Node({self.kind!r}, {list(self.children)!r})"


Child = Union[Node, Token]
# A children-tuple symbol: kind string for internal children, Token for leaves.
Symbol = Union[str, Token]


def symbol_of(child: Child) -> Symbol:
    return child.kind if isinstance(child, Node) else child


def children_key(node: Node) -> tuple:
    return tuple(symbol_of(c) for c in node.children)


def is_token_tuple(key: tuple) -> bool:
    """True when every element of a children tuple is a token."""
    return len(key) > 0 and all(isinstance(s, Token) for s in key)


@dataclass(frozen=True)
class Tree:
    root: Node

    @property
    def token_count(self) -> int:
        return sum(1 for _ in self.tokens())

    def tokens(self) -> Iterator[Token]:
        stack: list[Child] = [self.root]
        while stack:
            item = stack.pop()
            if isinstance(item, Token):
                yield item
            else:
                stack.extend(reversed(item.children))

    def internal_nodes(self) -> Iterator[Node]:
        stack: list[Child] = [self.root]
        while stack:
            item = stack.pop()
            if isinstance(item, Node):
                yield item
                stack.extend(reversed(item.children))


@dataclass(frozen=True)
class Production:
    parent_kind: str
    children: tuple
    step: int

    @property
    def token_only(self) -> bool:
        return is_token_tuple(self.children)


def check_tree(tree: Tree) -> None:
    """Raise StructureError unless every internal node has children.

    The root CompilationUnit of the empty program is the one exception.
    """
    root = tree.root
    if not isinstance(root, Node):
        raise StructureError("tree root must be an internal node")
    for node in tree.internal_nodes():
        if not node.children and not (node is root and node.kind == "CompilationUnit"):
            raise StructureError(f"internal node {node.kind} has no children")
        for c in node.children:
            if not isinstance(c, (Node, Token)):
                raise StructureError(f"bad child {c!r} under {node.kind}")


def depth_first_productions(tree: Tree) -> list[Production]:
    """Productions in the order the stack-based generator visits internal nodes."""
    check_tree(tree)
    out = []
    stack: list[Child] = [tree.root]
    while stack:
        item = stack.pop()
        if isinstance(item, Token):
            continue
        out.append(Production(item.kind, children_key(item), len(out)))
        stack.extend(reversed(item.children))
    return out


def map_kinds(node: Node, fn) -> Node:
    return Node(
        fn(node.kind),
        tuple(map_kinds(c, fn) if isinstance(c, Node) else c for c in node.children),
    )


def strip_annotations(tree: Tree) -> Tree:
    return Tree(map_kinds(tree.root, base_kind))


# -- interchange format ------------------------------------------------------

def to_obj(child: Child) -> dict:
    if isinstance(child, Token):
        return {"token": child.text, "tokenKind": child.kind.value}
    return {"kind": child.kind, "children": [to_obj(c) for c in child.children]}


def from_obj(obj, path: str = "$") -> Child:
    if not isinstance(obj, dict):
        raise AstParseError(path, "expected an object")
    if "token" in obj:
        text, kind = obj.get("token"), obj.get("tokenKind")
        if not isinstance(text, str) or not text:
            raise AstParseError(path, "token text must be a non-empty string")
        try:
            return Token(text, TokenKind(kind))
        except ValueError:
            raise AstParseError(path, f"unknown tokenKind {kind!r}") from None
    if "kind" not in obj:
        raise AstParseError(path, 'missing "kind"')
    kind = obj["kind"]
    if kind not in ALL_KINDS:
        raise AstParseError(path, f"unknown node kind {kind!r}")
    children = obj.get("children")
    if not isinstance(children, list):
        raise AstParseError(path, '"children" must be a list')
    return Node(kind, tuple(from_obj(c, f"{path}.children[{i}]") for i, c in enumerate(children)))


def serialize_ast(tree: Tree) -> str:
    return json.dumps(to_obj(tree.root), ensure_ascii=False, separators=(",", ":"))


def deserialize_ast(text: str) -> Tree:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise AstParseError("$", f"invalid JSON: {e}") from None
    root = from_obj(obj)
    if not isinstance(root, Node):
        raise AstParseError("$", "root must be an internal node")
    return Tree(root)


def write_corpus(trees: Iterable[Tree], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in trees:
            f.write(serialize_ast(t))
            f.write("\n")


def read_corpus(path) -> list[Tree]:
    trees = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                trees.append(deserialize_ast(line))
            except AstParseError as e:
                raise AstParseError(f"line {lineno}:{e.path}", e.reason) from None
    return trees
