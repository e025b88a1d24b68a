"""Deterministic traversal state: ancestry, recent tokens and variable scope.

Everything here is a pure function of the partial tree generated so far, so a
parsed program yields exactly one sequence of contexts. The same
:class:`Tracer` is driven by tree walks during training and by the sampler
during generation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

from .trees import (
    GLOBAL, IDENTIFIER_NAME, LOCAL, Node, Production, StructureError, Token,
    Tree, annotate, base_kind, check_tree, children_key,
)

HISTORY = 10
LAST_TOKENS = 10
DEPTH_CAP = 32
RANK_CAP = 9

SCOPE_KINDS = frozenset({"Block", "FunctionDecl", "ForStatement"})


@dataclass(frozen=True)
class Descend:
    kind: str
    child_index: int


@dataclass(frozen=True)
class Emit:
    token: Token


@dataclass(frozen=True)
class Ascend:
    pass


ASCEND = Ascend()
Event = Union[Descend, Emit, Ascend]


@dataclass(frozen=True)
class DeterministicContext:
    # Kinds from the root to the current node and each node's index in its parent.
    kinds: tuple = ()
    indices: tuple = ()
    last_tokens: tuple = ()

    @property
    def depth(self) -> int:
        return max(len(self.kinds) - 1, 0)

    @property
    def depth_bucket(self):
        d = self.depth
        return d if d <= DEPTH_CAP else "deep"

    @property
    def parent_kind(self) -> str | None:
        return self.kinds[-2] if len(self.kinds) >= 2 else None

    @property
    def ancestor_history(self) -> tuple:
        pairs = tuple(zip(self.kinds[:-1], self.indices[1:]))
        return pairs[-HISTORY:]


def update_context(ctx: DeterministicContext, event: Event) -> DeterministicContext:
    if isinstance(event, Descend):
        return DeterministicContext(ctx.kinds + (event.kind,), ctx.indices + (event.child_index,),
                                    ctx.last_tokens)
    if isinstance(event, Emit):
        return DeterministicContext(ctx.kinds, ctx.indices,
                                    (ctx.last_tokens + (event.token.text,))[-LAST_TOKENS:])
    if not ctx.kinds:
        raise StructureError("ascend past the root")
    return DeterministicContext(ctx.kinds[:-1], ctx.indices[:-1], ctx.last_tokens)


@dataclass(frozen=True)
class VariableFeatureVector:
    identifier: str
    declared_type: str
    decl_rank: int = 0
    assign_rank: int = 0

    def feature_keys(self) -> tuple:
        """Embedding keys of the four scope features.

        The identifier shares its key with tokens of the same text; the others
        are (feature, value) pairs so that ("type", "int") differs from "int".
        """
        return (
            ("tok", self.identifier),
            ("type", self.declared_type),
            ("declRank", min(self.decl_rank, RANK_CAP)),
            ("assignRank", min(self.assign_rank, RANK_CAP)),
        )


@dataclass
class _Var:
    name: str
    type: str
    declared: int
    assigned: int


class ScopeSet:
    """Visible variables with a per-frame undo log.

    Shadowing hides the outer declaration until the inner frame closes.
    """

    def __init__(self):
        self._by_name: dict[str, list[_Var]] = {}
        self._frames: list[list[str]] = [[]]
        self._clock = 0

    def copy(self) -> "ScopeSet":
        s = ScopeSet()
        s._by_name = {k: [_Var(v.name, v.type, v.declared, v.assigned) for v in vs]
                      for k, vs in self._by_name.items()}
        s._frames = [list(f) for f in self._frames]
        s._clock = self._clock
        return s

    def push_frame(self):
        self._frames.append([])

    def pop_frame(self):
        if len(self._frames) == 1:
            raise StructureError("cannot pop the outermost scope frame")
        for name in reversed(self._frames.pop()):
            stack = self._by_name[name]
            stack.pop()
            if not stack:
                del self._by_name[name]

    def declare(self, name: str, type_: str):
        self._clock += 1
        self._by_name.setdefault(name, []).append(_Var(name, type_, self._clock, self._clock))
        self._frames[-1].append(name)

    def assign(self, name: str):
        stack = self._by_name.get(name)
        if stack:
            self._clock += 1
            stack[-1].assigned = self._clock

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self._by_name)

    def vectors(self) -> tuple:
        """Feature vectors of visible variables, most recently declared first."""
        visible = [stack[-1] for stack in self._by_name.values()]
        by_decl = sorted(visible, key=lambda v: -v.declared)
        assign_rank = {v.name: r for r, v in enumerate(sorted(visible, key=lambda v: -v.assigned))}
        return tuple(VariableFeatureVector(v.name, v.type, r, assign_rank[v.name])
                     for r, v in enumerate(by_decl))

    def lookup(self, name: str) -> VariableFeatureVector | None:
        for v in self.vectors():
            if v.identifier == name:
                return v
        return None

    @classmethod
    def from_vectors(cls, vectors) -> "ScopeSet":
        """Build a scope whose ranks reproduce the given vectors' ranks."""
        s = cls()
        vectors = list(vectors)
        for v in sorted(vectors, key=lambda v: -v.decl_rank):
            s.declare(v.identifier, v.declared_type)
        for v in sorted(vectors, key=lambda v: -v.assign_rank):
            s.assign(v.identifier)
        return s


def classify_identifier(scope: ScopeSet, token: Token) -> str:
    return LOCAL if token.text in scope else GLOBAL


@dataclass
class _Frame:
    kind: str
    index: int
    type: str | None = None
    name: str | None = None


class Tracer:
    """Applies traversal events to a context and a scope set."""

    def __init__(self, scope: ScopeSet | None = None, last_tokens=()):
        self.ctx = DeterministicContext(last_tokens=tuple(last_tokens)[-LAST_TOKENS:])
        self.scope = scope if scope is not None else ScopeSet()
        self._frames: list[_Frame] = []

    def copy(self) -> "Tracer":
        t = Tracer.__new__(Tracer)
        t.ctx = self.ctx
        t.scope = self.scope.copy()
        t._frames = [_Frame(f.kind, f.index, f.type, f.name) for f in self._frames]
        return t

    @property
    def open_nodes(self) -> int:
        return len(self._frames)

    def apply(self, event: Event):
        if isinstance(event, Descend):
            self.descend(event.kind, event.child_index)
        elif isinstance(event, Emit):
            self.emit(event.token)
        else:
            self.ascend()

    def descend(self, kind: str, child_index: int):
        self.ctx = update_context(self.ctx, Descend(kind, child_index))
        kind = base_kind(kind)
        self._frames.append(_Frame(kind, child_index))
        if kind in SCOPE_KINDS:
            self.scope.push_frame()

    def emit(self, token: Token):
        self.ctx = update_context(self.ctx, Emit(token))
        if not self._frames:
            return
        parent = self._frames[-1]
        if parent.kind == "PredefinedType" or (parent.kind == "ArrayType" and parent.type is None):
            parent.type = token.text
        elif parent.kind == IDENTIFIER_NAME and len(self._frames) >= 2:
            owner = self._frames[-2]
            if owner.kind == "VariableDeclaration" and parent.index == 1:
                self.scope.declare(token.text, owner.type or "?")
            elif owner.kind == "Param":
                owner.name = token.text
            elif (owner.kind == "AssignExpression" and parent.index == 0) or \
                    owner.kind == "PreIncrementExpression":
                self.scope.assign(token.text)

    def ascend(self):
        self.ctx = update_context(self.ctx, ASCEND)
        frame = self._frames.pop()
        owner = self._frames[-1] if self._frames else None
        if frame.kind == "PredefinedType" and owner is not None:
            owner.type = frame.type
        elif frame.kind == "ArrayType" and owner is not None:
            owner.type = f"{frame.type}[]"
        elif frame.kind == "Param" and frame.name is not None:
            self.scope.declare(frame.name, frame.type or "?")
        if frame.kind in SCOPE_KINDS:
            self.scope.pop_frame()


def walk_events(tree: Tree) -> Iterator[Event]:
    """Traversal events in generation order (pre-order, left to right)."""
    check_tree(tree)

    def rec(node: Node, index: int):
        yield Descend(node.kind, index)
        for i, c in enumerate(node.children):
            if isinstance(c, Token):
                yield Emit(c)
            else:
                yield from rec(c, i)
        yield ASCEND

    yield from rec(tree.root, 0)


@dataclass(frozen=True)
class TraceStep:
    production: Production
    context: DeterministicContext
    # Visible variables, recorded only for identifier parents.
    scope: tuple | None = field(default=None)


def trace(tree: Tree, tracer: Tracer | None = None) -> list[TraceStep]:
    """One step per internal node with the context it was generated in."""
    tracer = tracer or Tracer()
    steps = []

    def rec(node: Node, index: int):
        tracer.descend(node.kind, index)
        scope = tracer.scope.vectors() if base_kind(node.kind) == IDENTIFIER_NAME else None
        steps.append(TraceStep(Production(node.kind, children_key(node), len(steps)), tracer.ctx, scope))
        for i, c in enumerate(node.children):
            if isinstance(c, Token):
                tracer.emit(c)
            else:
                rec(c, i)
        tracer.ascend()

    check_tree(tree)
    rec(tree.root, 0)
    return steps


def annotate_identifiers(tree: Tree, tracer: Tracer | None = None) -> Tree:
    """Relabel IdentifierName nodes as local or global by scope membership."""
    tracer = tracer or Tracer()

    def rec(node: Node, index: int) -> Node:
        tracer.descend(node.kind, index)
        kind = node.kind
        if base_kind(kind) == IDENTIFIER_NAME and node.children and isinstance(node.children[0], Token):
            kind = annotate(IDENTIFIER_NAME, classify_identifier(tracer.scope, node.children[0]))
        kids = []
        for i, c in enumerate(node.children):
            if isinstance(c, Token):
                tracer.emit(c)
                kids.append(c)
            else:
                kids.append(rec(c, i))
        tracer.ascend()
        return Node(kind, tuple(kids))

    check_tree(tree)
    return Tree(rec(tree.root, 0))
