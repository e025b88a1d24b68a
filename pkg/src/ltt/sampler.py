"""Stack-driven depth-first generation from LTT models, and next-production
distributions for partially generated trees (code completion)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .context import ScopeSet, Tracer
from .lbl import ModelingError
from .model import GLOBAL_KIND, LOCAL_KIND, LttModel
from .trees import Node, StructureError, Token, TokenKind, Tree, children_key, strip_annotations


class SampleRejected(RuntimeError):
    """The expansion cap was reached before the tree was complete."""


@dataclass
class SampleConfig:
    root_kind: str = "CompilationUnit"
    seed: int = 0
    max_expansions: int = 10_000
    initial_scope: tuple = ()
    initial_last_tokens: tuple = ()

    def __post_init__(self):
        if self.max_expansions < 1:
            raise ValueError("max_expansions must be >= 1")


@dataclass
class _Open:
    kind: str
    index: int
    children: list = field(default_factory=list)


_EXIT = object()


class SamplerState:
    """A partial tree reachable by depth-first generation.

    The stack holds pending items: ``("node", kind, index)``, tokens, and exit
    markers that close the node on top of ``open``. Latent models carry a
    belief over the previous latent state (a point mass while sampling, a
    filtered posterior when a prefix is forced).
    """

    def __init__(self, model: LttModel, cfg: SampleConfig):
        self.model = model
        scope = ScopeSet.from_vectors(cfg.initial_scope)
        self.tracer = Tracer(scope, cfg.initial_last_tokens)
        self.stack: list = [("node", cfg.root_kind, 0)]
        self.open: list[_Open] = []
        self.root: Node | None = None
        self.expansions = 0
        self.belief: np.ndarray | None = None    # over h_{i-1}; None before the first step
        self.current: _Open | None = None
        self._advance()

    def copy(self) -> "SamplerState":
        s = SamplerState.__new__(SamplerState)
        s.model = self.model
        s.tracer = self.tracer.copy()
        s.stack = list(self.stack)
        s.open = [_Open(o.kind, o.index, list(o.children)) for o in self.open]
        s.current = s.open[-1] if self.current is not None else None
        s.root = self.root
        s.expansions = self.expansions
        s.belief = None if self.belief is None else self.belief.copy()
        return s

    @property
    def done(self) -> bool:
        return self.current is None

    def _advance(self):
        """Consume tokens and exit markers until the next internal node is open."""
        self.current = None
        while self.stack:
            item = self.stack.pop()
            if item is _EXIT:
                self.tracer.ascend()
                node = self.open.pop()
                built = Node(node.kind, tuple(node.children))
                if self.open:
                    self.open[-1].children.append(built)
                else:
                    self.root = built
            elif isinstance(item, Token):
                self.tracer.emit(item)
                self.open[-1].children.append(item)
            else:
                _, kind, index = item
                self.tracer.descend(kind, index)
                self.open.append(_Open(kind, index))
                self.current = self.open[-1]
                return

    # -- distributions
    def _latent_prior(self) -> np.ndarray | None:
        t = self.model.transitions
        if t is None:
            return None
        if self.belief is None:
            return np.exp(t.log_prior())
        return self.belief @ np.exp(t.log_matrix())

    def _kind_distribution(self, kind: str, latent: int | None):
        m = self.model
        if m.spec.scope and kind == LOCAL_KIND:
            vectors = self.tracer.scope.vectors()
            if vectors:
                probs = m.scope_distribution(vectors, self.tracer.ctx, latent)
                return [(Token(v.identifier, TokenKind.IDENTIFIER),) for v in vectors], probs
            # empty scope: the local path has no mass, so generate a global identifier
            kind = GLOBAL_KIND
        return m.base_distribution(kind, self.tracer.ctx, latent)

    def _effective_kind(self) -> str:
        kind = self.current.kind
        if self.model.spec.scope and kind == LOCAL_KIND and len(self.tracer.scope) == 0:
            return GLOBAL_KIND
        return kind

    def next_distribution(self):
        """(children tuples, probabilities, per-state probabilities or None)."""
        if self.done:
            raise StructureError("the tree is already complete")
        kind = self.current.kind
        prior = self._latent_prior()
        try:
            if prior is None:
                tuples, probs = self._kind_distribution(kind, None)
                return tuples, probs, None
            per_state = []
            tuples = None
            for h in range(len(prior)):
                tuples, p = self._kind_distribution(kind, h)
                per_state.append(p)
            per_state = np.array(per_state)
            return tuples, prior @ per_state, per_state
        except ModelingError as e:
            raise StructureError(f"no generative distribution for {kind!r}: {e}") from None

    # -- transitions
    def apply(self, key: tuple, latent: int | None = None, per_state=None, tuples=None):
        """Expand the open node with children ``key``.

        ``latent`` fixes the latent state (sampling); otherwise the belief is
        updated by conditioning on the choice (forced prefixes).
        """
        if self.done:
            raise StructureError("the tree is already complete")
        self.expansions += 1
        if self.model.transitions is not None:
            if latent is not None:
                b = np.zeros(self.model.n_latent)
                b[latent] = 1.0
                self.belief = b
            else:
                if per_state is None:
                    tuples, _, per_state = self.next_distribution()
                pos = tuples.index(key) if key in tuples else -1
                if pos < 0:
                    raise StructureError("forced children tuple is outside the model's support")
                joint = self._latent_prior() * per_state[:, pos]
                self.belief = joint / joint.sum()
        node = self.current
        node.kind = self._effective_kind()
        self.stack.append(_EXIT)
        for i in range(len(key) - 1, -1, -1):
            s = key[i]
            self.stack.append(s if isinstance(s, Token) else ("node", s, i))
        self._advance()

    def tree(self) -> Tree:
        if not self.done or self.root is None:
            raise StructureError("the tree is not complete")
        return Tree(self.root)


def conditional_prefix_distribution(model: LttModel, state: SamplerState) -> dict:
    """Exact distribution of the next children tuple given a partial state."""
    tuples, probs, _ = state.next_distribution()
    out: dict = {}
    for t, p in zip(tuples, probs):
        out[t] = out.get(t, 0.0) + float(p)
    return out


def state_from_prefix(model: LttModel, tree: Tree, n_steps: int, cfg: SampleConfig | None = None) -> SamplerState:
    """State after forcing the first ``n_steps`` productions of ``tree``.

    For scope models the tree is annotated first so that identifier parents
    carry their local/global label.
    """
    tree = model.prepare(tree)
    cfg = cfg or SampleConfig(root_kind=tree.root.kind)
    state = SamplerState(model, cfg)
    nodes = list(tree.internal_nodes())
    if n_steps > len(nodes):
        raise StructureError("prefix longer than the tree")
    for node in nodes[:n_steps]:
        if state.done or state.current.kind != node.kind:
            raise StructureError("prefix is not reachable by depth-first generation")
        state.apply(children_key(node))
    return state


def _draw(rng: np.random.Generator, probs: np.ndarray) -> int:
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(c) - 1))


def sample_tree(model: LttModel, cfg: SampleConfig, rng: np.random.Generator | None = None,
                keep_annotations: bool = False) -> Tree:
    """Generate one tree from ``cfg.root_kind`` with the unsmoothed base distributions."""
    if cfg.root_kind not in model.support:
        raise StructureError(f"root kind {cfg.root_kind!r} has no support in the model")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    state = SamplerState(model, cfg)
    trans = model.transitions
    while not state.done:
        if state.expansions >= cfg.max_expansions:
            raise SampleRejected(f"exceeded {cfg.max_expansions} expansions")
        latent = None
        if trans is not None:
            prior = state._latent_prior()
            latent = _draw(rng, prior)
        tuples, probs = state._kind_distribution(state.current.kind, latent)
        state.apply(tuples[_draw(rng, probs)], latent=latent)
    tree = state.tree()
    return tree if keep_annotations else strip_annotations(tree)


def sample_many(model: LttModel, cfg: SampleConfig, n: int, retries: int = 10):
    """``n`` samples from one seeded stream; rejected draws are retried.

    Returns (trees, number of rejections).
    """
    rng = np.random.default_rng(cfg.seed)
    out, rejected = [], 0
    while len(out) < n:
        try:
            out.append(sample_tree(model, cfg, rng))
        except SampleRejected:
            rejected += 1
            if rejected > retries * n:
                raise
    return out, rejected


def make_scope(entries) -> tuple:
    """Scope vectors from (identifier, type) pairs, most recently declared last."""
    s = ScopeSet()
    for name, type_ in entries:
        s.declare(name, type_)
    return s.vectors()
