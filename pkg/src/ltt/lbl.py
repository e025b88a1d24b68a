"""Log-bilinear children distributions, the scope model and the default model.

Objects (node kinds, children tuples, tokens, feature/value pairs) are looked
up in an embedding table ``R`` and bias table ``b``. Id 0 is reserved for
objects never seen in training and is pinned to zero.

The negative energy of a candidate ``C`` in context ``(n, h)`` is::

    R[C] . (w_0 * R[n] + sum_k w_k * R[h_k]) + b[C]

with diagonal ``W`` matrices stored as vectors. The scope model builds the
candidate vector compositionally from a variable's feature embeddings.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .trees import Token, is_token_tuple

UNKNOWN = 0


class ModelingError(ValueError):
    """A distribution was requested where the model defines none."""


class Vocab:
    """Object -> integer id. Id 0 stands for every unknown object."""

    def __init__(self, keys=()):
        self.keys: list = [None]
        self.index: dict = {}
        for k in keys:
            self.add(k)

    def add(self, key) -> int:
        i = self.index.get(key)
        if i is None:
            i = len(self.keys)
            self.index[key] = i
            self.keys.append(key)
        return i

    def get(self, key) -> int:
        return self.index.get(key, UNKNOWN)

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return key in self.index


@dataclass
class ParamStore:
    R: np.ndarray        # (objects, D)
    b: np.ndarray        # (objects,)
    Wcon: np.ndarray     # (context slots, D); slot 0 modulates the parent kind
    Wch: np.ndarray      # (scope features, D)

    @property
    def dim(self) -> int:
        return self.R.shape[1]

    @classmethod
    def init(cls, n_objects: int, dim: int, n_slots: int, n_scope: int = 4,
             rng: np.random.Generator | None = None, scale: float = 0.01) -> "ParamStore":
        rng = rng if rng is not None else np.random.default_rng(0)
        R = rng.uniform(-scale, scale, size=(n_objects, dim))
        b = rng.uniform(-scale, scale, size=n_objects)
        R[UNKNOWN] = 0.0
        b[UNKNOWN] = 0.0
        return cls(R, b, np.ones((n_slots, dim)), np.ones((n_scope, dim)))

    @classmethod
    def zeros(cls, n_objects: int, dim: int, n_slots: int, n_scope: int = 4) -> "ParamStore":
        return cls(np.zeros((n_objects, dim)), np.zeros(n_objects),
                   np.zeros((n_slots, dim)), np.zeros((n_scope, dim)))

    def copy(self) -> "ParamStore":
        return ParamStore(self.R.copy(), self.b.copy(), self.Wcon.copy(), self.Wch.copy())

    def arrays(self) -> dict:
        return {"R": self.R, "b": self.b, "Wcon": self.Wcon, "Wch": self.Wch}


def context_repr(params: ParamStore, kind_id, slot_ids) -> np.ndarray:
    """Context vector(s).

    ``kind_id`` is an id (or array of ids); ``slot_ids`` holds one object id
    per context slot 1..M (trailing axis), 0 meaning "no value".
    """
    slot_ids = np.asarray(slot_ids, dtype=np.int64)
    r = params.Wcon[0] * params.R[kind_id]
    m = slot_ids.shape[-1]
    if m:
        r = r + np.einsum("...md,md->...d", params.R[slot_ids], params.Wcon[1:m + 1])
    return r


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return x - logsumexp(x, axis=axis, keepdims=True)


def children_distribution(params: ParamStore, r_con: np.ndarray, support_ids) -> np.ndarray:
    """Probabilities over a support given a context vector (max-subtracted softmax)."""
    support_ids = np.asarray(support_ids, dtype=np.int64)
    if support_ids.size == 0:
        raise ModelingError("empty support; fall back to the default model")
    scores = params.R[support_ids] @ r_con + params.b[support_ids]
    scores -= scores.max()
    p = np.exp(scores)
    return p / p.sum()


def scope_candidate_repr(params: ParamStore, feature_ids) -> tuple[np.ndarray, np.ndarray]:
    """Compositional candidate vectors and biases from (..., V) feature ids."""
    feature_ids = np.asarray(feature_ids, dtype=np.int64)
    v = feature_ids.shape[-1]
    rch = np.einsum("...ud,ud->...d", params.R[feature_ids], params.Wch[:v])
    bch = params.b[feature_ids].sum(-1)
    return rch, bch


def scope_token_distribution(params: ParamStore, r_con: np.ndarray, feature_ids) -> np.ndarray:
    """Probabilities over in-scope variables; ``feature_ids`` is (candidates, V)."""
    feature_ids = np.asarray(feature_ids, dtype=np.int64)
    if feature_ids.shape[0] == 0:
        raise ModelingError("local identifier requested with an empty scope")
    rch, bch = scope_candidate_repr(params, feature_ids)
    scores = rch @ r_con + bch
    scores -= scores.max()
    p = np.exp(scores)
    return p / p.sum()


@dataclass
class SupportTable:
    """Children tuples observed under each parent kind, in first-seen order."""

    tuples: dict = field(default_factory=dict)       # kind -> list of keys
    positions: dict = field(default_factory=dict)    # kind -> {key: position}
    counts: dict = field(default_factory=dict)       # kind -> Counter

    def add(self, kind: str, key: tuple, count: int = 1):
        pos = self.positions.setdefault(kind, {})
        if key not in pos:
            pos[key] = len(pos)
            self.tuples.setdefault(kind, []).append(key)
        self.counts.setdefault(kind, Counter())[key] += count

    def support(self, kind: str) -> list:
        return self.tuples.get(kind, [])

    def position(self, kind: str, key: tuple) -> int:
        return self.positions.get(kind, {}).get(key, -1)

    def __contains__(self, kind):
        return kind in self.tuples

    def kinds(self):
        return list(self.tuples)


def poisson_logpmf(k: int, lam: float) -> float:
    if lam <= 0.0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(lam) - lam - gammaln(k + 1)


@dataclass
class DefaultModel:
    """Broad-support fallback distribution over children tuples.

    Kinds whose training tuples are all single tokens use an additively
    smoothed token distribution. Other kinds draw a Poisson tuple length and
    then each child symbol independently from an additively smoothed
    per-kind symbol distribution.
    """

    alpha: float
    token_universe: frozenset
    kind_universe: frozenset
    token_kinds: set = field(default_factory=set)
    symbol_counts: dict = field(default_factory=dict)   # kind -> Counter over symbols
    totals: dict = field(default_factory=dict)          # kind -> symbols (or tokens) seen
    lam: dict = field(default_factory=dict)             # kind -> mean tuple length
    global_lam: float = 1.0

    @classmethod
    def fit(cls, support: SupportTable, alpha: float, token_universe, kind_universe) -> "DefaultModel":
        token_universe = frozenset(token_universe)
        kind_universe = frozenset(kind_universe)
        m = cls(alpha, token_universe, kind_universe)
        n_all = len_all = 0
        for kind, counts in support.counts.items():
            sym = Counter()
            n = length = 0
            for key, c in counts.items():
                n += c
                length += c * len(key)
                for s in key:
                    sym[s] += c
            if all(len(k) == 1 and is_token_tuple(k) for k in counts):
                m.token_kinds.add(kind)
            m.symbol_counts[kind] = sym
            m.totals[kind] = length
            m.lam[kind] = length / n
            n_all += n
            len_all += length
        m.global_lam = len_all / n_all if n_all else 1.0
        return m

    @property
    def n_symbols(self) -> int:
        return len(self.token_universe) + len(self.kind_universe)

    def with_alpha(self, alpha: float) -> "DefaultModel":
        return DefaultModel(alpha, self.token_universe, self.kind_universe, self.token_kinds,
                            self.symbol_counts, self.totals, self.lam, self.global_lam)

    def log_prob(self, kind: str, key: tuple) -> float:
        a = self.alpha
        counts = self.symbol_counts.get(kind, Counter())
        total = self.totals.get(kind, 0)
        if kind in self.token_kinds:
            if len(key) != 1 or not isinstance(key[0], Token):
                return -math.inf
            return math.log((counts[key[0]] + a) / (total + a * len(self.token_universe)))
        lam = self.lam.get(kind, self.global_lam)
        lp = poisson_logpmf(len(key), lam)
        denom = math.log(total + a * self.n_symbols)
        for s in key:
            c = counts[s] + a
            lp += (math.log(c) if c > 0 else -math.inf) - denom
        return lp

    def prob(self, kind: str, key: tuple) -> float:
        return math.exp(self.log_prob(kind, key))


def default_children_prob(model: DefaultModel, kind: str, key: tuple) -> float:
    return model.prob(kind, key)


def smoothed_children_prob(base_prob: float, default_prob: float, pi: float) -> float:
    if not 0.0 <= pi <= 1.0:
        raise ValueError("mixture weight must lie in [0, 1]")
    return pi * base_prob + (1.0 - pi) * default_prob


def smoothed_log2(base_logp, default_logp, pi: float):
    """log2 of the mixture from natural-log component probabilities (vectorized)."""
    base_logp = np.asarray(base_logp, dtype=float)
    default_logp = np.asarray(default_logp, dtype=float)
    base_logp, default_logp = np.broadcast_arrays(base_logp, default_logp)
    with np.errstate(divide="ignore"):
        terms = np.stack([base_logp + np.log(pi), default_logp + np.log1p(-pi)])
    return logsumexp(terms, axis=0) / math.log(2.0)
