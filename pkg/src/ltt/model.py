"""LTT model variants, corpus encoding and the batched log-bilinear objective."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from . import lbl
from .context import (
    HISTORY, LAST_TOKENS, DeterministicContext, TraceStep, Tracer, annotate_identifiers, trace,
)
from .lbl import UNKNOWN, DefaultModel, ModelingError, ParamStore, SupportTable, Vocab
from .trees import (
    GLOBAL, IDENTIFIER_NAME, LOCAL, NODE_KINDS, Tree, annotate, is_token_tuple,
)

LOCAL_KIND = annotate(IDENTIFIER_NAME, LOCAL)
GLOBAL_KIND = annotate(IDENTIFIER_NAME, GLOBAL)
LN2 = math.log(2.0)


class EvaluationError(ValueError):
    pass


@dataclass
class ScoredCorpus:
    """Per-unit log2 probabilities of a corpus, one array per program.

    Tree models score one unit per production; token models one unit per
    token plus the stop symbol.
    """

    bits: list                   # per program: (units,) log2 probabilities
    kinds: list                  # per program: parent kind label per unit
    token_only: list             # per program: (units,) bool
    tokens: np.ndarray           # (programs,) token counts


@dataclass(frozen=True)
class FeatureSpec:
    hierarchy: bool = False
    sequence: bool = False
    scope: bool = False
    latent: bool = False

    def slot_names(self, n_latent: int = 1) -> list[str]:
        names = []
        if self.hierarchy:
            names += ["depth", "parent"] + [f"anc{j}" for j in range(1, HISTORY + 1)]
        if self.sequence:
            names += [f"tok{j}" for j in range(1, LAST_TOKENS + 1)]
        if self.latent and n_latent > 1:
            names.append("latent")
        return names

    def context_keys(self, ctx: DeterministicContext) -> list:
        """Object key per deterministic slot (None when the slot is empty)."""
        keys = []
        if self.hierarchy:
            keys.append(("depth", ctx.depth_bucket))
            parent = ctx.parent_kind
            keys.append(("kind", parent) if parent is not None else None)
            hist = ctx.ancestor_history[::-1]
            keys += [("anc",) + hist[j] if j < len(hist) else None for j in range(HISTORY)]
        if self.sequence:
            toks = ctx.last_tokens[::-1]
            keys += [("tok", toks[j]) if j < len(toks) else None for j in range(LAST_TOKENS)]
        return keys


VARIANTS = {
    "ltt0": FeatureSpec(),
    "ltt-hi": FeatureSpec(hierarchy=True),
    "ltt-seq": FeatureSpec(sequence=True),
    "ltt-hiseq": FeatureSpec(hierarchy=True, sequence=True),
    "ltt-hiseq-scope": FeatureSpec(hierarchy=True, sequence=True, scope=True),
    "ltt-latent": FeatureSpec(latent=True),
}


def kind_universe(spec: FeatureSpec) -> frozenset:
    kinds = set(NODE_KINDS)
    if spec.scope:
        kinds.discard(IDENTIFIER_NAME)
        kinds |= {LOCAL_KIND, GLOBAL_KIND}
    return frozenset(kinds)


def tuple_object(key: tuple):
    return ("C",) + key


@dataclass
class TransitionModel:
    """Tabular latent-state chain held as logits."""

    prior_logits: np.ndarray    # (K,)
    logits: np.ndarray          # (K, K), row = previous state

    @classmethod
    def uniform(cls, k: int, rng: np.random.Generator | None = None, scale: float = 0.01):
        if rng is None:
            return cls(np.zeros(k), np.zeros((k, k)))
        return cls(rng.uniform(-scale, scale, k), rng.uniform(-scale, scale, (k, k)))

    @property
    def n_states(self) -> int:
        return self.prior_logits.shape[0]

    def log_prior(self) -> np.ndarray:
        return lbl.log_softmax(self.prior_logits)

    def log_matrix(self) -> np.ndarray:
        return lbl.log_softmax(self.logits, axis=1)

    def copy(self):
        return TransitionModel(self.prior_logits.copy(), self.logits.copy())


@dataclass
class Encoded:
    """Integer view of a corpus under one model."""

    offsets: np.ndarray          # (trees + 1,) production offsets
    token_counts: np.ndarray     # (trees,)
    kinds: list                  # parent kind per production
    keys: list                   # children tuple per production
    kind_id: np.ndarray          # (N,)
    feats: np.ndarray            # (N, M)
    group: np.ndarray            # (N,) support group or -1
    target: np.ndarray           # (N,) position in support or scope, -1 if absent
    is_scope: np.ndarray         # (N,) bool
    cands: dict = field(default_factory=dict)   # row -> (C, 4) scope feature ids
    token_only: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.kinds)

    def tree_rows(self, t: int) -> np.ndarray:
        return np.arange(self.offsets[t], self.offsets[t + 1])


class LttModel:
    """A trained (or initialized) log-bilinear tree-traversal model."""

    def __init__(self, variant: str, vocab: Vocab, params: ParamStore, support: SupportTable,
                 default: DefaultModel, pi: float = 0.9, n_latent: int = 1,
                 transitions: TransitionModel | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.spec = VARIANTS[variant]
        self.vocab = vocab
        self.params = params
        self.support = support
        self.default = default
        self.pi = pi
        self.n_latent = n_latent if self.spec.latent else 1
        if self.n_latent > 1 and transitions is None:
            transitions = TransitionModel.uniform(self.n_latent)
        self.transitions = transitions if self.n_latent > 1 else None
        self.slot_names = self.spec.slot_names(self.n_latent)
        self.kinds_universe = kind_universe(self.spec)
        self._index_groups()

    # -- structure
    def _index_groups(self):
        self.group_kinds = [k for k in self.support.kinds()
                            if not (self.spec.scope and k == LOCAL_KIND)]
        self.group_of = {k: g for g, k in enumerate(self.group_kinds)}
        self.group_ids = [np.array([self.vocab.get(tuple_object(key)) for key in self.support.support(k)],
                                   dtype=np.int64) for k in self.group_kinds]

    @property
    def n_slots(self) -> int:
        return len(self.slot_names)

    @property
    def latent_slot(self) -> int | None:
        """Column of the latent feature in encoded ``feats`` (None without latents)."""
        return self.n_slots - 1 if self.n_latent > 1 else None

    def latent_ids(self) -> np.ndarray:
        return np.array([self.vocab.get(("latent", h)) for h in range(self.n_latent)], dtype=np.int64)

    def prepare(self, tree: Tree) -> Tree:
        return annotate_identifiers(tree) if self.spec.scope else tree

    def steps(self, tree: Tree, tracer: Tracer | None = None) -> list[TraceStep]:
        return trace(self.prepare(tree), tracer)

    def context_ids(self, ctx: DeterministicContext, latent: int | None = None) -> np.ndarray:
        ids = [self.vocab.get(k) if k is not None else UNKNOWN for k in self.spec.context_keys(ctx)]
        if self.latent_slot is not None:
            ids.append(self.vocab.get(("latent", latent)) if latent is not None else UNKNOWN)
        return np.array(ids, dtype=np.int64)

    def scope_ids(self, vectors) -> np.ndarray:
        return np.array([[self.vocab.get(k) for k in v.feature_keys()] for v in vectors],
                        dtype=np.int64).reshape(len(vectors), 4)

    # -- encoding
    def encode(self, trees, check_kinds: bool = True) -> Encoded:
        kinds, keys, kind_id, feats, group, target, is_scope = [], [], [], [], [], [], []
        cands = {}
        offsets = [0]
        token_counts = []
        for tree in trees:
            steps = self.steps(tree)
            ntok = 0
            for st in steps:
                kind = st.production.parent_kind
                key = st.production.children
                if check_kinds and kind not in self.kinds_universe:
                    raise EvaluationError(f"node kind {kind!r} is not in the model's kind universe")
                ntok += sum(1 for s in key if not isinstance(s, str))
                row = len(kinds)
                kinds.append(kind)
                keys.append(key)
                kind_id.append(self.vocab.get(("kind", kind)))
                feats.append(self.context_ids(st.context))
                if self.spec.scope and kind == LOCAL_KIND:
                    is_scope.append(True)
                    group.append(-1)
                    vectors = st.scope
                    name = key[0].text
                    pos = next((j for j, v in enumerate(vectors) if v.identifier == name), -1)
                    target.append(pos)
                    cands[row] = self.scope_ids(vectors)
                else:
                    is_scope.append(False)
                    g = self.group_of.get(kind, -1)
                    group.append(g)
                    target.append(self.support.position(kind, key) if g >= 0 else -1)
            offsets.append(len(kinds))
            token_counts.append(ntok)
        m = self.n_slots
        return Encoded(
            offsets=np.array(offsets, dtype=np.int64),
            token_counts=np.array(token_counts, dtype=np.int64),
            kinds=kinds, keys=keys,
            kind_id=np.array(kind_id, dtype=np.int64),
            feats=np.array(feats, dtype=np.int64).reshape(len(kinds), m),
            group=np.array(group, dtype=np.int64),
            target=np.array(target, dtype=np.int64),
            is_scope=np.array(is_scope, dtype=bool),
            cands=cands,
            token_only=np.array([is_token_tuple(k) for k in keys], dtype=bool),
        )

    def default_log_probs(self, enc: Encoded, default: DefaultModel | None = None) -> np.ndarray:
        d = default or self.default
        return np.array([d.log_prob(k, key) for k, key in zip(enc.kinds, enc.keys)])

    # -- single-context API used by the sampler and tests
    def context_repr(self, kind: str, ctx: DeterministicContext, latent: int | None = None) -> np.ndarray:
        return lbl.context_repr(self.params, self.vocab.get(("kind", kind)), self.context_ids(ctx, latent))

    def base_distribution(self, kind: str, ctx: DeterministicContext, latent: int | None = None):
        """(tuples, probabilities) of the unsmoothed children distribution."""
        g = self.group_of.get(kind)
        if g is None:
            raise ModelingError(f"no support for {kind!r}; use the default model")
        r = self.context_repr(kind, ctx, latent)
        return self.support.support(kind), lbl.children_distribution(self.params, r, self.group_ids[g])

    def scope_distribution(self, vectors, ctx: DeterministicContext, latent: int | None = None) -> np.ndarray:
        r = self.context_repr(LOCAL_KIND, ctx, latent)
        return lbl.scope_token_distribution(self.params, r, self.scope_ids(vectors))

    def smoothed_children_prob(self, kind: str, ctx: DeterministicContext, key: tuple,
                               latent: int | None = None) -> float:
        base = 0.0
        if kind in self.group_of:
            tuples, probs = self.base_distribution(kind, ctx, latent)
            pos = self.support.position(kind, key)
            base = float(probs[pos]) if pos >= 0 else 0.0
        return lbl.smoothed_children_prob(base, self.default.prob(kind, key), self.pi)

    # -- corpus scoring
    def score(self, trees) -> ScoredCorpus:
        trees = list(trees)
        enc = self.encode(trees)
        bits = self.tree_costs(enc)
        kinds, flags = [], []
        for t in range(len(trees)):
            sl = slice(enc.offsets[t], enc.offsets[t + 1])
            kinds.append(enc.kinds[sl])
            flags.append(enc.token_only[sl])
        return ScoredCorpus(bits, kinds, flags, enc.token_counts.copy())

    def base_log_probs(self, enc: Encoded, rows: np.ndarray | None = None, latent=None) -> np.ndarray:
        """Natural-log base probability per production (-inf outside support).

        With ``latent=None`` on a latent model, returns (rows, K) emissions.
        """
        rows = np.arange(enc.n) if rows is None else rows
        out = []
        for start in range(0, len(rows), 512):
            batch = make_batch(self, enc, rows[start:start + 512])
            if self.latent_slot is not None and latent is None:
                out.append(latent_emissions(self, batch))
            else:
                if latent is not None and self.latent_slot is not None:
                    batch.feats[:, self.latent_slot] = self.latent_ids()[latent]
                logp, _ = objective(self.params, self.group_ids, batch, want_grad=False)
                out.append(logp)
        if not out:
            return np.zeros((0, self.n_latent)) if self.latent_slot is not None and latent is None else np.zeros(0)
        return np.concatenate(out)

    def tree_costs(self, enc: Encoded, pi: float | None = None, default_logp=None,
                   base_logp=None) -> list[np.ndarray]:
        """Per-production log2 probabilities, one array per tree.

        For latent models each entry is the predictive log probability of the
        production given all earlier ones, so a tree's entries sum to its
        forward log likelihood.
        """
        from .training import forward_filter  # local: training imports this module

        pi = self.pi if pi is None else pi
        if default_logp is None:
            default_logp = self.default_log_probs(enc)
        if base_logp is None:
            base_logp = self.base_log_probs(enc)
        out = []
        for t in range(len(enc.offsets) - 1):
            sl = slice(enc.offsets[t], enc.offsets[t + 1])
            if self.latent_slot is None:
                out.append(lbl.smoothed_log2(base_logp[sl], default_logp[sl], pi))
            else:
                em = lbl.smoothed_log2(base_logp[sl], default_logp[sl][:, None], pi) * LN2
                out.append(forward_filter(em, self.transitions)[1] / LN2)
        return out


# -- batched objective ---------------------------------------------------------

@dataclass
class Batch:
    rows: np.ndarray
    kind_id: np.ndarray
    feats: np.ndarray
    groups: list                 # (group, local index array, target array)
    scope_idx: np.ndarray
    cands: np.ndarray            # (Bs, C, 4)
    cand_mask: np.ndarray        # (Bs, C)
    scope_target: np.ndarray
    none_idx: np.ndarray         # rows without a base distribution
    noise: dict = field(default_factory=dict)   # group -> (Bg, k) support positions


def make_batch(model: LttModel, enc: Encoded, rows: np.ndarray) -> Batch:
    rows = np.asarray(rows, dtype=np.int64)
    grp = enc.group[rows]
    groups = []
    order = np.argsort(grp, kind="stable")
    sorted_g = grp[order]
    starts = np.flatnonzero(np.r_[True, sorted_g[1:] != sorted_g[:-1]]) if len(rows) else []
    bounds = list(starts) + [len(rows)]
    none_idx = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        g = int(sorted_g[a])
        idx = order[a:b]
        if g < 0:
            none_idx.extend(i for i in idx if not enc.is_scope[rows[i]])
            continue
        groups.append((g, idx, enc.target[rows[idx]]))
    scope_idx = np.flatnonzero(enc.is_scope[rows])
    if len(scope_idx):
        width = max(max(len(enc.cands[rows[i]]) for i in scope_idx), 1)
        cands = np.zeros((len(scope_idx), width, 4), dtype=np.int64)
        mask = np.zeros((len(scope_idx), width), dtype=bool)
        for j, i in enumerate(scope_idx):
            c = enc.cands[rows[i]]
            cands[j, :len(c)] = c
            mask[j, :len(c)] = True
    else:
        cands = np.zeros((0, 1, 4), dtype=np.int64)
        mask = np.zeros((0, 1), dtype=bool)
    return Batch(rows, enc.kind_id[rows], enc.feats[rows].copy(), groups, scope_idx, cands, mask,
                 enc.target[rows[scope_idx]], np.array(none_idx, dtype=np.int64))


class Grads:
    """Sparse gradient accumulator for a ParamStore."""

    def __init__(self, params: ParamStore):
        self.R_ids, self.R_rows, self.b_ids, self.b_vals = [], [], [], []
        self.Wcon = np.zeros_like(params.Wcon)
        self.Wch = np.zeros_like(params.Wch)
        self.dim = params.dim

    def add_R(self, ids, rows):
        self.R_ids.append(np.asarray(ids).ravel())
        self.R_rows.append(np.asarray(rows).reshape(-1, self.dim))

    def add_b(self, ids, vals):
        self.b_ids.append(np.asarray(ids).ravel())
        self.b_vals.append(np.asarray(vals, dtype=float).ravel())

    @staticmethod
    def _reduce(ids_list, vals_list, width):
        if not ids_list:
            return np.zeros(0, dtype=np.int64), np.zeros((0,) + width)
        ids = np.concatenate(ids_list)
        vals = np.concatenate(vals_list)
        uniq, inv = np.unique(ids, return_inverse=True)
        acc = np.zeros((len(uniq),) + width)
        np.add.at(acc, inv, vals)
        keep = uniq != UNKNOWN
        return uniq[keep], acc[keep]

    def compact(self):
        """(R ids, R rows, b ids, b values) with duplicates summed and id 0 dropped."""
        r_ids, r_rows = self._reduce(self.R_ids, self.R_rows, (self.dim,))
        b_ids, b_vals = self._reduce(self.b_ids, self.b_vals, ())
        return r_ids, r_rows, b_ids, b_vals

    def dense(self, params: ParamStore) -> ParamStore:
        out = ParamStore.zeros(*params.R.shape, params.Wcon.shape[0], params.Wch.shape[0])
        r_ids, r_rows, b_ids, b_vals = self.compact()
        out.R[r_ids] = r_rows
        out.b[b_ids] = b_vals
        out.Wcon[:] = self.Wcon
        out.Wch[:] = self.Wch
        return out


def nce_posterior(score, log_noise, k: int):
    """P(datum | score) when unnormalized model scores compete with ``k`` noise draws."""
    return expit(np.asarray(score) - (math.log(k) + np.asarray(log_noise)))


def objective(params: ParamStore, group_ids: list, batch: Batch, want_grad: bool = True,
              mode: str = "exact", noise_logq: list | None = None, weight: float = 1.0):
    """Per-row log probabilities and gradients of the batch loss.

    ``mode="exact"``: loss is ``-weight * sum(log p)``.
    ``mode="nce"``: loss is the noise-contrastive logistic loss for rows in
    support groups (scored without normalization, noise taken from
    ``batch.noise``), plus the exact loss for scope rows.
    """
    B = len(batch.rows)
    R, b, Wcon, Wch = params.R, params.b, params.Wcon, params.Wch
    m = batch.feats.shape[1]
    E = R[batch.feats]                                   # (B, M, D)
    r = Wcon[0] * R[batch.kind_id] + np.einsum("bmd,md->bd", E, Wcon[1:m + 1])
    logp = np.full(B, -np.inf)
    dr = np.zeros_like(r) if want_grad else None
    grads = Grads(params) if want_grad else None
    loss = 0.0

    for g, idx, tgt in batch.groups:
        S = group_ids[g]
        rg = r[idx]
        scores = rg @ R[S].T + b[S]
        lp = lbl.log_softmax(scores)
        ok = tgt >= 0
        logp[idx[ok]] = lp[np.flatnonzero(ok), tgt[ok]]
        if not want_grad:
            continue
        if mode == "exact":
            loss -= weight * lp[np.flatnonzero(ok), tgt[ok]].sum()
            G = np.exp(lp)
            G[np.flatnonzero(ok), tgt[ok]] -= 1.0
            G[~ok] = 0.0
            G *= weight
            grads.add_R(S, G.T @ rg)
            grads.add_b(S, G.sum(0))
            dr[idx] += G @ R[S]
        else:
            k = batch.noise[g].shape[1]
            pos = np.concatenate([tgt[:, None], batch.noise[g]], axis=1)      # (Bg, k+1)
            ids = S[pos]
            s = np.einsum("bkd,bd->bk", R[ids], rg) + b[ids]
            logq = noise_logq[g][pos]
            delta = s - (math.log(k) + logq)
            # log sigma(x) = -logaddexp(0, -x)
            loss += weight * (np.logaddexp(0.0, -delta[:, 0]).sum() + np.logaddexp(0.0, delta[:, 1:]).sum())
            dS = nce_posterior(s, logq, k)
            dS[:, 0] -= 1.0
            dS *= weight
            grads.add_R(ids, dS[..., None] * rg[:, None, :])
            grads.add_b(ids, dS)
            dr[idx] += np.einsum("bk,bkd->bd", dS, R[ids])

    if len(batch.scope_idx):
        idx = batch.scope_idx
        rs = r[idx]
        Ec = R[batch.cands]                                # (Bs, C, V, D)
        v = batch.cands.shape[2]
        rch = np.einsum("bcud,ud->bcd", Ec, Wch[:v])
        scores = np.einsum("bcd,bd->bc", rch, rs) + b[batch.cands].sum(-1)
        scores = np.where(batch.cand_mask, scores, -np.inf)
        lp = lbl.log_softmax(scores)
        tgt = batch.scope_target
        ok = tgt >= 0
        logp[idx[ok]] = lp[np.flatnonzero(ok), tgt[ok]]
        if want_grad:
            loss -= weight * lp[np.flatnonzero(ok), tgt[ok]].sum()
            G = np.where(batch.cand_mask, np.exp(lp), 0.0)
            G[np.flatnonzero(ok), tgt[ok]] -= 1.0
            G[~ok] = 0.0
            G *= weight
            dr[idx] += np.einsum("bc,bcd->bd", G, rch)
            drch = G[..., None] * rs[:, None, :]           # (Bs, C, D)
            for u in range(v):
                grads.add_R(batch.cands[:, :, u], Wch[u] * drch)
                grads.add_b(batch.cands[:, :, u], G)
            grads.Wch[:v] += np.einsum("bcud,bcd->ud", Ec, drch)

    if not want_grad:
        return logp, None
    grads.add_R(batch.kind_id, Wcon[0] * dr)
    grads.Wcon[0] += (R[batch.kind_id] * dr).sum(0)
    if m:
        grads.add_R(batch.feats, Wcon[1:m + 1][None] * dr[:, None, :])
        grads.Wcon[1:m + 1] += np.einsum("bmd,bd->md", E, dr)
    grads.loss = loss
    return logp, grads


def latent_emissions(model: LttModel, batch: Batch) -> np.ndarray:
    """(B, K) natural-log base probabilities for every latent state."""
    params = model.params
    R, b, Wcon = params.R, params.b, params.Wcon
    K = model.n_latent
    slot = model.latent_slot
    feats = batch.feats.copy()
    feats[:, slot] = UNKNOWN
    m = feats.shape[1]
    base = Wcon[0] * R[batch.kind_id] + np.einsum("bmd,md->bd", R[feats], Wcon[1:m + 1])
    lat = Wcon[slot + 1] * R[model.latent_ids()]          # (K, D)
    r = base[:, None, :] + lat[None]                       # (B, K, D)
    out = np.full((len(batch.rows), K), -np.inf)
    for g, idx, tgt in batch.groups:
        S = model.group_ids[g]
        scores = np.einsum("bkd,sd->bks", r[idx], R[S]) + b[S]
        lp = scores - logsumexp(scores, axis=-1, keepdims=True)
        ok = tgt >= 0
        out[idx[ok]] = lp[np.flatnonzero(ok), :, tgt[ok]]
    return out
