"""Comparison models: additive n-grams, a tabular PCFG, an LBL n-gram and an LBL HMM."""
from __future__ import annotations

import math
from collections import Counter, defaultdict

import numpy as np

from . import lbl
from .lbl import DefaultModel, ParamStore, SupportTable, Vocab
from .model import LN2, Batch, EvaluationError, ScoredCorpus, TransitionModel, kind_universe, objective
from .model import VARIANTS
from .training import AdaGrad, build_support_table, forward_backward, forward_filter, token_universe
from .training import transition_gradients
from .trees import NODE_KINDS, Tree, children_key, depth_first_productions, is_token_tuple

BOUNDARY = "<s>"
TOKEN_UNIT = "<token>"
STOP_UNIT = "<stop>"


def token_texts(tree: Tree) -> list[str]:
    return [t.text for t in tree.tokens()]


def vocabulary(trees, universe=()) -> list[str]:
    """Sorted token texts of a corpus plus the declared universe, and the boundary symbol."""
    texts = {t.text for tree in trees for t in tree.tokens()}
    texts |= {t.text if hasattr(t, "text") else t for t in universe}
    texts.discard(BOUNDARY)
    return sorted(texts) + [BOUNDARY]


def _token_scored(bits: list, trees) -> ScoredCorpus:
    kinds, flags = [], []
    for b in bits:
        kinds.append([TOKEN_UNIT] * (len(b) - 1) + [STOP_UNIT])
        flags.append(np.ones(len(b), dtype=bool))
    return ScoredCorpus(bits, kinds, flags, np.array([t.token_count for t in trees], dtype=np.int64))


class NgramModel:
    """Additively smoothed n-gram over token texts, padded with n-1 boundary
    symbols and terminated by one boundary symbol used as the stop token."""

    def __init__(self, order: int, alpha: float, vocab):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.alpha = alpha
        self.vocab = list(vocab)
        if BOUNDARY not in self.vocab:
            self.vocab.append(BOUNDARY)
        self.counts: dict[tuple, Counter] = defaultdict(Counter)
        self.totals: Counter = Counter()

    @property
    def variant(self) -> str:
        return f"ngram{self.order}"

    def events(self, tokens):
        seq = [BOUNDARY] * (self.order - 1) + list(tokens) + [BOUNDARY]
        for i in range(self.order - 1, len(seq)):
            yield tuple(seq[i - self.order + 1:i]), seq[i]

    def fit(self, trees) -> "NgramModel":
        for tree in trees:
            for ctx, w in self.events(token_texts(tree)):
                self.counts[ctx][w] += 1
                self.totals[ctx] += 1
        return self

    def prob(self, context, word: str) -> float:
        ctx = tuple(context)[len(context) - self.order + 1:] if self.order > 1 else ()
        c = self.counts.get(ctx)
        num = (c[word] if c else 0) + self.alpha
        return num / (self.totals.get(ctx, 0) + self.alpha * len(self.vocab))

    def logprob_bits(self, tokens) -> np.ndarray:
        """log2 probability of each token and of the final stop symbol."""
        V = len(self.vocab)
        out = []
        for ctx, w in self.events(tokens):
            c = self.counts.get(ctx)
            num = (c[w] if c else 0) + self.alpha
            out.append(math.log2(num / (self.totals.get(ctx, 0) + self.alpha * V)))
        return np.array(out)

    def score(self, trees) -> ScoredCorpus:
        trees = list(trees)
        return _token_scored([self.logprob_bits(token_texts(t)) for t in trees], trees)


def ngram_logprob(tokens, model: NgramModel) -> float:
    return float(model.logprob_bits(tokens).sum())


class TabularPcfg:
    """Maximum-likelihood tuple probabilities per parent kind, mixed with the default model."""

    variant = "pcfg"

    def __init__(self, support: SupportTable, default: DefaultModel, pi: float = 0.9):
        self.support = support
        self.default = default
        self.pi = pi
        self.kinds_universe = frozenset(NODE_KINDS)

    @classmethod
    def fit(cls, trees, alpha: float = 0.1, pi: float = 0.9, universe=()) -> "TabularPcfg":
        trees = list(trees)
        support = build_support_table(trees)
        tokens = token_universe(trees) | frozenset(universe)
        default = DefaultModel.fit(support, alpha, tokens, kind_universe(VARIANTS["ltt0"]))
        return cls(support, default, pi)

    def base_prob(self, kind: str, key: tuple) -> float:
        counts = self.support.counts.get(kind)
        if not counts:
            return 0.0
        return counts[key] / sum(counts.values()) if key in counts else 0.0

    def production_logs(self, tree: Tree, default: DefaultModel | None = None):
        """Natural-log (base, default) probabilities per production."""
        d = default or self.default
        base, dflt, kinds, flags = [], [], [], []
        for p in depth_first_productions(tree):
            if p.parent_kind not in self.kinds_universe:
                raise EvaluationError(f"node kind {p.parent_kind!r} is not in the model's kind universe")
            b = self.base_prob(p.parent_kind, p.children)
            base.append(math.log(b) if b > 0 else -math.inf)
            dflt.append(d.log_prob(p.parent_kind, p.children))
            kinds.append(p.parent_kind)
            flags.append(is_token_tuple(p.children))
        return np.array(base), np.array(dflt), kinds, np.array(flags, dtype=bool)

    def score(self, trees, pi: float | None = None, default: DefaultModel | None = None) -> ScoredCorpus:
        pi = self.pi if pi is None else pi
        trees = list(trees)
        bits, kinds, flags = [], [], []
        for t in trees:
            b, d, k, f = self.production_logs(t, default)
            bits.append(lbl.smoothed_log2(b, d, pi))
            kinds.append(k)
            flags.append(f)
        return ScoredCorpus(bits, kinds, flags, np.array([t.token_count for t in trees], dtype=np.int64))


def pcfg_logprob(tree: Tree, model: TabularPcfg) -> float:
    return float(model.score([tree]).bits[0].sum())


# -- log-bilinear token models -----------------------------------------------------

def _token_batch(kind_id, feats, targets) -> Batch:
    n = len(targets)
    return Batch(np.arange(n), np.asarray(kind_id, dtype=np.int64), np.asarray(feats, dtype=np.int64),
                 [(0, np.arange(n), np.asarray(targets, dtype=np.int64))],
                 np.zeros(0, dtype=np.int64), np.zeros((0, 1, 4), dtype=np.int64),
                 np.zeros((0, 1), dtype=bool), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


class LblNgram:
    """Log-bilinear n-gram: the previous n-1 tokens, each through its own
    positional diagonal matrix, predict a softmax over the token vocabulary."""

    def __init__(self, order: int, words: list, vocab: Vocab, params: ParamStore):
        self.order = order
        self.words = list(words)
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.vocab = vocab
        self.params = params
        self.context_kind = vocab.get(("kind", "<ngram>"))
        self.target_ids = np.array([vocab.get(("next", w)) for w in self.words], dtype=np.int64)

    @property
    def variant(self) -> str:
        return f"lbl-ngram{self.order}"

    @classmethod
    def init(cls, words, order: int = 10, dim: int = 50, seed: int = 0, scale: float = 0.01) -> "LblNgram":
        vocab = Vocab()
        vocab.add(("kind", "<ngram>"))
        for w in words:
            vocab.add(("tok", w))
        for w in words:
            vocab.add(("next", w))
        rng = np.random.default_rng(seed)
        params = ParamStore.init(len(vocab), dim, order, 4, rng, scale)
        return cls(order, words, vocab, params)

    def encode(self, trees):
        """(context ids, target positions, program offsets)."""
        m = self.order - 1
        feats, targets, offsets = [], [], [0]
        for tree in trees:
            seq = [BOUNDARY] * m + token_texts(tree) + [BOUNDARY]
            for i in range(m, len(seq)):
                ctx = seq[i - m:i][::-1]       # most recent first
                feats.append([self.vocab.get(("tok", w)) for w in ctx])
                if seq[i] not in self.word_index:
                    raise EvaluationError(f"token {seq[i]!r} is outside the closed vocabulary")
                targets.append(self.word_index[seq[i]])
            offsets.append(len(targets))
        return (np.array(feats, dtype=np.int64).reshape(len(targets), m),
                np.array(targets, dtype=np.int64), np.array(offsets, dtype=np.int64))

    def batch(self, feats, targets) -> Batch:
        return _token_batch(np.full(len(targets), self.context_kind), feats, targets)

    def log_probs(self, feats, targets) -> np.ndarray:
        out = []
        for s in range(0, len(targets), 1024):
            lp, _ = objective(self.params, [self.target_ids], self.batch(feats[s:s + 1024], targets[s:s + 1024]),
                              want_grad=False)
            out.append(lp)
        return np.concatenate(out) if out else np.zeros(0)

    def distribution(self, context) -> np.ndarray:
        """Next-token probabilities after ``context`` (token texts, oldest first)."""
        m = self.order - 1
        ctx = ([BOUNDARY] * m + list(context))[-m:][::-1] if m else []
        r = lbl.context_repr(self.params, self.context_kind, [self.vocab.get(("tok", w)) for w in ctx])
        return lbl.children_distribution(self.params, r, self.target_ids)

    def score(self, trees) -> ScoredCorpus:
        trees = list(trees)
        feats, targets, offsets = self.encode(trees)
        lp = self.log_probs(feats, targets) / LN2
        return _token_scored([lp[offsets[i]:offsets[i + 1]] for i in range(len(trees))], trees)


def lbl_ngram_logprob(tokens, model: LblNgram) -> float:
    tree_like = _TokenSeq(tokens)
    return float(model.score([tree_like]).bits[0].sum())


class _TokenSeq:
    """Minimal tree stand-in so token models can score raw sequences."""

    def __init__(self, tokens):
        self._tokens = [t if hasattr(t, "text") else _Text(t) for t in tokens]

    def tokens(self):
        return iter(self._tokens)

    @property
    def token_count(self):
        return len(self._tokens)


class _Text:
    def __init__(self, text):
        self.text = text


class LblHmm:
    """HMM over tokens (plus the stop symbol) with tabular transitions and
    log-bilinear emissions: state h scores word w by R[w] . (w_0 * R[h]) + b[w]."""

    variant = "lbl-hmm"

    def __init__(self, words: list, vocab: Vocab, params: ParamStore, transitions: TransitionModel):
        self.words = list(words)
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.vocab = vocab
        self.params = params
        self.transitions = transitions
        self.n_states = transitions.n_states
        self.state_ids = np.array([vocab.get(("latent", h)) for h in range(self.n_states)], dtype=np.int64)
        self.target_ids = np.array([vocab.get(("next", w)) for w in self.words], dtype=np.int64)

    @classmethod
    def init(cls, words, n_states: int = 32, dim: int = 50, seed: int = 0, scale: float = 0.01) -> "LblHmm":
        vocab = Vocab()
        for h in range(n_states):
            vocab.add(("latent", h))
        for w in words:
            vocab.add(("next", w))
        rng = np.random.default_rng(seed)
        params = ParamStore.init(len(vocab), dim, 1, 4, rng, scale)
        trans = TransitionModel.uniform(n_states, rng) if n_states > 1 else TransitionModel.uniform(1)
        return cls(words, vocab, params, trans)

    def emission_matrix(self) -> np.ndarray:
        """(K, |V|) natural-log emission probabilities."""
        R, b = self.params.R, self.params.b
        r = self.params.Wcon[0] * R[self.state_ids]
        return lbl.log_softmax(r @ R[self.target_ids].T + b[self.target_ids])

    def sequence(self, tree) -> np.ndarray:
        seq = token_texts(tree) + [BOUNDARY]
        try:
            return np.array([self.word_index[w] for w in seq], dtype=np.int64)
        except KeyError as e:
            raise EvaluationError(f"token {e.args[0]!r} is outside the closed vocabulary") from None

    def score(self, trees) -> ScoredCorpus:
        trees = list(trees)
        E = self.emission_matrix()
        bits = [forward_filter(E[:, self.sequence(t)].T, self.transitions)[1] / LN2 for t in trees]
        return _token_scored(bits, trees)


def lbl_hmm_logprob(tokens, model: LblHmm) -> float:
    return float(model.score([_TokenSeq(tokens)]).bits[0].sum())


# -- training ----------------------------------------------------------------------

def train_lbl_ngram(model: LblNgram, trees, epochs: int = 10, lr: float = 0.1, eps: float = 1e-8,
                    minibatch: int = 64, seed: int = 0, on_epoch=None) -> LblNgram:
    feats, targets, _ = model.encode(list(trees))
    opt = AdaGrad(model.params, lr, eps)
    rng = np.random.default_rng(np.random.SeedSequence(seed + 1))
    for e in range(epochs):
        order = rng.permutation(len(targets))
        for s in range(0, len(order), minibatch):
            sel = order[s:s + minibatch]
            _, grads = objective(model.params, [model.target_ids], model.batch(feats[sel], targets[sel]),
                                 weight=1.0 / len(sel))
            opt.step(model.params, grads)
        if on_epoch is not None and on_epoch(e + 1, model):
            break
    return model


def train_lbl_hmm(model: LblHmm, trees, epochs: int = 10, lr: float = 0.1, eps: float = 1e-8,
                  minibatch: int = 64, databatch: int = 10, seed: int = 0, on_epoch=None) -> LblHmm:
    """EM with per-sequence forward-backward and sampled latent states, as for LTT-latent."""
    seqs = [model.sequence(t) for t in trees]
    opt = AdaGrad(model.params, lr, eps, model.transitions)
    ss = np.random.SeedSequence(seed + 1)
    rng_shuffle, rng_latent = (np.random.default_rng(x) for x in ss.spawn(2))
    K = model.n_states
    for e in range(epochs):
        order = rng_shuffle.permutation(len(seqs))
        for start in range(0, len(order), databatch):
            ids = order[start:start + databatch]
            E = model.emission_matrix()
            words, states, post = [], [], []
            for i in ids:
                x = seqs[i]
                if K > 1:
                    q, ll = forward_backward(E[:, x].T, model.transitions)
                    if not np.isfinite(ll):
                        continue
                    post.append(q)
                    u = rng_latent.random(len(x))
                    h = np.minimum((u[:, None] > np.cumsum(q.unary, axis=1)).sum(1), K - 1)
                else:
                    h = np.zeros(len(x), dtype=np.int64)
                words.append(x)
                states.append(h)
            if K > 1 and post:
                opt.step_transitions(model.transitions, *transition_gradients(model.transitions, post))
            if not words:
                continue
            words = np.concatenate(words)
            states = np.concatenate(states)
            perm = rng_shuffle.permutation(len(words))
            for s in range(0, len(perm), minibatch):
                sel = perm[s:s + minibatch]
                batch = _token_batch(model.state_ids[states[sel]], np.zeros((len(sel), 0)), words[sel])
                _, grads = objective(model.params, [model.target_ids], batch, weight=1.0 / len(sel))
                opt.step(model.params, grads)
        if on_epoch is not None and on_epoch(e + 1, model):
            break
    return model
