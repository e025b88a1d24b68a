"""Fitting LTT models: support tables, AdaGrad, exact ML, NCE and EM."""
from __future__ import annotations

import configparser
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import logsumexp

from .context import annotate_identifiers, trace
from .lbl import DefaultModel, ParamStore, SupportTable, Vocab
from .model import (
    LOCAL_KIND, VARIANTS, Encoded, LttModel, TransitionModel, kind_universe, make_batch,
    objective, tuple_object,
)
from .trees import children_key

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    variant: str = "ltt0"
    dim: int = 50
    epochs: int = 20
    minibatch: int = 64
    lr: float = 0.1
    eps: float = 1e-8
    trainer: str = "exact"          # "exact" or "nce"
    nce_k: int = 10
    noise_alpha: float = 1.0
    latent_states: int = 32
    max_latent_states: int = 256
    databatch: int = 10
    seed: int = 0
    pi: float = 0.9
    alpha: float = 0.1
    init_scale: float = 0.01
    patience: int = 0               # stop after this many epochs without validation gain; 0 = never

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.latent_states < 1:
            raise ConfigError("latent_states must be >= 1")
        if self.latent_states > self.max_latent_states:
            raise ConfigError(f"latent_states {self.latent_states} exceeds maximum {self.max_latent_states}")
        if self.nce_k < 1:
            raise ConfigError("nce_k must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.trainer not in ("exact", "nce"):
            raise ConfigError(f"unknown trainer {self.trainer!r}")
        if not 0.0 <= self.pi <= 1.0:
            raise ConfigError("pi must lie in [0, 1]")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        return self

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        """Parse ``key = value`` lines (``#`` comments allowed)."""
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        cp.read_string("[train]\n" + text)
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, value in cp["train"].items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            t = types[key]
            kw[key] = {"int": int, "float": float}.get(t, str)(value)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw).validate()

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


# -- support and vocabulary ---------------------------------------------------

def build_support_table(trees) -> SupportTable:
    """Observed children tuples per (annotated) parent kind."""
    trees = list(trees)
    if not trees:
        raise ConfigError("cannot build a support table from an empty corpus")
    table = SupportTable()
    for tree in trees:
        for node in tree.internal_nodes():
            table.add(node.kind, children_key(node))
    return table


def token_universe(*corpora) -> frozenset:
    return frozenset(tok for trees in corpora for t in trees for tok in t.tokens())


def init_model(config: TrainConfig, train_trees, universe=None) -> LttModel:
    """Support table, vocabulary, default model and randomly initialized parameters."""
    config.validate()
    spec = VARIANTS[config.variant]
    k = config.latent_states if spec.latent else 1
    prepared = [annotate_identifiers(t) if spec.scope else t for t in train_trees]
    support = build_support_table(prepared)
    vocab = Vocab()
    for kind in support.kinds():
        vocab.add(("kind", kind))
    for kind in support.kinds():
        for key in support.support(kind):
            vocab.add(tuple_object(key))
    for tree in prepared:
        for st in trace(tree):
            for key in spec.context_keys(st.context):
                if key is not None:
                    vocab.add(key)
            if st.scope is not None and st.production.parent_kind == LOCAL_KIND:
                for v in st.scope:
                    for key in v.feature_keys():
                        vocab.add(key)
    if k > 1:
        for h in range(k):
            vocab.add(("latent", h))
    tokens = token_universe(prepared) | frozenset(universe or ())
    default = DefaultModel.fit(support, config.alpha, tokens, kind_universe(spec))
    rng = np.random.default_rng(config.seed)
    n_slots = len(spec.slot_names(k))
    params = ParamStore.init(len(vocab), config.dim, n_slots + 1, 4, rng, config.init_scale)
    trans = TransitionModel.uniform(k, rng) if k > 1 else None
    return LttModel(config.variant, vocab, params, support, default, config.pi, k, trans)


# -- optimizer -----------------------------------------------------------------

def adagrad_apply(theta: np.ndarray, grad: np.ndarray, acc: np.ndarray, lr: float, eps: float):
    """In-place AdaGrad update of ``theta`` (arrays of equal shape)."""
    acc += grad * grad
    theta -= lr * grad / (np.sqrt(acc) + eps)


class AdaGrad:
    def __init__(self, params: ParamStore, lr: float = 0.1, eps: float = 1e-8,
                 transitions: TransitionModel | None = None):
        self.lr, self.eps = lr, eps
        self.acc = ParamStore.zeros(*params.R.shape, params.Wcon.shape[0], params.Wch.shape[0])
        self.trans_acc = None
        if transitions is not None:
            self.trans_acc = TransitionModel(np.zeros_like(transitions.prior_logits),
                                             np.zeros_like(transitions.logits))

    def step(self, params: ParamStore, grads):
        r_ids, r_rows, b_ids, b_vals = grads.compact()
        if len(r_ids):
            theta, acc = params.R[r_ids], self.acc.R[r_ids]
            adagrad_apply(theta, r_rows, acc, self.lr, self.eps)
            params.R[r_ids], self.acc.R[r_ids] = theta, acc
        if len(b_ids):
            theta, acc = params.b[b_ids], self.acc.b[b_ids]
            adagrad_apply(theta, b_vals, acc, self.lr, self.eps)
            params.b[b_ids], self.acc.b[b_ids] = theta, acc
        adagrad_apply(params.Wcon, grads.Wcon, self.acc.Wcon, self.lr, self.eps)
        adagrad_apply(params.Wch, grads.Wch, self.acc.Wch, self.lr, self.eps)

    def step_transitions(self, trans: TransitionModel, d_prior: np.ndarray, d_logits: np.ndarray):
        adagrad_apply(trans.prior_logits, d_prior, self.trans_acc.prior_logits, self.lr, self.eps)
        adagrad_apply(trans.logits, d_logits, self.trans_acc.logits, self.lr, self.eps)


def noise_distributions(model: LttModel, alpha: float = 1.0) -> list[np.ndarray]:
    """Log noise probabilities per support group: smoothed empirical tuple frequencies."""
    out = []
    for kind in model.group_kinds:
        counts = model.support.counts[kind]
        c = np.array([counts[key] for key in model.support.support(kind)], dtype=float) + alpha
        out.append(np.log(c / c.sum()))
    return out


def draw_noise(batch, noise_logq: list, k: int, rng: np.random.Generator):
    batch.noise = {}
    for g, idx, _ in batch.groups:
        q = np.exp(noise_logq[g])
        batch.noise[g] = rng.choice(len(q), size=(len(idx), k), p=q)


def exact_ml_step(model: LttModel, enc: Encoded, rows, opt: AdaGrad, latent=None) -> float:
    """One AdaGrad step on the mean exact negative log likelihood of ``rows``."""
    batch = make_batch(model, enc, rows)
    if latent is not None:
        batch.feats[:, model.latent_slot] = model.latent_ids()[latent]
    _, grads = objective(model.params, model.group_ids, batch, weight=1.0 / len(rows))
    opt.step(model.params, grads)
    return grads.loss


def nce_step(model: LttModel, enc: Encoded, rows, opt: AdaGrad, noise_logq: list, k: int,
             rng: np.random.Generator, latent=None) -> float:
    batch = make_batch(model, enc, rows)
    if latent is not None:
        batch.feats[:, model.latent_slot] = model.latent_ids()[latent]
    draw_noise(batch, noise_logq, k, rng)
    _, grads = objective(model.params, model.group_ids, batch, mode="nce", noise_logq=noise_logq,
                         weight=1.0 / len(rows))
    opt.step(model.params, grads)
    return grads.loss


# -- latent chains ---------------------------------------------------------------

@dataclass
class PosteriorTable:
    unary: np.ndarray      # (N, K)
    pairwise: np.ndarray   # (N-1, K, K): [i-1] holds Q(h_{i-1}=a, h_i=b)


def _as_logs(transitions):
    if isinstance(transitions, TransitionModel):
        return transitions.log_prior(), transitions.log_matrix()
    prior, matrix = transitions
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(prior, dtype=float)), np.log(np.asarray(matrix, dtype=float))


def forward_filter(emissions: np.ndarray, transitions) -> tuple[float, np.ndarray]:
    """Log likelihood and per-step predictive log probabilities (which sum to it)."""
    em = np.asarray(emissions, dtype=float)
    n, k = em.shape
    if n == 0:
        return 0.0, np.zeros(0)
    lp0, lt = _as_logs(transitions)
    steps = np.empty(n)
    pred = lp0
    for i in range(n):
        joint = pred + em[i]
        c = logsumexp(joint)
        steps[i] = c
        if not np.isfinite(c):
            steps[i + 1:] = -np.inf if c == -np.inf else c
            break
        filt = joint - c
        pred = logsumexp(filt[:, None] + lt, axis=0)
    return float(steps.sum()), steps


def forward_backward(emissions: np.ndarray, transitions) -> tuple[PosteriorTable, float]:
    """Exact posterior marginals of a discrete chain, computed in log space.

    ``transitions`` is a TransitionModel or a (prior, matrix) pair of
    probabilities. Impossible observations give a log likelihood of -inf and
    NaN posteriors.
    """
    em = np.asarray(emissions, dtype=float)
    n, k = em.shape
    lp0, lt = _as_logs(transitions)
    alpha = np.empty((n, k))
    beta = np.zeros((n, k))
    alpha[0] = lp0 + em[0]
    for i in range(1, n):
        alpha[i] = logsumexp(alpha[i - 1][:, None] + lt, axis=0) + em[i]
    for i in range(n - 2, -1, -1):
        beta[i] = logsumexp(lt + (em[i + 1] + beta[i + 1])[None, :], axis=1)
    ll = float(logsumexp(alpha[-1]))
    if not np.isfinite(ll):
        return PosteriorTable(np.full((n, k), np.nan), np.full((max(n - 1, 0), k, k), np.nan)), ll
    unary = np.exp(alpha + beta - ll)
    pair = np.exp(alpha[:-1, :, None] + lt[None] + (em[1:] + beta[1:])[:, None, :] - ll)
    return PosteriorTable(unary, pair), ll


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LTT_THREADS", "1")))
    except ValueError:
        return 1


def e_step(model: LttModel, enc: Encoded, tree_ids) -> list[tuple[np.ndarray, PosteriorTable, float]]:
    rows = np.concatenate([enc.tree_rows(t) for t in tree_ids])
    em = model.base_log_probs(enc, rows)
    parts, start = [], 0
    for t in tree_ids:
        n = enc.offsets[t + 1] - enc.offsets[t]
        parts.append((enc.tree_rows(t), em[start:start + n]))
        start += n
    run = lambda p: (p[0],) + forward_backward(p[1], model.transitions)  # noqa: E731
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(run, parts))
    return [run(p) for p in parts]


def transition_gradients(trans: TransitionModel, posteriors) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the negative expected complete-data transition log likelihood."""
    p0 = np.exp(trans.log_prior())
    P = np.exp(trans.log_matrix())
    d_prior = np.zeros_like(p0)
    d_logits = np.zeros_like(P)
    for q in posteriors:
        d_prior -= q.unary[0] - p0
        counts = q.pairwise.sum(0)
        d_logits -= counts - counts.sum(1, keepdims=True) * P
    n = max(len(posteriors), 1)
    return d_prior / n, d_logits / n


# -- training loops --------------------------------------------------------------

@dataclass
class TrainState:
    model: LttModel
    opt: AdaGrad
    enc: Encoded
    rng_shuffle: np.random.Generator
    rng_noise: np.random.Generator
    rng_latent: np.random.Generator
    noise_logq: list | None
    epoch: int = 0


def start_training(model: LttModel, train_trees, config: TrainConfig) -> TrainState:
    enc = model.encode(train_trees)
    ss = np.random.SeedSequence(config.seed + 1)
    r1, r2, r3 = (np.random.default_rng(s) for s in ss.spawn(3))
    opt = AdaGrad(model.params, config.lr, config.eps, model.transitions)
    noise = noise_distributions(model, config.noise_alpha) if config.trainer == "nce" else None
    return TrainState(model, opt, enc, r1, r2, r3, noise)


def run_epoch(state: TrainState, config: TrainConfig) -> float:
    """One pass over the corpus in databatches of whole programs; returns mean loss."""
    model, enc = state.model, state.enc
    n_trees = len(enc.offsets) - 1
    order = state.rng_shuffle.permutation(n_trees)
    total, count = 0.0, 0
    for start in range(0, n_trees, config.databatch):
        tree_ids = order[start:start + config.databatch]
        rows = np.concatenate([enc.tree_rows(t) for t in tree_ids])
        latent = None
        if model.latent_slot is not None:
            results = e_step(model, enc, tree_ids)
            post = [q for _, q, ll in results if np.isfinite(ll)]
            state.opt.step_transitions(model.transitions, *transition_gradients(model.transitions, post))
            latent = np.zeros(enc.n, dtype=np.int64)
            for trows, q, ll in results:
                if not np.isfinite(ll):
                    continue
                u = state.rng_latent.random(len(trows))
                cdf = np.cumsum(q.unary, axis=1)
                latent[trows] = np.minimum((u[:, None] > cdf).sum(1), model.n_latent - 1)
        if len(rows) == 0:
            continue
        rows = rows[state.rng_shuffle.permutation(len(rows))]
        for mb in range(0, len(rows), config.minibatch):
            sel = rows[mb:mb + config.minibatch]
            lat = latent[sel] if latent is not None else None
            if config.trainer == "nce":
                loss = nce_step(model, enc, sel, state.opt, state.noise_logq, config.nce_k,
                                state.rng_noise, lat)
            else:
                loss = exact_ml_step(model, enc, sel, state.opt, lat)
            total += loss * len(sel)
            count += len(sel)
    state.epoch += 1
    return total / max(count, 1)


def train(model: LttModel, train_trees, config: TrainConfig, on_epoch=None) -> LttModel:
    """Train in place for ``config.epochs`` epochs."""
    state = start_training(model, train_trees, config)
    for e in range(config.epochs):
        loss = run_epoch(state, config)
        log.info("%s epoch %d loss %.4f", model.variant, e + 1, loss)
        if on_epoch is not None and on_epoch(e + 1, model):
            break
    return model


def em_train(train_trees, config: TrainConfig, universe=None) -> LttModel:
    """EM for the latent-state variant: forward-backward E steps per databatch of
    programs, then an incremental M step on sampled latent assignments."""
    if config.variant != "ltt-latent":
        config = TrainConfig(**{**asdict(config), "variant": "ltt-latent"})
    config.validate()
    model = init_model(config, train_trees, universe)
    return train(model, train_trees, config)


# -- validation-driven selection ------------------------------------------------------

@dataclass
class FitResult:
    model: LttModel
    epoch: int
    pi: float
    alpha: float
    valid_bits_per_token: float
    history: list


def select_smoothing(model: LttModel, enc: Encoded, pis, alphas, base=None, defaults=None):
    """Best (bits per token, pi, alpha) on an encoded corpus."""
    if base is None:
        base = model.base_log_probs(enc)
    tokens = max(int(enc.token_counts.sum()), 1)
    best = (-math.inf, None, None)
    for a in alphas:
        d = defaults[a] if defaults is not None else model.default_log_probs(enc, model.default.with_alpha(a))
        for pi in pis:
            bits = sum(float(c.sum()) for c in model.tree_costs(enc, pi, d, base)) / tokens
            if bits > best[0]:
                best = (bits, pi, a)
    return best


def fit(train_trees, valid_trees, config: TrainConfig, universe=None,
        pis=(0.5, 0.7, 0.8, 0.9, 0.95, 0.98), alphas=(0.01, 0.1, 1.0)) -> FitResult:
    """Train and keep the epoch and smoothing setting that maximize validation log probability."""
    model = init_model(config, train_trees, universe)
    state = start_training(model, train_trees, config)
    venc = model.encode(valid_trees)
    defaults = {a: model.default_log_probs(venc, model.default.with_alpha(a)) for a in alphas}
    best = None
    history = []
    for e in range(config.epochs):
        loss = run_epoch(state, config)
        bits, pi, a = select_smoothing(model, venc, pis, alphas, defaults=defaults)
        history.append((e + 1, loss, bits))
        log.info("%s epoch %d loss %.4f valid %.4f bits/token", model.variant, e + 1, loss, bits)
        if best is None or bits > best[0]:
            best = (bits, e + 1, pi, a, model.params.copy(),
                    model.transitions.copy() if model.transitions is not None else None)
        elif config.patience and e + 1 - best[1] >= config.patience:
            break
    bits, epoch, pi, a, params, trans = best
    model.params = params
    model.transitions = trans
    model.pi = pi
    model.default = model.default.with_alpha(a)
    return FitResult(model, epoch, pi, a, bits, history)
