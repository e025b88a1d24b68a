"""Fit any named model variant with validation-driven hyperparameter selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .baselines import (
    LblHmm, LblNgram, NgramModel, TabularPcfg, train_lbl_hmm, train_lbl_ngram, vocabulary,
)
from .evaluation import summarize
from .model import VARIANTS
from .training import TrainConfig, fit

log = logging.getLogger(__name__)

NGRAM_VARIANTS = {f"ngram{n}": n for n in range(2, 6)}
ALL_VARIANTS = (*NGRAM_VARIANTS, "lbl-ngram10", "pcfg", *VARIANTS, "lbl-hmm")

PI_GRID = (0.5, 0.7, 0.8, 0.9, 0.95, 0.98)
ALPHA_GRID = (0.01, 0.1, 1.0)
NGRAM_ALPHA_GRID = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0)


@dataclass
class FitReport:
    variant: str
    valid_bits_per_token: float
    settings: dict = field(default_factory=dict)


def _bpt(model, trees) -> float:
    return summarize(model.variant, model.score(trees)).bits_per_token


def fit_variant(variant: str, train, valid, config: TrainConfig | None = None, universe=(),
                pis=PI_GRID, alphas=ALPHA_GRID, ngram_alphas=NGRAM_ALPHA_GRID):
    """Train ``variant`` on ``train``; choose smoothing and stopping epoch on ``valid``.

    Returns (model, FitReport).
    """
    config = config or TrainConfig()
    train, valid = list(train), list(valid)
    if variant in NGRAM_VARIANTS:
        words = vocabulary(train + valid, universe)
        best = None
        for a in ngram_alphas:
            m = NgramModel(NGRAM_VARIANTS[variant], a, words).fit(train)
            bits = _bpt(m, valid)
            if best is None or bits > best[0]:
                best = (bits, m)
        return best[1], FitReport(variant, best[0], {"alpha": best[1].alpha})

    if variant == "pcfg":
        model = TabularPcfg.fit(train, alphas[0], pis[0], universe)
        best = None
        for a in alphas:
            d = model.default.with_alpha(a)
            for pi in pis:
                bits = summarize(variant, model.score(valid, pi, d)).bits_per_token
                if best is None or bits > best[0]:
                    best = (bits, pi, a)
        bits, pi, a = best
        model.pi, model.default = pi, model.default.with_alpha(a)
        return model, FitReport(variant, bits, {"pi": pi, "alpha": a})

    if variant in ("lbl-ngram10", "lbl-hmm"):
        words = vocabulary(train + valid, universe)
        if variant == "lbl-ngram10":
            model = LblNgram.init(words, 10, config.dim, config.seed, config.init_scale)
            trainer = train_lbl_ngram
            kw = {}
        else:
            model = LblHmm.init(words, config.latent_states, config.dim, config.seed, config.init_scale)
            trainer = train_lbl_hmm
            kw = {"databatch": config.databatch}
        state = {"best": None}

        def on_epoch(epoch, m):
            bits = _bpt(m, valid)
            log.info("%s epoch %d valid %.4f bits/token", variant, epoch, bits)
            if state["best"] is None or bits > state["best"][0]:
                snap = (m.params.copy(), m.transitions.copy() if isinstance(m, LblHmm) else None)
                state["best"] = (bits, epoch, snap)
            # a true return value asks the trainer to stop early
            return bool(config.patience) and epoch - state["best"][1] >= config.patience

        trainer(model, train, config.epochs, config.lr, config.eps, config.minibatch, seed=config.seed,
                on_epoch=on_epoch, **kw)
        bits, epoch, (params, trans) = state["best"]
        model.params = params
        if trans is not None:
            model.transitions = trans
        return model, FitReport(variant, bits, {"epoch": epoch})

    if variant in VARIANTS:
        cfg = replace(config, variant=variant)
        res = fit(train, valid, cfg, universe, pis, alphas)
        return res.model, FitReport(variant, res.valid_bits_per_token,
                                    {"epoch": res.epoch, "pi": res.pi, "alpha": res.alpha})
    raise ValueError(f"unknown variant {variant!r}")
