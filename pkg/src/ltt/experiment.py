"""Scaled model-comparison experiment on the bundled corpus."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

from .corpus import bundled_split
from .evaluation import eval_corpus
from .pipeline import fit_variant
from .training import TrainConfig, token_universe

log = logging.getLogger(__name__)

ORDERING_VARIANTS = ("ngram2", "ngram3", "ngram4", "ngram5", "lbl-ngram10", "pcfg",
                     "ltt0", "ltt-hi", "ltt-seq", "ltt-hiseq", "ltt-hiseq-scope")


@dataclass
class ExperimentResult:
    rows: dict = field(default_factory=dict)     # variant -> {"train", "valid", "test", "seconds", settings}

    def test(self, variant: str) -> float:
        return self.rows[variant]["test"]

    def table(self) -> str:
        lines = [f"{'model':<18}{'train':>9}{'valid':>9}{'test':>9}{'sec':>8}"]
        for v, r in self.rows.items():
            lines.append(f"{v:<18}{r['train']:>9.3f}{r['valid']:>9.3f}{r['test']:>9.3f}{r['seconds']:>8.1f}")
        return "\n".join(lines) + "\n"


def default_config(**overrides) -> TrainConfig:
    return replace(TrainConfig(dim=50, epochs=12, seed=0, patience=3), **overrides)


def run(variants=ORDERING_VARIANTS, config: TrainConfig | None = None, split_seed: int = 0,
        fractions=(0.7, 0.1, 0.2)) -> ExperimentResult:
    """Fit each variant on the bundled training split and report bits per token."""
    config = config or default_config()
    train, valid, test = bundled_split(fractions, split_seed)
    universe = token_universe(train, valid, test)
    result = ExperimentResult()
    for v in variants:
        t0 = time.perf_counter()
        model, fit = fit_variant(v, train, valid, config, universe)
        row = {
            "train": eval_corpus(model, train).bits_per_token,
            "valid": fit.valid_bits_per_token,
            "test": eval_corpus(model, test).bits_per_token,
            "seconds": time.perf_counter() - t0,
            **fit.settings,
        }
        result.rows[v] = row
        log.info("%s: test %.4f bits/token (%.1fs)", v, row["test"], row["seconds"])
    return result


def ordering_checks(res: ExperimentResult, margin: float = 0.05) -> dict:
    """Named pass/fail checks of the expected model ordering (higher is better)."""
    t = res.test
    ngrams = [v for v in res.rows if v.startswith("ngram")]
    return {
        "ltt-hiseq-scope beats ltt-hiseq": t("ltt-hiseq-scope") - t("ltt-hiseq") >= margin,
        "ltt-hiseq beats ltt-hi and ltt-seq": t("ltt-hiseq") - max(t("ltt-hi"), t("ltt-seq")) >= margin,
        "ltt-hi and ltt-seq beat ltt0": min(t("ltt-hi"), t("ltt-seq")) - t("ltt0") >= margin,
        "ltt0 matches pcfg": abs(t("ltt0") - t("pcfg")) <= margin,
        "lbl-ngram10 beats all n-grams": all(t("lbl-ngram10") > t(v) for v in ngrams),
    }


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    r = run()
    print(r.table())
    for name, ok in ordering_checks(r).items():
        print(("PASS " if ok else "FAIL ") + name)
