"""Held-out log probabilities (base 2) and their breakdowns."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .context import annotate_identifiers
from .model import ScoredCorpus
from .trees import IDENTIFIER_NAME, base_kind, depth_first_productions


@dataclass
class EvalReport:
    model: str
    total_bits: float
    bits_per_token: float
    mean_program_bits_per_token: float
    token_bits: float
    tree_bits: float
    program_count: int
    token_count: int
    per_kind_bits: dict = field(default_factory=dict)
    per_kind_count: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "totalBits": self.total_bits,
            "bitsPerToken": self.bits_per_token,
            "meanProgramBitsPerToken": self.mean_program_bits_per_token,
            "tokenBits": self.token_bits,
            "treeBits": self.tree_bits,
            "programCount": self.program_count,
            "tokenCount": self.token_count,
            "perParentKindBits": {k: self.per_kind_bits[k] for k in sorted(self.per_kind_bits)},
            "perParentKindCount": {k: self.per_kind_count[k] for k in sorted(self.per_kind_count)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def breakdown(self) -> list[tuple[str, float, int]]:
        """(kind, percent of total bits, productions), largest share first."""
        total = self.total_bits
        rows = [(k, 100.0 * b / total if total else 0.0, self.per_kind_count[k])
                for k, b in self.per_kind_bits.items()]
        return sorted(rows, key=lambda r: (-r[1], r[0]))

    def to_table(self, top: int = 15) -> str:
        lines = [
            f"model                 {self.model}",
            f"programs              {self.program_count}",
            f"tokens                {self.token_count}",
            f"total bits            {self.total_bits:.4f}",
            f"bits/token            {self.bits_per_token:.4f}",
            f"mean program bits/tok {self.mean_program_bits_per_token:.4f}",
            f"token cost            {self.token_bits:.4f}",
            f"tree cost             {self.tree_bits:.4f}",
            "",
            f"{'parent kind':<36}{'% bits':>9}{'count':>9}",
        ]
        for kind, pct, count in self.breakdown()[:top]:
            lines.append(f"{kind:<36}{pct:>9.2f}{count:>9}")
        return "\n".join(lines) + "\n"


def report_label(kind: str) -> str:
    """Display label of a parent kind; identifier parents show their scope annotation."""
    if base_kind(kind) == IDENTIFIER_NAME and kind != IDENTIFIER_NAME:
        return f"{IDENTIFIER_NAME} ({kind.split('@', 1)[1]})"
    return kind


def _labels(tree) -> list[str]:
    return [report_label(p.parent_kind) for p in depth_first_productions(annotate_identifiers(tree))]


def summarize(name: str, scored: ScoredCorpus, trees=None) -> EvalReport:
    """Aggregate per-unit costs. ``trees`` supplies local/global labels for
    identifier productions of models that do not annotate them."""
    per_kind = defaultdict(float)
    per_count = defaultdict(int)
    token_bits = tree_bits = 0.0
    ratios = []
    totals = []
    for i, bits in enumerate(scored.bits):
        bits = np.asarray(bits, dtype=float)
        kinds = scored.kinds[i]
        if trees is not None and any(base_kind(k) == IDENTIFIER_NAME for k in kinds):
            kinds = _labels(trees[i])
        else:
            kinds = [report_label(k) for k in kinds]
        flags = np.asarray(scored.token_only[i], dtype=bool)
        for k, b in zip(kinds, bits):
            per_kind[k] += float(b)
            per_count[k] += 1
        token_bits += float(bits[flags].sum())
        tree_bits += float(bits[~flags].sum())
        total = float(bits.sum())
        totals.append(total)
        n = int(scored.tokens[i])
        if n > 0:
            ratios.append(total / n)
    total = float(math.fsum(totals))
    tokens = int(np.sum(scored.tokens))
    return EvalReport(
        model=name,
        total_bits=total,
        bits_per_token=total / tokens if tokens else 0.0,
        mean_program_bits_per_token=float(np.mean(ratios)) if ratios else 0.0,
        token_bits=token_bits,
        tree_bits=tree_bits,
        program_count=len(scored.bits),
        token_count=tokens,
        per_kind_bits=dict(per_kind),
        per_kind_count=dict(per_count),
    )


def eval_corpus(model, corpus) -> EvalReport:
    """Score every program with the (smoothed) model."""
    corpus = list(corpus)
    return summarize(model.variant, model.score(corpus), corpus)


def breakdown_by_parent(model, corpus) -> list[tuple[str, float, int]]:
    return eval_corpus(model, corpus).breakdown()
