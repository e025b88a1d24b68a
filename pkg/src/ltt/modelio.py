"""Model files: a JSON manifest with base64-encoded little-endian float64 arrays.

The layout is described in docs/model-format.md. Writing is byte-deterministic:
every table is emitted in a fixed order and floats use their shortest
round-tripping representation.
"""
from __future__ import annotations

import base64
import json
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np

from .baselines import LblHmm, LblNgram, NgramModel, TabularPcfg
from .lbl import DefaultModel, ParamStore, SupportTable, Vocab
from .model import LttModel, TransitionModel
from .trees import Token

FORMAT = "ltt-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


# -- object keys ---------------------------------------------------------------

def encode_obj(x):
    if isinstance(x, Token):
        return {"token": x.text, "tokenKind": x.kind.value}
    if isinstance(x, tuple):
        return [encode_obj(v) for v in x]
    if x is None or isinstance(x, (str, int, float)):
        return x
    raise TypeError(f"cannot encode {x!r}")


def decode_obj(x):
    if isinstance(x, dict):
        return Token(x["token"], x["tokenKind"])
    if isinstance(x, list):
        return tuple(decode_obj(v) for v in x)
    return x


def _token_sort_key(t: Token):
    return (t.text, t.kind.value)


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    if d.get("dtype") != "<f8":
        raise ModelFormatError(f"unsupported array dtype {d.get('dtype')!r}")
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


# -- component tables ------------------------------------------------------------

def _support_out(s: SupportTable) -> list:
    return [[kind, [[encode_obj(key), s.counts[kind][key]] for key in s.support(kind)]] for kind in s.kinds()]


def _support_in(rows) -> SupportTable:
    s = SupportTable()
    for kind, entries in rows:
        for key, count in entries:
            s.add(kind, decode_obj(key), count)
    return s


def _default_out(d: DefaultModel) -> dict:
    return {
        "alpha": d.alpha,
        "tokenUniverse": [encode_obj(t) for t in sorted(d.token_universe, key=_token_sort_key)],
        "kindUniverse": sorted(d.kind_universe),
        "tokenKinds": sorted(d.token_kinds),
        "symbolCounts": [[k, [[encode_obj(s), c] for s, c in cnt.items()]] for k, cnt in d.symbol_counts.items()],
        "totals": [[k, v] for k, v in d.totals.items()],
        "lambda": [[k, v] for k, v in d.lam.items()],
        "globalLambda": d.global_lam,
    }


def _default_in(o: dict) -> DefaultModel:
    return DefaultModel(
        alpha=o["alpha"],
        token_universe=frozenset(decode_obj(t) for t in o["tokenUniverse"]),
        kind_universe=frozenset(o["kindUniverse"]),
        token_kinds=set(o["tokenKinds"]),
        symbol_counts={k: Counter({decode_obj(s): c for s, c in cnt}) for k, cnt in o["symbolCounts"]},
        totals={k: v for k, v in o["totals"]},
        lam={k: v for k, v in o["lambda"]},
        global_lam=o["globalLambda"],
    )


def _vocab_out(v: Vocab) -> list:
    return [encode_obj(k) for k in v.keys[1:]]


def _vocab_in(rows) -> Vocab:
    return Vocab(decode_obj(k) for k in rows)


def _params_out(p: ParamStore) -> dict:
    return {name: encode_array(a) for name, a in p.arrays().items()}


def _params_in(o: dict) -> ParamStore:
    return ParamStore(decode_array(o["R"]), decode_array(o["b"]), decode_array(o["Wcon"]), decode_array(o["Wch"]))


def _trans_out(t: TransitionModel | None):
    if t is None:
        return None
    return {"prior": encode_array(t.prior_logits), "logits": encode_array(t.logits)}


def _trans_in(o) -> TransitionModel | None:
    if o is None:
        return None
    return TransitionModel(decode_array(o["prior"]), decode_array(o["logits"]))


# -- whole models ------------------------------------------------------------------

def to_manifest(model) -> dict:
    head = {"format": FORMAT, "version": VERSION, "variant": model.variant}
    if isinstance(model, LttModel):
        return {**head, "type": "ltt", "dim": model.params.dim, "pi": model.pi,
                "alpha": model.default.alpha, "latentStates": model.n_latent,
                "vocab": _vocab_out(model.vocab), "support": _support_out(model.support),
                "default": _default_out(model.default), "params": _params_out(model.params),
                "transitions": _trans_out(model.transitions)}
    if isinstance(model, TabularPcfg):
        return {**head, "type": "pcfg", "pi": model.pi, "alpha": model.default.alpha,
                "support": _support_out(model.support), "default": _default_out(model.default)}
    if isinstance(model, NgramModel):
        return {**head, "type": "ngram", "order": model.order, "alpha": model.alpha, "words": model.vocab,
                "counts": [[list(ctx), list(map(list, cnt.items()))] for ctx, cnt in model.counts.items()]}
    if isinstance(model, LblNgram):
        return {**head, "type": "lbl-ngram", "order": model.order, "dim": model.params.dim,
                "words": model.words, "vocab": _vocab_out(model.vocab), "params": _params_out(model.params)}
    if isinstance(model, LblHmm):
        return {**head, "type": "lbl-hmm", "dim": model.params.dim, "latentStates": model.n_states,
                "words": model.words, "vocab": _vocab_out(model.vocab), "params": _params_out(model.params),
                "transitions": _trans_out(model.transitions)}
    raise TypeError(f"cannot save {type(model).__name__}")


def from_manifest(m: dict):
    if m.get("format") != FORMAT:
        raise ModelFormatError("not a model file")
    if m.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model file version {m.get('version')!r}")
    kind = m.get("type")
    if kind == "ltt":
        return LttModel(m["variant"], _vocab_in(m["vocab"]), _params_in(m["params"]), _support_in(m["support"]),
                        _default_in(m["default"]), m["pi"], m["latentStates"], _trans_in(m["transitions"]))
    if kind == "pcfg":
        return TabularPcfg(_support_in(m["support"]), _default_in(m["default"]), m["pi"])
    if kind == "ngram":
        model = NgramModel(m["order"], m["alpha"], m["words"])
        counts = defaultdict(Counter)
        for ctx, items in m["counts"]:
            counts[tuple(ctx)] = Counter({w: c for w, c in items})
            model.totals[tuple(ctx)] = sum(c for _, c in items)
        model.counts = counts
        return model
    if kind == "lbl-ngram":
        return LblNgram(m["order"], m["words"], _vocab_in(m["vocab"]), _params_in(m["params"]))
    if kind == "lbl-hmm":
        return LblHmm(m["words"], _vocab_in(m["vocab"]), _params_in(m["params"]), _trans_in(m["transitions"]))
    raise ModelFormatError(f"unknown model type {kind!r}")


def dumps(model) -> str:
    return json.dumps(to_manifest(model), ensure_ascii=True, separators=(",", ":")) + "\n"


def loads(text: str):
    try:
        return from_manifest(json.loads(text))
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"malformed model file: {e}") from None


def save_model(model, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_model(path):
    return loads(Path(path).read_text(encoding="utf-8"))
