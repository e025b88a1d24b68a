"""Command-line interface: ingest, split, train, eval, sample, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .corpus import CorpusError, ingest_dir, read_users, split_indices
from .evaluation import eval_corpus
from .lbl import ModelingError
from .minilang import unparse
from .model import EvaluationError, LttModel
from .modelio import ModelFormatError, load_model, save_model
from .pipeline import ALL_VARIANTS, ALPHA_GRID, PI_GRID, fit_variant
from .sampler import SampleConfig, SampleRejected, make_scope, sample_many
from .training import ConfigError, TrainConfig, token_universe
from .trees import AstParseError, StructureError, read_corpus, serialize_ast, write_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("ltt")


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    return p


def _read_trees(path: str):
    return read_corpus(_existing(path))


# -- commands -------------------------------------------------------------------

def cmd_ingest(args) -> int:
    src = Path(args.src)
    if not src.is_dir():
        raise UsageError(f"not a directory: {args.src}")
    items, failed = ingest_dir(src)
    write_corpus([t for _, t in items], args.out)
    users = read_users(src / "users.jsonl") if (src / "users.jsonl").exists() else {}
    meta = Path(str(args.out) + ".meta.jsonl")
    with open(meta, "w", encoding="utf-8", newline="\n") as f:
        for rel, _ in items:
            row = {"path": rel}
            if rel in users:
                row["user"] = users[rel]
            f.write(json.dumps(row, sort_keys=True) + "\n")
    for rel, msg in failed:
        print(f"parse failure: {rel}: {msg}", file=sys.stderr)
    print(f"ingested {len(items)} programs, {len(failed)} failures -> {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    trees = _read_trees(args.corpus)
    groups = None
    if args.by_user:
        meta = Path(args.meta or args.corpus + ".meta.jsonl")
        rows = [json.loads(line) for line in _existing(str(meta)).read_text(encoding="utf-8").splitlines() if line]
        if len(rows) != len(trees) or any("user" not in r for r in rows):
            raise CorpusError("user metadata must have one row with a 'user' field per program")
        groups = [r["user"] for r in rows]
    parts = split_indices(len(trees), args.fractions, args.seed, groups)
    prefix = args.out_prefix or str(Path(args.corpus).with_suffix("")).removesuffix(".asts")
    for name, idx in zip(("train", "valid", "test"), parts):
        path = f"{prefix}.{name}.asts.jsonl"
        write_corpus([trees[i] for i in idx], path)
        print(f"{name}: {len(idx)} programs -> {path}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    text = _existing(args.config).read_text(encoding="utf-8") if args.config else ""
    # the variant itself comes from --variant; baselines ignore the LTT-only keys
    return TrainConfig.from_text(text, dim=args.dim, epochs=args.epochs, seed=args.seed, trainer=args.trainer,
                                 latent_states=args.latent_states, nce_k=args.nce_k)


def cmd_train(args) -> int:
    if args.variant not in ALL_VARIANTS:
        raise UsageError(f"unknown variant {args.variant!r}; choose from {', '.join(ALL_VARIANTS)}")
    cfg = _train_config(args)
    train = _read_trees(args.train)
    valid = _read_trees(args.valid) if args.valid else train
    universe = token_universe(train, valid, *(read_corpus(_existing(u)) for u in args.universe))
    model, report = fit_variant(args.variant, train, valid, cfg, universe, args.pi_grid, args.alpha_grid)
    if not math.isfinite(report.valid_bits_per_token):
        raise NumericError(f"validation bits/token is {report.valid_bits_per_token}")
    save_model(model, args.out)
    print(f"{args.variant}: valid {report.valid_bits_per_token:.4f} bits/token "
          f"{json.dumps(report.settings, sort_keys=True)} -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(_existing(args.model))
    trees = _read_trees(args.corpus)
    report = eval_corpus(model, trees)
    if not math.isfinite(report.bits_per_token):
        raise NumericError(f"bits/token is {report.bits_per_token}")
    if args.json:
        Path(args.json).write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(report.to_table(args.top))
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_model(_existing(args.model))
    if not isinstance(model, LttModel):
        raise UsageError("sampling needs a tree model (an ltt* variant)")
    scope = make_scope(tuple(v.split(":", 1)) for v in args.scope) if args.scope else ()
    cfg = SampleConfig(args.root, args.seed, args.max_expansions, scope, tuple(args.last_tokens or ()))
    trees, rejected = sample_many(model, cfg, args.n)
    for t in trees:
        print(serialize_ast(t) if args.ast else unparse(t))
    if rejected:
        print(f"{rejected} samples rejected at the expansion cap", file=sys.stderr)
    return EXIT_OK


def cmd_inspect(args) -> int:
    model = load_model(_existing(args.model))
    print(f"variant {model.variant}")
    support = getattr(model, "support", None)
    if support is not None:
        for kind in support.kinds():
            counts = support.counts[kind]
            total = sum(counts.values())
            top = counts.most_common(args.top)
            print(f"{kind}: {len(counts)} tuples, {total} productions")
            for key, c in top:
                shown = " ".join(s if isinstance(s, str) else s.text for s in key)
                print(f"    {c / total:6.3f}  {shown}")
    params = getattr(model, "params", None)
    if params is not None and args.neighbors:
        vocab = model.vocab
        key = next((k for k in vocab.keys[1:] if str(k) == args.neighbors or
                    (isinstance(k, tuple) and len(k) == 2 and str(k[1]) == args.neighbors)), None)
        if key is None:
            raise UsageError(f"no embedded object matches {args.neighbors!r}")
        R = params.R
        q = R[vocab.get(key)]
        norms = np.linalg.norm(R, axis=1) * (np.linalg.norm(q) or 1.0)
        sims = np.where(norms > 0, R @ q / np.where(norms > 0, norms, 1.0), -np.inf)
        sims[vocab.get(key)] = -np.inf
        sims[0] = -np.inf
        print(f"nearest neighbours of {key}:")
        for i in np.argsort(-sims, kind="stable")[:args.top]:
            print(f"    {sims[i]:6.3f}  {vocab.keys[i]}")
    return EXIT_OK


# -- wiring ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ltt", description="Train, evaluate and sample generative models of MiniLang code.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse a directory of .ml0 files into a corpus file")
    s.add_argument("src")
    s.add_argument("out")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("split", help="seeded train/valid/test split")
    s.add_argument("corpus")
    s.add_argument("--fractions", type=_floats, default=(0.7, 0.1, 0.2))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--by-user", action="store_true", help="keep each author's programs together")
    s.add_argument("--meta", help="user metadata (default: <corpus>.meta.jsonl)")
    s.add_argument("--out-prefix")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="fit a model variant")
    s.add_argument("--variant", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--valid")
    s.add_argument("--universe", nargs="*", default=[], help="extra corpora whose tokens are known")
    s.add_argument("--config", help="key = value training config")
    s.add_argument("--dim", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--trainer", choices=("exact", "nce"))
    s.add_argument("--latent-states", type=int)
    s.add_argument("--nce-k", type=int)
    s.add_argument("--pi-grid", type=_floats, default=PI_GRID)
    s.add_argument("--alpha-grid", type=_floats, default=ALPHA_GRID)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="bits per token of a corpus")
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--json", help="write the machine-readable report here")
    s.add_argument("--top", type=int, default=15)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample", help="generate programs")
    s.add_argument("--model", required=True)
    s.add_argument("--root", default="CompilationUnit")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-expansions", type=int, default=10_000)
    s.add_argument("--scope", nargs="*", help="initial scope as name:type pairs, oldest first")
    s.add_argument("--last-tokens", nargs="*")
    s.add_argument("--ast", action="store_true", help="print serialized trees instead of source")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("inspect", help="support tables and embedding neighbours")
    s.add_argument("--model", required=True)
    s.add_argument("--top", type=int, default=5)
    s.add_argument("--neighbors", help="object to find neighbours of, e.g. a token text")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, AstParseError, ModelFormatError, EvaluationError, StructureError,
            ModelingError, SampleRejected, UnicodeDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
