"""Corpus ingestion, splitting and the bundled MiniLang corpus."""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .minilang import LexError, MiniLangSyntaxError, parse
from .trees import Tree, read_corpus

EXTENSION = ".ml0"
USERS_FILE = "users.jsonl"


class CorpusError(ValueError):
    pass


def find_sources(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"{directory} is not a directory")
    return sorted(p for p in directory.rglob(f"*{EXTENSION}") if p.is_file())


def ingest_dir(directory):
    """Parse every ``.ml0`` file under ``directory`` in sorted path order.

    Returns (list of (relative path, tree), list of (relative path, error message)).
    """
    directory = Path(directory)
    files = find_sources(directory)
    if not files:
        raise CorpusError(f"no {EXTENSION} files under {directory}")
    ok, failed = [], []
    for path in files:
        rel = path.relative_to(directory).as_posix()
        try:
            ok.append((rel, parse(path.read_text(encoding="utf-8"))))
        except (LexError, MiniLangSyntaxError, UnicodeDecodeError) as e:
            failed.append((rel, str(e)))
    return ok, failed


def read_users(path) -> dict:
    """Map relative source path -> author id from a JSON-lines sidecar."""
    users = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                users[row["path"]] = row["user"]
    return users


def split_sizes(n: int, fractions) -> tuple[int, int, int]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise CorpusError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    n_train = int(round(fractions[0] * n))
    n_valid = min(int(round(fractions[1] * n)), n - n_train)
    return n_train, n_valid, n - n_train - n_valid


def split_indices(n: int, fractions=(0.7, 0.1, 0.2), seed: int = 0, groups=None):
    """Seeded train/valid/test index lists.

    With ``groups`` (one label per item, e.g. the author) whole groups are
    assigned to one part, and sizes follow the fractions in groups.
    """
    rng = np.random.default_rng(seed)
    if groups is None:
        order = rng.permutation(n)
        a, b, _ = split_sizes(n, fractions)
        parts = order[:a], order[a:a + b], order[a + b:]
        return tuple(sorted(int(i) for i in p) for p in parts)
    labels = sorted(set(groups))
    order = [labels[i] for i in rng.permutation(len(labels))]
    a, b, _ = split_sizes(len(labels), fractions)
    part_of = {g: 0 if j < a else 1 if j < a + b else 2 for j, g in enumerate(order)}
    parts = ([], [], [])
    for i, g in enumerate(groups):
        parts[part_of[g]].append(i)
    return parts


def bundled_dir() -> Path:
    return Path(str(resources.files("ltt") / "data" / "minilang"))


def load_bundled():
    """(relative paths, trees, authors) of the bundled corpus."""
    d = bundled_dir()
    items, failed = ingest_dir(d)
    if failed:
        raise CorpusError(f"bundled corpus has unparsable files: {failed[:3]}")
    users = read_users(d / USERS_FILE)
    paths = [p for p, _ in items]
    return paths, [t for _, t in items], [users.get(p) for p in paths]


def bundled_split(fractions=(0.7, 0.1, 0.2), seed: int = 0, by_user: bool = False):
    """(train, valid, test) tree lists of the bundled corpus."""
    _, trees, users = load_bundled()
    idx = split_indices(len(trees), fractions, seed, users if by_user else None)
    return tuple([trees[i] for i in part] for part in idx)


def load_corpus_file(path) -> list[Tree]:
    return read_corpus(path)
