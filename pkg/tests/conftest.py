import functools

import numpy as np
import pytest

from ltt.corpus import bundled_split
from ltt.minilang import parse
from ltt.trees import Node, Token, TokenKind, Tree

ACCEPTANCE_RESULTS = []


def record(criterion: str, ok: bool, detail: str = ""):
    """Remember an acceptance outcome for the end-of-run summary, then assert it."""
    ACCEPTANCE_RESULTS.append((criterion, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {criterion}  {detail}")
    assert ok, f"{criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@functools.lru_cache(maxsize=None)
def bundled():
    return bundled_split((0.7, 0.1, 0.2), 0)


@pytest.fixture(scope="session")
def split():
    return bundled()


SMALL_PROGRAMS = [
    "int total ;\n"
    "fn sum ( int [ ] xs , int n ) { int s = 0 ; for ( int i = 0 ; i < n ; ++ i ) { s = s + xs [ i ] ; } return s ; }\n"
    "fn main ( ) { int x = 3 ; if ( x < 4 ) { print ( x ) ; } total = sum ( readInts ( ) , 2 ) ; }\n",
    "fn f ( int a ) { int b = a * 2 ; while ( b < 10 ) { ++ b ; } return b ; }\n",
    "fn g ( ) { string s = \"x\" ; bool ok = true ; if ( ok && s == \"y\" ) { return 1 ; } else { return 0 ; } }\n",
]


@pytest.fixture(scope="session")
def small_trees():
    return [parse(p) for p in SMALL_PROGRAMS]


def tok(text, kind=TokenKind.IDENTIFIER):
    return Token(text, kind)


def chain_tree(words) -> Tree:
    """Next -> (w, Next) | (w): the HMM as a tree."""
    node = Node("Next", (tok(words[-1]),))
    for w in reversed(words[:-1]):
        node = Node("Next", (tok(w), node))
    return Tree(node)


def random_chain_corpus(rng, n, vocab=("a", "b", "c"), max_len=6):
    return [chain_tree([vocab[i] for i in rng.integers(len(vocab), size=rng.integers(1, max_len + 1))])
            for _ in range(n)]


def two_state_chains(rng, n, length=(4, 12)):
    """Sequences from a sticky two-state HMM with disjoint emissions."""
    emit = [("a", "b"), ("c", "d")]
    out = []
    for _ in range(n):
        L = int(rng.integers(*length))
        h = int(rng.integers(2))
        words = []
        for _ in range(L):
            words.append(emit[h][int(rng.integers(2))])
            if rng.random() < 0.1:
                h = 1 - h
        out.append(chain_tree(words))
    return out


def brute_force_chain(em, prior, T):
    """Log likelihood and marginals by enumerating every latent path."""
    import itertools

    n, k = em.shape
    total = 0.0
    unary = np.zeros((n, k))
    pair = np.zeros((max(n - 1, 0), k, k))
    for path in itertools.product(range(k), repeat=n):
        p = prior[path[0]] * np.exp(em[0, path[0]])
        for i in range(1, n):
            p *= T[path[i - 1], path[i]] * np.exp(em[i, path[i]])
        total += p
        for i, h in enumerate(path):
            unary[i, h] += p
        for i in range(1, n):
            pair[i - 1, path[i - 1], path[i]] += p
    return np.log(total), unary / total, pair / total
