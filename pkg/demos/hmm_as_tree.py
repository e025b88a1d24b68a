"""A right-branching chain grammar turns the latent-state tree model into an
HMM. Fit K=1 and K=2 on sequences from a sticky two-state source and compare
held-out log-likelihood."""
import numpy as np

from ltt.evaluation import eval_corpus
from ltt.trees import Node, Token, TokenKind, Tree
from ltt.training import TrainConfig, em_train


def chain(words):
    node = Node("Next", (Token(words[-1], TokenKind.IDENTIFIER),))
    for w in reversed(words[:-1]):
        node = Node("Next", (Token(w, TokenKind.IDENTIFIER), node))
    return Tree(node)


def sticky(rng, n):
    emit = [("a", "b"), ("c", "d")]
    out = []
    for _ in range(n):
        h, words = int(rng.integers(2)), []
        for _ in range(int(rng.integers(4, 12))):
            words.append(emit[h][int(rng.integers(2))])
            h = 1 - h if rng.random() < 0.1 else h
        out.append(chain(words))
    return out


rng = np.random.default_rng(0)
train_set, held_out = sticky(rng, 60), sticky(rng, 60)
for k in (1, 2):
    m = em_train(train_set, TrainConfig(variant="ltt-latent", latent_states=k, dim=4, epochs=20, minibatch=16))
    r = eval_corpus(m, held_out)
    print(f"K={k}: held-out {r.total_bits:.1f} bits, {r.bits_per_token:.3f} bits/token")
