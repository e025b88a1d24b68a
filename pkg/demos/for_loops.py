"""Train the scope-aware model briefly, then sample for-loops that may use an
array `xs` and a bound `n` already in scope."""
from ltt.corpus import bundled_split
from ltt.minilang import unparse
from ltt.sampler import SampleConfig, make_scope, sample_many
from ltt.training import TrainConfig, init_model, train

train_trees, _, _ = bundled_split()
cfg = TrainConfig(variant="ltt-hiseq-scope", dim=20, epochs=3, seed=0)
model = train(init_model(cfg, train_trees), train_trees, cfg)

scope = make_scope([("n", "int"), ("xs", "int[]")])
samples, rejected = sample_many(model, SampleConfig(root_kind="ForStatement", seed=1, initial_scope=scope), 8)
for t in samples:
    print(unparse(t))
print(f"({rejected} rejected)")
