"""Fit every variant on the bundled corpus and print the bits/token table.

The default configuration takes several minutes on one core. Pass --quick for
a small run that finishes in about a minute (the ordering need not hold there).
"""
import argparse
import logging

from ltt.experiment import ORDERING_VARIANTS, default_config, ordering_checks, run
from ltt.training import TrainConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = TrainConfig(dim=10, epochs=2, seed=0) if args.quick else default_config()
    res = run(ORDERING_VARIANTS, cfg)
    print(res.table())
    for name, ok in ordering_checks(res).items():
        print(f"{'ok ' if ok else 'NO '} {name}")


if __name__ == "__main__":
    main()
