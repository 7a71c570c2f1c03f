"""Stacker test F1 as systems join the training pool, noisiest first.

    python3 scripts/incremental_systems.py --seed 0
"""
import argparse
import sys
from dataclasses import replace

from slotstack.experiment import run_experiment
from slotstack.pipeline import PipelineOptions
from slotstack.synth import GeneratorConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--features", default="CONF,DPS,OP,REL")
    args = ap.parse_args(argv)
    opts = PipelineOptions(features=tuple(args.features.upper().split(",")), seed=args.seed)
    rep = run_experiment(replace(GeneratorConfig(), seed=args.seed), opts, incremental=True, compare=False)
    sys.stdout.write(rep.to_csv())


if __name__ == "__main__":
    main()
