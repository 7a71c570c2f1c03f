"""Stacker test F1 as a function of the fraction of training queries used.

    python3 scripts/learning_curve.py --seed 0 --fractions 0.1,0.2,0.5,1.0
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
    ap.add_argument("--fractions", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    ap.add_argument("--features", default="CONF,DPS,OP,REL")
    args = ap.parse_args(argv)
    fracs = [float(f) for f in args.fractions.split(",")]
    opts = PipelineOptions(features=tuple(args.features.upper().split(",")), seed=args.seed)
    rep = run_experiment(replace(GeneratorConfig(), seed=args.seed), opts, learning_curve=fracs, compare=False)
    sys.stdout.write(rep.to_csv())


if __name__ == "__main__":
    main()
