"""Command-line entry point: ``slotstack <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error.  Logs go to standard
error; results go to files or standard output.

Options may also come from a ``key=value`` config file (``--config`` or the
``SLOTSTACK_CONFIG`` environment variable).  Keys are option names with dashes
or underscores; command-line flags win over the file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .aggregate import UNSUP_RUN_ID, build_unsupervised_ensemble, estimate_budgets
from .baselines import learn_threshold, oracle_threshold, pr_curve, union_ensemble, voting_ensemble
from .experiment import run_experiment, seed_sweep
from .ingest import load_alias_table, load_roster, parse_key, parse_run_lines, write_run_file
from .meta import (
    LinearModel, Prediction, parse_groups, predict, read_features, read_predictions, write_features,
    write_predictions,
)
from .model import DataError, ResponseLine
from .pipeline import (
    PipelineOptions, YearData, default_roster, featurize_year, finalize, fit, make_layout, resolve_budgets,
    run_pipeline, team_runs, year_candidates,
)
from .postprocess import merge_nil_clusters, parse_links, write_links
from .scorer import MODES, compare_reports, format_deltas, score
from .synth import GeneratorConfig, generate

log = logging.getLogger("slotstack")

CONFIG_ENV = "SLOTSTACK_CONFIG"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; we reserve 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- shared option groups --------------------------------------------------------------

def _add_year(p, prefix: str = "", required_dir: bool = True, label: str = "year"):
    dash = f"--{prefix}-" if prefix else "--"
    dest = f"{prefix}_" if prefix else ""
    g = p.add_argument_group(f"{label} inputs")
    g.add_argument(f"{dash}dir", dest=f"{dest}dir", required=required_dir and not prefix,
                   help=f"{label} bundle directory (runs/, queries.xml, key.tsv, corpus/, ...)")
    for name, what in (("runs", "run-file directory"), ("queries", "query XML"), ("key", "key file"),
                       ("corpus", "corpus directory"), ("aliases", "alias table"),
                       ("budgets", "budget table"), ("slot-classes", "slot-class table")):
        g.add_argument(f"{dash}{name}", dest=f"{dest}{name.replace('-', '_')}", help=f"{label} {what}")


def _add_opts(p):
    p.add_argument("--features", default="conf,dps,op,rel",
                   help="comma list from conf,ind,qsim,psim,dps,op,relprov,rel")
    p.add_argument("--systems", help="file with one supervised system id per line")
    p.add_argument("--no-combine-teams", action="store_true", help="keep each run as its own system")
    p.add_argument("--dps-reduce", choices=("max", "mean"), default="max")
    p.add_argument("--op-reduce", choices=("max", "mean"), default="mean")
    p.add_argument("--smooth-idf", action="store_true")
    p.add_argument("--sublinear-tf", action="store_true")


def _add_train_opts(p):
    p.add_argument("--lam", type=float, default=0.01, help="L1 penalty")
    p.add_argument("--loss", choices=("logistic", "squared_hinge"), default="logistic")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--tune", action="store_true", help="pick lambda on a query-level held-out split")


def _add_generator(p):
    p.add_argument("--generator", help="generator config JSON (as written by synth)")
    p.add_argument("--systems-count", type=int, dest="n_systems")
    p.add_argument("--train-queries", type=int, dest="n_train_queries")
    p.add_argument("--test-queries", type=int, dest="n_test_queries")
    p.add_argument("--unsup-systems", type=int, dest="n_unsup_systems")


def _add_mode(p):
    p.add_argument("--mode", choices=MODES, default="official")


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help=f"key=value option file (default: ${CONFIG_ENV})")
    g.add_argument("-v", "--verbose", action="count", default=0)
    g.add_argument("--jobs", type=int, default=1, help="parallel file parsing workers")
    g.add_argument("--strict", action="store_true", help="unknown slots are errors instead of warnings")
    g.add_argument("--format", dest="fmt", choices=("2014", "2013"), default="2014", help="run-file layout")
    g.add_argument("--team-map", help="run_id<TAB>team_id overrides")
    g.add_argument("--seed", type=int, default=0, help="the only source of randomness")
    top = _Parser(prog="slotstack", description="Stacked ensembles for slot filling.")
    sub = top.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True
    _add = sub.add_parser
    sub.add_parser = lambda name, **kw: _add(name, parents=[common], **kw)

    p = sub.add_parser("validate", help="parse a bundle and report anomalies")
    _add_year(p)

    p = sub.add_parser("featurize", help="candidate feature table for one year")
    _add_year(p)
    _add_opts(p)
    p.add_argument("--other-year", help="bundle whose systems define the default roster (training side)")
    p.add_argument("--layout-from", help="feature file whose layout to reuse (prediction side)")
    p.add_argument("--write-systems", help="write the roster used")
    p.add_argument("--write-budgets", help="write the budget table used for the unsupervised ensemble")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit the meta-classifier on a feature table")
    p.add_argument("--features", required=True, dest="features_file")
    _add_train_opts(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="score a feature table with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, dest="features_file")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("aggregate", help="build the unsupervised-ensemble run")
    _add_year(p)
    p.add_argument("--systems", help="supervised systems to leave out of the aggregation")
    p.add_argument("--no-combine-teams", action="store_true")
    p.add_argument("--estimate-from", help="labeled bundle to estimate budgets from when none are given")
    p.add_argument("--write-budgets")
    p.add_argument("--out", required=True)

    p = sub.add_parser("baseline", help="union or voting ensemble")
    p.add_argument("kind", choices=("union", "vote"))
    _add_year(p)
    _add_year(p, "train", label="training year")
    p.add_argument("--systems")
    p.add_argument("--no-combine-teams", action="store_true")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", type=int, help="fixed agreement threshold")
    g.add_argument("--learn", action="store_true", help="threshold with the best F1 on --train-dir")
    g.add_argument("--oracle", action="store_true", help="threshold with the best F1 on this year's key")
    _add_mode(p)
    p.add_argument("--curve", help="write the precision/recall curve over k as CSV")
    p.add_argument("--out", required=True)

    p = sub.add_parser("postprocess", help="final run from predictions, or NIL merging with --links")
    _add_year(p, required_dir=False)
    _add_opts(p)
    p.add_argument("--predictions")
    p.add_argument("--run-id", default="STACKED")
    p.add_argument("--links", help="entity-linking mentions to NIL-merge instead")
    p.add_argument("--exact-offsets", action="store_true", help="NIL merge also requires identical spans")
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="precision / recall / F1 of a run against a key")
    p.add_argument("--run", required=True)
    p.add_argument("--key", required=True)
    _add_mode(p)
    p.add_argument("--alias-table")
    p.add_argument("--compare", help="second run; print per-slot F1 deltas")
    p.add_argument("--csv")
    p.add_argument("--out", help="report text (default: standard output)")

    p = sub.add_parser("synth", help="generate a seeded synthetic train/test bundle pair")
    _add_generator(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", help="stacking vs baselines on synthetic data")
    _add_generator(p)
    _add_opts(p)
    _add_train_opts(p)
    p.add_argument("--threshold", type=float, default=0.5)
    _add_mode(p)
    p.add_argument("--learning-curve", help="comma list of training fractions")
    p.add_argument("--incremental", action="store_true", help="add systems one by one")
    p.add_argument("--seeds", help="seed sweep, e.g. 0-9 or 1,4,7 (overrides --seed)")
    p.add_argument("--out", help="CSV report (default: standard output)")

    p = sub.add_parser("pipeline", help="end-to-end: featurize, train, predict, postprocess, score")
    p.add_argument("--data", required=True, help="directory holding one bundle per year")
    p.add_argument("--train-year", required=True)
    p.add_argument("--test-year", required=True)
    _add_opts(p)
    _add_train_opts(p)
    p.add_argument("--threshold", type=float, default=0.5)
    _add_mode(p)
    p.add_argument("--run-id", default="STACKED")
    p.add_argument("--out", required=True)
    return top


# --- config files ----------------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, config: dict[str, str]) -> None:
    """Install config values as parser defaults so explicit flags still win."""
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for k, v in config.items():
        a = actions.get(k)
        if a is None:
            continue
        if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            truth = v.lower() in ("1", "true", "yes", "on")
            if v.lower() not in ("0", "1", "true", "false", "yes", "no", "on", "off"):
                raise UsageError(f"config {k}: expected a boolean, got {v!r}")
            defaults[k] = truth
        elif isinstance(a, argparse._CountAction):
            defaults[k] = int(v)
        else:
            defaults[k] = a.type(v) if a.type is not None else v
            if a.choices is not None and defaults[k] not in a.choices:
                raise UsageError(f"config {k}: {v!r} not in {list(a.choices)}")
    parser.set_defaults(**defaults)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        return args
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    config = read_config(path)
    known = set()
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            sp = action.choices[args.command]
            _apply_config(sp, config)
            known |= {a.dest for a in sp._actions}
    unused = sorted(set(config) - known)
    if unused:
        log.warning("config keys not used by %s: %s", args.command, unused)
    return parser.parse_args(argv)


# --- helpers -----------------------------------------------------------------------------

def _options(args, **extra) -> PipelineOptions:
    fields = dict(
        features=parse_groups(args.features) if hasattr(args, "features") else PipelineOptions.features,
        combine_teams=not getattr(args, "no_combine_teams", False),
        dps_reduce=getattr(args, "dps_reduce", "max"), op_reduce=getattr(args, "op_reduce", "mean"),
        smooth_idf=getattr(args, "smooth_idf", False), sublinear_tf=getattr(args, "sublinear_tf", False),
        seed=args.seed,
    )
    for name in ("lam", "loss", "standardize", "tune", "threshold", "mode", "run_id"):
        if hasattr(args, name):
            fields[name] = getattr(args, name)
    fields.update(extra)
    return PipelineOptions(**fields)


def _load_year(args, prefix: str = "", need_corpus: bool = True) -> Optional[YearData]:
    dest = f"{prefix}_" if prefix else ""
    get = lambda name: getattr(args, dest + name, None)  # noqa: E731
    if get("dir") is None and get("runs") is None:
        return None
    for name in ("dir", "runs", "queries", "key", "corpus", "aliases", "budgets", "slot_classes"):
        v = get(name)
        if v is not None and not Path(v).exists():
            raise DataError(f"path does not exist: {v}")
    team_map = load_roster(args.team_map) if args.team_map else None
    year = YearData.load(get("dir"), runs_dir=get("runs"), queries=get("queries"), key=get("key"),
                         corpus=get("corpus"), budgets=get("budgets"), aliases=get("aliases"),
                         slot_classes=get("slot_classes"), roster_map=team_map, strict=args.strict,
                         fmt=args.fmt, jobs=args.jobs, need_corpus=need_corpus)
    return year


def _needs_corpus(opts: PipelineOptions) -> bool:
    return any(g in opts.features for g in ("QSIM", "PSIM"))


def _read_systems(path) -> list[str]:
    ids = [l.strip() for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
    if not ids:
        raise DataError(f"{path}: roster is empty")
    return ids


def _write_systems(path, roster) -> None:
    Path(path).write_text("".join(f"{s}\n" for s in roster), encoding="utf-8")


def _roster_for(args, year: YearData, opts: PipelineOptions, other: Optional[YearData] = None) -> list[str]:
    if getattr(args, "systems", None):
        return _read_systems(args.systems)
    if other is not None:
        return default_roster(year, other, opts)
    return sorted(r.run_id for r in team_runs(year, opts))


def _write(path, data: bytes) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(data)


def _selection_lines(cands, run_id) -> list[ResponseLine]:
    out = []
    for c in cands:
        b = c.best_response()
        out.append(ResponseLine(b.query_id, b.slot, run_id, b.relation_provenance, b.filler,
                                b.filler_provenance, c.max_confidence()))
    out.sort(key=lambda l: (l.query_id, l.slot, l.fill_norm))
    return out


def _parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-", 1)
            seeds += list(range(int(a), int(b) + 1))
        elif part.strip():
            seeds.append(int(part))
    return seeds


def _generator(args) -> GeneratorConfig:
    cfg = GeneratorConfig.from_json(Path(args.generator).read_text()) if args.generator else GeneratorConfig()
    over = {k: getattr(args, k) for k in ("n_systems", "n_train_queries", "n_test_queries", "n_unsup_systems")
            if getattr(args, k, None) is not None}
    if "n_systems" in over and over["n_systems"] != cfg.n_systems:
        import numpy as np
        n = over["n_systems"]
        over["precisions"] = tuple(float(round(v, 6)) for v in np.linspace(0.35, 0.80, n))
        over["recalls"] = tuple(float(round(v, 6)) for v in np.linspace(0.55, 0.25, n))
    return replace(cfg, seed=args.seed, **over)


# --- commands ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    year = _load_year(args)
    n_lines = sum(len(r.lines) for r in year.runs)
    n_nil = sum(l.is_nil for r in year.runs for l in r.lines)
    print(f"runs\t{len(year.runs)}")
    print(f"response_lines\t{n_lines}")
    print(f"nil_lines\t{n_nil}")
    print(f"queries\t{len(year.queries)}")
    if year.key is not None:
        print(f"key_entries\t{len(year.key)}")
    if year.index is not None:
        print(f"documents\t{year.index.n_docs}")
    problems = []
    qids = {q.id for q in year.queries}
    if qids:
        stray = sorted({l.query_id for r in year.runs for l in r.lines} - qids)
        if stray:
            problems.append(f"{len(stray)} query ids in runs but not in the query file, e.g. {stray[:3]}")
    if year.index is not None:
        docs = set(year.index.term_freqs)
        missing = sorted({p.doc_id for r in year.runs for l in r.lines if not l.is_nil
                          for p in (l.filler_provenance, l.relation_provenance) if p is not None} - docs)
        if missing:
            problems.append(f"{len(missing)} provenance documents missing from the corpus, e.g. {missing[:3]}")
    for msg in problems:
        print(f"warning\t{msg}")
    return 0


def cmd_featurize(args) -> int:
    opts = _options(args)
    year = _load_year(args, need_corpus=_needs_corpus(opts))
    if args.layout_from:
        layout, _ = read_features(Path(args.layout_from).read_text(encoding="utf-8"))
        roster = list(layout.roster)
        if tuple(opts.features) != layout.groups:
            log.info("using feature groups %s from %s", layout.groups, args.layout_from)
        opts = replace(opts, features=layout.groups)
    else:
        other = YearData.load(args.other_year, need_corpus=False, fmt=args.fmt, strict=args.strict) \
            if args.other_year else None
        roster = _roster_for(args, year, opts, other)
        layout = None
    budgets = year.budgets if UNSUP_RUN_ID in roster else None
    if UNSUP_RUN_ID in roster and args.layout_from is None:
        budgets = resolve_budgets(year, roster, opts)
    cands = year_candidates(year, roster, opts, budgets)
    training = layout is None
    if layout is None:
        if not cands:
            raise DataError("no candidates to featurize")
        layout = make_layout(cands, roster, opts)
    vectors = featurize_year(cands, layout, year, opts, training=training)
    _write(args.out, write_features(vectors, layout))
    if args.write_systems:
        _write_systems(args.write_systems, roster)
    if args.write_budgets and budgets is not None:
        budgets.write(args.write_budgets)
    log.info("%d candidates, %d features -> %s", len(vectors), layout.dimension, args.out)
    return 0


def cmd_train(args) -> int:
    layout, vectors = read_features(Path(args.features_file).read_text(encoding="utf-8"))
    if any(v.label is None for v in vectors):
        raise DataError("training features need labels (featurize a bundle with a key)")
    opts = _options(args, features=layout.groups)
    model = fit(vectors, layout, opts)
    _write(args.out, model.to_json().encode("utf-8"))
    log.info("trained: %d nonzero of %d weights, objective %.6f", int((model.weights != 0).sum()),
             len(model.weights), model.objective)
    return 0


def cmd_predict(args) -> int:
    model = LinearModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    layout, vectors = read_features(Path(args.features_file).read_text(encoding="utf-8"))
    preds = predict(model, vectors, args.threshold, layout=layout)
    _write(args.out, write_predictions(preds))
    log.info("%d of %d candidates accepted", sum(p.accepted for p in preds), len(preds))
    return 0


def cmd_aggregate(args) -> int:
    opts = _options(args)
    year = _load_year(args, need_corpus=False)
    runs = team_runs(year, opts)
    if args.systems:
        sup = set(_read_systems(args.systems))
        runs = [r for r in runs if r.run_id not in sup]
    budgets = year.budgets
    if budgets is None:
        src = YearData.load(args.estimate_from, need_corpus=False, fmt=args.fmt) if args.estimate_from else year
        if src.key is None:
            raise DataError("no budget table and no labeled bundle to estimate one from")
        budgets = estimate_budgets(src.key, [l for r in src.runs for l in r.lines], src.queries or None)
    ens = build_unsupervised_ensemble(runs, budgets)
    _write(args.out, write_run_file(ens.lines))
    if args.write_budgets:
        budgets.write(args.write_budgets)
    log.info("aggregated %d runs into %d lines", len(runs), len(ens.lines))
    return 0


def cmd_baseline(args) -> int:
    opts = _options(args, features=("CONF",))
    year = _load_year(args, need_corpus=False)
    roster = _roster_for(args, year, opts)
    cands = year_candidates(year, roster, opts)
    if args.kind == "union":
        chosen = union_ensemble(cands)
        run_id = "UNION"
    else:
        if args.oracle:
            if year.key is None:
                raise DataError("--oracle needs this year's key")
            k, curve = oracle_threshold(cands, year.key, args.mode)
            if args.curve:
                _write(args.curve, curve.to_csv().encode("utf-8"))
            print(f"# oracle threshold k={k}: chosen with test labels; an upper bound, not a deployable result")
        elif args.learn:
            train_year = _load_year(args, "train", need_corpus=False)
            if train_year is None or train_year.key is None:
                raise DataError("--learn needs a labeled --train-dir")
            k = learn_threshold(year_candidates(train_year, roster, opts), train_year.key, args.mode)
        elif args.k is not None:
            k = args.k
        else:
            raise UsageError("vote needs one of --k, --learn, --oracle")
        if not 1 <= k <= len(roster):
            raise UsageError(f"--k must lie in 1..{len(roster)}")
        if args.curve and not args.oracle and year.key is not None:
            _write(args.curve, pr_curve(cands, year.key, args.mode, len(roster)).to_csv().encode("utf-8"))
        chosen = voting_ensemble(cands, k)
        run_id = f"{'ORACLE_' if args.oracle else ''}VOTE_k{k}"
    lines = _selection_lines(chosen, run_id)
    _write(args.out, write_run_file(lines))
    if year.key is not None:
        rep = score(lines, year.key, args.mode, year.aliases)
        print(f"# {run_id}")
        print(rep.to_text(), end="")
    return 0


def cmd_postprocess(args) -> int:
    if args.links:
        merged = merge_nil_clusters(parse_links(Path(args.links)), exact_offsets=args.exact_offsets)
        _write(args.out, write_links(merged))
        return 0
    if not args.predictions:
        raise UsageError("postprocess needs --predictions (or --links)")
    opts = _options(args)
    year = _load_year(args, need_corpus=False)
    if year is None:
        raise UsageError("postprocess --predictions needs --dir or --runs")
    roster = _roster_for(args, year, opts)
    budgets = year.budgets if UNSUP_RUN_ID in roster else None
    cands = {c.key: c for c in year_candidates(year, roster, opts, budgets)}
    table = read_predictions(Path(args.predictions).read_text(encoding="utf-8"))
    preds = []
    for key, (prob, accepted) in table.items():
        if key not in cands:
            raise DataError(f"prediction for unknown candidate {key}")
        preds.append(Prediction(cands[key], prob, accepted))
    _write(args.out, write_run_file(finalize(preds, year, opts)))
    return 0


def cmd_score(args) -> int:
    key = parse_key(Path(args.key))
    aliases = load_alias_table(Path(args.alias_table)) if args.alias_table else None
    run = parse_run_lines(Path(args.run), strict=args.strict, fmt=args.fmt)
    rep = score(run, key, args.mode, aliases)
    text = rep.to_text()
    if args.compare:
        other = score(parse_run_lines(Path(args.compare), strict=args.strict, fmt=args.fmt), key, args.mode, aliases)
        text += format_deltas(compare_reports(rep, other))
    if args.out:
        _write(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    if args.csv:
        _write(args.csv, rep.to_csv().encode("utf-8"))
    return 0


def cmd_synth(args) -> int:
    cfg = _generator(args)
    out = Path(args.out)
    for b in generate(cfg):
        b.write(out / b.name)
    _write(out / "config.json", cfg.to_json().encode("utf-8"))
    log.info("wrote bundles %s under %s", cfg.years, out)
    return 0


def cmd_experiment(args) -> int:
    cfg = _generator(args)
    opts = _options(args)
    if args.seeds:
        rows = seed_sweep(cfg, _parse_seeds(args.seeds), {"stacking": opts})
        cols = ["seed", "stacking", "oracle_voting", "learned_voting", "union", "best_single"]
        text = ",".join(cols) + "\n" + "".join(
            ",".join(str(r["seed"]) if c == "seed" else f"{r[c]:.6f}" for c in cols) + "\n" for r in rows)
    else:
        curve = tuple(float(x) for x in args.learning_curve.split(",")) if args.learning_curve else ()
        rep = run_experiment(cfg, opts, learning_curve=curve, incremental=args.incremental)
        text = rep.to_csv()
        log.info("experiment finished in %.1f s", rep.seconds)
    if args.out:
        _write(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return 0


PIPELINE_ARTIFACTS = ("systems.txt", "train_features.tsv", "test_features.tsv", "model.json",
                      "predictions.tsv", "final_run.tsv", "score.txt", "score.csv")


def cmd_pipeline(args) -> int:
    opts = _options(args)
    data = Path(args.data)
    years = []
    for name in (args.train_year, args.test_year):
        if not (data / name).is_dir():
            raise DataError(f"no bundle directory {data / name}")
        years.append(YearData.load(data / name, strict=args.strict, fmt=args.fmt, jobs=args.jobs,
                                   need_corpus=_needs_corpus(opts)))
    train_year, test_year = years
    if train_year.key is None:
        raise DataError(f"training year {args.train_year} has no key.tsv")
    roster = _read_systems(args.systems) if args.systems else None
    res = run_pipeline(train_year, test_year, opts, roster)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_systems(out / "systems.txt", res.roster)
    _write(out / "train_features.tsv", write_features(res.train_vectors, res.layout))
    _write(out / "test_features.tsv", write_features(res.test_vectors, res.layout))
    _write(out / "model.json", res.model.to_json().encode("utf-8"))
    _write(out / "predictions.tsv", write_predictions(res.predictions))
    _write(out / "final_run.tsv", write_run_file(res.final_lines))
    if UNSUP_RUN_ID in res.roster:
        budgets = resolve_budgets(train_year, res.roster, opts)
        budgets.write(out / "budgets.tsv")
    if res.report is not None:
        _write(out / "score.txt", res.report.to_text().encode("utf-8"))
        _write(out / "score.csv", res.report.to_csv().encode("utf-8"))
        sys.stdout.write(res.report.to_text())
    digest = hashlib.sha256()
    for name in sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json"):
        digest.update(name.encode() + b"\0" + (out / name).read_bytes())
    _write(out / "manifest.json", (json.dumps({"sha256": digest.hexdigest(), "roster": res.roster,
                                               "layout": res.layout.to_json()}, indent=1, sort_keys=True)
                                   + "\n").encode("utf-8"))
    return 0


COMMANDS = {
    "validate": cmd_validate, "featurize": cmd_featurize, "train": cmd_train, "predict": cmd_predict,
    "aggregate": cmd_aggregate, "baseline": cmd_baseline, "postprocess": cmd_postprocess, "score": cmd_score,
    "synth": cmd_synth, "experiment": cmd_experiment, "pipeline": cmd_pipeline,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"slotstack {args.command}: {e}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, ValueError, KeyError) as e:
        print(f"slotstack {args.command}: data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
