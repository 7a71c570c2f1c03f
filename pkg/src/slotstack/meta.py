"""Stacked meta-classifier: featurization, L1-regularized linear training, prediction."""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .ingest import CorpusIndex
from .model import Candidate, DataError, Judgment, KeyEntry, Query, candidates_by_key
from .provenance import FILLER, RELATION, ProvenanceGroup, candidate_provenance_features
from .similarity import TfidfModel, cross_provenance_similarity, query_doc_similarity

log = logging.getLogger(__name__)

MODEL_FORMAT = "slotstack-linear/1"

PER_SYSTEM_GROUPS = ("CONF", "IND", "QSIM", "PSIM")
SCALAR_GROUPS = {"DPS": ("dps",), "OP": ("op",), "RELPROV": ("relprov_dps", "relprov_op")}
ALL_GROUPS = PER_SYSTEM_GROUPS + tuple(SCALAR_GROUPS) + ("REL",)


def parse_groups(spec: str | Iterable[str]) -> tuple[str, ...]:
    """Parse ``"conf,dps,op,rel"`` into canonical group order."""
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    wanted = {s.strip().upper() for s in items if s.strip()}
    unknown = wanted - set(ALL_GROUPS)
    if unknown:
        raise ValueError(f"unknown feature groups {sorted(unknown)}; choose from {ALL_GROUPS}")
    return tuple(g for g in ALL_GROUPS if g in wanted)


@dataclass(frozen=True)
class FeatureLayout:
    roster: tuple[str, ...]
    groups: tuple[str, ...]
    relations: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.roster:
            raise ValueError("feature layout needs a non-empty roster")
        if "REL" in self.groups and not self.relations:
            raise ValueError("REL group enabled without a relation vocabulary")

    @property
    def columns(self) -> list[str]:
        cols = []
        for g in self.groups:
            if g in PER_SYSTEM_GROUPS:
                cols += [f"{g.lower()}:{s}" for s in self.roster]
            elif g in SCALAR_GROUPS:
                cols += list(SCALAR_GROUPS[g])
        if "REL" in self.groups:
            cols += [f"rel:{r}" for r in self.relations]
        return cols

    @property
    def dimension(self) -> int:
        return len(self.columns)

    @property
    def feature_count(self) -> int:
        """Number of features when the relation name counts as one nominal feature."""
        return self.dimension - len(self.relations) + (1 if "REL" in self.groups else 0)

    def to_json(self) -> dict:
        return {"roster": list(self.roster), "groups": list(self.groups), "relations": list(self.relations)}

    @classmethod
    def from_json(cls, d: Mapping) -> "FeatureLayout":
        return cls(tuple(d["roster"]), tuple(d["groups"]), tuple(d.get("relations", ())))


@dataclass
class FeatureVector:
    values: np.ndarray
    candidate: Candidate
    label: Optional[bool] = None

    @property
    def key(self):
        return self.candidate.key


def featurize(candidates: Sequence[Candidate], layout: FeatureLayout, *,
              queries: Optional[Mapping[str, Query]] = None, index: Optional[CorpusIndex] = None,
              tfidf: Optional[TfidfModel] = None, training: bool = True,
              dps_reduce: str = "max", op_reduce: str = "mean") -> list[FeatureVector]:
    """Build one feature vector per candidate.

    Provenance scores for a candidate are computed against every response for
    its (query, slot) found among ``candidates``, so pass the full pool.
    """
    roster = set(layout.roster)
    for c in candidates:
        extra = set(c.responses) - roster
        if extra:
            raise DataError(f"candidate {c.key} has systems outside the roster: {sorted(extra)}")
    needs_sim = any(g in layout.groups for g in ("QSIM", "PSIM"))
    if needs_sim and tfidf is None:
        if index is None:
            raise ValueError("QSIM/PSIM features need a corpus index")
        tfidf = TfidfModel(index)
    rel_pos = {r: i for i, r in enumerate(layout.relations)}
    unknown_rel: Counter = Counter()
    out = []
    for (qid, slot), group in candidates_by_key(candidates).items():
        pool = [r for c in group for r in c.responses.values()]
        pgroups = {}
        if "DPS" in layout.groups or "OP" in layout.groups:
            pgroups[FILLER] = ProvenanceGroup.from_responses(pool, FILLER)
        if "RELPROV" in layout.groups:
            pgroups[RELATION] = ProvenanceGroup.from_responses(pool, RELATION)
        query = queries.get(qid) if queries is not None else None
        for c in group:
            parts = []
            for g in layout.groups:
                if g == "CONF":
                    parts.append([c.responses[s].confidence if s in c.responses else 0.0 for s in layout.roster])
                elif g == "IND":
                    parts.append([1.0 if s in c.responses else 0.0 for s in layout.roster])
                elif g == "QSIM":
                    sims = query_doc_similarity(c, query, tfidf, layout.roster)
                    parts.append([sims[s] for s in layout.roster])
                elif g == "PSIM":
                    sims = cross_provenance_similarity(c, tfidf, layout.roster)
                    parts.append([sims[s] for s in layout.roster])
            prov = {}
            if FILLER in pgroups:
                prov[FILLER] = candidate_provenance_features(c, pgroups[FILLER], FILLER, dps_reduce, op_reduce)
            if "DPS" in layout.groups:
                parts.append([prov[FILLER][0]])
            if "OP" in layout.groups:
                parts.append([prov[FILLER][1]])
            if "RELPROV" in layout.groups:
                parts.append(list(candidate_provenance_features(c, pgroups[RELATION], RELATION,
                                                                dps_reduce, op_reduce)))
            if "REL" in layout.groups:
                onehot = [0.0] * len(layout.relations)
                pos = rel_pos.get(slot)
                if pos is None:
                    if training:
                        raise DataError(f"slot {slot!r} not in relation vocabulary")
                    unknown_rel[slot] += 1
                else:
                    onehot[pos] = 1.0
                parts.append(onehot)
            values = np.array([v for p in parts for v in p], dtype=np.float64)
            if not np.all(np.isfinite(values)):
                raise DataError(f"non-finite feature for candidate {c.key}")
            out.append(FeatureVector(values, c, c.label))
    if unknown_rel:
        log.warning("slots outside relation vocabulary encoded as all-zero: %s", dict(unknown_rel))
    if tfidf is not None and tfidf.missing:
        log.warning("%d provenance lookups hit documents missing from the corpus", sum(tfidf.missing.values()))
    # candidates_by_key preserves input order within keys but groups keys; restore input order
    order = {c.key: i for i, c in enumerate(candidates)}
    out.sort(key=lambda v: order[v.key])
    return out


def label_candidates(candidates: Iterable[Candidate], key: Iterable[KeyEntry]) -> list[Candidate]:
    """Label each candidate True iff the key judges it CORRECT; unassessed ones are False."""
    judged = {e.key: e.judgment for e in key}
    out, missing = [], 0
    for c in candidates:
        j = judged.get(c.key)
        if j is None:
            missing += 1
        out.append(c.with_label(j is Judgment.CORRECT))
    if missing:
        log.warning("%d of %d candidates absent from the key were labeled incorrect", missing, len(out))
    return out


def stack(vectors: Sequence[FeatureVector], dimension: Optional[int] = None) -> tuple[np.ndarray, Optional[np.ndarray]]:
    if not vectors:
        return np.zeros((0, dimension or 0)), None
    X = np.vstack([v.values for v in vectors])
    labels = [v.label for v in vectors]
    y = None if any(l is None for l in labels) else np.array(labels, dtype=bool)
    return X, y


# --- model -------------------------------------------------------------------------

@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    lam: float
    layout: FeatureLayout
    loss: str = "logistic"
    mean: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    iterations: int = 0
    objective: float = float("nan")
    trace: list[float] = field(default_factory=list, repr=False)

    def decision(self, X: np.ndarray) -> np.ndarray:
        if self.mean is not None:
            X = (X - self.mean) / self.scale
        return X @ self.weights + self.bias

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "layout": self.layout.to_json(),
            "loss": self.loss,
            "lambda": self.lam,
            "bias": self.bias,
            "weights": [float(w) for w in self.weights],
            "standardize": None if self.mean is None else {
                "mean": [float(m) for m in self.mean], "scale": [float(s) for s in self.scale]},
            "optimizer": {"iterations": self.iterations, "objective": self.objective},
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LinearModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise DataError(f"unsupported model format {doc.get('format')!r}")
        layout = FeatureLayout.from_json(doc["layout"])
        w = np.array(doc["weights"], dtype=np.float64)
        if len(w) != layout.dimension:
            raise DataError("model weights do not match its layout")
        std = doc.get("standardize")
        return cls(w, float(doc["bias"]), float(doc["lambda"]), layout, doc.get("loss", "logistic"),
                   None if std is None else np.array(std["mean"]),
                   None if std is None else np.array(std["scale"]),
                   doc["optimizer"]["iterations"], doc["optimizer"]["objective"])


def _loss_and_grad(z, y, c, loss):
    """Weighted mean loss and its derivative w.r.t. the margin ``z``.

    ``y`` is in {-1, +1}; ``c`` are row multiplicities.
    """
    total = c.sum()
    if loss == "logistic":
        m = y * z
        val = np.dot(c, np.logaddexp(0.0, -m)) / total
        dz = -y * c * _sigmoid(-m) / total
    elif loss == "squared_hinge":
        h = np.maximum(0.0, 1.0 - y * z)
        val = np.dot(c, h * h) / total
        dz = -2.0 * y * c * h / total
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return val, dz


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    out[out == 0.0] = 0.0  # drop negative zeros
    return out


def _collapse(X, y):
    """Merge identical (row, label) pairs into unique rows with multiplicities.

    Multiplicities are divided by their gcd, so a dataset repeated k times
    collapses to exactly the same weighted problem.
    """
    joint = np.hstack([X, y[:, None].astype(np.float64)])
    uniq, counts = np.unique(joint, axis=0, return_counts=True)
    counts = counts // np.gcd.reduce(counts)
    return uniq[:, :-1], np.where(uniq[:, -1] > 0, 1.0, -1.0), counts.astype(np.float64)


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which all weights are zero (bias free, logistic loss)."""
    Xu, yy, c = _collapse(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=bool))
    p = np.dot(c, yy > 0) / c.sum()
    grad = Xu.T @ (c * (p - (yy > 0))) / c.sum()
    return float(np.max(np.abs(grad))) if grad.size else 0.0


def train(vectors: Sequence[FeatureVector] | tuple[np.ndarray, np.ndarray], layout: Optional[FeatureLayout] = None,
          lam: float = 0.01, *, loss: str = "logistic", standardize: bool = False,
          max_iter: int = 5000, tol: float = 1e-8) -> LinearModel:
    """Fit an L1-regularized linear classifier by proximal gradient descent.

    Minimizes mean loss + lam * ||w||_1 with an unpenalized bias.  Weights
    start at zero and the bias at the intercept-only optimum; each step uses
    backtracking on the step size, so the objective never increases.
    Identical rows are merged into weighted rows first, which makes the fit
    bitwise invariant to duplicating the dataset.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if isinstance(vectors, tuple):
        X, y = vectors
    else:
        for v in vectors:
            if v.label is None:
                raise ValueError(f"candidate {v.key} is unlabeled")
        X, y = stack(vectors)
    if layout is None:
        raise ValueError("train needs the feature layout")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    if X.shape[1] != layout.dimension:
        raise DataError(f"feature dimension {X.shape[1]} != layout dimension {layout.dimension}")
    if not np.all(np.isfinite(X)):
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0]
        who = vectors[bad].key if not isinstance(vectors, tuple) else f"row {bad}"
        raise DataError(f"non-finite feature for candidate {who}")
    if y.all() or not y.any():
        raise DataError("training labels must contain both classes")

    mean = scale = None
    if standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - mean) / scale

    Xu, yy, c = _collapse(X, y)
    d = Xu.shape[1]
    w = np.zeros(d)
    p = np.dot(c, yy > 0) / c.sum()
    b = math.log(p / (1.0 - p)) if loss == "logistic" else 2.0 * p - 1.0

    def smooth(w, b):
        val, dz = _loss_and_grad(Xu @ w + b, yy, c, loss)
        return val, dz

    f, dz = smooth(w, b)
    obj = f + lam * np.abs(w).sum()
    trace = [obj]
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gw, gb = Xu.T @ dz, dz.sum()
        step = min(step * 2.0, 1e6)
        while True:
            w_new = soft_threshold(w - step * gw, step * lam)
            b_new = b - step * gb
            f_new, dz_new = smooth(w_new, b_new)
            dw, db = w_new - w, b_new - b
            quad = f + gw @ dw + gb * db + (dw @ dw + db * db) / (2.0 * step)
            if f_new <= quad + 1e-15 * abs(f) or step < 1e-12:
                break
            step *= 0.5
        obj_new = f_new + lam * np.abs(w_new).sum()
        if obj_new > obj:
            # numerical noise at convergence; keep the previous iterate
            break
        decrease = (obj - obj_new) / max(abs(obj), 1e-300)
        w, b, f, dz, obj = w_new, b_new, f_new, dz_new, obj_new
        trace.append(obj)
        if decrease < tol:
            break
    return LinearModel(w, float(b), lam, layout, loss, mean, scale, it, float(obj), trace)


class Prediction(NamedTuple):
    candidate: Candidate
    probability: float
    accepted: bool


def predict(model: LinearModel, vectors: Sequence[FeatureVector], threshold: float = 0.5,
            layout: Optional[FeatureLayout] = None) -> list[Prediction]:
    if layout is not None and layout != model.layout:
        raise DataError("feature layout does not match the model")
    if not vectors:
        return []
    X, _ = stack(vectors)
    if X.shape[1] != model.layout.dimension:
        raise DataError(f"feature dimension {X.shape[1]} != model dimension {model.layout.dimension}")
    probs = _sigmoid(model.decision(X))
    return [Prediction(v.candidate, float(p), bool(p >= threshold)) for v, p in zip(vectors, probs)]


def f1_at(y_true: np.ndarray, accepted: np.ndarray) -> float:
    tp = np.sum(y_true & accepted)
    if tp == 0:
        return 0.0
    p, r = tp / accepted.sum(), tp / y_true.sum()
    return float(2 * p * r / (p + r))


def tune_lambda(vectors: Sequence[FeatureVector], layout: FeatureLayout,
                grid: Sequence[float] = (1.0, 0.1, 0.01, 0.001), *, seed: int = 0,
                holdout: float = 0.2, **kw) -> float:
    """Pick the penalty with the best held-out candidate F1 (split by query)."""
    qids = sorted({v.candidate.query_id for v in vectors})
    rng = np.random.default_rng(seed)
    held = set(rng.choice(qids, size=max(1, int(round(holdout * len(qids)))), replace=False).tolist())
    tr = [v for v in vectors if v.candidate.query_id not in held]
    te = [v for v in vectors if v.candidate.query_id in held]
    y_te = np.array([bool(v.label) for v in te])
    best, best_f1 = grid[0], -1.0
    for lam in grid:
        try:
            m = train(tr, layout, lam, **kw)
        except DataError:
            continue
        acc = np.array([p.accepted for p in predict(m, te)])
        f1 = f1_at(y_te, acc)
        log.info("lambda %g: held-out F1 %.4f", lam, f1)
        if f1 > best_f1:
            best, best_f1 = lam, f1
    return best


# --- feature / prediction files -------------------------------------------------

def write_features(vectors: Sequence[FeatureVector], layout: FeatureLayout) -> bytes:
    """Tab-separated feature table; the first line carries the layout as JSON."""
    with_label = all(v.label is not None for v in vectors) and bool(vectors)
    head = ["query_id", "slot", "fill_norm"] + (["label"] if with_label else []) + layout.columns
    rows = ["#layout\t" + json.dumps(layout.to_json(), sort_keys=True), "\t".join(head)]
    for v in vectors:
        cells = list(v.key) + ([str(int(v.label))] if with_label else [])
        cells += [repr(float(x)) for x in v.values]
        rows.append("\t".join(cells))
    return ("\n".join(rows) + "\n").encode("utf-8")


def read_features(text: str) -> tuple[FeatureLayout, list[FeatureVector]]:
    """Inverse of ``write_features``.

    Vectors come back with bare candidates (key and label only, no responses),
    which is all training and prediction need.
    """
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("#layout\t"):
        raise DataError("feature file must start with a #layout line and a header")
    try:
        layout = FeatureLayout.from_json(json.loads(lines[0].split("\t", 1)[1]))
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"bad feature layout: {e}") from None
    head = lines[1].split("\t")
    if head[:3] != ["query_id", "slot", "fill_norm"]:
        raise DataError("feature file header must start with query_id, slot, fill_norm")
    has_label = len(head) > 3 and head[3] == "label"
    first = 4 if has_label else 3
    if head[first:] != layout.columns:
        raise DataError("feature columns do not match the layout line")
    out = []
    for n, line in enumerate(lines[2:], 3):
        cells = line.split("\t")
        if len(cells) != len(head):
            raise DataError(f"feature line {n}: expected {len(head)} cells")
        try:
            label = bool(int(cells[3])) if has_label else None
            values = np.array([float(x) for x in cells[first:]], dtype=np.float64)
        except ValueError as e:
            raise DataError(f"feature line {n}: {e}") from None
        out.append(FeatureVector(values, Candidate(cells[0], cells[1], cells[2], {}, label), label))
    return layout, out


def write_predictions(preds: Sequence[Prediction]) -> bytes:
    rows = ["query_id\tslot\tfill_norm\tprobability\taccepted"]
    for p in preds:
        rows.append("\t".join(list(p.candidate.key) + [repr(p.probability), str(int(p.accepted))]))
    return ("\n".join(rows) + "\n").encode("utf-8")


def read_predictions(text: str) -> dict[tuple[str, str, str], tuple[float, bool]]:
    out = {}
    for n, line in enumerate(text.splitlines()[1:], 2):
        cells = line.split("\t")
        if len(cells) != 5:
            raise DataError(f"prediction line {n}: expected 5 cells")
        out[tuple(cells[:3])] = (float(cells[3]), cells[4] == "1")
    return out
