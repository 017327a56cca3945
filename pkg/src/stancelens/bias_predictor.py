"""Media-bias classification from valence, graph and external text features."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from sklearn.model_selection import StratifiedKFold

from .ingest import extract_domain
from .valence import CATEGORIES

CLASSES = ("left", "center", "right")
ORDER = {c: i for i, c in enumerate(CLASSES)}
GOLD_LABELS = ("extreme-left", "left", "left-center", "center", "right-center", "right", "extreme-right")
_MERGE = {
    "extreme-left": "left", "left": "left", "center": "center",
    "right": "right", "extreme-right": "right",
    "left-center": None, "right-center": None,
}
_ALIASES = {"far-left": "extreme-left", "far-right": "extreme-right", "least-biased": "center",
            "centre": "center", "left-centre": "left-center", "right-centre": "right-center"}


class ConvergenceError(RuntimeError):
    pass


def normalize_gold(label: str) -> str:
    key = "-".join(label.strip().lower().replace("_", " ").split())
    key = _ALIASES.get(key, key)
    if key not in _MERGE:
        raise ValueError(f"unknown bias label {label!r}")
    return key


def merge_labels(label: str) -> str | None:
    """Collapse gold labels to left/center/right; the *-center labels map to ``None``."""
    return _MERGE[normalize_gold(label)]


@dataclass(frozen=True)
class MediaRecord:
    domain: str
    bias: str
    factuality: str = ""


def read_gold_tsv(lines: Iterable[str]) -> dict[str, MediaRecord]:
    """Rows of ``domain<TAB>bias<TAB>factuality``; a ``domain`` header row is skipped."""
    out = {}
    for line in lines:
        if line.startswith("#") or not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if parts[0] == "domain":
            continue
        domain = extract_domain(parts[0])
        out[domain] = MediaRecord(domain, normalize_gold(parts[1]), parts[2] if len(parts) > 2 else "")
    return out


# -- features ---------------------------------------------------------------


@dataclass
class FeatureBlock:
    """Named per-medium feature columns; media missing from ``rows`` lack the block."""

    name: str
    columns: list[str]
    rows: dict[str, np.ndarray]

    def has(self, domain: str) -> bool:
        return domain in self.rows


def valence_block(scores: Mapping[str, Mapping[str, float]], topics: Sequence[str]) -> FeatureBlock:
    """One value plus one presence bit per topic; an unscored topic is (0, 0)."""
    columns = [f"valence:{t}" for t in topics] + [f"present:{t}" for t in topics]
    rows = {}
    for dom, per_topic in scores.items():
        vals = [float(per_topic.get(t, 0.0)) for t in topics]
        bits = [1.0 if t in per_topic else 0.0 for t in topics]
        rows[dom] = np.array(vals + bits)
    return FeatureBlock("valence", columns, rows)


def vector_block(name: str, vectors: Mapping[str, np.ndarray]) -> FeatureBlock:
    dim = len(next(iter(vectors.values()))) if vectors else 0
    return FeatureBlock(name, [f"{name}:{i}" for i in range(dim)], {k: np.asarray(v, float) for k, v in vectors.items()})


def assemble(blocks: Sequence[FeatureBlock], domains: Sequence[str]) -> tuple[np.ndarray, list[str], list[str]]:
    """Stack the blocks for the media that have all of them.

    Returns (matrix, kept domains, column layout).
    """
    kept = [d for d in domains if all(b.has(d) for b in blocks)]
    layout = [c for b in blocks for c in b.columns]
    if not kept:
        return np.zeros((0, len(layout))), kept, layout
    mat = np.vstack([np.concatenate([b.rows[d] for b in blocks]) for d in kept])
    return mat, kept, layout


# -- model ------------------------------------------------------------------


@dataclass
class BiasModel:
    classes: tuple[str, ...]
    weights: np.ndarray  # (n_features, n_classes)
    intercept: np.ndarray  # (n_classes,)
    C: float
    mean: np.ndarray
    scale: np.ndarray
    layout: list[str] = field(default_factory=list)
    grad_norm: float = 0.0

    def decision(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, float) - self.mean) / self.scale
        return Z @ self.weights + self.intercept

    def proba(self, X: np.ndarray) -> np.ndarray:
        logits = self.decision(X)
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)


def _objective(params: np.ndarray, X: np.ndarray, Y: np.ndarray, C: float):
    n_feat, n_cls = X.shape[1], Y.shape[1]
    W = params[: n_feat * n_cls].reshape(n_feat, n_cls)
    b = params[n_feat * n_cls:]
    logits = X @ W + b
    shift = logits.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    loss = float(np.sum(lse - (logits * Y).sum(axis=1)) + 0.5 / C * np.sum(W * W))
    P = np.exp(logits - lse[:, None])
    G = P - Y
    grad_W = X.T @ G + W / C
    grad_b = G.sum(axis=0)
    return loss, np.concatenate([grad_W.ravel(), grad_b])


def train(
    X: np.ndarray,
    labels: Sequence[str],
    C: float = 0.1,
    classes: Sequence[str] = CLASSES,
    layout: Sequence[str] = (),
    max_iter: int = 5000,
    tol: float = 1e-5,
) -> BiasModel:
    """Multinomial logistic regression: cross-entropy + ||W||^2 / (2C), intercept unpenalized.

    Features are z-normalized with this training set's statistics. Raises
    :class:`ConvergenceError` if the gradient norm stays above ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if len(set(labels)) < 2:
        raise ValueError("need at least two classes")
    classes = tuple(classes)
    y = np.array([classes.index(lab) for lab in labels])
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    Y = np.eye(len(classes))[y]
    n_params = Z.shape[1] * len(classes) + len(classes)
    res = minimize(_objective, np.zeros(n_params), args=(Z, Y, C), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": tol * 1e-2, "ftol": 0.0, "maxcor": 30})
    _, grad = _objective(res.x, Z, Y, C)
    gnorm = float(np.linalg.norm(grad))
    if gnorm > tol:
        res = minimize(_objective, res.x, args=(Z, Y, C), jac=True, method="BFGS",
                       options={"maxiter": max_iter, "gtol": tol * 1e-2})
        _, grad = _objective(res.x, Z, Y, C)
        gnorm = float(np.linalg.norm(grad))
    if gnorm > tol:
        raise ConvergenceError(f"logistic regression did not converge: |grad|={gnorm:.3g}, "
                               f"{res.nit} iterations, status={res.message}")
    n_feat = Z.shape[1]
    W = res.x[: n_feat * len(classes)].reshape(n_feat, len(classes))
    return BiasModel(classes, W, res.x[n_feat * len(classes):], C, mean, scale, list(layout), gnorm)


def predict(model: BiasModel, X: np.ndarray) -> tuple[list[str], np.ndarray]:
    proba = model.proba(np.atleast_2d(X))
    return [model.classes[i] for i in proba.argmax(axis=1)], proba


def accuracy(preds: Sequence[str], gold: Sequence[str]) -> float:
    if len(preds) != len(gold) or not gold:
        raise ValueError("need equally long, non-empty prediction and gold lists")
    return sum(p == g for p, g in zip(preds, gold)) / len(gold)


def mae(preds: Sequence[str], gold: Sequence[str]) -> float:
    """Mean ordinal error with left=0, center=1, right=2."""
    if len(preds) != len(gold) or not gold:
        raise ValueError("need equally long, non-empty prediction and gold lists")
    return sum(abs(ORDER[p] - ORDER[g]) for p, g in zip(preds, gold)) / len(gold)


def unsupervised_leaning(score: float) -> str:
    """Average valence to leaning; positive valence is the left pole."""
    if score > 0.2:
        return "left"
    if score < -0.2:
        return "right"
    return "center"


# -- evaluation -----------------------------------------------------------------


@dataclass
class EvalRow:
    name: str
    n_media: int
    accuracy: float
    mae: float


def cross_validate(
    X: np.ndarray, labels: Sequence[str], folds: int = 5, seed: int = 0, C: float = 0.1,
) -> tuple[float, float]:
    """Stratified k-fold mean accuracy and MAE."""
    labels = list(labels)
    splitter = StratifiedKFold(n_splits=_n_folds(labels, folds), shuffle=True, random_state=seed)
    accs, maes = [], []
    for tr, te in splitter.split(X, labels):
        model = train(X[tr], [labels[i] for i in tr], C=C)
        preds, _ = predict(model, X[te])
        gold = [labels[i] for i in te]
        accs.append(accuracy(preds, gold))
        maes.append(mae(preds, gold))
    return float(np.mean(accs)), float(np.mean(maes))


def _n_folds(labels: Sequence[str], folds: int) -> int:
    smallest = min(labels.count(c) for c in set(labels))
    k = min(folds, smallest)
    if k < 2:
        raise ValueError("every class needs at least two media for cross-validation")
    return k


def baseline_scores(
    labels: Sequence[str], folds: int, seed: int, average: Sequence[float] | None = None,
) -> list[EvalRow]:
    labels = list(labels)
    splitter = StratifiedKFold(n_splits=_n_folds(labels, folds), shuffle=True, random_state=seed)
    maj_acc, maj_mae, avg_acc, avg_mae = [], [], [], []
    dummy = np.zeros((len(labels), 1))
    for tr, te in splitter.split(dummy, labels):
        train_labels = [labels[i] for i in tr]
        majority = max(CLASSES, key=lambda c: (train_labels.count(c), -ORDER[c]))
        gold = [labels[i] for i in te]
        maj_acc.append(accuracy([majority] * len(gold), gold))
        maj_mae.append(mae([majority] * len(gold), gold))
        if average is not None:
            preds = [unsupervised_leaning(average[i]) for i in te]
            avg_acc.append(accuracy(preds, gold))
            avg_mae.append(mae(preds, gold))
    rows = [EvalRow("majority class", len(labels), float(np.mean(maj_acc)), float(np.mean(maj_mae)))]
    if average is not None:
        rows.append(EvalRow("average valence", len(labels), float(np.mean(avg_acc)), float(np.mean(avg_mae))))
    return rows


def evaluate(
    blocks: Mapping[str, FeatureBlock],
    gold: Mapping[str, str],
    folds: int = 5,
    seed: int = 0,
    C: float = 0.1,
    average_valence: Mapping[str, float] | None = None,
) -> list[EvalRow]:
    """Cross-validated accuracy/MAE for every combination of the available blocks.

    ``gold`` maps domain -> merged label (left/center/right). Each row uses
    the labeled media that have every block in its combination. Baselines
    (majority class, thresholded average valence) run on media with valence.
    """
    domains = sorted(gold)
    rows: list[EvalRow] = []
    if "valence" in blocks:
        base = [d for d in domains if blocks["valence"].has(d)]
        avg = [average_valence.get(d, 0.0) for d in base] if average_valence is not None else None
        if base:
            rows.extend(baseline_scores([gold[d] for d in base], folds, seed, avg))
    names = sorted(blocks, key=lambda n: (n != "valence", n))
    for r in range(1, len(names) + 1):
        for combo in itertools.combinations(names, r):
            X, kept, _ = assemble([blocks[n] for n in combo], domains)
            labels = [gold[d] for d in kept]
            if len(set(labels)) < 2:
                continue
            try:
                acc, err = cross_validate(X, labels, folds, seed, C)
            except ValueError:
                continue
            rows.append(EvalRow("+".join(combo), len(kept), acc, err))
    return rows


def write_report_tsv(rows: Sequence[EvalRow], fh: IO[str]) -> None:
    fh.write("features\tn_media\taccuracy\tmae\n")
    for r in rows:
        fh.write(f"{r.name}\t{r.n_media}\t{r.accuracy:.6f}\t{r.mae:.6f}\n")


def confusion_table(categories: Mapping[str, str], gold: Mapping[str, str]) -> np.ndarray:
    """5 x 7 counts of (valence category, gold bias) over media present in both."""
    mat = np.zeros((len(CATEGORIES), len(GOLD_LABELS)), dtype=np.int64)
    for dom, cat in categories.items():
        if dom in gold:
            mat[CATEGORIES.index(cat), GOLD_LABELS.index(normalize_gold(gold[dom]))] += 1
    return mat


def write_confusion_tsv(mat: np.ndarray, fh: IO[str]) -> None:
    fh.write("category\t" + "\t".join(GOLD_LABELS) + "\n")
    for cat, row in zip(CATEGORIES, mat):
        fh.write(cat + "\t" + "\t".join(str(int(v)) for v in row) + "\n")
