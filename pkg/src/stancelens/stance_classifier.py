"""Bag-of-accounts linear classifier that expands the two stance clusters.

A user is the multiset of accounts they retweeted. The model averages one
learned vector per account and applies a linear softmax over the two
stances, trained by SGD with a linearly decaying learning rate.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from .clustering import ClusterAssignment
from .user_model import UserVector

MODEL_MAGIC = b"SLBM"
MODEL_VERSION = 1


@dataclass
class StanceParams:
    dim: int = 10
    lr: float = 0.1
    epochs: int = 5
    min_accounts: int = 5
    threshold: float = 0.8
    distinct_accounts: bool = True


@dataclass
class StanceModel:
    vocabulary: dict[str, int]
    embeddings: np.ndarray  # (V, d)
    output: np.ndarray  # (d, 2)
    bias: np.ndarray  # (2,)
    meta: str = ""

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def token_ids(self, user: UserVector) -> np.ndarray:
        ids = [self.vocabulary[a] for a in user.tokens() if a in self.vocabulary]
        return np.asarray(ids, dtype=np.int64)

    def proba(self, user: UserVector) -> np.ndarray:
        tok = self.token_ids(user)
        if tok.size == 0:
            return np.array([0.5, 0.5])
        return _softmax(self.embeddings[tok].mean(axis=0) @ self.output + self.bias)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def train(
    vectors: Mapping[str, UserVector],
    labels: Mapping[str, int],
    dim: int = 10,
    lr: float = 0.1,
    epochs: int = 5,
    seed: int = 0,
) -> StanceModel:
    users = sorted(u for u in labels if u in vectors and vectors[u].counts)
    y = np.array([labels[u] for u in users], dtype=np.int64)
    if set(np.unique(y)) - {0, 1}:
        raise ValueError("labels must be 0 or 1")
    if np.bincount(y, minlength=2).min() < 2:
        raise ValueError("training needs at least two users of each class")

    vocab_list = sorted({a for u in users for a in vectors[u].counts})
    vocab = {a: i for i, a in enumerate(vocab_list)}
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-1.0 / dim, 1.0 / dim, size=(len(vocab), dim))
    out = np.zeros((dim, 2))
    bias = np.zeros(2)
    tokens = [np.array([vocab[a] for a in vectors[u].tokens()], dtype=np.int64) for u in users]
    onehot = np.eye(2)

    total = epochs * len(users)
    step = 0
    for _ in range(epochs):
        for idx in rng.permutation(len(users)):
            rate = lr * (1.0 - step / total)
            step += 1
            tok = tokens[idx]
            hidden = emb[tok].mean(axis=0)
            grad = _softmax(hidden @ out + bias) - onehot[y[idx]]
            grad_hidden = out @ grad
            out -= rate * np.outer(hidden, grad)
            bias -= rate * grad
            np.add.at(emb, tok, -rate * grad_hidden / len(tok))
    return StanceModel(vocab, emb, out, bias)


def predict(model: StanceModel, user: UserVector) -> tuple[int, float]:
    """(label, confidence); an all-unknown user gets (0, 0.5)."""
    p = model.proba(user)
    label = int(np.argmax(p))
    return label, float(p[label])


def expand(
    model: StanceModel,
    vectors: Mapping[str, UserVector],
    assignment: ClusterAssignment,
    min_accounts: int = 5,
    threshold: float = 0.8,
    distinct_accounts: bool = True,
) -> ClusterAssignment:
    """Label every not-yet-labeled user that is active enough and confidently classified.

    Acceptance needs at least ``min_accounts`` retweeted accounts (distinct
    ones unless ``distinct_accounts`` is false) and confidence strictly above
    ``threshold``. Existing labels are never changed.
    """
    stance = dict(assignment.stance)
    provenance = dict(assignment.provenance)
    for uid in sorted(vectors):
        if uid in stance:
            continue
        vec = vectors[uid]
        activity = vec.n_accounts if distinct_accounts else sum(vec.counts.values())
        if activity < min_accounts:
            continue
        label, conf = predict(model, vec)
        if conf > threshold:
            stance[uid] = label
            provenance[uid] = "expanded"
    return ClusterAssignment(
        assignment.topic, dict(assignment.labels), assignment.c0, assignment.c1,
        assignment.sign, stance, provenance,
    )


def accuracy_on(model: StanceModel, vectors: Mapping[str, UserVector], labels: Mapping[str, int]) -> float:
    users = sorted(labels)
    if not users:
        raise ValueError("no users to evaluate")
    hits = sum(predict(model, vectors[u])[0] == labels[u] for u in users)
    return hits / len(users)


def holdout_eval(
    vectors: Mapping[str, UserVector],
    labels: Mapping[str, int],
    split: float = 0.8,
    seed: int = 0,
    max_attempts: int = 10,
    **hyper,
) -> float:
    """Train on a random ``split`` fraction of labeled users, report accuracy on the rest.

    A split that leaves either side without both classes is redrawn with the
    next seed, at most ``max_attempts`` times.
    """
    users = sorted(u for u in labels if u in vectors)
    n_train = int(round(split * len(users)))
    for attempt in range(max_attempts):
        perm = np.random.default_rng(seed + attempt).permutation(len(users))
        train_ids = [users[i] for i in perm[:n_train]]
        test_ids = [users[i] for i in perm[n_train:]]
        if {labels[u] for u in train_ids} == {0, 1} == {labels[u] for u in test_ids}:
            model = train(vectors, {u: labels[u] for u in train_ids}, seed=seed, **hyper)
            return accuracy_on(model, vectors, {u: labels[u] for u in test_ids})
    raise ValueError(f"could not draw a split with both classes in {max_attempts} attempts")


# -- binary model file --------------------------------------------------------
#
# little-endian layout:
#   magic "SLBM" | u32 version | u32 meta_len | meta utf-8
#   u32 V | u32 d | u32 n_classes
#   V x (u32 len | utf-8 account id)          vocabulary in index order
#   f32[V*d] embeddings | f32[d*n_classes] output | f32[n_classes] bias   (row-major)


def save_model(model: StanceModel, fh: BinaryIO) -> None:
    meta = model.meta.encode("utf-8")
    n_classes = model.output.shape[1]
    fh.write(MODEL_MAGIC)
    fh.write(struct.pack("<II", MODEL_VERSION, len(meta)))
    fh.write(meta)
    fh.write(struct.pack("<III", len(model.vocabulary), model.dim, n_classes))
    for acc in sorted(model.vocabulary, key=model.vocabulary.__getitem__):
        raw = acc.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
    for arr in (model.embeddings, model.output, model.bias):
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(fh: BinaryIO) -> StanceModel:
    if fh.read(4) != MODEL_MAGIC:
        raise ValueError("not a stance model file")
    version, meta_len = struct.unpack("<II", fh.read(8))
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    meta = fh.read(meta_len).decode("utf-8")
    n_vocab, dim, n_classes = struct.unpack("<III", fh.read(12))
    vocab = {}
    for i in range(n_vocab):
        (length,) = struct.unpack("<I", fh.read(4))
        vocab[fh.read(length).decode("utf-8")] = i

    def block(count: int, shape: tuple[int, ...]) -> np.ndarray:
        return np.frombuffer(fh.read(4 * count), dtype="<f4").astype(np.float64).reshape(shape)

    emb = block(n_vocab * dim, (n_vocab, dim))
    out = block(dim * n_classes, (dim, n_classes))
    bias = block(n_classes, (n_classes,))
    return StanceModel(vocab, emb, out, bias, meta)


def save_model_file(model: StanceModel, path: str | Path) -> None:
    with open(path, "wb") as fh:
        save_model(model, fh)


def load_model_file(path: str | Path) -> StanceModel:
    with open(path, "rb") as fh:
        return load_model(fh)
