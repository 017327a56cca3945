"""Per-topic and cross-topic pipeline with resumable, hash-stamped stage outputs.

Each topic runs ingest -> vectors -> projection -> cluster -> expand ->
valence into ``<output_dir>/topics/<name>/``; the aggregate step aligns
signs across topics, averages valence, embeds the user-hashtag and
user-mention graphs, and evaluates the bias classifier into
``<output_dir>/aggregate/``. Every text output starts with a header line
carrying the tool version, a hash of everything the stage depends on, and
the seed; ``resume`` skips a stage whose outputs already carry the current
hash.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from . import __version__
from . import bias_predictor, clustering, graph_embeddings, ingest, projection
from . import stance_classifier, user_model, valence
from .config import ConfigError, load_toml

logger = logging.getLogger(__name__)

TOPIC_STAGES = ("ingest", "vectors", "projection", "cluster", "expand", "valence")
AGGREGATE_STAGES = ("align", "embed", "bias")


class StageError(RuntimeError):
    def __init__(self, where: str, stage: str, message: str) -> None:
        super().__init__(f"[{where}/{stage}] {message}")
        self.where = where
        self.stage = stage


# -- configuration ----------------------------------------------------------------


@dataclass
class UserModelParams:
    top_n: int = 1000
    by: str = "posts"
    cap: int = user_model.DEFAULT_MATRIX_CAP


@dataclass
class ClusterParams:
    quantile: float = 0.3
    bandwidth: float | None = None


@dataclass
class ValenceParams:
    min_citations: int = 10


@dataclass
class BiasParams:
    folds: int = 5
    C: float = 0.1


_SECTIONS = {
    "user_model": UserModelParams,
    "projection": projection.LayoutParams,
    "clustering": ClusterParams,
    "stance": stance_classifier.StanceParams,
    "valence": ValenceParams,
    "embeddings": graph_embeddings.Node2VecParams,
    "bias": BiasParams,
}
_STAGE_SECTIONS = {
    "ingest": (), "vectors": ("user_model",), "projection": ("projection",),
    "cluster": ("clustering",), "expand": ("stance",), "valence": ("valence",),
}
_TOP_KEYS = {"seed", "inputs", "topics", "gazetteer", "anchors", "gold", "external_vectors",
             "output_dir", *_SECTIONS}


@dataclass
class PipelineConfig:
    inputs: list[Path]
    topics: list[ingest.TopicConfig]
    output_dir: Path
    seed: int = 0
    gazetteer: Path | None = None
    anchors: Path | None = None
    gold: Path | None = None
    external_vectors: Path | None = None
    sections: dict[str, Any] = field(default_factory=dict)

    def section(self, name: str):
        return self.sections[name]

    def topic(self, name: str) -> ingest.TopicConfig:
        for t in self.topics:
            if t.name == name:
                return t
        raise ConfigError(f"unknown topic {name!r}")

    def gazetteer_obj(self) -> ingest.Gazetteer:
        return ingest.Gazetteer.from_file(self.gazetteer) if self.gazetteer else ingest.Gazetteer.default()


def _section(name: str, data: Any):
    cls = _SECTIONS[name]
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Read and validate a pipeline TOML file; relative paths resolve against its directory.

    ``overrides`` (seed, inputs, topics, gazetteer, output_dir) replace file
    values and are resolved against the working directory. Raises
    :class:`ConfigError` on any problem, before work starts.
    """
    path = Path(path)
    data = load_toml(path)
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    base = path.parent
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    def resolve(key: str, required: bool = False) -> Path | None:
        if key in overrides:
            p = Path(overrides[key])
        elif key in data:
            p = base / data[key]
        elif required:
            raise ConfigError(f"missing required key {key!r}")
        else:
            return None
        if key != "output_dir" and not p.exists():
            raise ConfigError(f"{key}: path does not exist: {p}")
        return p

    def resolve_list(key: str) -> list[Path]:
        if key in overrides:
            items = [Path(x) for x in overrides[key]]
        elif key in data:
            if not isinstance(data[key], list) or not data[key]:
                raise ConfigError(f"{key!r} must be a non-empty list")
            items = [base / x for x in data[key]]
        else:
            raise ConfigError(f"missing required key {key!r}")
        for p in items:
            if not p.exists():
                raise ConfigError(f"{key}: path does not exist: {p}")
        return items

    inputs = resolve_list("inputs")
    topics = []
    for tpath in resolve_list("topics"):
        try:
            topics.append(ingest.TopicConfig.from_file(tpath))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"topic file {tpath}: {exc}") from exc
    names = [t.name for t in topics]
    if len(set(names)) != len(names):
        raise ConfigError("topic names must be unique")
    seed = overrides.get("seed", data.get("seed", 0))
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    sections = {name: _section(name, data.get(name, {})) for name in _SECTIONS}
    cfg = PipelineConfig(
        inputs=inputs, topics=topics, output_dir=resolve("output_dir", required=True), seed=seed,
        gazetteer=resolve("gazetteer"), anchors=resolve("anchors"), gold=resolve("gold"),
        external_vectors=resolve("external_vectors"), sections=sections,
    )
    if cfg.gazetteer is not None:
        try:
            cfg.gazetteer_obj()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"gazetteer {cfg.gazetteer}: {exc}") from exc
    return cfg


# -- hashing and headers --------------------------------------------------------


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


class Hasher:
    """Stage hashes: each covers the inputs plus every setting up to that stage."""

    def __init__(self, cfg: PipelineConfig) -> None:
        self.cfg = cfg
        self.inputs = [_file_digest(p) for p in cfg.inputs]
        self.gazetteer = _file_digest(cfg.gazetteer) if cfg.gazetteer else None

    def topic_stage(self, topic: ingest.TopicConfig, stage: str) -> str:
        upto = TOPIC_STAGES[: TOPIC_STAGES.index(stage) + 1]
        parts = {
            "version": __version__, "seed": self.cfg.seed, "inputs": self.inputs,
            "gazetteer": self.gazetteer,
            "topic": [topic.name, list(topic.keywords), str(topic.date_start), str(topic.date_end), topic.us_only],
            "sections": {s: dataclasses.asdict(self.cfg.section(s)) for st in upto for s in _STAGE_SECTIONS[st]},
        }
        return _digest(parts)

    def aggregate_stage(self, stage: str) -> str:
        cfg = self.cfg
        parts: dict[str, Any] = {
            "topics": [self.topic_stage(t, "valence") for t in cfg.topics],
            "anchors": _file_digest(cfg.anchors) if cfg.anchors else None,
        }
        if stage in ("embed", "bias"):
            parts["embeddings"] = dataclasses.asdict(cfg.section("embeddings"))
        if stage == "bias":
            parts["bias"] = dataclasses.asdict(cfg.section("bias"))
            parts["gold"] = _file_digest(cfg.gold) if cfg.gold else None
            parts["external"] = _file_digest(cfg.external_vectors) if cfg.external_vectors else None
        return _digest(parts)


def header(stage: str, config_hash: str, seed: int) -> str:
    return f"stancelens {__version__} stage={stage} config_hash={config_hash} seed={seed}"


def _write_text(path: Path, head: str, stats: dict[str, Any], body: Callable) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {head}\n")
        for key in sorted(stats):
            fh.write(f"# {key}={stats[key]}\n")
        body(fh)
    os.replace(tmp, path)


def _read_head(path: Path) -> tuple[str | None, dict[str, str]]:
    """(header, stats) of a stage output, or (None, {}) if missing or foreign."""
    if not path.is_file():
        return None, {}
    if path.suffix == ".bin":
        try:
            return stance_classifier.load_model_file(path).meta, {}
        except (ValueError, OSError, UnicodeDecodeError):
            return None, {}
    head, stats = None, {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            if not line.startswith("# "):
                break
            if n == 0:
                head = line[2:].rstrip("\n")
            elif "=" in line:
                key, _, value = line[2:].rstrip("\n").partition("=")
                stats[key] = value
    return head, stats


def _data_lines(path: Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln for ln in fh if not ln.startswith("#")]


# -- per-topic run ------------------------------------------------------------------


TOPIC_FILES = {
    "ingest": ("posts.jsonl",),
    "vectors": ("vectors.tsv",),
    "projection": ("embedding.tsv",),
    "cluster": ("clusters.tsv",),
    "expand": ("labels.tsv", "model.bin"),
    "valence": ("valence_media.tsv", "valence_accounts.tsv"),
}


@dataclass
class TopicResult:
    topic: str
    ok: bool
    stats: dict[str, dict[str, str]] = field(default_factory=dict)
    ran: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    error: str | None = None


class _TopicRun:
    def __init__(self, cfg: PipelineConfig, topic: ingest.TopicConfig, resume: bool, backend: str | None):
        self.cfg = cfg
        self.topic = topic
        self.resume = resume
        self.backend = backend
        self.hasher = Hasher(cfg)
        self.dir = cfg.output_dir / "topics" / topic.name
        self.result = TopicResult(topic.name, ok=False)

    def path(self, name: str) -> Path:
        return self.dir / name

    def done(self, stage: str) -> bool:
        want = header(stage, self.hasher.topic_stage(self.topic, stage), self.cfg.seed)
        heads = [_read_head(self.path(f)) for f in TOPIC_FILES[stage]]
        if all(h == want for h, _ in heads):
            self.result.stats[stage] = heads[0][1]
            return True
        return False

    def head(self, stage: str) -> str:
        return header(stage, self.hasher.topic_stage(self.topic, stage), self.cfg.seed)

    def run(self, last: str = "valence") -> TopicResult:
        self.dir.mkdir(parents=True, exist_ok=True)
        stages = TOPIC_STAGES[: TOPIC_STAGES.index(last) + 1]
        for stage in stages:
            skip = self.resume and self.done(stage)
            try:
                if skip:
                    getattr(self, f"load_{stage}")()
                    self.result.skipped.append(stage)
                    logger.info("[%s/%s] up to date, skipped", self.topic.name, stage)
                else:
                    stats = getattr(self, f"run_{stage}")()
                    self.result.stats[stage] = {k: str(v) for k, v in stats.items()}
                    self.result.ran.append(stage)
                    logger.info("[%s/%s] %s", self.topic.name, stage,
                                " ".join(f"{k}={v}" for k, v in sorted(stats.items())))
            except StageError:
                raise
            except Exception as exc:  # any failure aborts this topic only
                raise StageError(self.topic.name, stage, f"{type(exc).__name__}: {exc}") from exc
        self.result.ok = True
        return self.result

    # ingest
    def run_ingest(self) -> dict:
        parsed = ingest.read_posts(self.cfg.inputs)
        posts = ingest.filter_topic(parsed.posts, self.topic)
        n_topic = len(posts)
        if self.topic.us_only:
            posts = ingest.filter_us_users(posts, self.cfg.gazetteer_obj())
        if not posts:
            raise ValueError("no posts match the topic")
        self.posts = posts
        stats = {"read": len(parsed.posts), "malformed": parsed.skipped, "topic_posts": n_topic,
                 "kept_posts": len(posts)}
        _write_text(self.path("posts.jsonl"), self.head("ingest"), stats,
                    lambda fh: ingest.write_posts(posts, fh))
        return stats

    def load_ingest(self) -> None:
        with open(self.path("posts.jsonl"), "rb") as fh:
            self.posts = ingest.parse_posts(fh).posts

    # vectors
    def run_vectors(self) -> dict:
        params = self.cfg.section("user_model")
        self.vectors = user_model.build_vectors(self.posts)
        active = [u for u in user_model.top_active(self.posts, max(1, len(self.posts)), params.by)
                  if u in self.vectors]
        self.top = active[: params.top_n]
        stats = {"users": len(self.vectors), "top_users": len(self.top)}
        _write_text(self.path("vectors.tsv"), self.head("vectors"), stats,
                    lambda fh: user_model.write_vectors_tsv(self.vectors, fh))
        return stats

    def load_vectors(self) -> None:
        params = self.cfg.section("user_model")
        self.vectors = user_model.read_vectors_tsv(_data_lines(self.path("vectors.tsv")))
        active = [u for u in user_model.top_active(self.posts, max(1, len(self.posts)), params.by)
                  if u in self.vectors]
        self.top = active[: params.top_n]

    # projection
    def run_projection(self) -> dict:
        sim = user_model.similarity_matrix(self.vectors, self.top, self.cfg.section("user_model").cap)
        self.embedding = projection.project(sim, self.cfg.section("projection"), self.cfg.seed, self.backend)
        stats = {"projected": len(self.top)}
        _write_text(self.path("embedding.tsv"), self.head("projection"), stats,
                    lambda fh: projection.write_embedding_tsv(self.embedding, fh))
        return stats

    def load_projection(self) -> None:
        self.embedding = projection.read_embedding_tsv(_data_lines(self.path("embedding.tsv")))

    # cluster
    def run_cluster(self) -> dict:
        params = self.cfg.section("clustering")
        bw = params.bandwidth
        if bw is None:
            bw = clustering.estimate_bandwidth(self.embedding.coords, params.quantile)
        self.assignment = clustering.cluster_users(
            self.embedding.user_ids, self.embedding.coords, self.topic.name, bandwidth=bw,
            backend=self.backend)
        a = self.assignment
        stats = {"bandwidth": f"{bw:.17g}", "clusters": len(set(a.labels.values())),
                 "c0": len(a.members(0)), "c1": len(a.members(1))}
        _write_text(self.path("clusters.tsv"), self.head("cluster"), stats,
                    lambda fh: clustering.write_clusters_tsv(a, fh))
        return stats

    def load_cluster(self) -> None:
        self.assignment = clustering.read_clusters_tsv(_data_lines(self.path("clusters.tsv")), self.topic.name)

    # expand
    def run_expand(self) -> dict:
        p = self.cfg.section("stance")
        seed = self.cfg.seed
        train_labels = dict(self.assignment.stance)
        hyper = dict(dim=p.dim, lr=p.lr, epochs=p.epochs)
        model = stance_classifier.train(self.vectors, train_labels, seed=seed, **hyper)
        try:
            holdout = stance_classifier.holdout_eval(self.vectors, train_labels, seed=seed, **hyper)
        except ValueError:
            holdout = float("nan")
        expanded = stance_classifier.expand(model, self.vectors, self.assignment, p.min_accounts,
                                            p.threshold, p.distinct_accounts)
        self.stance = expanded.stance
        self.provenance = expanded.provenance
        head = self.head("expand")
        model.meta = head
        stance_classifier.save_model_file(model, self.path("model.bin"))
        counts = Counter(self.provenance.values())
        stats = {"clustered": counts["clustered"], "expanded": counts["expanded"],
                 "holdout_accuracy": f"{holdout:.6f}", "c0": sum(1 for s in self.stance.values() if s == 0),
                 "c1": sum(1 for s in self.stance.values() if s == 1)}
        _write_text(self.path("labels.tsv"), head, stats, self._write_labels)
        return stats

    def _write_labels(self, fh) -> None:
        fh.write("user_id\tstance\tprovenance\n")
        for uid in sorted(self.stance):
            fh.write(f"{uid}\t{self.stance[uid]}\t{self.provenance[uid]}\n")

    def load_expand(self) -> None:
        self.stance, self.provenance = read_labels(self.path("labels.tsv"))

    # valence
    def run_valence(self) -> dict:
        min_cit = self.cfg.section("valence").min_citations
        table, bad = valence.media_citations(self.posts, self.stance)
        media = valence.score_media(table, self.topic.name, min_cit)
        accounts = valence.score_accounts(valence.account_citations(self.posts, self.stance),
                                          self.topic.name, min_cit)
        stats = {"bad_urls": bad, "media": len(media), "accounts": len(accounts)}
        head = self.head("valence")
        _write_text(self.path("valence_media.tsv"), head, stats,
                    lambda fh: valence.write_valence_tsv(media, fh))
        _write_text(self.path("valence_accounts.tsv"), head, stats,
                    lambda fh: valence.write_valence_tsv(accounts, fh))
        return stats

    def load_valence(self) -> None:
        pass


def read_labels(path: Path) -> tuple[dict[str, int], dict[str, str]]:
    stance, provenance = {}, {}
    for line in _data_lines(path):
        if line.startswith("user_id\t") or not line.strip():
            continue
        uid, s, prov = line.rstrip("\n").split("\t")
        stance[uid] = int(s)
        provenance[uid] = prov
    return stance, provenance


def run_topic(cfg: PipelineConfig, topic: str, resume: bool = False, last: str = "valence",
              backend: str | None = None) -> TopicResult:
    """Run one topic's stages up to ``last``; failures come back as a non-ok result."""
    run = _TopicRun(cfg, cfg.topic(topic), resume, backend)
    try:
        return run.run(last)
    except StageError as exc:
        logger.error("%s", exc)
        run.result.error = str(exc)
        return run.result


def run_topics(cfg: PipelineConfig, resume: bool = False, last: str = "valence", jobs: int = 1,
               backend: str | None = None) -> list[TopicResult]:
    names = [t.name for t in cfg.topics]
    if jobs <= 1 or len(names) == 1:
        return [run_topic(cfg, n, resume, last, backend) for n in names]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_topic, cfg, n, resume, last, backend) for n in names]
        return [f.result() for f in futures]


# -- aggregate ------------------------------------------------------------------------


def read_anchors(path: Path) -> dict[str, int]:
    out = {}
    for line in _data_lines(path):
        if line.startswith("influencer\t") or not line.strip():
            continue
        name, pol = line.rstrip("\n").split("\t")[:2]
        pol = int(pol)
        if pol not in (1, -1):
            raise ValueError(f"anchor {name!r}: polarity must be +1 or -1")
        out[ingest.extract_domain(name) if "." in name else name] = pol
    return out


@dataclass
class AggregateResult:
    ok: bool
    aligned: list[str] = field(default_factory=list)
    unaligned: list[str] = field(default_factory=list)
    ran: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    report: list[bias_predictor.EvalRow] = field(default_factory=list)
    error: str | None = None


class _Aggregate:
    def __init__(self, cfg: PipelineConfig, resume: bool, backend: str | None):
        self.cfg = cfg
        self.resume = resume
        self.backend = backend
        self.hasher = Hasher(cfg)
        self.dir = cfg.output_dir / "aggregate"
        self.result = AggregateResult(ok=False)

    def head(self, stage: str) -> str:
        return header(stage, self.hasher.aggregate_stage(stage), self.cfg.seed)

    def done(self, stage: str, files: Iterable[str]) -> bool:
        want = self.head(stage)
        return self.resume and all(_read_head(self.dir / f)[0] == want for f in files)

    def topic_dir(self, name: str) -> Path:
        return self.cfg.output_dir / "topics" / name

    def check_topics(self, stage: str) -> list[str]:
        """Topics whose valence outputs are current; stale or missing ones are excluded."""
        ready = []
        for t in self.cfg.topics:
            want = header("valence", self.hasher.topic_stage(t, "valence"), self.cfg.seed)
            if all(_read_head(self.topic_dir(t.name) / f)[0] == want for f in TOPIC_FILES["valence"]):
                ready.append(t.name)
            else:
                logger.warning("[aggregate/%s] topic %s has no current outputs; excluded", stage, t.name)
        return ready

    def run(self, stages: Iterable[str]) -> AggregateResult:
        self.dir.mkdir(parents=True, exist_ok=True)
        for stage in stages:
            try:
                getattr(self, stage)()
            except StageError:
                raise
            except Exception as exc:
                raise StageError("aggregate", stage, f"{type(exc).__name__}: {exc}") from exc
        self.result.ok = True
        return self.result

    def _mark(self, stage: str, skipped: bool) -> None:
        (self.result.skipped if skipped else self.result.ran).append(stage)
        if skipped:
            logger.info("[aggregate/%s] up to date, skipped", stage)

    # align + average
    def align(self) -> None:
        files = ("alignment.tsv", "aligned_media.tsv", "aligned_accounts.tsv",
                 "average_media.tsv", "average_accounts.tsv")
        skip = self.done("align", files)
        ready = self.check_topics("align")
        records = []
        for name in ready:
            records += valence.read_valence_tsv(_data_lines(self.topic_dir(name) / "valence_media.tsv"), "medium")
            records += valence.read_valence_tsv(_data_lines(self.topic_dir(name) / "valence_accounts.tsv"), "account")
        if self.cfg.anchors is None:
            raise ValueError("sign alignment needs an anchors file")
        anchors = read_anchors(self.cfg.anchors)
        alignment = valence.align_signs(records, anchors)
        failed = sorted({t.name for t in self.cfg.topics} - set(ready))
        self.result.aligned = sorted(alignment.signs)
        self.result.unaligned = sorted(set(alignment.unaligned) | set(failed))
        if len(alignment.signs) < 2:
            raise ValueError(f"only {len(alignment.signs)} topic(s) could be aligned; need at least 2 "
                             f"(unaligned: {', '.join(self.result.unaligned) or 'none'})")
        self.media = [r for r in alignment.records if r.kind == "medium"]
        self.accounts = [r for r in alignment.records if r.kind == "account"]
        self.avg_media = valence.average_valence(self.media)
        self.topics = sorted(alignment.signs)
        if skip:
            self._mark("align", True)
            return
        head = self.head("align")
        stats = {"aligned": len(alignment.signs), "unaligned": len(self.result.unaligned)}

        def write_alignment(fh):
            fh.write("topic\tsign\n")
            for t in sorted({t.name for t in self.cfg.topics}):
                fh.write(f"{t}\t{alignment.signs.get(t, 'unaligned')}\n")

        _write_text(self.dir / "alignment.tsv", head, stats, write_alignment)
        _write_text(self.dir / "aligned_media.tsv", head, {}, lambda fh: valence.write_valence_tsv(self.media, fh))
        _write_text(self.dir / "aligned_accounts.tsv", head, {},
                    lambda fh: valence.write_valence_tsv(self.accounts, fh))
        _write_text(self.dir / "average_media.tsv", head, {},
                    lambda fh: valence.write_average_tsv(self.avg_media, fh))
        _write_text(self.dir / "average_accounts.tsv", head, {},
                    lambda fh: valence.write_average_tsv(valence.average_valence(self.accounts), fh))
        self._mark("align", False)

    # graph embeddings
    def _topic_posts(self) -> list[ingest.Post]:
        seen, posts = set(), []
        for t in self.cfg.topics:
            path = self.topic_dir(t.name) / "posts.jsonl"
            if not path.is_file():
                continue
            with open(path, "rb") as fh:
                for p in ingest.parse_posts(fh).posts:
                    if p.post_id not in seen:
                        seen.add(p.post_id)
                        posts.append(p)
        if not posts:
            raise ValueError("no ingested topic posts to embed")
        return posts

    def embed(self) -> None:
        files = ("hashtag.vec", "mention.vec")
        if self.done("embed", files):
            self.embeddings = {m: graph_embeddings.read_vectors(_data_lines(self.dir / f"{m}.vec"))
                               for m in ("hashtag", "mention")}
            self._mark("embed", True)
            return
        posts = self._topic_posts()
        params = self.cfg.section("embeddings")
        head = self.head("embed")
        self.embeddings = {}
        for i, mode in enumerate(("hashtag", "mention")):
            graph = graph_embeddings.build_graph(posts, mode)
            emb = graph_embeddings.node2vec(graph, params, self.cfg.seed + 2 * i, self.backend)
            self.embeddings[mode] = emb
            stats = {"nodes": len(emb.vectors), "edges": len(graph.edges)}
            _write_text(self.dir / f"{mode}.vec", head, stats,
                        lambda fh, e=emb: graph_embeddings.write_vectors(e.vectors, e.dim, fh))
        self._mark("embed", False)

    # bias classifier
    def bias(self) -> None:
        files = ("bias_report.tsv", "confusion.tsv")
        if self.cfg.gold is None:
            logger.warning("[aggregate/bias] no gold labels configured; skipped")
            return
        if self.done("bias", files):
            self._mark("bias", True)
            return
        if not hasattr(self, "embeddings"):
            self.embed()
        with open(self.cfg.gold, encoding="utf-8") as fh:
            gold_records = bias_predictor.read_gold_tsv(fh)
        merged = {}
        for dom, rec in gold_records.items():
            lab = bias_predictor.merge_labels(rec.bias)
            if lab is not None:
                merged[dom] = lab
        per_medium: dict[str, dict[str, float]] = {}
        for r in self.media:
            per_medium.setdefault(r.influencer_id, {})[r.topic] = r.score
        blocks = {"valence": bias_predictor.valence_block(per_medium, self.topics)}
        citing = graph_embeddings.user_citations(self._topic_posts(), _domain_or_none)
        for mode, emb in self.embeddings.items():
            vecs = {}
            for dom, users in citing.items():
                v = graph_embeddings.medium_embedding(users, emb)
                if v is not None:
                    vecs[dom] = v
            blocks[f"{mode}_graph"] = bias_predictor.vector_block(f"{mode}_graph", vecs)
        if self.cfg.external_vectors is not None:
            ext = graph_embeddings.read_vectors(self.cfg.external_vectors)
            blocks["external"] = bias_predictor.vector_block(
                "external", {ingest.extract_domain(k): v for k, v in ext.vectors.items()})
        params = self.cfg.section("bias")
        average = {d: a.score for d, a in self.avg_media.items()}
        rows = bias_predictor.evaluate(blocks, merged, params.folds, self.cfg.seed, params.C, average)
        self.result.report = rows
        head = self.head("bias")
        stats = {"gold_media": len(merged), "valence_media": len(blocks["valence"].rows)}
        _write_text(self.dir / "bias_report.tsv", head, stats,
                    lambda fh: bias_predictor.write_report_tsv(rows, fh))
        cats = {d: a.category for d, a in self.avg_media.items()}
        gold_fine = {d: r.bias for d, r in gold_records.items()}
        mat = bias_predictor.confusion_table(cats, gold_fine)
        _write_text(self.dir / "confusion.tsv", head, {}, lambda fh: bias_predictor.write_confusion_tsv(mat, fh))
        self._mark("bias", False)


def _domain_or_none(url: str) -> str | None:
    try:
        dom = ingest.extract_domain(url)
    except ingest.InvalidURLError:
        return None
    return None if dom in ingest.DEFAULT_SHORTENERS else dom


def run_aggregate(cfg: PipelineConfig, resume: bool = False, stages: Iterable[str] = AGGREGATE_STAGES,
                  backend: str | None = None) -> AggregateResult:
    agg = _Aggregate(cfg, resume, backend)
    stages = list(stages)
    if "bias" in stages and "align" not in stages:
        stages.insert(0, "align")
    try:
        return agg.run(stages)
    except StageError as exc:
        logger.error("%s", exc)
        agg.result.error = str(exc)
        return agg.result


def write_summary(cfg: PipelineConfig, topics: list[TopicResult]) -> None:
    """Per-topic stage statistics as one TSV (rewritten on every run)."""
    rows = []
    for res in sorted(topics, key=lambda r: r.topic):
        for stage in TOPIC_STAGES:
            for key, value in sorted(res.stats.get(stage, {}).items()):
                rows.append((res.topic, stage, key, value))
        rows.append((res.topic, "status", "ok", "1" if res.ok else "0"))
    head = header("summary", _digest([Hasher(cfg).topic_stage(t, "valence") for t in cfg.topics]), cfg.seed)

    def body(fh):
        fh.write("topic\tstage\tkey\tvalue\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_text(cfg.output_dir / "summary.tsv", head, {}, body)


def purity_against(path: Path, truth: dict[str, str]) -> float:
    """Retained-cluster purity of a clusters.tsv against a user -> community map."""
    assign = clustering.read_clusters_tsv(_data_lines(path), "")
    return clustering.purity([assign.members(0), assign.members(1)], truth)
