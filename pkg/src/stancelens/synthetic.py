"""Planted two-community corpora with known stances and media leanings.

Community ``a`` leans left and community ``b`` right. Ordinary users
retweet elite accounts (never each other), cite news domains, and use
hashtags and mentions from community-specific pools, so every later
pipeline stage has a ground truth to be checked against.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .ingest import Post, format_timestamp, write_posts

COMMUNITIES = ("a", "b")
LEANING = {"a": "left", "b": "right"}
OTHER = {"a": "b", "b": "a"}
US_PLACES = ("Austin, TX", "Ohio", "Portland, OR", "New York, NY", "Denver, Colorado",
             "Atlanta, GA", "Phoenix, AZ", "Chicago, IL", "Boston, MA", "USA")
NON_US_PLACES = ("London, UK", "Paris, France", "Toronto, Canada", "Berlin", "Sydney, Australia")
# gold labels cycle through these so label merging is exercised
_GOLD = {"left": ("left", "extreme-left"), "center": ("center",), "right": ("right", "extreme-right")}


@dataclass
class SynthParams:
    n_users: int = 500  # per community
    n_elite: int = 20  # per community
    p_in: float = 0.9
    p_out: float = 0.1
    n_media: int = 10  # per leaning
    citation_skew: float = 0.8
    posts_per_user: float = 30.0  # mean of a lognormal activity distribution
    activity_sigma: float = 0.8
    url_rate: float = 0.5
    n_topics: int = 1
    n_pool: int = 30  # hashtags / mentions per community
    pool_mixing: float = 0.1  # chance a hashtag or mention comes from the other pool
    off_topic_rate: float = 0.05
    non_us_rate: float = 0.0
    n_articles: int = 5  # distinct articles per medium
    start: str = "2019-01-01"
    days: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        probs = {"p_in": self.p_in, "p_out": self.p_out, "citation_skew": self.citation_skew,
                 "url_rate": self.url_rate, "pool_mixing": self.pool_mixing,
                 "off_topic_rate": self.off_topic_rate, "non_us_rate": self.non_us_rate}
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.p_in + self.p_out > 1.0:
            raise ValueError("p_in + p_out must not exceed 1")
        for name in ("n_users", "n_elite", "n_media", "n_topics", "n_pool", "n_articles", "days"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.posts_per_user <= 0:
            raise ValueError("posts_per_user must be positive")


@dataclass
class SynthCorpus:
    params: SynthParams
    posts: list[Post]
    users: dict[str, str]  # user -> community
    elites: dict[str, str]  # elite account -> community
    media: dict[str, str]  # domain -> leaning
    gold: dict[str, str]  # domain -> fine-grained gold bias label
    topics: list[str]


def user_id(community: str, i: int) -> str:
    return f"user_{community}{i:04d}"


def elite_id(community: str, i: int) -> str:
    return f"elite_{community}{i:02d}"


def media_domains(leaning: str, n: int) -> list[str]:
    return [f"{leaning}news{i:02d}.com" for i in range(n)]


def topic_name(k: int) -> str:
    return f"topic{k}"


def generate(params: SynthParams) -> SynthCorpus:
    """Deterministic under ``params.seed``; each user draws from its own sub-seeded stream."""
    media = {d: lean for lean in ("left", "center", "right") for d in media_domains(lean, params.n_media)}
    gold = {}
    for lean in ("left", "center", "right"):
        for i, d in enumerate(media_domains(lean, params.n_media)):
            gold[d] = _GOLD[lean][i % len(_GOLD[lean])]
    elites = {elite_id(c, i): c for c in COMMUNITIES for i in range(params.n_elite)}
    topics = [topic_name(k) for k in range(params.n_topics)]
    t0 = dt.datetime.fromisoformat(params.start).replace(tzinfo=dt.timezone.utc).timestamp()
    span = params.days * 86400.0

    users: dict[str, str] = {}
    raw: list[tuple[float, str, dict]] = []
    for ci, comm in enumerate(COMMUNITIES):
        for i in range(params.n_users):
            uid = user_id(comm, i)
            users[uid] = comm
            rng = np.random.default_rng([params.seed, ci, i])
            raw.extend(_user_posts(uid, comm, rng, params, topics, t0, span))
    raw.sort(key=lambda item: (item[0], item[1]))
    posts = []
    for n, (ts, _, fields) in enumerate(raw):
        posts.append(Post(post_id=f"p{n:08d}", timestamp=ts, **fields))
    return SynthCorpus(params, posts, users, elites, media, gold, topics)


def _user_posts(uid, comm, rng, params: SynthParams, topics, t0, span):
    mu = np.log(params.posts_per_user) - params.activity_sigma ** 2 / 2
    n_posts = max(1, int(round(rng.lognormal(mu, params.activity_sigma))))
    if rng.random() < params.non_us_rate:
        location = NON_US_PLACES[rng.integers(len(NON_US_PLACES))]
    else:
        location = US_PLACES[rng.integers(len(US_PLACES))]
    out = []
    for j in range(n_posts):
        ts = t0 + float(np.floor(rng.random() * span))
        topic = topics[rng.integers(len(topics))]
        on_topic = rng.random() >= params.off_topic_rate

        r = rng.random()
        retweeted = None
        if r < params.p_in:
            retweeted = elite_id(comm, rng.integers(params.n_elite))
        elif r < params.p_in + params.p_out:
            retweeted = elite_id(OTHER[comm], rng.integers(params.n_elite))

        pool = OTHER[comm] if rng.random() < params.pool_mixing else comm
        tags = [f"{pool}tag{rng.integers(params.n_pool):02d}"]
        if on_topic:
            tags.insert(0, topic)
        pool = OTHER[comm] if rng.random() < params.pool_mixing else comm
        mentions = [f"{pool}acct{rng.integers(params.n_pool):02d}"]

        urls = []
        if rng.random() < params.url_rate:
            urls.append(_citation(comm, rng, params))

        text = " ".join(["#" + t for t in tags] + ["@" + m for m in mentions] + urls)
        if retweeted:
            text = f"RT @{retweeted}: {text}"
        out.append((ts, f"{uid}:{j:05d}", dict(
            author_id=uid, text=text, retweeted_author_id=retweeted, urls=tuple(urls),
            hashtags=tuple(tags), mentions=tuple(mentions), location=location,
        )))
    return out


def _citation(comm, rng, params: SynthParams) -> str:
    r = rng.random()
    own = LEANING[comm]
    if r < params.citation_skew:
        lean = own
    elif r < params.citation_skew + (1 - params.citation_skew) / 2:
        lean = "center"
    else:
        lean = LEANING[OTHER[comm]]
    # mildly skewed popularity: medium i has weight 1 / (i + 1)^0.5
    weights = 1.0 / np.sqrt(np.arange(1, params.n_media + 1))
    medium = media_domains(lean, params.n_media)[_choice(rng, weights)]
    article = rng.integers(params.n_articles)
    return f"https://www.{medium}/story/{article:03d}"


def _choice(rng, weights: np.ndarray) -> int:
    cdf = np.cumsum(weights)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


# -- files ------------------------------------------------------------------------


def write_corpus(corpus: SynthCorpus, out_dir: str | Path, top_n: int | None = None) -> Path:
    """Write posts, ground truth and a ready-to-run pipeline config; returns the config path."""
    out = Path(out_dir)
    (out / "topics").mkdir(parents=True, exist_ok=True)
    p = corpus.params
    with open(out / "posts.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        write_posts(corpus.posts, fh)
    with open(out / "users.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\tcommunity\n")
        for uid in sorted(corpus.users):
            fh.write(f"{uid}\t{corpus.users[uid]}\n")
    with open(out / "media.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("domain\tleaning\n")
        for dom in sorted(corpus.media):
            fh.write(f"{dom}\t{corpus.media[dom]}\n")
    with open(out / "gold.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("domain\tbias\tfactuality\n")
        for dom in sorted(corpus.gold):
            fh.write(f"{dom}\t{corpus.gold[dom]}\tmixed\n")
    with open(out / "anchors.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("influencer\tpolarity\n")
        for lean, pol in (("left", 1), ("right", -1)):
            for dom in media_domains(lean, p.n_media)[:2]:
                fh.write(f"{dom}\t{pol}\n")
    start = dt.date.fromisoformat(p.start)
    end = start + dt.timedelta(days=p.days - 1)
    for name in corpus.topics:
        (out / "topics" / f"{name}.toml").write_text(
            f'name = "{name}"\nkeywords = ["#{name}"]\n'
            f"date_start = {start.isoformat()}\ndate_end = {end.isoformat()}\n"
            f"us_only = {'true' if p.non_us_rate > 0 else 'false'}\n",
            encoding="utf-8",
        )
    (out / "gazetteer.toml").write_text("include_defaults = true\n", encoding="utf-8")
    (out / "params.json").write_text(json.dumps(asdict(p), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    n_total = p.n_users * len(COMMUNITIES)
    topic_list = ", ".join(f'"topics/{t}.toml"' for t in corpus.topics)
    config = (
        f"seed = {p.seed}\n"
        'inputs = ["posts.jsonl"]\n'
        f"topics = [{topic_list}]\n"
        'gazetteer = "gazetteer.toml"\n'
        'anchors = "anchors.tsv"\n'
        'gold = "gold.tsv"\n'
        'output_dir = "out"\n\n'
        "[user_model]\n"
        f"top_n = {top_n if top_n is not None else max(2, int(0.4 * n_total))}\n"
    )
    cfg_path = out / "config.toml"
    cfg_path.write_text(config, encoding="utf-8")
    return cfg_path


def read_truth(path: str | Path) -> dict[str, str]:
    """Two-column TSV (with header) to a dict."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.strip():
                key, value = line.rstrip("\n").split("\t")[:2]
                out[key] = value
    return out


def retweet_crossings(corpus: SynthCorpus) -> int:
    """Retweets whose elite belongs to the other community."""
    return sum(
        1 for post in corpus.posts
        if post.retweeted_author_id is not None
        and corpus.elites[post.retweeted_author_id] != corpus.users[post.author_id]
    )


def timestamp_range(corpus: SynthCorpus) -> tuple[str, str]:
    ts = [p.timestamp for p in corpus.posts]
    return format_timestamp(min(ts)), format_timestamp(max(ts))
