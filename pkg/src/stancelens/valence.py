"""Valence scores of cited influencers with respect to the two stance groups.

Scores live in [-1, 1]: +1 means only C0 cites the influencer, -1 only C1.
Both formulas are evaluated as ``(tf0*total1 - tf1*total0) / (tf0*total1 + tf1*total0)``,
algebraically equal to ``2 p0 / (p0 + p1) - 1`` with ``p_i = tf_i / total_i``.
With integer counts this is one correctly rounded division, and in every
case it negates exactly when the groups swap.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from .ingest import DEFAULT_SHORTENERS, InvalidURLError, Post, article_key, extract_domain

CATEGORIES = ("--", "-", "0", "+", "++")
MIRROR = {"--": "++", "-": "+", "0": "0", "+": "-", "++": "--"}
_EDGES = (-0.6, -0.2, 0.2, 0.6)


@dataclass
class CitationCounts:
    """How often each stance group cited one influencer.

    ``articles`` maps article id -> (count by C0, count by C1).
    """

    influencer_id: str
    articles: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def raw_totals(self) -> tuple[int, int]:
        return (sum(c0 for c0, _ in self.articles.values()),
                sum(c1 for _, c1 in self.articles.values()))

    @property
    def n_citations(self) -> int:
        return sum(self.raw_totals)

    def dampened(self) -> tuple[float, float]:
        """Per-group sum over cited articles of ln(count) + 1."""
        tf0 = math.fsum(math.log(c0) + 1.0 for c0, _ in self.articles.values() if c0 > 0)
        tf1 = math.fsum(math.log(c1) + 1.0 for _, c1 in self.articles.values() if c1 > 0)
        return tf0, tf1


@dataclass(frozen=True)
class ValenceRecord:
    influencer_id: str
    topic: str
    score: float
    category: str
    n_citations: int
    kind: str = "medium"

    def flipped(self) -> "ValenceRecord":
        return ValenceRecord(self.influencer_id, self.topic, -self.score, bin_score(-self.score),
                             self.n_citations, self.kind)


def _ratio_score(tf0: float, total0: float, tf1: float, total1: float) -> float | None:
    if total0 <= 0 or total1 <= 0:
        raise ValueError("group totals must be positive")
    if tf0 == 0 and tf1 == 0:
        return None
    a = tf0 * total1
    b = tf1 * total0
    return (a - b) / (a + b)


def valence_account(tf0: int, total0: int, tf1: int, total1: int) -> float | None:
    """Plain term-frequency valence; ``None`` when neither group cites the item."""
    if tf0 < 0 or tf1 < 0 or tf0 > total0 or tf1 > total1:
        raise ValueError("term frequencies must lie in [0, total]")
    return _ratio_score(tf0, total0, tf1, total1)


def valence_influencer(citations: CitationCounts, total0: float, total1: float) -> float | None:
    """Valence with log-dampened per-article term frequencies."""
    tf0, tf1 = citations.dampened()
    return _ratio_score(tf0, total0, tf1, total1)


def bin_score(score: float) -> str:
    """Five equal bands over [-1, 1], left-closed, with the top band closed at 1."""
    if not -1.0 <= score <= 1.0 or math.isnan(score):
        raise ValueError(f"valence {score!r} outside [-1, 1]")
    for edge, cat in zip(_EDGES, CATEGORIES):
        if score < edge:
            return cat
    return CATEGORIES[-1]


# -- counting -----------------------------------------------------------------


def media_citations(
    posts: Iterable[Post],
    stance: Mapping[str, int],
    shorteners: frozenset[str] = DEFAULT_SHORTENERS,
) -> tuple[dict[str, CitationCounts], int]:
    """Article-level citation counts per domain for labeled authors.

    Returns the table and the number of unparsable URLs that were skipped.
    """
    counts: dict[str, dict[str, list[int]]] = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    bad = 0
    for post in posts:
        side = stance.get(post.author_id)
        if side is None:
            continue
        for url in post.urls:
            try:
                domain = extract_domain(url)
                key = article_key(url)
            except InvalidURLError:
                bad += 1
                continue
            if domain in shorteners:
                continue
            counts[domain][key][side] += 1
    table = {
        dom: CitationCounts(dom, {a: (c[0], c[1]) for a, c in sorted(arts.items())})
        for dom, arts in sorted(counts.items())
    }
    return table, bad


def account_citations(posts: Iterable[Post], stance: Mapping[str, int]) -> dict[str, tuple[int, int]]:
    """Retweet counts per retweeted account, split by the retweeter's stance."""
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for post in posts:
        side = stance.get(post.author_id)
        if side is None or post.retweeted_author_id is None:
            continue
        counts[post.retweeted_author_id][side] += 1
    return {acc: (c[0], c[1]) for acc, c in sorted(counts.items())}


def score_media(
    table: Mapping[str, CitationCounts], topic: str, min_citations: int = 10
) -> list[ValenceRecord]:
    """Dampened valence for every domain with at least ``min_citations`` citations.

    Group totals run over every cited domain, including those below the floor.
    """
    total0 = math.fsum(c.dampened()[0] for c in table.values())
    total1 = math.fsum(c.dampened()[1] for c in table.values())
    if total0 <= 0 or total1 <= 0:
        raise ValueError(f"topic {topic!r}: a stance group cited no media")
    out = []
    for dom in sorted(table):
        cit = table[dom]
        if cit.n_citations < min_citations:
            continue
        score = valence_influencer(cit, total0, total1)
        if score is not None:
            out.append(ValenceRecord(dom, topic, score, bin_score(score), cit.n_citations, "medium"))
    return out


def score_accounts(
    counts: Mapping[str, tuple[int, int]], topic: str, min_citations: int = 10
) -> list[ValenceRecord]:
    total0 = sum(c0 for c0, _ in counts.values())
    total1 = sum(c1 for _, c1 in counts.values())
    if total0 <= 0 or total1 <= 0:
        raise ValueError(f"topic {topic!r}: a stance group retweeted no accounts")
    out = []
    for acc in sorted(counts):
        tf0, tf1 = counts[acc]
        if tf0 + tf1 < min_citations:
            continue
        score = valence_account(tf0, total0, tf1, total1)
        if score is not None:
            out.append(ValenceRecord(acc, topic, score, bin_score(score), tf0 + tf1, "account"))
    return out


# -- cross-topic --------------------------------------------------------------


@dataclass
class Alignment:
    signs: dict[str, int]
    unaligned: list[str]
    records: list[ValenceRecord]


def align_signs(
    records: Iterable[ValenceRecord],
    anchors: Mapping[str, int],
    anchor_records: Iterable[ValenceRecord] | None = None,
) -> Alignment:
    """Flip whole topics so that anchors land on their declared side.

    ``anchors`` maps influencer id -> declared polarity (+1 left, -1 right).
    Per topic, the citation-weighted mean of ``score * polarity`` over scored
    anchors must be positive; otherwise every score of that topic is negated.
    Topics with no scored anchor (or a zero mean) are reported as unaligned
    and dropped from the output records. ``anchor_records`` optionally
    supplies the records used to decide the signs (defaults to ``records``).
    """
    records = list(records)
    deciders = list(anchor_records) if anchor_records is not None else records
    topics = sorted({r.topic for r in records} | {r.topic for r in deciders})
    signs: dict[str, int] = {}
    unaligned: list[str] = []
    for topic in topics:
        num = den = 0.0
        for r in deciders:
            if r.topic == topic and r.influencer_id in anchors:
                num += r.n_citations * r.score * anchors[r.influencer_id]
                den += r.n_citations
        if den == 0 or num == 0:
            unaligned.append(topic)
        else:
            signs[topic] = 1 if num > 0 else -1
    aligned = [r if signs[r.topic] == 1 else r.flipped() for r in records if r.topic in signs]
    return Alignment(signs, unaligned, aligned)


@dataclass(frozen=True)
class AverageValence:
    influencer_id: str
    score: float
    category: str
    n_topics: int


def average_valence(records: Iterable[ValenceRecord]) -> dict[str, AverageValence]:
    """Unweighted mean over the topics where each influencer has a score."""
    by_inf: dict[str, list[float]] = defaultdict(list)
    for r in records:
        by_inf[r.influencer_id].append(r.score)
    out = {}
    for inf in sorted(by_inf):
        scores = by_inf[inf]
        mean = math.fsum(scores) / len(scores)
        mean = min(1.0, max(-1.0, mean))
        out[inf] = AverageValence(inf, mean, bin_score(mean), len(scores))
    return out


# -- io ------------------------------------------------------------------------

VALENCE_HEADER = "influencer\ttopic\tscore\tcategory\tn_citations\n"


def write_valence_tsv(records: Sequence[ValenceRecord], fh: IO[str]) -> None:
    fh.write(VALENCE_HEADER)
    for r in records:
        fh.write(f"{r.influencer_id}\t{r.topic}\t{r.score:.17g}\t{r.category}\t{r.n_citations}\n")


def read_valence_tsv(lines: Iterable[str], kind: str = "medium") -> list[ValenceRecord]:
    out = []
    for line in lines:
        if line.startswith("#") or line == VALENCE_HEADER or not line.strip():
            continue
        inf, topic, score, cat, n = line.rstrip("\n").split("\t")
        out.append(ValenceRecord(inf, topic, float(score), cat, int(n), kind))
    return out


def write_average_tsv(averages: Mapping[str, AverageValence], fh: IO[str]) -> None:
    fh.write("influencer\tscore\tcategory\tn_topics\n")
    for inf in sorted(averages):
        a = averages[inf]
        fh.write(f"{inf}\t{a.score:.17g}\t{a.category}\t{a.n_topics}\n")
