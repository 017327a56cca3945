"""Reading archived post streams and narrowing them to a topic.

Input is newline-delimited JSON, one post per line::

    {"id": "...", "user_id": "...", "ts": "2019-02-26T10:00:00Z", "text": "...",
     "rt_user_id": null, "urls": [...], "hashtags": [...], "mentions": [...],
     "loc": "Baltimore, MD"}

Lines starting with ``#`` are header comments and are ignored.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator
from urllib.parse import urlsplit

from .config import load_toml

logger = logging.getLogger(__name__)

POST_FIELDS = ("id", "user_id", "ts", "text", "rt_user_id", "urls", "hashtags", "mentions", "loc")

DEFAULT_SHORTENERS = frozenset(
    {
        "t.co", "bit.ly", "ow.ly", "buff.ly", "tinyurl.com", "goo.gl", "dlvr.it",
        "ift.tt", "fb.me", "trib.al", "is.gd", "j.mp", "lnkd.in", "wp.me", "tiny.cc",
        "shar.es", "po.st", "bitly.com", "rebrand.ly", "youtu.be",
    }
)


class InvalidURLError(ValueError):
    pass


@dataclass(frozen=True)
class Post:
    post_id: str
    author_id: str
    timestamp: float
    text: str
    retweeted_author_id: str | None = None
    urls: tuple[str, ...] = ()
    hashtags: tuple[str, ...] = ()
    mentions: tuple[str, ...] = ()
    location: str | None = None

    def to_record(self) -> dict:
        """Inverse of :func:`post_from_record` (ISO timestamps, UTC)."""
        return {
            "id": self.post_id,
            "user_id": self.author_id,
            "ts": format_timestamp(self.timestamp),
            "text": self.text,
            "rt_user_id": self.retweeted_author_id,
            "urls": list(self.urls),
            "hashtags": list(self.hashtags),
            "mentions": list(self.mentions),
            "loc": self.location,
        }


@dataclass
class ParseResult:
    posts: list[Post] = field(default_factory=list)
    skipped: int = 0

    def __iter__(self) -> Iterator[Post]:
        return iter(self.posts)

    def __len__(self) -> int:
        return len(self.posts)


def parse_timestamp(value: str) -> float:
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = dt.datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=dt.timezone.utc)
    return stamp.timestamp()


def format_timestamp(ts: float) -> str:
    stamp = dt.datetime.fromtimestamp(ts, tz=dt.timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ") if stamp.microsecond == 0 else stamp.isoformat()


def _str_list(value) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValueError("expected a list of strings")
    return tuple(value)


def post_from_record(rec: dict) -> Post:
    """Validate one decoded JSON object; raises ``ValueError`` if malformed."""
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    missing = [k for k in POST_FIELDS if k not in rec]
    if missing:
        raise ValueError(f"missing fields {missing}")
    post_id, author = rec["id"], rec["user_id"]
    if not isinstance(post_id, str) or not post_id:
        raise ValueError("empty post id")
    if not isinstance(author, str) or not author:
        raise ValueError("empty user id")
    if not isinstance(rec["text"], str) or not isinstance(rec["ts"], str):
        raise ValueError("text and ts must be strings")
    rt = rec["rt_user_id"]
    if rt is not None and (not isinstance(rt, str) or not rt or rt == author):
        raise ValueError("invalid rt_user_id")
    loc = rec["loc"]
    if loc is not None and not isinstance(loc, str):
        raise ValueError("loc must be a string or null")
    hashtags = tuple(h.lstrip("#").lower() for h in _str_list(rec["hashtags"]))
    return Post(
        post_id=post_id,
        author_id=author,
        timestamp=parse_timestamp(rec["ts"]),
        text=rec["text"],
        retweeted_author_id=rt,
        urls=_str_list(rec["urls"]),
        hashtags=tuple(h for h in hashtags if h),
        mentions=_str_list(rec["mentions"]),
        location=loc,
    )


def parse_posts(stream: IO[bytes] | IO[str] | Iterable, fmt: str = "jsonl") -> ParseResult:
    """Parse a JSONL post stream, skipping (and counting) malformed lines.

    Duplicate post ids after the first occurrence count as malformed.
    """
    if fmt != "jsonl":
        raise ValueError(f"unsupported format {fmt!r}")
    result = ParseResult()
    seen: set[str] = set()
    for lineno, raw in enumerate(stream, 1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                result.skipped += 1
                continue
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            post = post_from_record(json.loads(line))
        except (ValueError, TypeError) as exc:
            logger.debug("line %d skipped: %s", lineno, exc)
            result.skipped += 1
            continue
        if post.post_id in seen:
            result.skipped += 1
            continue
        seen.add(post.post_id)
        result.posts.append(post)
    return result


def read_posts(paths: Iterable[str | Path]) -> ParseResult:
    """Parse several JSONL files in order; an unreadable file raises ``OSError``."""
    merged = ParseResult()
    seen: set[str] = set()
    for path in paths:
        with open(path, "rb") as fh:
            part = parse_posts(fh)
        merged.skipped += part.skipped
        for post in part.posts:
            if post.post_id in seen:
                merged.skipped += 1
                continue
            seen.add(post.post_id)
            merged.posts.append(post)
    return merged


def write_posts(posts: Iterable[Post], fh: IO[str]) -> None:
    for post in posts:
        fh.write(json.dumps(post.to_record(), ensure_ascii=False, sort_keys=True))
        fh.write("\n")


# -- location ---------------------------------------------------------------

US_STATES = {
    "AL": "Alabama", "AK": "Alaska", "AZ": "Arizona", "AR": "Arkansas", "CA": "California",
    "CO": "Colorado", "CT": "Connecticut", "DE": "Delaware", "FL": "Florida", "GA": "Georgia",
    "HI": "Hawaii", "ID": "Idaho", "IL": "Illinois", "IN": "Indiana", "IA": "Iowa",
    "KS": "Kansas", "KY": "Kentucky", "LA": "Louisiana", "ME": "Maine", "MD": "Maryland",
    "MA": "Massachusetts", "MI": "Michigan", "MN": "Minnesota", "MS": "Mississippi",
    "MO": "Missouri", "MT": "Montana", "NE": "Nebraska", "NV": "Nevada", "NH": "New Hampshire",
    "NJ": "New Jersey", "NM": "New Mexico", "NY": "New York", "NC": "North Carolina",
    "ND": "North Dakota", "OH": "Ohio", "OK": "Oklahoma", "OR": "Oregon", "PA": "Pennsylvania",
    "RI": "Rhode Island", "SC": "South Carolina", "SD": "South Dakota", "TN": "Tennessee",
    "TX": "Texas", "UT": "Utah", "VT": "Vermont", "VA": "Virginia", "WA": "Washington",
    "WV": "West Virginia", "WI": "Wisconsin", "WY": "Wyoming", "DC": "District of Columbia",
}
COUNTRY_TERMS = ("USA", "US", "U.S.", "U.S.A.", "America", "United States",
                 "United States of America")
# Abbreviations that double as common words; they count only when written uppercase.
DEFAULT_AMBIGUOUS = frozenset({"in", "or", "me", "hi", "ok", "oh", "al", "la", "ma", "pa",
                               "de", "co", "id", "us", "ga", "mt", "nd", "sc"})

_TOKEN_SPLIT = re.compile(r"[,\s]+")
_EDGE_PUNCT = "\"'()[]{}!?;:|/\\-_*~`<>"


def tokenize_location(text: str) -> list[str]:
    tokens = []
    for tok in _TOKEN_SPLIT.split(text):
        tok = tok.strip(_EDGE_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def _norm_token(tok: str) -> str:
    return tok.lower().rstrip(".")


@dataclass(frozen=True)
class Gazetteer:
    """Case-insensitive location terms matched as whole tokens."""

    terms: frozenset[str]
    ambiguous: frozenset[str] = DEFAULT_AMBIGUOUS

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("gazetteer has no terms")

    @classmethod
    def default(cls) -> "Gazetteer":
        terms = set(COUNTRY_TERMS) | set(US_STATES) | set(US_STATES.values())
        return cls(frozenset(terms))

    @classmethod
    def from_file(cls, path: str | Path) -> "Gazetteer":
        """TOML with ``terms = [...]`` and optional ``ambiguous``/``include_defaults``."""
        data = load_toml(path)
        terms = set(data.get("terms", []))
        if data.get("include_defaults", False):
            terms |= set(cls.default().terms)
        ambiguous = frozenset(t.lower() for t in data.get("ambiguous", DEFAULT_AMBIGUOUS))
        return cls(frozenset(terms), ambiguous)

    def _patterns(self) -> list[tuple[tuple[str, ...], bool]]:
        pats = []
        for term in self.terms:
            toks = tuple(_norm_token(t) for t in tokenize_location(term))
            if toks:
                strict = len(toks) == 1 and toks[0] in self.ambiguous
                pats.append((toks, strict))
        return pats

    def matches(self, location: str | None) -> bool:
        if not location:
            return False
        raw = tokenize_location(location)
        norm = [_norm_token(t) for t in raw]
        for toks, strict in self._patterns():
            width = len(toks)
            for i in range(len(norm) - width + 1):
                if tuple(norm[i:i + width]) != toks:
                    continue
                if strict and not raw[i].isupper():
                    continue
                return True
        return False


def filter_us_users(posts: Iterable[Post], gazetteer: Gazetteer) -> list[Post]:
    return [p for p in posts if gazetteer.matches(p.location)]


# -- topic ------------------------------------------------------------------

_TEXT_HASHTAG = re.compile(r"#(\w+)")


@dataclass(frozen=True)
class TopicConfig:
    name: str
    keywords: tuple[str, ...]
    date_start: dt.date
    date_end: dt.date
    us_only: bool = False

    def __post_init__(self) -> None:
        if not self.keywords:
            raise ValueError(f"topic {self.name!r} has no keywords")
        if self.date_start > self.date_end:
            raise ValueError(f"topic {self.name!r}: date_start after date_end")

    @classmethod
    def from_dict(cls, data: dict) -> "TopicConfig":
        def as_date(v) -> dt.date:
            return v if isinstance(v, dt.date) else dt.date.fromisoformat(str(v))

        return cls(
            name=str(data["name"]),
            keywords=tuple(data["keywords"]),
            date_start=as_date(data["date_start"]),
            date_end=as_date(data["date_end"]),
            us_only=bool(data.get("us_only", False)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "TopicConfig":
        return cls.from_dict(load_toml(path))

    @property
    def time_window(self) -> tuple[float, float]:
        """Half-open [start, end) in UTC seconds covering both end dates fully."""
        start = dt.datetime.combine(self.date_start, dt.time(), dt.timezone.utc)
        end = dt.datetime.combine(self.date_end + dt.timedelta(days=1), dt.time(), dt.timezone.utc)
        return start.timestamp(), end.timestamp()


class KeywordMatcher:
    """'#'-prefixed keywords match hashtags by substring; bare ones match whole words."""

    def __init__(self, keywords: Iterable[str]) -> None:
        self.tags = []
        words = []
        for kw in keywords:
            kw = kw.strip()
            if kw.startswith("#"):
                if kw[1:]:
                    self.tags.append(kw[1:].lower())
            elif kw:
                words.append(re.escape(kw))
        self.word_re = (re.compile(r"\b(?:" + "|".join(words) + r")\b", re.IGNORECASE)
                        if words else None)

    def __call__(self, post: Post) -> bool:
        if self.tags:
            tags = list(post.hashtags) + [t.lower() for t in _TEXT_HASHTAG.findall(post.text)]
            if any(kw in tag for kw in self.tags for tag in tags):
                return True
        return bool(self.word_re and self.word_re.search(post.text))


def filter_topic(posts: Iterable[Post], topic: TopicConfig) -> list[Post]:
    lo, hi = topic.time_window
    match = KeywordMatcher(topic.keywords)
    return [p for p in posts if lo <= p.timestamp < hi and match(p)]


# -- urls -------------------------------------------------------------------

_HOST_RE = re.compile(r"^(?=.{1,253}$)([a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?)(\.[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?)+$")


def _split_url(url: str):
    if not isinstance(url, str) or not url.strip() or any(c.isspace() for c in url.strip()):
        raise InvalidURLError(f"not a URL: {url!r}")
    url = url.strip()
    parts = urlsplit(url)
    if not parts.netloc:
        # bare host (e.g. an already-extracted domain)
        parts = urlsplit("//" + url)
        if parts.path not in ("", "/") or parts.query:
            raise InvalidURLError(f"not an absolute URL: {url!r}")
    try:
        host = parts.hostname
    except ValueError as exc:
        raise InvalidURLError(str(exc)) from exc
    if not host:
        raise InvalidURLError(f"no host in {url!r}")
    host = host.rstrip(".")
    if not _HOST_RE.match(host):
        raise InvalidURLError(f"invalid host in {url!r}")
    return host, parts


def extract_domain(url: str) -> str:
    """Lowercased host with a leading ``www.`` removed; raises :class:`InvalidURLError`."""
    host, _ = _split_url(url)
    if host.startswith("www."):
        host = host[4:]
    return host


def article_key(url: str) -> str:
    """Identity of a cited article: domain plus path, query and fragment dropped."""
    host, parts = _split_url(url)
    if host.startswith("www."):
        host = host[4:]
    path = parts.path.rstrip("/")
    return host + path
