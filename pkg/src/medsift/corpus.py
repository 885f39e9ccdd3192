"""Post ingestion, keyword filtering, and per-user profile collapsing."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .text import POST_BOUNDARY

DEFAULT_KEYWORDS = ("cancer", "breastcancer", "tamoxifen", "survivor")

# Strip surrounding punctuation when tokenizing for the keyword filter, but
# keep a leading '#' so hashtag forms stay distinguishable from plain tokens.
_STRIP_CHARS = string.punctuation.replace("#", "") + "“”‘’"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Post:
    id: str
    user_id: str
    timestamp: datetime
    text: str

    def __post_init__(self):
        if not self.id:
            raise CorpusError("post id must be nonempty")
        if not self.user_id:
            raise CorpusError("user_id must be nonempty")
        if not self.text.strip():
            raise CorpusError("post text must be nonempty")
        if self.timestamp.tzinfo is None:
            raise CorpusError("timestamp must be timezone-aware")


@dataclass
class IngestReport:
    lines: int = 0
    parsed: int = 0
    rejected: int = 0
    duplicates: int = 0
    errors: list = field(default_factory=list)  # (line_number, reason)

    def to_dict(self) -> dict:
        return {
            "lines": self.lines,
            "parsed": self.parsed,
            "rejected": self.rejected,
            "duplicates": self.duplicates,
            "errors": [list(e) for e in self.errors],
        }


@dataclass
class PostCollection:
    posts: list[Post] = field(default_factory=list)
    report: IngestReport | None = None

    def __iter__(self):
        return iter(self.posts)

    def __len__(self) -> int:
        return len(self.posts)


@dataclass(frozen=True)
class KeywordFilterConfig:
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    include_hashtag_forms: bool = True

    def __post_init__(self):
        keywords = tuple(self.keywords)
        if not keywords:
            raise CorpusError("keyword list must be nonempty")
        if len(set(keywords)) != len(keywords):
            raise CorpusError("duplicate keywords")
        if any(k != k.lower() or not k for k in keywords):
            raise CorpusError("keywords must be nonempty and lowercase")
        object.__setattr__(self, "keywords", keywords)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    posts: tuple[Post, ...]
    collapsed_text: str
    first_timestamp: datetime
    last_timestamp: datetime

    @property
    def post_count(self) -> int:
        return len(self.posts)

    @classmethod
    def from_posts(cls, posts: Sequence[Post]) -> "UserProfile":
        if not posts:
            raise CorpusError("a profile needs at least one post")
        user_ids = {p.user_id for p in posts}
        if len(user_ids) != 1:
            raise CorpusError(f"posts from multiple users: {sorted(user_ids)}")
        ordered = sorted(posts, key=lambda p: (p.timestamp, p.id))
        collapsed = f" {POST_BOUNDARY} ".join(p.text.strip() for p in ordered)
        return cls(
            user_id=ordered[0].user_id,
            posts=tuple(ordered),
            collapsed_text=collapsed,
            first_timestamp=ordered[0].timestamp,
            last_timestamp=ordered[-1].timestamp,
        )


def parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_post(doc: dict) -> Post:
    missing = [k for k in ("id", "user_id", "timestamp", "text") if k not in doc]
    if missing:
        raise CorpusError(f"missing fields: {missing}")
    # The post separator is reserved; scrub it from raw text so collapsed
    # profiles contain exactly post_count-1 separator tokens.
    text = str(doc["text"]).replace(POST_BOUNDARY, " ").strip()
    return Post(
        id=str(doc["id"]),
        user_id=str(doc["user_id"]),
        timestamp=parse_timestamp(str(doc["timestamp"])),
        text=text,
    )


def ingest_posts(source: str | Path | Iterable[str]) -> PostCollection:
    """Read line-delimited JSON posts.

    Malformed lines are tallied (with reasons) in the ingest report instead of
    aborting; duplicate ids keep the first occurrence.  An unreadable source
    raises.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return ingest_posts(list(fh))
    report = IngestReport()
    posts: list[Post] = []
    seen: set[str] = set()
    for line_number, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        report.lines += 1
        try:
            doc = json.loads(line)
            if not isinstance(doc, dict):
                raise CorpusError("line is not a JSON object")
            post = _parse_post(doc)
        except (json.JSONDecodeError, CorpusError, ValueError) as exc:
            report.rejected += 1
            report.errors.append((line_number, str(exc)))
            continue
        if post.id in seen:
            report.duplicates += 1
            continue
        seen.add(post.id)
        posts.append(post)
        report.parsed += 1
    return PostCollection(posts=posts, report=report)


def _filter_tokens(text: str) -> set[str]:
    tokens: set[str] = set()
    for raw in text.lower().split():
        tok = raw.strip(_STRIP_CHARS)
        if tok:
            tokens.add(tok)
    return tokens


def keyword_filter(posts: PostCollection, cfg: KeywordFilterConfig) -> PostCollection:
    """Keep posts containing any keyword as a token, or as ``#keyword`` when
    hashtag forms are enabled."""
    keep: list[Post] = []
    hashtags = {f"#{k}" for k in cfg.keywords} if cfg.include_hashtag_forms else set()
    for post in posts:
        tokens = _filter_tokens(post.text)
        if tokens & set(cfg.keywords) or tokens & hashtags:
            keep.append(post)
    return PostCollection(posts=keep, report=posts.report)


def collapse_by_user(posts: PostCollection | Iterable[Post]) -> list[UserProfile]:
    """One profile per distinct user, posts ordered by timestamp then id."""
    grouped: dict[str, list[Post]] = {}
    for post in posts:
        grouped.setdefault(post.user_id, []).append(post)
    return [UserProfile.from_posts(grouped[uid]) for uid in sorted(grouped)]


def write_profiles(profiles: Iterable[UserProfile], path: str | Path) -> None:
    """Profile store: line-delimited JSON, one profile per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for profile in profiles:
            doc = {
                "user_id": profile.user_id,
                "post_count": profile.post_count,
                "first_timestamp": profile.first_timestamp.isoformat(),
                "last_timestamp": profile.last_timestamp.isoformat(),
                "posts": [
                    {"id": p.id, "timestamp": p.timestamp.isoformat(), "text": p.text}
                    for p in profile.posts
                ],
            }
            fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_profiles(path: str | Path) -> list[UserProfile]:
    profiles = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            posts = [
                Post(
                    id=p["id"],
                    user_id=doc["user_id"],
                    timestamp=parse_timestamp(p["timestamp"]),
                    text=p["text"],
                )
                for p in doc["posts"]
            ]
            profiles.append(UserProfile.from_posts(posts))
    return profiles
