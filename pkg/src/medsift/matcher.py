"""Multi-layer fuzzy lexicon matcher.

Token windows of decreasing size slide over a collapsed profile; each window
is scored against every lexicon term by edit similarity, the best entry at or
above the threshold wins, and the tokens it covers are consumed so smaller
windows cannot re-detect the same words.  Accepted matches are checked for a
preceding negation trigger.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from importlib import resources
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .lexicon import LexiconVersion
from .text import TokenSequence, length_bound_similarity, normalize, similarity
from .validation import check_positive_int, check_unit_interval


def _load_default_triggers() -> tuple[str, ...]:
    source = resources.files("medsift.data").joinpath("negation_triggers.txt")
    lines = source.read_text(encoding="utf-8").splitlines()
    return tuple(t.strip() for t in lines if t.strip() and not t.startswith("#"))


DEFAULT_NEGATION_TRIGGERS = _load_default_triggers()


@dataclass(frozen=True)
class MatcherConfig:
    window_min: int = 1
    window_max: int = 9
    stride: int = 1
    similarity_threshold: float = 0.85
    negation_window: int = 3
    negation_triggers: tuple[str, ...] = DEFAULT_NEGATION_TRIGGERS

    def __post_init__(self):
        check_positive_int(self.window_min, "window_min")
        check_positive_int(self.window_max, "window_max")
        check_positive_int(self.stride, "stride")
        check_positive_int(self.negation_window, "negation_window")
        if self.window_min > self.window_max:
            raise ValueError("window_min must not exceed window_max")
        check_unit_interval(self.similarity_threshold, "similarity_threshold", include_zero=False)
        object.__setattr__(self, "negation_triggers", tuple(self.negation_triggers))


@dataclass(frozen=True)
class MatchRecord:
    entry_id: str
    category: str
    span: tuple[int, int]  # half-open token range
    window_size: int
    surface: str
    matched_term: str
    similarity: float
    negated: bool

    def __post_init__(self):
        if self.span[1] - self.span[0] != self.window_size:
            raise ValueError("span length must equal window_size")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["span"] = list(self.span)
        return d

    @classmethod
    def from_dict(cls, d) -> "MatchRecord":
        d = dict(d)
        d["span"] = tuple(d["span"])
        return cls(**d)


def _window_crosses_boundary(flags: Sequence[bool], start: int, end: int) -> bool:
    # A flag on the window's last token is fine: the boundary falls after it.
    return any(flags[start : end - 1])


def detect_negation(
    tokens: TokenSequence, span: tuple[int, int], cfg: MatcherConfig
) -> bool:
    """True when a negation trigger sits within ``negation_window`` tokens
    before the span, scanning backwards and stopping at sentence/post
    boundaries.  Multi-token triggers must fit entirely inside the scope."""
    triggers = set(cfg.negation_triggers)
    max_len = max((len(t.split()) for t in triggers), default=1)
    start = span[0]
    for distance in range(1, cfg.negation_window + 1):
        p = start - distance
        if p < 0:
            break
        if tokens.boundary_flags[p]:
            break
        for n in range(1, max_len + 1):
            if p + n > start:
                break
            if n > 1 and _window_crosses_boundary(tokens.boundary_flags, p, p + n):
                break
            if " ".join(tokens.tokens[p : p + n]) in triggers:
                return True
    return False


def _best_entry(surface: str, candidates, threshold: float):
    """Highest-similarity candidate at or above ``threshold``.

    Ties prefer the longer lexicon string, then the lexicographically
    smaller entry_id, then the smaller term (for a stable matched_term).
    """
    best = None  # (sim, term, entry)
    surface_len = len(surface)
    for term, entry in candidates:
        if length_bound_similarity(surface_len, len(term)) < threshold:
            continue
        sim = similarity(surface, term)
        if sim < threshold:
            continue
        if best is not None:
            b_sim, b_term, b_entry = best
            if (sim, len(term)) < (b_sim, len(b_term)):
                continue
            if (sim, len(term)) == (b_sim, len(b_term)) and (
                entry.entry_id,
                term,
            ) >= (b_entry.entry_id, b_term):
                continue
        best = (sim, term, entry)
    return best


def match_tokens(
    tokens: TokenSequence, lexicon: LexiconVersion, cfg: MatcherConfig
) -> list[MatchRecord]:
    """Run the window matcher over an already-normalized token sequence."""
    n = len(tokens)
    if n == 0 or len(lexicon) == 0:
        return []
    candidates = sorted(
        ((term, entry) for entry in lexicon for term in entry.terms),
        key=lambda pair: (pair[1].entry_id, pair[0]),
    )
    consumed = [False] * n
    records: list[MatchRecord] = []
    for w in range(min(cfg.window_max, n), cfg.window_min - 1, -1):
        for start in range(0, n - w + 1, cfg.stride):
            end = start + w
            if any(consumed[start:end]):
                continue
            if _window_crosses_boundary(tokens.boundary_flags, start, end):
                continue
            surface = " ".join(tokens.tokens[start:end])
            best = _best_entry(surface, candidates, cfg.similarity_threshold)
            if best is None:
                continue
            sim, term, entry = best
            for i in range(start, end):
                consumed[i] = True
            records.append(
                MatchRecord(
                    entry_id=entry.entry_id,
                    category=entry.category,
                    span=(start, end),
                    window_size=w,
                    surface=surface,
                    matched_term=term,
                    similarity=sim,
                    negated=detect_negation(tokens, (start, end), cfg),
                )
            )
    records.sort(key=lambda r: r.span)
    return records


def match_profile(profile, lexicon: LexiconVersion, cfg: MatcherConfig | None = None):
    """Match one collapsed user profile; returns records sorted by span."""
    if cfg is None:
        cfg = MatcherConfig()
    return match_tokens(normalize(profile.collapsed_text), lexicon, cfg)


class LexiconMatcher(BaseEstimator, TransformerMixin):
    """Transformer wrapping the rule-based matcher.

    Stateless (``fit`` is a no-op); ``transform`` maps an iterable of user
    profiles to one ``list[MatchRecord]`` per profile, so the matcher slots
    into ordinary pipelines next to the classifier.
    """

    def __init__(self, lexicon: LexiconVersion | None = None, config: MatcherConfig | None = None):
        self.lexicon = lexicon
        self.config = config

    def _require_lexicon(self) -> LexiconVersion:
        if self.lexicon is None:
            raise ValueError("LexiconMatcher needs a lexicon")
        return self.lexicon

    def fit(self, X=None, y=None):
        self._require_lexicon()
        return self

    def transform(self, X: Iterable) -> list[list[MatchRecord]]:
        lexicon = self._require_lexicon()
        cfg = self.config or MatcherConfig()
        return [match_profile(profile, lexicon, cfg) for profile in X]


@dataclass
class ProfileMatchSummary:
    user_id: str
    n_matches: int
    n_medications: int
    n_side_effects: int
    n_negated: int


def summarize_matches(user_id: str, records: Sequence[MatchRecord]) -> ProfileMatchSummary:
    return ProfileMatchSummary(
        user_id=user_id,
        n_matches=len(records),
        n_medications=sum(r.category == "medication" for r in records),
        n_side_effects=sum(r.category == "side_effect" for r in records),
        n_negated=sum(r.negated for r in records),
    )


def write_matches(matches_by_user, path) -> None:
    """Line-delimited JSON: one line per match record plus a per-profile
    summary line, in user_id order."""
    with open(path, "w", encoding="utf-8") as fh:
        for user_id in sorted(matches_by_user):
            records = matches_by_user[user_id]
            for record in records:
                line = {"type": "match", "user_id": user_id, **record.to_dict()}
                fh.write(json.dumps(line, sort_keys=True) + "\n")
            summary = summarize_matches(user_id, records)
            fh.write(
                json.dumps({"type": "summary", **asdict(summary)}, sort_keys=True) + "\n"
            )


def read_matches(path) -> dict[str, list[MatchRecord]]:
    matches: dict[str, list[MatchRecord]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("type") == "summary":
                matches.setdefault(doc["user_id"], [])
                continue
            user_id = doc.pop("user_id")
            doc.pop("type", None)
            matches.setdefault(user_id, []).append(MatchRecord.from_dict(doc))
    return matches
