"""Text normalization and string similarity for the lexicon matcher.

Everything downstream (matching, featurization, lexicon terms) goes through
:func:`normalize`, so token identity is consistent across the whole pipeline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# Reserved single-character token inserted between collapsed posts.  It is
# stripped from raw post text on ingest, so it can only ever appear as a
# post separator and can never collide with a lexicon term.
POST_BOUNDARY = "␞"

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_MENTION_RE = re.compile(r"@\w+")
_TERMINAL_PUNCT_RE = re.compile(r"[.!?][\"'”’)\]]*$")
_NON_WORD_RE = re.compile(r"[^\w'\-]+")


@dataclass
class TokenSequence:
    """Lowercased tokens plus per-token end-of-sentence/post flags.

    ``boundary_flags[i]`` is true when a sentence or post boundary falls
    immediately *after* token ``i``; matcher windows and negation scopes
    never cross such a position.
    """

    tokens: list[str] = field(default_factory=list)
    boundary_flags: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.boundary_flags):
            raise ValueError("tokens and boundary_flags must have equal length")
        if any(not t for t in self.tokens):
            raise ValueError("empty token in TokenSequence")

    def __len__(self) -> int:
        return len(self.tokens)


def normalize(text: str) -> TokenSequence:
    """Normalize raw post text into a :class:`TokenSequence`.

    Case-folds, deletes URLs and @-mentions, converts ``#word`` to ``word``,
    records sentence boundaries from terminal ``.``/``!``/``?`` and post
    boundaries from the post separator, then strips remaining punctuation
    (intra-word hyphens and apostrophes survive) and splits on whitespace.
    """
    text = text.lower()
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = text.replace("#", "")

    tokens: list[str] = []
    flags: list[bool] = []
    for raw in text.split():
        if POST_BOUNDARY in raw:
            # Separator token: close the previous post, keep nothing.
            if flags:
                flags[-1] = True
            continue
        ends_sentence = _TERMINAL_PUNCT_RE.search(raw) is not None
        word = _NON_WORD_RE.sub("", raw).strip("'-_")
        if word:
            tokens.append(word)
            flags.append(ends_sentence)
        elif ends_sentence and flags:
            # Bare punctuation still terminates the preceding sentence.
            flags[-1] = True
    return TokenSequence(tokens, flags)


def normalize_term(term: str) -> str:
    """Canonical single-spaced form of a lexicon term or annotation span."""
    return " ".join(normalize(term).tokens)


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character edits turning ``a`` into ``b``."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # deletion
                    current[j - 1] + 1,  # insertion
                    previous[j - 1] + (ca != cb),  # substitution
                )
            )
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """Edit similarity ``1 - distance / max(len)``, in [0, 1].

    Two empty strings are identical, hence 1.0.
    """
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def length_bound_similarity(a_len: int, b_len: int) -> float:
    """Upper bound on :func:`similarity` knowing only the two lengths.

    The edit distance is at least ``|a_len - b_len|``, so no string pair with
    these lengths can score above this bound.  Used to prune candidate
    lexicon strings without affecting match results.
    """
    longest = max(a_len, b_len)
    if longest == 0:
        return 1.0
    return 1.0 - abs(a_len - b_len) / longest
