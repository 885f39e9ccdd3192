"""Gold sets, annotation rounds, agreement, and matcher evaluation."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .lexicon import CATEGORIES, LexiconVersion
from .matcher import MatchRecord
from .text import normalize_term, similarity


class AnnotationError(ValueError):
    pass


class RoundClosedError(AnnotationError):
    pass


@dataclass(frozen=True)
class TermLabel:
    """One annotated term on one profile.

    ``entry_id`` is set after reconciliation against the lexicon; free-text
    terms (entry_id None) feed the candidate queue.
    """

    category: str
    term: str
    negated: bool = False
    entry_id: str | None = None
    span: tuple[int, int] | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise AnnotationError(f"unknown category {self.category!r}")
        object.__setattr__(self, "term", normalize_term(self.term))
        if not self.term:
            raise AnnotationError("empty term")
        if self.span is not None:
            object.__setattr__(self, "span", tuple(self.span))

    def to_dict(self) -> dict:
        d: dict = {"category": self.category, "term": self.term, "negated": self.negated}
        if self.entry_id is not None:
            d["entry_id"] = self.entry_id
        if self.span is not None:
            d["span"] = list(self.span)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TermLabel":
        return cls(
            category=d["category"],
            term=d["term"],
            negated=bool(d.get("negated", False)),
            entry_id=d.get("entry_id"),
            span=tuple(d["span"]) if d.get("span") else None,
        )


@dataclass
class GoldSet:
    name: str
    profiles: tuple[str, ...]
    # user_id -> set of (category, entry_id, negated)
    truth: dict[str, set[tuple[str, str, bool]]] = field(default_factory=dict)

    def __post_init__(self):
        self.profiles = tuple(self.profiles)
        if len(set(self.profiles)) != len(self.profiles):
            raise AnnotationError("duplicate user_ids in gold set")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "profiles": list(self.profiles),
            "truth": {
                uid: [list(item) for item in sorted(items)]
                for uid, items in sorted(self.truth.items())
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GoldSet":
        return cls(
            name=d["name"],
            profiles=tuple(d["profiles"]),
            truth={
                uid: {(c, t, bool(n)) for c, t, n in items}
                for uid, items in d.get("truth", {}).items()
            },
        )


ROUND_STATUSES = ("open", "reconciled")


@dataclass
class AnnotationRound:
    round: int
    annotators: tuple[str, ...]
    tasks: tuple[str, ...]  # user_ids to annotate
    labels: dict[tuple[str, str], set[TermLabel]] = field(default_factory=dict)
    status: str = "open"

    def __post_init__(self):
        if self.round < 1:
            raise AnnotationError("round must be >= 1")
        if self.status not in ROUND_STATUSES:
            raise AnnotationError(f"unknown status {self.status!r}")
        self.annotators = tuple(self.annotators)
        self.tasks = tuple(self.tasks)

    def submit(self, annotator: str, user_id: str, labels: Iterable[TermLabel]) -> None:
        if self.status != "open":
            raise RoundClosedError("round is not open")
        if user_id not in self.tasks:
            raise AnnotationError(f"user {user_id!r} is not in this round's task list")
        if annotator not in self.annotators:
            raise AnnotationError(f"annotator {annotator!r} is not assigned to this round")
        self.labels[(annotator, user_id)] = set(labels)

    def annotated_users(self, annotator: str) -> set[str]:
        return {uid for a, uid in self.labels if a == annotator}

    def to_dict(self) -> dict:
        by_annotator: dict[str, dict[str, list]] = {}
        for (annotator, uid), labels in self.labels.items():
            by_annotator.setdefault(annotator, {})[uid] = [
                l.to_dict() for l in sorted(labels, key=lambda l: (l.category, l.term, l.negated))
            ]
        return {
            "round": self.round,
            "annotators": list(self.annotators),
            "tasks": list(self.tasks),
            "status": self.status,
            "labels": by_annotator,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnnotationRound":
        labels: dict[tuple[str, str], set[TermLabel]] = {}
        for annotator, per_user in d.get("labels", {}).items():
            for uid, items in per_user.items():
                labels[(annotator, uid)] = {TermLabel.from_dict(i) for i in items}
        return cls(
            round=d["round"],
            annotators=tuple(d["annotators"]),
            tasks=tuple(d["tasks"]),
            labels=labels,
            status=d.get("status", "open"),
        )


def save_json(doc: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sample_gold(profiles: Sequence, n: int, seed: int) -> GoldSet:
    """Seeded, order-insensitive sample of profiles as an empty gold skeleton."""
    user_ids = sorted(p.user_id if hasattr(p, "user_id") else str(p) for p in profiles)
    if n > len(user_ids):
        raise AnnotationError(f"cannot sample {n} of {len(user_ids)} profiles")
    chosen = random.Random(seed).sample(user_ids, n)
    return GoldSet(name=f"gold-seed{seed}-n{n}", profiles=tuple(sorted(chosen)))


# ---------------------------------------------------------------------------
# Agreement


def cohens_kappa(a: Mapping | Sequence, b: Mapping | Sequence) -> float:
    """Chance-corrected agreement between two binary labelings.

    Accepts mappings item -> bool (evaluated on shared items) or two aligned
    sequences.  Perfect agreement with degenerate marginals returns 1.0.
    """
    if not isinstance(a, Mapping):
        a = dict(enumerate(a))
    if not isinstance(b, Mapping):
        b = dict(enumerate(b))
    shared = sorted(set(a) & set(b), key=repr)
    if not shared:
        raise AnnotationError("no shared items between the two labelings")
    n = len(shared)
    both = sum(1 for i in shared if a[i] and b[i])
    neither = sum(1 for i in shared if not a[i] and not b[i])
    a_yes = sum(1 for i in shared if a[i]) / n
    b_yes = sum(1 for i in shared if b[i]) / n
    p_o = (both + neither) / n
    p_e = a_yes * b_yes + (1 - a_yes) * (1 - b_yes)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1 - p_e)


@dataclass
class AgreementMatrix:
    annotators: tuple[str, ...]
    cells: dict[tuple[str, str], float | None]
    mean: float | None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "annotators": list(self.annotators),
            "pairs": [
                {"a": a, "b": b, "kappa": k} for (a, b), k in sorted(self.cells.items())
            ],
            "mean": self.mean,
            "warnings": self.warnings,
        }


def _presence_items(round_: AnnotationRound, users: set[str]) -> set[tuple[str, str, str]]:
    """Agreement universe: every (user, category, term) any annotator marked."""
    items = set()
    for (annotator, uid), labels in round_.labels.items():
        if uid in users:
            for label in labels:
                items.add((uid, label.category, label.term))
    return items


def pairwise_agreement(round_: AnnotationRound) -> AgreementMatrix:
    """Cohen's kappa for every annotator pair at (profile, term)-presence
    level; pairs with no shared annotated profiles are excluded from the
    mean with a warning."""
    annotators = round_.annotators
    if len(annotators) < 2:
        raise AnnotationError("need at least two annotators")
    cells: dict[tuple[str, str], float | None] = {}
    warnings: list[str] = []
    kappas: list[float] = []
    for i in range(len(annotators)):
        for j in range(i + 1, len(annotators)):
            x, y = annotators[i], annotators[j]
            shared_users = round_.annotated_users(x) & round_.annotated_users(y)
            items = _presence_items(round_, shared_users)
            if not items:
                cells[(x, y)] = None
                warnings.append(f"no shared items for pair ({x}, {y}); excluded from mean")
                continue
            marked_x = {
                (uid, l.category, l.term)
                for (a, uid), labels in round_.labels.items()
                if a == x and uid in shared_users
                for l in labels
            }
            marked_y = {
                (uid, l.category, l.term)
                for (a, uid), labels in round_.labels.items()
                if a == y and uid in shared_users
                for l in labels
            }
            kappa = cohens_kappa(
                {item: item in marked_x for item in items},
                {item: item in marked_y for item in items},
            )
            cells[(x, y)] = kappa
            kappas.append(kappa)
    mean = sum(kappas) / len(kappas) if kappas else None
    return AgreementMatrix(annotators=annotators, cells=cells, mean=mean, warnings=warnings)


# ---------------------------------------------------------------------------
# Matcher evaluation against gold


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def formatted(self) -> str:
        return f"P={self.precision:.2f}, R={self.recall:.2f}, F1={self.f1:.2f}"


@dataclass
class MatcherEvaluation:
    overall: PRF
    per_category: dict[str, PRF]
    ignored_profiles: int

    def to_dict(self) -> dict:
        def prf(m: PRF) -> dict:
            return {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "tp": m.tp,
                "fp": m.fp,
                "fn": m.fn,
            }

        return {
            "overall": prf(self.overall),
            "per_category": {c: prf(m) for c, m in sorted(self.per_category.items())},
            "ignored_profiles": self.ignored_profiles,
        }


def _prf(tp: int, fp: int, fn: int) -> PRF:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1, tp, fp, fn)


def evaluate_matcher(
    matches_by_user: Mapping[str, Sequence[MatchRecord]], gold: GoldSet
) -> MatcherEvaluation:
    """Set-level precision/recall/F1 of predictions against gold truth.

    The unit is (profile, category, entry, negated): a prediction counts as a
    true positive only when its negation flag agrees with gold.  Matches on
    profiles outside the gold set are ignored (counted).
    """
    if not gold.truth:
        raise AnnotationError("gold set has no truth labels")
    gold_users = set(gold.profiles)
    ignored = sum(1 for uid in matches_by_user if uid not in gold_users)
    tp = fp = fn = 0
    per_cat_counts = {c: [0, 0, 0] for c in CATEGORIES}
    for uid in gold_users:
        truth = gold.truth.get(uid, set())
        predicted = {
            (r.category, r.entry_id, r.negated) for r in matches_by_user.get(uid, ())
        }
        truth_items = {(c, e, bool(n)) for c, e, n in truth}
        for item in predicted & truth_items:
            tp += 1
            per_cat_counts[item[0]][0] += 1
        for item in predicted - truth_items:
            fp += 1
            per_cat_counts[item[0]][1] += 1
        for item in truth_items - predicted:
            fn += 1
            per_cat_counts[item[0]][2] += 1
    return MatcherEvaluation(
        overall=_prf(tp, fp, fn),
        per_category={c: _prf(*counts) for c, counts in per_cat_counts.items()},
        ignored_profiles=ignored,
    )


# ---------------------------------------------------------------------------
# Lexicon candidates from reconciled rounds


@dataclass(frozen=True)
class LexiconCandidate:
    term: str
    category: str
    count: int  # distinct profiles where annotators marked the term
    profiles: tuple[str, ...]
    negated_any: bool = False


def propose_candidates(
    round_: AnnotationRound,
    lexicon: LexiconVersion,
    similarity_threshold: float = 0.85,
) -> list[LexiconCandidate]:
    """Annotator-marked terms absent from the lexicon, ordered by frequency.

    A term fuzzy-matching any existing lexicon string at or above the
    threshold is suppressed as a duplicate.  Requires a reconciled round.
    """
    if round_.status != "reconciled":
        raise AnnotationError("candidates come from reconciled rounds only")
    lexicon_terms = [term for entry in lexicon for term in entry.terms]
    occurrences: dict[tuple[str, str], set[str]] = {}
    negated_seen: set[tuple[str, str]] = set()
    for (_, uid), labels in round_.labels.items():
        for label in labels:
            if label.entry_id is not None:
                continue
            key = (label.category, label.term)
            occurrences.setdefault(key, set()).add(uid)
            if label.negated:
                negated_seen.add(key)
    candidates = []
    for (category, term), users in occurrences.items():
        best = max((similarity(term, lt) for lt in lexicon_terms), default=0.0)
        if best >= similarity_threshold:
            continue
        candidates.append(
            LexiconCandidate(
                term=term,
                category=category,
                count=len(users),
                profiles=tuple(sorted(users)),
                negated_any=(category, term) in negated_seen,
            )
        )
    candidates.sort(key=lambda c: (-c.count, c.term))
    return candidates
