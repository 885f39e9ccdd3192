"""Versioned medication and side-effect lexicons with provenance.

A lexicon version is immutable; enrichment produces a new version whose
changelog carries enough payload to rebuild the entry set by replaying the
chain from the seed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .text import normalize_term

CATEGORIES = ("medication", "side_effect")
FUNCTIONAL_CLASSES = (
    "hormone_therapy",
    "chemotherapy",
    "immune_checkpoint_inhibitor",
    "kinase_inhibitor",
)
SEED_PROVENANCES = (
    "nci_medication_library",
    "nci_side_effects",
    "covid_symptom_lexicon",
)
_ROUND_PROVENANCE_RE = re.compile(r"^annotation_round\((\d+)\)$")


class LexiconError(ValueError):
    """Schema or invariant violation; carries the offending entry id."""

    def __init__(self, message: str, entry_id: str | None = None):
        super().__init__(message if entry_id is None else f"{entry_id}: {message}")
        self.entry_id = entry_id


def round_provenance(round_number: int) -> str:
    return f"annotation_round({round_number})"


@dataclass(frozen=True)
class LexiconEntry:
    entry_id: str
    canonical: str
    category: str
    synonyms: tuple[str, ...] = ()
    functional_class: str | None = None
    provenance: str = "nci_side_effects"

    def __post_init__(self):
        if not self.entry_id:
            raise LexiconError("empty entry_id")
        if self.category not in CATEGORIES:
            raise LexiconError(f"unknown category {self.category!r}", self.entry_id)
        if not self.canonical or self.canonical != normalize_term(self.canonical):
            raise LexiconError(
                f"canonical {self.canonical!r} is not in normalized form", self.entry_id
            )
        object.__setattr__(self, "synonyms", tuple(self.synonyms))
        for syn in self.synonyms:
            if not syn or syn != normalize_term(syn):
                raise LexiconError(f"synonym {syn!r} is not in normalized form", self.entry_id)
        if len(set(self.synonyms)) != len(self.synonyms):
            raise LexiconError("duplicate synonyms", self.entry_id)
        if self.canonical in self.synonyms:
            raise LexiconError("synonym equals canonical", self.entry_id)
        if self.category == "medication":
            if self.functional_class not in FUNCTIONAL_CLASSES:
                raise LexiconError(
                    f"medication requires a functional_class, got {self.functional_class!r}",
                    self.entry_id,
                )
        elif self.functional_class is not None:
            raise LexiconError("side effect must not carry a functional_class", self.entry_id)
        if self.provenance not in SEED_PROVENANCES and not _ROUND_PROVENANCE_RE.match(
            self.provenance
        ):
            raise LexiconError(f"unknown provenance {self.provenance!r}", self.entry_id)

    @property
    def terms(self) -> tuple[str, ...]:
        return (self.canonical, *self.synonyms)

    def to_dict(self) -> dict:
        d = {
            "entry_id": self.entry_id,
            "canonical": self.canonical,
            "category": self.category,
            "synonyms": list(self.synonyms),
            "provenance": self.provenance,
        }
        if self.functional_class is not None:
            d["functional_class"] = self.functional_class
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "LexiconEntry":
        try:
            return cls(
                entry_id=d["entry_id"],
                canonical=d["canonical"],
                category=d["category"],
                synonyms=tuple(d.get("synonyms", ())),
                functional_class=d.get("functional_class"),
                provenance=d.get("provenance", "nci_side_effects"),
            )
        except KeyError as exc:
            raise LexiconError(f"missing field {exc}", d.get("entry_id")) from exc


@dataclass(frozen=True)
class ChangeRecord:
    action: str  # "add" | "modify"
    entry_id: str
    entry: dict | None = None  # full payload for adds
    synonyms_added: tuple[str, ...] = ()
    source_round: int | None = None

    def to_dict(self) -> dict:
        d: dict = {"action": self.action, "entry_id": self.entry_id}
        if self.entry is not None:
            d["entry"] = self.entry
        if self.synonyms_added:
            d["synonyms_added"] = list(self.synonyms_added)
        if self.source_round is not None:
            d["source_round"] = self.source_round
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChangeRecord":
        return cls(
            action=d["action"],
            entry_id=d["entry_id"],
            entry=d.get("entry"),
            synonyms_added=tuple(d.get("synonyms_added", ())),
            source_round=d.get("source_round"),
        )


@dataclass(frozen=True)
class LexiconVersion:
    version: int
    entries: tuple[LexiconEntry, ...]
    parent: int | None = None
    changelog: tuple[ChangeRecord, ...] = ()
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        by_id: dict[str, LexiconEntry] = {}
        for entry in self.entries:
            if entry.entry_id in by_id:
                raise LexiconError("duplicate entry_id in version", entry.entry_id)
            by_id[entry.entry_id] = entry
        object.__setattr__(self, "_by_id", by_id)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, entry_id: str) -> LexiconEntry | None:
        return self._by_id.get(entry_id)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._by_id

    def resolve(self, entry_id: str) -> LexiconEntry:
        entry = self._by_id.get(entry_id)
        if entry is None:
            raise LexiconError("entry_id not in this lexicon version", entry_id)
        return entry

    def entries_for(self, category: str) -> tuple[LexiconEntry, ...]:
        return tuple(e for e in self.entries if e.category == category)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "parent": self.parent,
            "entries": [e.to_dict() for e in self.entries],
            "changelog": [c.to_dict() for c in self.changelog],
        }


def load_lexicon(path: str | Path) -> LexiconVersion:
    """Load one lexicon version from a JSON file.

    Any schema violation is fatal and names the offending entry.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return lexicon_from_dict(doc)


def lexicon_from_dict(doc: Mapping) -> LexiconVersion:
    if "entries" not in doc:
        raise LexiconError("lexicon document has no 'entries' field")
    entries = tuple(LexiconEntry.from_dict(d) for d in doc["entries"])
    return LexiconVersion(
        version=int(doc.get("version", 0)),
        entries=entries,
        parent=doc.get("parent"),
        changelog=tuple(ChangeRecord.from_dict(c) for c in doc.get("changelog", ())),
    )


def save_lexicon(version: LexiconVersion, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(version.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def enrich(
    base: LexiconVersion, additions: Iterable[LexiconEntry], round_number: int
) -> LexiconVersion:
    """Produce the next lexicon version from human-approved additions.

    An addition whose entry_id already exists must be a synonym extension of
    that entry; genuinely new entries get ``annotation_round(n)`` provenance.
    Empty additions still bump the version (with an empty changelog) so that
    evaluation history stays keyed one-to-one to enrichment rounds.
    """
    canonical_owner = {e.canonical: e for e in base}
    merged: dict[str, LexiconEntry] = {e.entry_id: e for e in base}
    changelog: list[ChangeRecord] = []
    for addition in additions:
        existing = merged.get(addition.entry_id)
        if existing is not None:
            if addition.category != existing.category or addition.canonical != existing.canonical:
                raise LexiconError(
                    "entry_id collision is only allowed for synonym extensions",
                    addition.entry_id,
                )
            new_synonyms = tuple(s for s in addition.synonyms if s not in existing.terms)
            if not new_synonyms:
                continue
            merged[addition.entry_id] = replace(
                existing, synonyms=existing.synonyms + new_synonyms
            )
            changelog.append(
                ChangeRecord(
                    action="modify",
                    entry_id=addition.entry_id,
                    synonyms_added=new_synonyms,
                    source_round=round_number,
                )
            )
            continue
        owner = canonical_owner.get(addition.canonical)
        if owner is not None and owner.category != addition.category:
            raise LexiconError(
                f"canonical {addition.canonical!r} already belongs to {owner.entry_id} "
                f"in category {owner.category}",
                addition.entry_id,
            )
        stamped = replace(addition, provenance=round_provenance(round_number))
        merged[stamped.entry_id] = stamped
        canonical_owner[stamped.canonical] = stamped
        changelog.append(
            ChangeRecord(
                action="add",
                entry_id=stamped.entry_id,
                entry=stamped.to_dict(),
                source_round=round_number,
            )
        )
    return LexiconVersion(
        version=base.version + 1,
        entries=tuple(merged.values()),
        parent=base.version,
        changelog=tuple(changelog),
    )


@dataclass(frozen=True)
class LexiconDiff:
    action: str  # "add" | "remove" | "modify"
    entry_id: str
    synonyms_added: tuple[str, ...] = ()
    synonyms_removed: tuple[str, ...] = ()


def diff(a: LexiconVersion, b: LexiconVersion) -> list[LexiconDiff]:
    """Entry-level symmetric difference from ``a`` to ``b`` plus synonym deltas."""
    ids_a = {e.entry_id for e in a}
    ids_b = {e.entry_id for e in b}
    changes = [LexiconDiff("add", eid) for eid in sorted(ids_b - ids_a)]
    changes += [LexiconDiff("remove", eid) for eid in sorted(ids_a - ids_b)]
    for eid in sorted(ids_a & ids_b):
        old, new = a.resolve(eid), b.resolve(eid)
        added = tuple(s for s in new.synonyms if s not in old.synonyms)
        removed = tuple(s for s in old.synonyms if s not in new.synonyms)
        if added or removed:
            changes.append(LexiconDiff("modify", eid, added, removed))
    return changes


def apply_changelog(
    entries: Mapping[str, LexiconEntry], changelog: Iterable[ChangeRecord]
) -> dict[str, LexiconEntry]:
    """Apply one version's changelog to a parent entry set (for replay checks)."""
    result = dict(entries)
    for record in changelog:
        if record.action == "add":
            if record.entry is None:
                raise LexiconError("add record without entry payload", record.entry_id)
            result[record.entry_id] = LexiconEntry.from_dict(record.entry)
        elif record.action == "modify":
            base = result.get(record.entry_id)
            if base is None:
                raise LexiconError("modify record for unknown entry", record.entry_id)
            result[record.entry_id] = replace(
                base, synonyms=base.synonyms + tuple(record.synonyms_added)
            )
        else:
            raise LexiconError(f"unknown changelog action {record.action!r}", record.entry_id)
    return result
