"""File-backed workspace shared by the CLI and the annotation server.

Layout under the workspace root:

    profiles.ldjson          collapsed profiles served as annotation tasks
    lexicon/v<k>.json        immutable lexicon version chain
    rounds/round_<n>.json    annotation rounds
    gold/<name>.json         gold standard sets
    eval_history.json        matcher P/R/F1 per lexicon version

Writes go through a single lock and an atomic rename, so concurrent
annotation submissions never corrupt the store.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
import threading
from importlib import resources
from pathlib import Path

from .annotation import AnnotationRound, GoldSet
from .corpus import UserProfile, read_profiles, write_profiles
from .lexicon import LexiconVersion, lexicon_from_dict, load_lexicon

_ROUND_FILE_RE = re.compile(r"^round_(\d+)\.json$")
_LEXICON_FILE_RE = re.compile(r"^v(\d+)\.json$")


class WorkspaceError(RuntimeError):
    pass


def _atomic_write_json(doc: dict, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()

    # -- layout ---------------------------------------------------------

    @property
    def profiles_path(self) -> Path:
        return self.root / "profiles.ldjson"

    @property
    def lexicon_dir(self) -> Path:
        return self.root / "lexicon"

    @property
    def rounds_dir(self) -> Path:
        return self.root / "rounds"

    @property
    def gold_dir(self) -> Path:
        return self.root / "gold"

    @property
    def eval_history_path(self) -> Path:
        return self.root / "eval_history.json"

    def initialize(self, seed_lexicon: str | Path | None = None) -> None:
        """Create the directory layout; seed lexicon v0 if absent.

        Without an explicit seed file the packaged seed lexicon is used.
        """
        for d in (self.root, self.lexicon_dir, self.rounds_dir, self.gold_dir):
            d.mkdir(parents=True, exist_ok=True)
        if not self.lexicon_versions():
            if seed_lexicon is not None:
                shutil.copy(seed_lexicon, self.lexicon_dir / "v0.json")
            else:
                source = resources.files("medsift.data").joinpath("seed_lexicon.json")
                (self.lexicon_dir / "v0.json").write_text(
                    source.read_text(encoding="utf-8"), encoding="utf-8"
                )
        if not self.eval_history_path.exists():
            _atomic_write_json({"entries": []}, self.eval_history_path)

    # -- profiles ---------------------------------------------------------

    def save_profiles(self, profiles) -> None:
        with self._lock:
            write_profiles(profiles, self.profiles_path)

    def load_profiles(self) -> list[UserProfile]:
        if not self.profiles_path.exists():
            return []
        return read_profiles(self.profiles_path)

    # -- lexicon chain ----------------------------------------------------

    def lexicon_versions(self) -> list[int]:
        if not self.lexicon_dir.exists():
            return []
        versions = []
        for name in os.listdir(self.lexicon_dir):
            m = _LEXICON_FILE_RE.match(name)
            if m:
                versions.append(int(m.group(1)))
        return sorted(versions)

    def load_lexicon_version(self, version: int) -> LexiconVersion:
        return load_lexicon(self.lexicon_dir / f"v{version}.json")

    def current_lexicon(self) -> LexiconVersion:
        versions = self.lexicon_versions()
        if not versions:
            raise WorkspaceError("workspace has no lexicon; run initialize() first")
        return self.load_lexicon_version(versions[-1])

    def save_lexicon_version(self, version: LexiconVersion) -> None:
        with self._lock:
            path = self.lexicon_dir / f"v{version.version}.json"
            if path.exists():
                raise WorkspaceError(f"lexicon version {version.version} already exists")
            _atomic_write_json(version.to_dict(), path)

    def lexicon_chain(self) -> list[LexiconVersion]:
        return [self.load_lexicon_version(v) for v in self.lexicon_versions()]

    # -- rounds -----------------------------------------------------------

    def round_numbers(self) -> list[int]:
        if not self.rounds_dir.exists():
            return []
        numbers = []
        for name in os.listdir(self.rounds_dir):
            m = _ROUND_FILE_RE.match(name)
            if m:
                numbers.append(int(m.group(1)))
        return sorted(numbers)

    def load_round(self, number: int) -> AnnotationRound:
        path = self.rounds_dir / f"round_{number}.json"
        if not path.exists():
            raise WorkspaceError(f"round {number} not found")
        with open(path, encoding="utf-8") as fh:
            return AnnotationRound.from_dict(json.load(fh))

    def save_round(self, round_: AnnotationRound) -> None:
        with self._lock:
            _atomic_write_json(round_.to_dict(), self.rounds_dir / f"round_{round_.round}.json")

    def update_round(self, number: int, mutate) -> AnnotationRound:
        """Load-mutate-save one round atomically.

        Serializing the whole read-modify-write through the writer lock is
        what keeps concurrent annotation submissions from losing each other's
        labels.
        """
        with self._lock:
            round_ = self.load_round(number)
            mutate(round_)
            _atomic_write_json(round_.to_dict(), self.rounds_dir / f"round_{number}.json")
            return round_

    # -- gold sets ----------------------------------------------------------

    def save_gold(self, gold: GoldSet) -> None:
        with self._lock:
            _atomic_write_json(gold.to_dict(), self.gold_dir / f"{gold.name}.json")

    def load_gold(self, name: str) -> GoldSet:
        path = self.gold_dir / f"{name}.json"
        if not path.exists():
            raise WorkspaceError(f"gold set {name!r} not found")
        with open(path, encoding="utf-8") as fh:
            return GoldSet.from_dict(json.load(fh))

    # -- evaluation history ---------------------------------------------------

    def eval_history(self) -> list[dict]:
        if not self.eval_history_path.exists():
            return []
        with open(self.eval_history_path, encoding="utf-8") as fh:
            return json.load(fh).get("entries", [])

    def record_eval(self, entry: dict) -> None:
        """Insert or replace the history entry for ``entry['lexicon_version']``."""
        with self._lock:
            entries = [
                e
                for e in self.eval_history()
                if e.get("lexicon_version") != entry.get("lexicon_version")
            ]
            entries.append(entry)
            entries.sort(key=lambda e: e.get("lexicon_version", 0))
            _atomic_write_json({"entries": entries}, self.eval_history_path)
