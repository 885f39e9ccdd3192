from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from medsift.corpus import Post, UserProfile
from medsift.lexicon import LexiconEntry, LexiconVersion

ACCEPTANCE_RESULTS: dict[str, bool] = {}


def criterion(label):
    """Tag an acceptance test with the criterion it implements."""

    def deco(fn):
        fn._criterion = label
        return fn

    return deco


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    label = getattr(getattr(item, "function", None), "_criterion", None)
    if label and report.when == "call":
        ACCEPTANCE_RESULTS[label] = report.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}")


def make_post(post_id: str, user_id: str, text: str, minute: int = 0) -> Post:
    return Post(
        id=post_id,
        user_id=user_id,
        timestamp=datetime(2024, 3, 1, 12, 0, tzinfo=timezone.utc) + timedelta(minutes=minute),
        text=text,
    )


def make_profile(user_id: str, *texts: str) -> UserProfile:
    posts = [make_post(f"{user_id}-{i}", user_id, t, minute=i) for i, t in enumerate(texts)]
    return UserProfile.from_posts(posts)


def med(entry_id: str, canonical: str, functional_class: str, synonyms=()) -> LexiconEntry:
    return LexiconEntry(
        entry_id=entry_id,
        canonical=canonical,
        category="medication",
        functional_class=functional_class,
        synonyms=tuple(synonyms),
        provenance="nci_medication_library",
    )


def side_effect(entry_id: str, canonical: str, synonyms=()) -> LexiconEntry:
    return LexiconEntry(
        entry_id=entry_id,
        canonical=canonical,
        category="side_effect",
        synonyms=tuple(synonyms),
        provenance="nci_side_effects",
    )


@pytest.fixture
def small_lexicon() -> LexiconVersion:
    return LexiconVersion(
        version=0,
        entries=(
            med("med:tamoxifen", "tamoxifen", "hormone_therapy", ["nolvadex"]),
            med("med:paclitaxel", "paclitaxel", "chemotherapy", ["taxol"]),
            side_effect("se:hair_loss", "hair loss"),
            side_effect("se:hair", "hair"),
            side_effect("se:nausea", "nausea"),
        ),
    )
