"""Small input-validation helpers shared by the estimators and stats."""

from __future__ import annotations

from typing import Iterable, Sequence


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value


def check_unit_interval(value, name: str, include_zero: bool = True) -> float:
    low_ok = value >= 0 if include_zero else value > 0
    if not (low_ok and value <= 1):
        bound = "[0, 1]" if include_zero else "(0, 1]"
        raise ValueError(f"{name} must be in {bound}, got {value!r}")
    return float(value)


def check_texts(texts: Iterable) -> list[str]:
    out = list(texts)
    for t in out:
        if not isinstance(t, str):
            raise TypeError(f"expected text strings, got {type(t).__name__}")
    return out


def check_labels(labels: Iterable, allowed: Sequence[str]) -> list[str]:
    out = list(labels)
    bad = sorted({l for l in out if l not in allowed})
    if bad:
        raise ValueError(f"labels outside {tuple(allowed)}: {bad}")
    return out


def check_groups(groups: Iterable[Sequence[float]], min_group_size: int = 1):
    cleaned = [list(map(float, g)) for g in groups if len(g) >= max(min_group_size, 1)]
    if len(cleaned) < 2:
        raise ValueError("need at least two non-empty groups")
    return cleaned
