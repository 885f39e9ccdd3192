"""Medication patterns and pattern/side-effect association testing.

Per-user signatures reduce match records to unique medication and side-effect
sets; side-effect presence is tested across medication patterns with a
tie-corrected Kruskal-Wallis test, false-discovery control via
Benjamini-Hochberg, and Dunn's pairwise post-hoc comparisons.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .lexicon import FUNCTIONAL_CLASSES, LexiconError, LexiconVersion
from .matcher import MatchRecord
from .validation import check_groups, check_unit_interval

PATTERN_SEPARATOR = "+"


@dataclass(frozen=True)
class StatsConfig:
    alpha: float = 0.05
    min_group_size: int = 1
    exclude_negated: bool = True
    # chi-square approximation by default; set to e.g. 10000 for a
    # label-permutation p-value on small cohorts
    permutations: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.min_group_size < 1:
            raise ValueError("min_group_size must be >= 1")
        if self.permutations is not None and self.permutations < 1:
            raise ValueError("permutations must be >= 1 when set")


@dataclass(frozen=True)
class UserSignature:
    user_id: str
    medications: frozenset[str]
    side_effects: frozenset[str]
    pattern: str


@dataclass
class PairwiseComparison:
    pattern_a: str
    pattern_b: str
    z: float
    p: float
    p_adjusted: float


@dataclass
class AssociationResult:
    side_effect: str
    groups: dict[str, list[int]]
    h: float
    p: float
    p_adjusted: float = 1.0
    significant: bool = False
    pairwise: list[PairwiseComparison] = field(default_factory=list)


@dataclass
class AssociationReport:
    results: list[AssociationResult]
    patterns: list[str]
    heatmap: dict[str, dict[str, float]]  # side_effect -> pattern -> prevalence
    alpha: float
    skip_reason: str | None = None


def pattern_label(functional_classes: Iterable[str]) -> str:
    """Render a set of functional classes in fixed enum order, '+'-joined."""
    indexed = sorted({FUNCTIONAL_CLASSES.index(c) for c in functional_classes})
    return PATTERN_SEPARATOR.join(FUNCTIONAL_CLASSES[i] for i in indexed)


def build_signatures(
    matches_by_user: Mapping[str, Sequence[MatchRecord]],
    lexicon: LexiconVersion,
    cfg: StatsConfig | None = None,
) -> list[UserSignature]:
    """Collapse match records into unique per-user sets and a pattern label.

    Users without any named medication are excluded.  An entry_id the lexicon
    cannot resolve means the matches were produced against a different
    version, which is fatal.
    """
    cfg = cfg or StatsConfig()
    signatures = []
    for user_id in sorted(matches_by_user):
        medications: set[str] = set()
        side_effects: set[str] = set()
        classes: set[str] = set()
        for record in matches_by_user[user_id]:
            if cfg.exclude_negated and record.negated:
                continue
            entry = lexicon.get(record.entry_id)
            if entry is None:
                raise LexiconError(
                    "match references an entry missing from this lexicon version",
                    record.entry_id,
                )
            if entry.category == "medication":
                medications.add(entry.entry_id)
                classes.add(entry.functional_class)
            else:
                side_effects.add(entry.entry_id)
        if not medications:
            continue
        signatures.append(
            UserSignature(
                user_id=user_id,
                medications=frozenset(medications),
                side_effects=frozenset(side_effects),
                pattern=pattern_label(classes),
            )
        )
    return signatures


# ---------------------------------------------------------------------------
# Rank machinery


def midranks(values: Sequence[float]) -> list[float]:
    """Ranks 1..N with ties sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _tie_term(pooled: Sequence[float]) -> float:
    """Sum of t^3 - t over tie groups."""
    counts: dict[float, int] = {}
    for v in pooled:
        counts[v] = counts.get(v, 0) + 1
    return float(sum(t**3 - t for t in counts.values() if t > 1))


def _h_statistic(pooled: Sequence[float], sizes: Sequence[int]) -> float:
    n = len(pooled)
    ranks = midranks(pooled)
    offset = 0
    total = 0.0
    for size in sizes:
        rank_sum = sum(ranks[offset : offset + size])
        total += rank_sum**2 / size
        offset += size
    h = 12.0 / (n * (n + 1)) * total - 3.0 * (n + 1)
    return h / (1.0 - _tie_term(pooled) / (n**3 - n))


def kruskal_wallis(
    groups: Sequence[Sequence[float]],
    permutations: int | None = None,
    seed: int = 0,
) -> tuple[float, float]:
    """Tie-corrected Kruskal-Wallis H and its p-value.

    The p-value comes from the chi-square upper tail with k-1 degrees of
    freedom; pass ``permutations`` to replace it with a seeded Monte-Carlo
    label-permutation estimate (add-one smoothed), which is preferable for
    very small groups.  Returns (0.0, 1.0) when every pooled value is
    identical.
    """
    import random

    cleaned = check_groups(groups)
    sizes = [len(g) for g in cleaned]
    pooled = [v for g in cleaned for v in g]
    if len(pooled) < 3:
        raise ValueError("need at least 3 observations in total")
    if len(set(pooled)) == 1:
        return 0.0, 1.0
    h = _h_statistic(pooled, sizes)
    if permutations is None:
        return h, chi_square_sf(h, len(cleaned) - 1)
    rng = random.Random(seed)
    shuffled = list(pooled)
    hits = 0
    for _ in range(permutations):
        rng.shuffle(shuffled)
        if _h_statistic(shuffled, sizes) >= h - 1e-12:
            hits += 1
    return h, (hits + 1) / (permutations + 1)


# ---------------------------------------------------------------------------
# Tail probabilities


def _gamma_q_series(a: float, x: float) -> float:
    # Lower regularized incomplete gamma by series, complemented.
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    p = total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    return 1.0 - p


def _gamma_q_cf(a: float, x: float) -> float:
    # Upper regularized incomplete gamma by continued fraction (Lentz).
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi_square_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution.

    Regularized upper incomplete gamma Q(df/2, x/2): series expansion for
    small x, continued fraction otherwise.
    """
    if df < 1:
        raise ValueError("df must be >= 1")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 1.0
    a = df / 2.0
    half = x / 2.0
    q = _gamma_q_series(a, half) if x < df + 1 else _gamma_q_cf(a, half)
    return min(1.0, max(0.0, q))


def normal_sf(z: float) -> float:
    """Standard normal upper tail via the complementary error function."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def benjamini_hochberg(pvals: Sequence[float]) -> list[float]:
    """False-discovery-rate adjusted p-values, returned in input order."""
    for p in pvals:
        check_unit_interval(p, "p-value")
    m = len(pvals)
    if m == 0:
        return []
    order = sorted(range(m), key=lambda i: pvals[i])
    adjusted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        idx = order[rank - 1]
        running = min(running, m * pvals[idx] / rank)
        adjusted[idx] = running
    return adjusted


def dunn_test(groups: Sequence[Sequence[float]]) -> list[tuple[int, int, float, float, float]]:
    """Dunn's rank-based pairwise comparisons after Kruskal-Wallis.

    Returns (i, j, z, p, p_adjusted) for every group pair i < j, the z sign
    following the second group's mean rank minus the first's.  The two-sided
    p-values are Benjamini-Hochberg adjusted within this family of pairs.
    """
    cleaned = check_groups(groups)
    sizes = [len(g) for g in cleaned]
    pooled = [v for g in cleaned for v in g]
    n = len(pooled)
    ranks = midranks(pooled)
    mean_ranks = []
    offset = 0
    for size in sizes:
        mean_ranks.append(sum(ranks[offset : offset + size]) / size)
        offset += size
    variance = n * (n + 1) / 12.0 - _tie_term(pooled) / (12.0 * (n - 1))
    pairs = []
    for i in range(len(cleaned)):
        for j in range(i + 1, len(cleaned)):
            if variance <= 0:  # every pooled value tied
                pairs.append((i, j, 0.0, 1.0))
                continue
            se = math.sqrt(variance * (1.0 / sizes[i] + 1.0 / sizes[j]))
            z = (mean_ranks[j] - mean_ranks[i]) / se
            pairs.append((i, j, z, min(1.0, 2.0 * normal_sf(abs(z)))))
    adjusted = benjamini_hochberg([p for (_, _, _, p) in pairs])
    return [(i, j, z, p, adj) for (i, j, z, p), adj in zip(pairs, adjusted)]


# ---------------------------------------------------------------------------
# Cohort-level reports


@dataclass
class PrevalenceTable:
    cohort_size: int
    medications: list[tuple[str, int, float]]  # entry_id, users, proportion
    side_effects: list[tuple[str, int, float]]
    patterns: list[tuple[str, int]]


def format_count_pct(count: int, denominator: int, brackets: str = "()") -> str:
    """Printed cohort figure, e.g. ``109 (55.1%)`` or ``34 [17.2%]``."""
    pct = 100.0 * count / denominator if denominator else 0.0
    return f"{count} {brackets[0]}{pct:.1f}%{brackets[1]}"


def prevalence_table(signatures: Sequence[UserSignature]) -> PrevalenceTable:
    """Counts of users per medication, side effect, and pattern.

    Proportions are over the cohort with at least one named medication, which
    is every signature by construction.
    """
    if not signatures:
        raise ValueError("no signatures")
    n = len(signatures)
    med_counts: dict[str, int] = {}
    se_counts: dict[str, int] = {}
    pattern_counts: dict[str, int] = {}
    for sig in signatures:
        for m in sig.medications:
            med_counts[m] = med_counts.get(m, 0) + 1
        for s in sig.side_effects:
            se_counts[s] = se_counts.get(s, 0) + 1
        pattern_counts[sig.pattern] = pattern_counts.get(sig.pattern, 0) + 1
    by_count = lambda item: (-item[1], item[0])
    return PrevalenceTable(
        cohort_size=n,
        medications=[(k, c, c / n) for k, c in sorted(med_counts.items(), key=by_count)],
        side_effects=[(k, c, c / n) for k, c in sorted(se_counts.items(), key=by_count)],
        patterns=[(k, c) for k, c in sorted(pattern_counts.items(), key=by_count)],
    )


def _pattern_sort_key(pattern: str) -> tuple:
    return tuple(FUNCTIONAL_CLASSES.index(c) for c in pattern.split(PATTERN_SEPARATOR))


def association_report(
    signatures: Sequence[UserSignature],
    side_effects: Sequence[str],
    cfg: StatsConfig | None = None,
) -> AssociationReport:
    """Test every side effect's presence across medication patterns.

    Kruskal-Wallis per side effect on binary presence vectors, BH adjustment
    across the whole side-effect family, and Dunn pairwise comparisons for
    the significant ones.  The heatmap holds per-pattern prevalence of each
    significant side effect.
    """
    cfg = cfg or StatsConfig()
    members: dict[str, list[UserSignature]] = {}
    for sig in signatures:
        members.setdefault(sig.pattern, []).append(sig)
    patterns = sorted(
        (p for p, sigs in members.items() if len(sigs) >= cfg.min_group_size),
        key=_pattern_sort_key,
    )
    if len(patterns) < 2:
        return AssociationReport(
            results=[],
            patterns=patterns,
            heatmap={},
            alpha=cfg.alpha,
            skip_reason="fewer_than_two_patterns",
        )
    results = []
    for se in side_effects:
        groups = {
            p: [1 if se in sig.side_effects else 0 for sig in members[p]] for p in patterns
        }
        h, p = kruskal_wallis(
            list(groups.values()), permutations=cfg.permutations, seed=cfg.seed
        )
        results.append(AssociationResult(side_effect=se, groups=groups, h=h, p=p))
    adjusted = benjamini_hochberg([r.p for r in results])
    heatmap: dict[str, dict[str, float]] = {}
    for result, adj in zip(results, adjusted):
        result.p_adjusted = adj
        result.significant = adj < cfg.alpha
        if not result.significant:
            continue
        pairwise = dunn_test([result.groups[p] for p in patterns])
        result.pairwise = [
            PairwiseComparison(patterns[i], patterns[j], z, p_raw, p_adj)
            for i, j, z, p_raw, p_adj in pairwise
        ]
        heatmap[result.side_effect] = {
            p: sum(result.groups[p]) / len(result.groups[p]) for p in patterns
        }
    return AssociationReport(
        results=results, patterns=patterns, heatmap=heatmap, alpha=cfg.alpha
    )


# ---------------------------------------------------------------------------
# Serialization

_FLOAT_FMT = "%.12g"


def _fmt(x: float) -> str:
    return _FLOAT_FMT % x


def write_association_csv(report: AssociationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["side_effect", "h", "p", "p_adjusted", "significant"])
        for r in report.results:
            writer.writerow([r.side_effect, _fmt(r.h), _fmt(r.p), _fmt(r.p_adjusted), r.significant])


def write_pairwise_csv(report: AssociationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["side_effect", "pattern_a", "pattern_b", "z", "p", "p_adjusted"])
        for r in report.results:
            for pw in r.pairwise:
                writer.writerow(
                    [r.side_effect, pw.pattern_a, pw.pattern_b, _fmt(pw.z), _fmt(pw.p), _fmt(pw.p_adjusted)]
                )


def write_heatmap_csv(report: AssociationReport, path: str | Path) -> None:
    """Prevalence of each significant side effect per medication pattern."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["side_effect", *report.patterns])
        for se in sorted(report.heatmap):
            writer.writerow([se, *(_fmt(report.heatmap[se][p]) for p in report.patterns)])


def write_prevalence_csv(table: PrevalenceTable, path: str | Path) -> None:
    """Figure tables: medication and side-effect counts with printed shares."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "entry_id", "users", "proportion", "printed"])
        for entry_id, count, prop in table.medications:
            writer.writerow(
                ["medication", entry_id, count, _fmt(prop), format_count_pct(count, table.cohort_size, "()")]
            )
        for entry_id, count, prop in table.side_effects:
            writer.writerow(
                ["side_effect", entry_id, count, _fmt(prop), format_count_pct(count, table.cohort_size, "[]")]
            )
        for pattern, count in table.patterns:
            writer.writerow(["pattern", pattern, count, _fmt(count / table.cohort_size), ""])


def report_to_dict(report: AssociationReport) -> dict:
    return {
        "alpha": report.alpha,
        "patterns": report.patterns,
        "skip_reason": report.skip_reason,
        "results": [
            {
                "side_effect": r.side_effect,
                "h": r.h,
                "p": r.p,
                "p_adjusted": r.p_adjusted,
                "significant": r.significant,
                "group_sizes": {p: len(v) for p, v in r.groups.items()},
                "pairwise": [
                    {
                        "pattern_a": pw.pattern_a,
                        "pattern_b": pw.pattern_b,
                        "z": pw.z,
                        "p": pw.p,
                        "p_adjusted": pw.p_adjusted,
                    }
                    for pw in r.pairwise
                ],
            }
            for r in report.results
        ],
        "heatmap": report.heatmap,
    }


def write_report_json(report: AssociationReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
