"""Independent reference implementations used to check the package.

Everything here is deliberately naive: full-matrix DP, exhaustive window
enumeration, permutation resampling.  None of it shares code with the
package internals it verifies.
"""

from __future__ import annotations

import random

from scipy import stats as scipy_stats


def dp_levenshtein(a: str, b: str) -> int:
    """Full-table dynamic-programming edit distance."""
    rows, cols = len(a) + 1, len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        table[i][0] = i
    for j in range(cols):
        table[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
                table[i - 1][j - 1] + cost,
            )
    return table[-1][-1]


def dp_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return 1.0 if longest == 0 else 1.0 - dp_levenshtein(a, b) / longest


def negation_oracle(tokens, flags, start, cfg) -> bool:
    triggers = set(cfg.negation_triggers)
    longest = max((len(t.split()) for t in triggers), default=1)
    for distance in range(1, cfg.negation_window + 1):
        p = start - distance
        if p < 0:
            return False
        if flags[p]:
            return False
        for n in range(1, longest + 1):
            if p + n > start:
                break
            if n > 1 and any(flags[p : p + n - 1]):
                break
            if " ".join(tokens[p : p + n]) in triggers:
                return True
    return False


def brute_force_matches(tokens, flags, entries, cfg):
    """Exhaustive enumerator scoring every window against every term.

    Applies the same acceptance rules as the matcher contract: largest
    windows first, boundary-respecting windows, highest similarity at or
    above the threshold wins (ties: longer term, then smaller entry_id,
    then smaller term), accepted tokens are consumed.

    Returns tuples (entry_id, category, span, window, surface, term,
    similarity, negated) sorted by span.
    """
    n = len(tokens)
    consumed: set[int] = set()
    out = []
    for w in range(cfg.window_max, cfg.window_min - 1, -1):
        if w > n:
            continue
        for start in range(0, n - w + 1, cfg.stride):
            end = start + w
            if any(i in consumed for i in range(start, end)):
                continue
            if any(flags[i] for i in range(start, end - 1)):
                continue
            surface = " ".join(tokens[start:end])
            scored = []
            for entry in entries:
                for term in (entry.canonical, *entry.synonyms):
                    sim = dp_similarity(surface, term)
                    if sim >= cfg.similarity_threshold:
                        scored.append((sim, len(term), term, entry))
            if not scored:
                continue
            top_sim = max(s[0] for s in scored)
            pool = [s for s in scored if s[0] == top_sim]
            top_len = max(s[1] for s in pool)
            pool = [s for s in pool if s[1] == top_len]
            pool.sort(key=lambda s: (s[3].entry_id, s[2]))
            sim, _, term, entry = pool[0]
            consumed.update(range(start, end))
            out.append(
                (
                    entry.entry_id,
                    entry.category,
                    (start, end),
                    w,
                    surface,
                    term,
                    sim,
                    negation_oracle(tokens, flags, start, cfg),
                )
            )
    out.sort(key=lambda r: r[2])
    return out


def scipy_kruskal_h(groups) -> float:
    return float(scipy_stats.kruskal(*groups).statistic)


def permutation_kw_pvalue(groups, n_perm: int, seed: int) -> float:
    """Monte-Carlo mid-p permutation estimate for the Kruskal-Wallis statistic.

    The permutation distribution of H on tied data is discrete, so the atom
    at the observed value is split in half (mid-p): that is the quantity a
    continuous tail approximation can be expected to reproduce.
    """
    sizes = [len(g) for g in groups]
    pooled = [v for g in groups for v in g]
    h_obs = scipy_stats.kruskal(*groups).statistic
    rng = random.Random(seed)
    greater = equal = 0
    for _ in range(n_perm):
        rng.shuffle(pooled)
        perm_groups, offset = [], 0
        for size in sizes:
            perm_groups.append(pooled[offset : offset + size])
            offset += size
        h_perm = scipy_stats.kruskal(*perm_groups).statistic
        if h_perm > h_obs + 1e-9:
            greater += 1
        elif h_perm >= h_obs - 1e-9:
            equal += 1
    return (greater + 0.5 * equal) / n_perm


def mc_standard_error(p_hypothesized: float, n_perm: int) -> float:
    """Binomial standard error of a permutation estimate if the true tail
    probability equals ``p_hypothesized``; floored at one permutation."""
    return max((p_hypothesized * (1 - p_hypothesized) / n_perm) ** 0.5, 1.0 / n_perm)
