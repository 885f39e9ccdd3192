import math
import random

import pytest
from scipy import stats as scipy_stats

from conftest import make_profile, med, side_effect
from medsift.lexicon import LexiconError, LexiconVersion
from medsift.matcher import MatchRecord
from medsift.stats import (
    AssociationReport,
    StatsConfig,
    association_report,
    benjamini_hochberg,
    build_signatures,
    chi_square_sf,
    dunn_test,
    format_count_pct,
    kruskal_wallis,
    midranks,
    normal_sf,
    pattern_label,
    prevalence_table,
)
from oracles import mc_standard_error, permutation_kw_pvalue, scipy_kruskal_h


def record(entry_id, category="side_effect", negated=False, start=0):
    return MatchRecord(
        entry_id=entry_id,
        category=category,
        span=(start, start + 1),
        window_size=1,
        surface=entry_id,
        matched_term=entry_id,
        similarity=1.0,
        negated=negated,
    )


@pytest.fixture
def med_lexicon():
    return LexiconVersion(
        version=0,
        entries=(
            med("med:tamoxifen", "tamoxifen", "hormone_therapy"),
            med("med:paclitaxel", "paclitaxel", "chemotherapy"),
            med("med:palbociclib", "palbociclib", "kinase_inhibitor"),
            side_effect("se:nausea", "nausea"),
            side_effect("se:hair_loss", "hair loss"),
        ),
    )


class TestSignatures:
    def test_pattern_from_two_classes(self, med_lexicon):
        matches = {
            "u1": [record("med:tamoxifen", "medication"), record("med:paclitaxel", "medication", start=1)]
        }
        sigs = build_signatures(matches, med_lexicon)
        assert sigs[0].pattern == "hormone_therapy+chemotherapy"

    def test_pattern_order_is_fixed_enum_order(self, med_lexicon):
        matches = {
            "u1": [record("med:palbociclib", "medication"), record("med:tamoxifen", "medication", start=1)]
        }
        sigs = build_signatures(matches, med_lexicon)
        assert sigs[0].pattern == "hormone_therapy+kinase_inhibitor"
        assert pattern_label(["kinase_inhibitor", "hormone_therapy"]) == sigs[0].pattern

    def test_user_without_named_medication_excluded(self, med_lexicon):
        matches = {"u1": [record("se:nausea")]}
        assert build_signatures(matches, med_lexicon) == []

    def test_repeat_mentions_collapse_to_set(self, med_lexicon):
        matches = {"u1": [record("med:tamoxifen", "medication", start=i) for i in range(5)]}
        sigs = build_signatures(matches, med_lexicon)
        assert sigs[0].medications == frozenset({"med:tamoxifen"})

    def test_negated_mentions_excluded_by_default(self, med_lexicon):
        matches = {
            "u1": [
                record("med:tamoxifen", "medication"),
                record("se:nausea", negated=True, start=1),
            ]
        }
        sigs = build_signatures(matches, med_lexicon)
        assert sigs[0].side_effects == frozenset()
        kept = build_signatures(matches, med_lexicon, StatsConfig(exclude_negated=False))
        assert kept[0].side_effects == frozenset({"se:nausea"})

    def test_unresolvable_entry_fatal(self, med_lexicon):
        with pytest.raises(LexiconError):
            build_signatures({"u1": [record("med:ghost", "medication")]}, med_lexicon)


class TestPrevalence:
    def _cohort(self, med_lexicon):
        matches = {}
        for i in range(198):
            records = []
            if i < 109:
                records.append(record("med:tamoxifen", "medication"))
            else:
                records.append(record("med:paclitaxel", "medication"))
            if i < 34:
                records.append(record("se:hair_loss", start=1))
            matches[f"u{i:03d}"] = records
        return build_signatures(matches, med_lexicon)

    def test_printed_figures(self, med_lexicon):
        table = prevalence_table(self._cohort(med_lexicon))
        assert table.cohort_size == 198
        top_med = table.medications[0]
        assert top_med[0] == "med:tamoxifen" and top_med[1] == 109
        assert format_count_pct(109, 198, "()") == "109 (55.1%)"
        top_se = table.side_effects[0]
        assert top_se[1] == 34
        assert format_count_pct(34, 198, "[]") == "34 [17.2%]"

    def test_empty_side_effect_table(self, med_lexicon):
        matches = {"u1": [record("med:tamoxifen", "medication")]}
        table = prevalence_table(build_signatures(matches, med_lexicon))
        assert table.side_effects == []

    def test_empty_signatures_rejected(self):
        with pytest.raises(ValueError):
            prevalence_table([])


class TestKruskalWallis:
    def test_hand_worked_no_ties(self):
        h, p = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        assert h == pytest.approx(7.2, abs=1e-9)
        assert p == pytest.approx(chi_square_sf(7.2, 2))

    def test_identical_groups(self):
        h, _ = kruskal_wallis([[1, 2], [1, 2]])
        assert h == pytest.approx(0.0, abs=1e-12)

    def test_all_tied_short_circuit(self):
        assert kruskal_wallis([[1, 1], [1, 1, 1]]) == (0.0, 1.0)

    def test_binary_with_ties_vs_hand_ranks(self):
        # pooled [1,1,0,0,0,0]: zeros rank 2.5, ones rank 5.5
        # H_raw = 12/42 * (13.5^2/3 + 7.5^2/3) - 21 = 1.714285...
        # tie term = (4^3-4)+(2^3-2) = 66, C = 1 - 66/210
        h, _ = kruskal_wallis([[1, 1, 0], [0, 0, 0]])
        h_raw = 12 / 42 * (13.5**2 / 3 + 7.5**2 / 3) - 21
        expected = h_raw / (1 - 66 / 210)
        assert h == pytest.approx(expected, abs=1e-12)
        assert h == pytest.approx(scipy_kruskal_h([[1, 1, 0], [0, 0, 0]]), abs=1e-10)

    def test_matches_reference_implementation(self):
        rng = random.Random(31)
        for _ in range(50):
            k = rng.randint(2, 4)
            groups = [
                [rng.choice([0, 1, 2, 5.5]) for _ in range(rng.randint(2, 12))] for _ in range(k)
            ]
            if len({v for g in groups for v in g}) == 1:
                continue
            h, p = kruskal_wallis(groups)
            assert h == pytest.approx(scipy_kruskal_h(groups), abs=1e-9)
            assert p == pytest.approx(float(scipy_stats.chi2.sf(h, k - 1)), abs=1e-10)

    def test_invariant_under_monotone_transform(self):
        rng = random.Random(37)
        for _ in range(20):
            groups = [[rng.uniform(0, 10) for _ in range(5)] for _ in range(3)]
            h1, _ = kruskal_wallis(groups)
            h2, _ = kruskal_wallis([[math.exp(v) for v in g] for g in groups])
            assert h1 == pytest.approx(h2, abs=1e-9)

    def test_fewer_than_two_groups_rejected(self):
        with pytest.raises(ValueError):
            kruskal_wallis([[1, 2, 3]])
        with pytest.raises(ValueError):
            kruskal_wallis([[1, 2, 3], []])

    def test_permutation_pvalue_agrees(self):
        rng = random.Random(43)
        groups = [
            [1 if rng.random() < 0.25 else 0 for _ in range(40)],
            [1 if rng.random() < 0.65 else 0 for _ in range(40)],
        ]
        _, p_chi = kruskal_wallis(groups)
        p_perm = permutation_kw_pvalue(groups, n_perm=800, seed=7)
        assert abs(p_chi - p_perm) <= 3 * mc_standard_error(p_chi, 800)

    def test_builtin_permutation_option(self):
        rng = random.Random(45)
        groups = [
            [1 if rng.random() < 0.2 else 0 for _ in range(35)],
            [1 if rng.random() < 0.7 else 0 for _ in range(35)],
        ]
        h_chi, p_chi = kruskal_wallis(groups)
        h_perm, p_perm = kruskal_wallis(groups, permutations=2000, seed=3)
        assert h_perm == h_chi  # statistic unchanged, only the tail estimate
        assert kruskal_wallis(groups, permutations=2000, seed=3) == (h_perm, p_perm)
        assert abs(p_chi - p_perm) <= 3 * mc_standard_error(max(p_chi, 1e-3), 2000) + 1e-3


class TestMidranks:
    def test_simple(self):
        assert midranks([10, 20, 30]) == [1.0, 2.0, 3.0]

    def test_ties_average(self):
        assert midranks([5, 5, 1]) == [2.5, 2.5, 1.0]

    def test_matches_scipy(self):
        rng = random.Random(3)
        values = [rng.choice([0, 1, 2, 2.5]) for _ in range(40)]
        assert midranks(values) == list(scipy_stats.rankdata(values))


class TestChiSquareSf:
    def test_zero(self):
        assert chi_square_sf(0.0, 5) == 1.0

    def test_df2_closed_form(self):
        assert chi_square_sf(7.2, 2) == pytest.approx(math.exp(-3.6), abs=1e-10)

    def test_df1_closed_form(self):
        assert chi_square_sf(3.841, 1) == pytest.approx(math.erfc(math.sqrt(3.841 / 2)), abs=1e-10)
        assert chi_square_sf(3.841, 1) == pytest.approx(0.0500, abs=5e-5)

    def test_against_scipy_grid(self):
        for df in (1, 2, 3, 5, 10, 30):
            for x in (0.01, 0.5, 1.0, float(df) - 0.5, float(df) + 0.5, 2.0 * df, 10.0 * df):
                assert chi_square_sf(x, df) == pytest.approx(
                    float(scipy_stats.chi2.sf(x, df)), abs=1e-10
                )

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            chi_square_sf(-1.0, 2)
        with pytest.raises(ValueError):
            chi_square_sf(1.0, 0)


class TestBenjaminiHochberg:
    def test_equal_spacing_collapses(self):
        assert benjamini_hochberg([0.01, 0.02, 0.03, 0.04]) == pytest.approx(
            [0.04, 0.04, 0.04, 0.04], abs=1e-12
        )

    def test_single_p_unchanged(self):
        assert benjamini_hochberg([0.3]) == [0.3]

    def test_hand_worked(self):
        assert benjamini_hochberg([0.005, 0.1, 0.9]) == pytest.approx([0.015, 0.15, 0.9])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            benjamini_hochberg([0.5, 1.5])

    def test_monotone_and_dominates_raw(self):
        rng = random.Random(41)
        for _ in range(50):
            pvals = sorted(rng.random() for _ in range(rng.randint(1, 20)))
            adjusted = benjamini_hochberg(pvals)
            assert all(a >= p - 1e-15 for a, p in zip(adjusted, pvals))
            assert all(adjusted[i] <= adjusted[i + 1] + 1e-15 for i in range(len(adjusted) - 1))
            assert all(0 <= a <= 1 for a in adjusted)

    def test_order_preserved_in_input_order(self):
        pvals = [0.9, 0.001, 0.2, 0.05]
        adjusted = benjamini_hochberg(pvals)
        assert sorted(range(4), key=lambda i: pvals[i]) == sorted(
            range(4), key=lambda i: (adjusted[i], pvals[i])
        )


class TestDunn:
    def test_identical_groups(self):
        results = dunn_test([[1, 1, 2, 2], [1, 1, 2, 2]])
        (i, j, z, p, adj) = results[0]
        assert z == pytest.approx(0.0)
        assert p == 1.0

    def test_hand_worked_pair(self):
        (_, _, z, p, _) = dunn_test([[1, 2, 3], [4, 5, 6]])[0]
        assert z == pytest.approx(1.964, abs=1e-3)
        assert p == pytest.approx(2 * normal_sf(abs(z)))
        assert p == pytest.approx(0.0495, abs=1e-3)

    def test_three_groups_three_pairs(self):
        results = dunn_test([[1, 2], [3, 4], [5, 6]])
        assert [(i, j) for i, j, *_ in results] == [(0, 1), (0, 2), (1, 2)]

    def test_all_tied_zero_variance(self):
        results = dunn_test([[1, 1], [1, 1], [1, 1]])
        assert all(z == 0.0 and p == 1.0 for _, _, z, p, _ in results)

    def test_adjusted_within_family(self):
        results = dunn_test([[1, 2, 3], [4, 5, 6], [1.5, 2.5, 3.5]])
        raw = [p for _, _, _, p, _ in results]
        assert [adj for *_, adj in results] == pytest.approx(benjamini_hochberg(raw))


def synthetic_cohort(seed, n_per_pattern=40, injected_rate=(0.9, 0.05), n_null=10):
    """Two-pattern cohort with one injected association and null side effects."""
    rng = random.Random(seed)
    from medsift.stats import UserSignature

    signatures = []
    null_rates = [rng.uniform(0.1, 0.6) for _ in range(n_null)]
    for g, (pattern, med_id) in enumerate(
        [("hormone_therapy", "med:tamoxifen"), ("chemotherapy", "med:paclitaxel")]
    ):
        for i in range(n_per_pattern):
            side_effects = set()
            if rng.random() < injected_rate[g]:
                side_effects.add("se:injected")
            for k, rate in enumerate(null_rates):
                if rng.random() < rate:
                    side_effects.add(f"se:null{k:02d}")
            signatures.append(
                UserSignature(
                    user_id=f"{pattern}-{i}",
                    medications=frozenset({med_id}),
                    side_effects=frozenset(side_effects),
                    pattern=pattern,
                )
            )
    side_effects = ["se:injected"] + [f"se:null{k:02d}" for k in range(n_null)]
    return signatures, side_effects


class TestAssociationReport:
    def test_injected_association_detected(self):
        signatures, side_effects = synthetic_cohort(seed=0)
        report = association_report(signatures, side_effects, StatsConfig())
        by_se = {r.side_effect: r for r in report.results}
        assert by_se["se:injected"].significant
        assert by_se["se:injected"].pairwise  # post-hoc ran
        assert len(report.results) == len(side_effects)

    def test_absent_side_effect_not_significant(self):
        signatures, _ = synthetic_cohort(seed=1)
        report = association_report(signatures, ["se:never_seen"], StatsConfig())
        r = report.results[0]
        assert r.h == 0.0 and r.p == 1.0 and not r.significant

    def test_single_pattern_skips_tests(self, med_lexicon):
        matches = {f"u{i}": [record("med:tamoxifen", "medication")] for i in range(5)}
        signatures = build_signatures(matches, med_lexicon)
        report = association_report(signatures, ["se:nausea"], StatsConfig())
        assert report.skip_reason == "fewer_than_two_patterns"
        assert report.results == []

    def test_heatmap_prevalences_bounded(self):
        signatures, side_effects = synthetic_cohort(seed=2)
        report = association_report(signatures, side_effects, StatsConfig())
        group_sizes = {p: sum(1 for s in signatures if s.pattern == p) for p in report.patterns}
        for se, row in report.heatmap.items():
            for pattern, value in row.items():
                assert 0.0 <= value <= 1.0
            result = next(r for r in report.results if r.side_effect == se)
            for pattern, vector in result.groups.items():
                assert len(vector) == group_sizes[pattern]

    def test_min_group_size_drops_small_patterns(self):
        signatures, side_effects = synthetic_cohort(seed=3, n_per_pattern=10)
        from medsift.stats import UserSignature

        signatures.append(
            UserSignature(
                user_id="loner",
                medications=frozenset({"med:pembrolizumab"}),
                side_effects=frozenset(),
                pattern="immune_checkpoint_inhibitor",
            )
        )
        report = association_report(signatures, side_effects, StatsConfig(min_group_size=5))
        assert "immune_checkpoint_inhibitor" not in report.patterns
        assert len(report.patterns) == 2

    def test_adjusted_dominates_raw_everywhere(self):
        signatures, side_effects = synthetic_cohort(seed=4)
        report = association_report(signatures, side_effects, StatsConfig())
        for r in report.results:
            assert r.p_adjusted >= r.p - 1e-15
            assert r.significant == (r.p_adjusted < report.alpha)


class TestCsvOutputs:
    def test_files_written_and_deterministic(self, tmp_path):
        from medsift.stats import (
            write_association_csv,
            write_heatmap_csv,
            write_pairwise_csv,
            write_report_json,
        )

        signatures, side_effects = synthetic_cohort(seed=5)
        report = association_report(signatures, side_effects, StatsConfig())
        for writer, name in [
            (write_association_csv, "a.csv"),
            (write_pairwise_csv, "p.csv"),
            (write_heatmap_csv, "h.csv"),
            (write_report_json, "r.json"),
        ]:
            writer(report, tmp_path / name)
            first = (tmp_path / name).read_bytes()
            writer(report, tmp_path / name)
            assert (tmp_path / name).read_bytes() == first
        header = (tmp_path / "h.csv").read_text().splitlines()[0]
        assert header == "side_effect," + ",".join(report.patterns)
