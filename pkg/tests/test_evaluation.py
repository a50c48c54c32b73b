import itertools
import random

import pytest

from faultrank.errors import EmptyEvaluationError, PlanningError
from faultrank.evaluation import (
    FULLY,
    NOT,
    PARTIALLY,
    FoldPlan,
    MetricReport,
    RankedResult,
    categorize_report,
    check_leakage_free,
    mann_whitney_u,
    mean_average_precision,
    mean_reciprocal_rank,
    plan_folds,
    tfidf_gap,
    top_at_k,
)

from conftest import make_report


def result_from_ranks(truth_ranks, n_candidates=20):
    """Build a RankedResult whose truth methods sit at the given 1-based
    ranks."""
    ranked = [f"filler{i}" for i in range(n_candidates)]
    truth = set()
    for r in truth_ranks:
        name = f"truth{r}"
        ranked[r - 1] = name
        truth.add(name)
    return RankedResult(tuple(ranked), frozenset(truth))


# ---------------------------------------------------------------------------
# Top@k
# ---------------------------------------------------------------------------

def test_top_at_k_first_hit_at_three():
    results = [result_from_ranks([3])]
    assert top_at_k(results, 1) == 0.0
    assert top_at_k(results, 5) == 100.0


def test_top_at_k_all_rank_one():
    results = [result_from_ranks([1]) for _ in range(4)]
    assert top_at_k(results, 1) == 100.0


def test_top_at_k_hand_counted_fixture():
    results = [result_from_ranks([r]) for r in (1, 2, 7, 12)]
    assert top_at_k(results, 5) == 50.0
    assert top_at_k(results, 10) == 75.0


def test_empty_evaluation_error():
    with pytest.raises(EmptyEvaluationError):
        top_at_k([], 5)
    with pytest.raises(EmptyEvaluationError):
        top_at_k([RankedResult(("a",), frozenset({"zz"}))], 5)


# ---------------------------------------------------------------------------
# MAP
# ---------------------------------------------------------------------------

def test_map_single_truth_rank_one():
    assert mean_average_precision([result_from_ranks([1])]) == 1.0


def test_map_two_truths_ranks_one_and_three():
    got = mean_average_precision([result_from_ranks([1, 3])])
    assert got == pytest.approx(5 / 6)


def test_map_mean_over_reports():
    results = [result_from_ranks([1]), result_from_ranks([2])]
    assert mean_average_precision(results) == pytest.approx(0.75)


# ---------------------------------------------------------------------------
# MRR
# ---------------------------------------------------------------------------

def test_mrr_rank_one():
    assert mean_reciprocal_rank([result_from_ranks([1])]) == 1.0


def test_mrr_rank_two():
    assert mean_reciprocal_rank([result_from_ranks([2])]) == 0.5


def test_mrr_mean_of_reciprocals():
    results = [result_from_ranks([1]), result_from_ranks([4])]
    assert mean_reciprocal_rank(results) == pytest.approx(0.625)


# ---------------------------------------------------------------------------
# metric monotonicity
# ---------------------------------------------------------------------------

def improve_one_rank(rnd, profiles):
    """Swap one truth method upward into a free slot (other ranks fixed)."""
    report_idx = rnd.randrange(len(profiles))
    ranks = profiles[report_idx]
    i = rnd.randrange(len(ranks))
    occupied = set(ranks)
    candidates = [r for r in range(1, ranks[i]) if r not in occupied]
    if not candidates:
        return profiles
    new = sorted(ranks[:i] + [rnd.choice(candidates)] + ranks[i + 1:])
    out = list(profiles)
    out[report_idx] = new
    return out


def test_metric_monotonicity_under_random_improvements():
    rnd = random.Random(123)
    for _ in range(200):
        profiles = [
            sorted(rnd.sample(range(1, 15), rnd.randrange(1, 4)))
            for _ in range(rnd.randrange(1, 5))
        ]
        improved = improve_one_rank(rnd, profiles)
        base = [result_from_ranks(p) for p in profiles]
        better = [result_from_ranks(p) for p in improved]
        assert top_at_k(better, 5) >= top_at_k(base, 5)
        assert top_at_k(better, 10) >= top_at_k(base, 10)
        assert mean_average_precision(better) >= mean_average_precision(base) - 1e-12
        assert mean_reciprocal_rank(better) >= mean_reciprocal_rank(base) - 1e-12


def test_perfect_ranking_gives_ones():
    results = [result_from_ranks([1, 2, 3]), result_from_ranks([1, 2])]
    report = MetricReport.from_results(results)
    assert report.top1 == 100.0 and report.top5 == 100.0
    assert report.map == pytest.approx(1.0)
    assert report.mrr == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

def test_mwu_complete_separation_u_zero():
    res = mann_whitney_u([1.0, 2.0], [3.0, 4.0])
    assert res.u == 0.0


def test_mwu_identical_samples():
    res = mann_whitney_u([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert res.p_value == pytest.approx(1.0)
    assert not res.significant


def test_mwu_exact_p_for_three_vs_three():
    res = mann_whitney_u([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert res.p_value == pytest.approx(0.1, abs=1e-12)


def mwu_enumeration_oracle(a, b):
    """Exhaustive two-sided p over label assignments, with U computed by
    direct pair counting (independent of the rank-sum route)."""
    def u_stat(xs, ys):
        u = 0.0
        for x in xs:
            for y in ys:
                if x > y:
                    u += 1.0
                elif x == y:
                    u += 0.5
        return u

    pooled = list(a) + list(b)
    n_a = len(a)
    mu = n_a * len(b) / 2.0
    dev = abs(u_stat(a, b) - mu)
    extreme = total = 0
    for combo in itertools.combinations(range(len(pooled)), n_a):
        xs = [pooled[i] for i in combo]
        ys = [pooled[i] for i in range(len(pooled)) if i not in set(combo)]
        if abs(u_stat(xs, ys) - mu) >= dev - 1e-12:
            extreme += 1
        total += 1
    return min(1.0, extreme / total)


def test_mwu_matches_enumeration_all_small_sizes():
    rnd = random.Random(77)
    for n_a in range(1, 6):
        for n_b in range(1, 6):
            if n_a + n_b > 10:
                continue
            for _ in range(3):
                # draw from a small value set so ties happen often
                a = [float(rnd.randrange(4)) for _ in range(n_a)]
                b = [float(rnd.randrange(4)) for _ in range(n_b)]
                res = mann_whitney_u(a, b)
                assert res.p_value == pytest.approx(
                    mwu_enumeration_oracle(a, b), abs=1e-12), (a, b)


def test_mwu_symmetry():
    rnd = random.Random(5)
    for _ in range(20):
        a = [float(rnd.randrange(6)) for _ in range(rnd.randrange(1, 5))]
        b = [float(rnd.randrange(6)) for _ in range(rnd.randrange(1, 5))]
        r1 = mann_whitney_u(a, b)
        r2 = mann_whitney_u(b, a)
        assert r1.u == pytest.approx(len(a) * len(b) - r2.u)
        assert r1.p_value == pytest.approx(r2.p_value, abs=1e-12)


def test_mwu_normal_approximation_path():
    a = [float(i) for i in range(12)]
    b = [float(i) + 0.5 for i in range(12)]
    res = mann_whitney_u(a, b)
    assert 0.0 <= res.p_value <= 1.0


def test_mwu_empty_sample_error():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


# ---------------------------------------------------------------------------
# tfidf gap + categorization
# ---------------------------------------------------------------------------

def test_tfidf_gap_identical_pair():
    report = make_report("r1", 0, tokens=("cache", "flush"))
    methods = {"m1": ["cache", "flush"], "m2": ["parse", "tree"]}
    fixed_mean, _ = tfidf_gap([report], methods, {"r1": ["m1"]})
    assert fixed_mean == pytest.approx(1.0)


def test_tfidf_gap_disjoint_vocabulary():
    report = make_report("r1", 0, tokens=("alpha", "beta"))
    methods = {"m1": ["gamma"], "m2": ["delta"]}
    fixed_mean, irr_mean = tfidf_gap([report], methods, {"r1": ["m1"]})
    assert fixed_mean == 0.0 and irr_mean == 0.0


def test_categorize_fully_partially_not():
    fixed = ["A.java#openFile()", "A.java#closeFile()"]
    both = make_report("r", 0, tokens=("openfile", "closefile", "broken"))
    one = make_report("r", 0, tokens=("openfile", "broken"))
    none = make_report("r", 0, tokens=("broken", "crash"))
    assert categorize_report(both, fixed) == FULLY
    assert categorize_report(one, fixed) == PARTIALLY
    assert categorize_report(none, fixed) == NOT


# ---------------------------------------------------------------------------
# fold planning
# ---------------------------------------------------------------------------

def _reports(n, project="default"):
    return [make_report(f"r{i:03d}", 1000 + i * 50, project=project)
            for i in range(n)]


def test_plan_folds_forty_reports():
    plan = plan_folds(_reports(40))
    assert len(plan.folds) == 10
    assert all(len(f) == 4 for f in plan.folds)
    assert len(plan.tasks) == 7
    assert len(plan.tasks[0].train_ids) == 12
    assert len(plan.tasks[0].test_ids) == 4


def test_plan_folds_sorts_unordered_input():
    reports = _reports(20)
    shuffled = list(reversed(reports))
    plan = plan_folds(shuffled)
    created = {r.id: r.created_at for r in reports}
    assert check_leakage_free(plan, created)
    flat = [rid for fold in plan.folds for rid in fold]
    assert flat == sorted(flat, key=lambda rid: created[rid])


def test_plan_folds_cross_project_disjoint():
    reports = _reports(5, "alpha") + [
        make_report(f"q{i}", 2000 + i, project="beta") for i in range(5)
    ]
    plan = plan_folds(reports, mode="cross")
    assert len(plan.tasks) == 2
    for task in plan.tasks:
        assert set(task.train_ids).isdisjoint(task.test_ids)


def test_plan_folds_too_few_reports():
    with pytest.raises(PlanningError):
        plan_folds(_reports(9))


def test_plan_folds_leakage_freedom_property():
    rnd = random.Random(99)
    for _ in range(20):
        n = rnd.randrange(10, 60)
        reports = [
            make_report(f"r{i}", rnd.randrange(0, 10_000)) for i in range(n)
        ]
        plan = plan_folds(reports)
        created = {r.id: r.created_at for r in reports}
        assert check_leakage_free(plan, created)
