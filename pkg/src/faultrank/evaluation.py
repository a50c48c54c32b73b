"""Evaluation harness: ranking metrics, significance testing, diagnostic
measurements, and chronological fold planning."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import BugReportRecord, Corpus, method_simple_name
from .errors import EmptyEvaluationError, PlanningError
from .features import TfIdf

# ---------------------------------------------------------------------------
# Rank profiles and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankedResult:
    """One report's ranked candidate ids and its ground-truth methods."""

    ranked: tuple[str, ...]
    truth: frozenset[str]

    def profile(self) -> list[int]:
        """1-based ranks of the truth methods present in the candidates."""
        positions = {mid: i + 1 for i, mid in enumerate(self.ranked)}
        return sorted(positions[mid] for mid in self.truth if mid in positions)


def _profiles(results: Sequence[RankedResult]) -> list[list[int]]:
    if not results:
        raise EmptyEvaluationError("no reports to evaluate")
    profiles = []
    for r in results:
        p = r.profile()
        if not p:
            raise EmptyEvaluationError(
                "every evaluated report needs at least one truth method in "
                "its candidate list; filter unlocatable reports first")
        profiles.append(p)
    return profiles


def top_at_k(results: Sequence[RankedResult], k: int) -> float:
    """Percentage of reports whose first truth method ranks within k."""
    profiles = _profiles(results)
    hits = sum(1 for p in profiles if p[0] <= k)
    return 100.0 * hits / len(profiles)


def mean_average_precision(results: Sequence[RankedResult]) -> float:
    """Mean over reports of average precision over their fixed methods.

    For a report with ranks r_1 < ... < r_p of found truth methods, the
    average precision is (1/|M|) * sum(m / r_m); truth methods missing
    from the candidate list contribute zero but still count in |M|.
    """
    profiles = _profiles(results)
    total = 0.0
    for res, ranks in zip(results, profiles):
        ap = sum((m + 1) / rank for m, rank in enumerate(ranks))
        total += ap / len(res.truth)
    return total / len(profiles)


def mean_reciprocal_rank(results: Sequence[RankedResult]) -> float:
    """Mean over reports of 1 / rank of the first truth method."""
    profiles = _profiles(results)
    return sum(1.0 / p[0] for p in profiles) / len(profiles)


@dataclass
class MetricReport:
    top1: float
    top5: float
    top10: float
    map: float
    mrr: float
    franks: list[int]
    n_reports: int
    n_excluded: int = 0

    @classmethod
    def from_results(cls, results: Sequence[RankedResult],
                     n_excluded: int = 0) -> "MetricReport":
        profiles = _profiles(results)
        return cls(
            top1=top_at_k(results, 1),
            top5=top_at_k(results, 5),
            top10=top_at_k(results, 10),
            map=mean_average_precision(results),
            mrr=mean_reciprocal_rank(results),
            franks=[p[0] for p in profiles],
            n_reports=len(results),
            n_excluded=n_excluded,
        )

    def row(self) -> str:
        return (f"{self.top1:.4f}\t{self.top5:.4f}\t{self.top10:.4f}"
                f"\t{self.map:.4f}\t{self.mrr:.4f}\t{self.n_reports}"
                f"\t{self.n_excluded}")

    def table(self) -> str:
        return (
            f"Top@1  {self.top1:7.3f}%\n"
            f"Top@5  {self.top5:7.3f}%\n"
            f"Top@10 {self.top10:7.3f}%\n"
            f"MAP    {self.map:8.4f}\n"
            f"MRR    {self.mrr:8.4f}\n"
            f"reports {self.n_reports} (excluded {self.n_excluded})"
        )


ROW_HEADER = "top1\ttop5\ttop10\tmap\tmrr\treports\texcluded"


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

@dataclass
class SignificanceResult:
    u: float
    p_value: float
    significant: bool
    sample_a: list[float] = field(default_factory=list)
    sample_b: list[float] = field(default_factory=list)


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks


def _u_from_rank_sum(rank_sum_a: float, n_a: int) -> float:
    return rank_sum_a - n_a * (n_a + 1) / 2.0


def mann_whitney_u(
    sample_a: Sequence[float],
    sample_b: Sequence[float],
    alpha: float = 0.05,
    exact_limit: int = 16,
) -> SignificanceResult:
    """Two-sided rank-sum test with midrank ties.

    The p-value is exact (conditional enumeration of all assignments of
    the pooled values) when n_a + n_b <= exact_limit, otherwise a normal
    approximation with tie correction and continuity correction.
    """
    a, b = list(sample_a), list(sample_b)
    if not a or not b:
        raise ValueError("both samples must be nonempty")
    n_a, n_b = len(a), len(b)
    pooled = a + b
    ranks = _midranks(pooled)
    u_a = _u_from_rank_sum(sum(ranks[:n_a]), n_a)

    if n_a + n_b <= exact_limit:
        p = _exact_two_sided_p(pooled, ranks, n_a, u_a)
    else:
        p = _normal_two_sided_p(ranks, n_a, n_b, u_a)
    return SignificanceResult(u=u_a, p_value=p, significant=p < alpha,
                              sample_a=a, sample_b=b)


def _exact_two_sided_p(pooled, ranks, n_a, u_observed) -> float:
    n = len(pooled)
    n_b = n - n_a
    mu = n_a * n_b / 2.0
    dev = abs(u_observed - mu)
    extreme = 0
    total = 0
    for combo in itertools.combinations(range(n), n_a):
        u = _u_from_rank_sum(sum(ranks[i] for i in combo), n_a)
        if abs(u - mu) >= dev - 1e-12:
            extreme += 1
        total += 1
    return min(1.0, extreme / total)


def _normal_two_sided_p(ranks, n_a, n_b, u_a) -> float:
    n = n_a + n_b
    counts: dict[float, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    tie_term = sum(c ** 3 - c for c in counts.values())
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var == 0:
        return 1.0
    mu = n_a * n_b / 2.0
    z = (abs(u_a - mu) - 0.5) / math.sqrt(var)
    if z < 0:
        z = 0.0
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def tfidf_gap(
    reports: Sequence[BugReportRecord],
    method_tokens: dict[str, Sequence[str]],
    truth: dict[str, Iterable[str]],
    sample_size: int = 100,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean textual similarity of reports to their fixed methods versus a
    seeded sample of irrelevant methods."""
    docs = [list(r.tokens) for r in reports] + [
        list(toks) for _, toks in sorted(method_tokens.items())
    ]
    model = TfIdf(docs)
    rng = np.random.default_rng(seed)
    fixed_sims: list[float] = []
    irrelevant_sims: list[float] = []
    all_methods = sorted(method_tokens)
    for r in reports:
        fixed = [m for m in sorted(truth.get(r.id, ())) if m in method_tokens]
        for mid in fixed:
            fixed_sims.append(model.cosine(r.tokens, method_tokens[mid]))
        pool = [m for m in all_methods if m not in set(fixed)]
        k = min(sample_size, len(pool))
        if k:
            idx = rng.choice(len(pool), size=k, replace=False)
            for i in sorted(idx.tolist()):
                irrelevant_sims.append(
                    model.cosine(r.tokens, method_tokens[pool[i]]))
    mean = lambda xs: sum(xs) / len(xs) if xs else 0.0
    return mean(fixed_sims), mean(irrelevant_sims)


FULLY = "fully"
PARTIALLY = "partially"
NOT = "not"


def categorize_report(
    report: BugReportRecord, fixed_method_ids: Iterable[str]
) -> str:
    """Localization category: does the report text name its faulty methods?

    Method simple names are matched case-insensitively as whole tokens of
    the report."""
    names = [method_simple_name(mid).lower() for mid in fixed_method_ids]
    if not names:
        return NOT
    tokens = set(report.tokens)
    named = sum(1 for n in names if n in tokens)
    if named == len(names):
        return FULLY
    if named > 0:
        return PARTIALLY
    return NOT


# ---------------------------------------------------------------------------
# Fold planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldTask:
    name: str
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


@dataclass
class FoldPlan:
    mode: str
    folds: list[list[str]]
    tasks: list[FoldTask]


def plan_folds(
    reports: Sequence[BugReportRecord],
    mode: str = "within",
    n_folds: int = 10,
    train_folds: int = 3,
    projects: dict[str, str] | None = None,
) -> FoldPlan:
    """Chronological folds and train/test tasks.

    Within-project mode sorts reports by creation time, splits them into
    ``n_folds`` contiguous folds of equal size (+/- 1), and emits one task
    per window: train on folds i..i+2, test on fold i+3.  Cross-project
    mode emits one task per ordered project pair.
    """
    ordered = sorted(reports, key=lambda r: (r.created_at, r.id))
    if mode == "cross":
        labels = projects or {r.id: r.project for r in ordered}
        by_project: dict[str, list[str]] = {}
        for r in ordered:
            by_project.setdefault(labels[r.id], []).append(r.id)
        names = sorted(by_project)
        if len(names) < 2:
            raise PlanningError("cross-project mode needs at least 2 projects")
        tasks = [
            FoldTask(f"{a}->{b}", tuple(by_project[a]), tuple(by_project[b]))
            for a in names for b in names if a != b
        ]
        return FoldPlan("cross", [by_project[n] for n in names], tasks)

    if mode != "within":
        raise PlanningError(f"unknown fold mode {mode!r}")
    if len(ordered) < n_folds:
        raise PlanningError(
            f"need at least {n_folds} reports, got {len(ordered)}")
    ids = [r.id for r in ordered]
    folds = [chunk.tolist() for chunk in np.array_split(np.array(ids), n_folds)]
    tasks = []
    for i in range(n_folds - train_folds):
        train_ids = tuple(
            rid for fold in folds[i:i + train_folds] for rid in fold)
        tasks.append(FoldTask(
            f"task{i + 1}", train_ids, tuple(folds[i + train_folds])))
    return FoldPlan("within", folds, tasks)


def check_leakage_free(plan: FoldPlan, created_at: dict[str, int]) -> bool:
    """Within each task, no training report postdates any test report."""
    for task in plan.tasks:
        if not task.train_ids or not task.test_ids:
            continue
        if max(created_at[r] for r in task.train_ids) > min(
                created_at[r] for r in task.test_ids):
            return False
    return True


# ---------------------------------------------------------------------------
# Protocol runner
# ---------------------------------------------------------------------------

@dataclass
class TaskOutcome:
    task: FoldTask
    metrics: MetricReport
    results: list[RankedResult]


def evaluate_ranked(results: Sequence[RankedResult],
                    n_excluded: int = 0) -> MetricReport:
    return MetricReport.from_results(results, n_excluded)


def run_fold_evaluation(
    corpus: Corpus,
    svc,
    cfg,
    plan: FoldPlan,
    features_map=None,
    not_localized_only: bool = False,
    seed_offset: int = 0,
    log: Callable[[str], None] | None = None,
) -> tuple[list[TaskOutcome], MetricReport | None]:
    """Train and test once per fold task; returns per-task outcomes and
    the mean metric report across tasks.

    Test reports whose fixed methods are all absent from their candidate
    revision are excluded and counted.  With ``not_localized_only`` the
    test set is restricted to reports that do not name their faulty
    methods.
    """
    from dataclasses import replace as dc_replace

    from .model import rank_methods, train

    outcomes: list[TaskOutcome] = []
    for t_index, task in enumerate(plan.tasks):
        task_cfg = dc_replace(cfg, seed=cfg.seed + seed_offset + t_index)
        train_reports = [corpus.report(rid) for rid in task.train_ids]
        result = train(corpus, svc, task_cfg, train_reports,
                       features_map=features_map, log=log)
        ranked_results: list[RankedResult] = []
        excluded = 0
        for rid in task.test_ids:
            report = corpus.report(rid)
            revision = corpus.before_fix_revision(rid)
            if revision is None:
                excluded += 1
                continue
            live = corpus.snapshot(revision).method_map()
            truth = {mid for mid in report.fixed_methods if mid in live}
            if not truth:
                excluded += 1
                continue
            if not_localized_only and categorize_report(report, truth) != NOT:
                excluded += 1
                continue
            preds = rank_methods(report, corpus, svc, result.params,
                                 result.vocab, task_cfg,
                                 features_map=features_map,
                                 revision=revision)
            ranked_results.append(RankedResult(
                ranked=tuple(p.method_id for p in preds),
                truth=frozenset(truth)))
        if not ranked_results:
            if log:
                log(f"{task.name}: no evaluable test reports "
                    f"({excluded} excluded)")
            continue
        metrics = MetricReport.from_results(ranked_results, excluded)
        outcomes.append(TaskOutcome(task, metrics, ranked_results))
        if log:
            log(f"{task.name}: MRR {metrics.mrr:.4f} MAP {metrics.map:.4f} "
                f"Top@10 {metrics.top10:.2f}% ({metrics.n_reports} reports)")

    aggregate = None
    if outcomes:
        aggregate = MetricReport(
            top1=_mean([o.metrics.top1 for o in outcomes]),
            top5=_mean([o.metrics.top5 for o in outcomes]),
            top10=_mean([o.metrics.top10 for o in outcomes]),
            map=_mean([o.metrics.map for o in outcomes]),
            mrr=_mean([o.metrics.mrr for o in outcomes]),
            franks=[f for o in outcomes for f in o.metrics.franks],
            n_reports=sum(o.metrics.n_reports for o in outcomes),
            n_excluded=sum(o.metrics.n_excluded for o in outcomes),
        )
    return outcomes, aggregate


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)
