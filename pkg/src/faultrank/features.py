"""Multi-revision bug-fixing features.

For a query report, every candidate method of its before-fix revision
gets three scores:

* a collaborative filtering score revised through similar-report and
  similar-method relations (``rcfs``),
* how often the method was fixed before the query (``bffs``),
* how recently it was fixed, as 1/(k+1) over 30-day months (``bfrs``).

All three read only fix events whose commit predates the query report,
so feature computation never leaks future history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .corpus import MODIFICATION, BugReportRecord, Corpus
from .errors import UnresolvedReferenceError
from .simrank import SimilarityStore, SimRankConfig, simrank_bipartite

SECONDS_PER_MONTH = 30 * 24 * 3600


class FixingFeatures(NamedTuple):
    rcfs: float
    bffs: float
    bfrs: float


# ---------------------------------------------------------------------------
# TF-IDF cosine over a fitted document collection
# ---------------------------------------------------------------------------

class TfIdf:
    """Term weighting fitted on a document collection.

    tf is the raw in-document count; idf(t) = 1 + ln(N / df(t)) for terms
    seen in the collection, and 0 otherwise (unseen terms drop out of
    both vectors).
    """

    def __init__(self, documents: Sequence[Sequence[str]]):
        self.n_docs = len(documents)
        df: dict[str, int] = {}
        for doc in documents:
            for term in set(doc):
                df[term] = df.get(term, 0) + 1
        self.idf = {
            t: 1.0 + math.log(self.n_docs / c) for t, c in df.items()
        }

    def vector(self, tokens: Sequence[str]) -> dict[str, float]:
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        return {
            t: c * self.idf[t] for t, c in counts.items() if t in self.idf
        }

    def cosine(self, a: Sequence[str], b: Sequence[str]) -> float:
        va, vb = self.vector(a), self.vector(b)
        if not va or not vb:
            return 0.0
        dot = sum(w * vb[t] for t, w in va.items() if t in vb)
        if dot == 0.0:
            return 0.0
        na = math.sqrt(sum(w * w for w in va.values()))
        nb = math.sqrt(sum(w * w for w in vb.values()))
        return dot / (na * nb)


def cos_sim(a: Sequence[str], b: Sequence[str],
            corpus_docs: Sequence[Sequence[str]]) -> float:
    """Cosine of TF-IDF vectors over the given document collection."""
    return TfIdf(corpus_docs).cosine(a, b)


# ---------------------------------------------------------------------------
# History context
# ---------------------------------------------------------------------------

@dataclass
class FixEvent:
    report_id: str
    report_created: int
    commit_id: str
    commit_ts: int
    methods: frozenset[str]


@dataclass
class HistoryContext:
    """Everything the features need about history strictly before a query."""

    query: BugReportRecord
    bprev: list[str]                      # previous report ids, chronological
    bprev_tokens: dict[str, tuple[str, ...]]
    modified_by: dict[str, frozenset[str]]   # report id -> method ids
    fixers: dict[str, list[str]]             # method id -> report ids
    store: SimilarityStore
    tfidf: TfIdf
    last_fix: dict[str, int]              # method id -> created_at of the
                                          # most recently fixed prior report
    fix_counts: dict[str, int] = field(default_factory=dict)


def build_context(
    query: BugReportRecord,
    reports: dict[str, BugReportRecord],
    events: Iterable[FixEvent],
    simrank_cfg: SimRankConfig | None = None,
) -> HistoryContext:
    """Assemble the pre-query history: only fix events whose commit is
    strictly before the query's creation participate."""
    eligible = sorted(
        (e for e in events if e.commit_ts < query.created_at),
        key=lambda e: (e.commit_ts, e.report_id),
    )
    modified: dict[str, set[str]] = {}
    for e in eligible:
        modified.setdefault(e.report_id, set()).update(e.methods)

    bprev = sorted(modified, key=lambda rid: (reports[rid].created_at, rid))
    modified_by = {rid: frozenset(modified[rid]) for rid in bprev}
    fixers: dict[str, list[str]] = {}
    for rid in bprev:
        for mid in modified_by[rid]:
            fixers.setdefault(mid, []).append(rid)

    links = [(rid, mid) for rid in bprev for mid in sorted(modified_by[rid])]
    store = simrank_bipartite(links, simrank_cfg)

    bprev_tokens = {rid: reports[rid].tokens for rid in bprev}
    tfidf = TfIdf([bprev_tokens[rid] for rid in bprev])

    last_fix: dict[str, int] = {}
    counts: dict[str, int] = {}
    for e in eligible:
        for mid in e.methods:
            last_fix[mid] = reports[e.report_id].created_at
    for mid, rids in fixers.items():
        counts[mid] = len(set(rids))

    return HistoryContext(
        query=query, bprev=bprev, bprev_tokens=bprev_tokens,
        modified_by=modified_by, fixers=fixers, store=store, tfidf=tfidf,
        last_fix=last_fix, fix_counts=counts,
    )


class HistoryService:
    """Builds (and memoizes) per-report history contexts from a corpus."""

    def __init__(self, corpus: Corpus, simrank_cfg: SimRankConfig | None = None):
        self.corpus = corpus
        self.simrank_cfg = simrank_cfg or SimRankConfig()
        self._reports = {r.id: r for r in corpus.reports}
        self._events = self._collect_events(corpus)
        self._cache: dict[str, HistoryContext] = {}

    @staticmethod
    def _collect_events(corpus: Corpus) -> list[FixEvent]:
        events = []
        for rid, cid in corpus.fix_links:
            commit = corpus.commit(cid)
            methods = frozenset(
                mid for mid, kind in commit.changes if kind == MODIFICATION
            )
            if not methods:
                continue
            events.append(FixEvent(
                report_id=rid,
                report_created=corpus.report(rid).created_at,
                commit_id=cid,
                commit_ts=commit.timestamp,
                methods=methods,
            ))
        return sorted(events, key=lambda e: (e.commit_ts, e.commit_id))

    def context(self, report: BugReportRecord) -> HistoryContext:
        ctx = self._cache.get(report.id)
        if ctx is None or ctx.query.created_at != report.created_at:
            ctx = build_context(report, self._reports, self._events,
                                self.simrank_cfg)
            self._cache[report.id] = ctx
        return ctx


# ---------------------------------------------------------------------------
# The three features
# ---------------------------------------------------------------------------

def _step1_revised_similarities(ctx: HistoryContext,
                                cos: dict[str, float]) -> dict[str, float]:
    """Similarity of the query to each previous report: its direct cosine
    plus cosine mass propagated through stored similar-report relations."""
    out: dict[str, float] = {}
    bprev_set = set(ctx.bprev)
    for rid in ctx.bprev:
        acc = cos[rid]
        for other, score in ctx.store.report_neighbors(rid).items():
            if other in bprev_set:
                acc += score * cos[other]
        out[rid] = acc
    return out


def rcfs(
    query: BugReportRecord,
    method_ids: Sequence[str],
    ctx: HistoryContext,
) -> dict[str, float]:
    """Revised collaborative filtering score for each candidate method.

    Step 1 revises the query-to-previous-report cosine similarities with
    stored report-pair scores; step 2 spreads them onto the methods each
    previous report fixed (normalized by fix-set size); step 3 revises the
    per-method scores with stored method-pair similarities.
    """
    cos = {
        rid: ctx.tfidf.cosine(ctx.bprev_tokens[rid], query.tokens)
        for rid in ctx.bprev
    }
    return _rcfs_from_cos(method_ids, ctx, cos)


def _rcfs_from_cos(
    method_ids: Sequence[str],
    ctx: HistoryContext,
    cos: dict[str, float],
) -> dict[str, float]:
    sbn = _step1_revised_similarities(ctx, cos)

    cfs: dict[str, float] = {}
    for mid in method_ids:
        acc = 0.0
        for rid in ctx.fixers.get(mid, ()):
            acc += sbn[rid] / len(ctx.modified_by[rid])
        cfs[mid] = acc

    out: dict[str, float] = {}
    for mid in method_ids:
        acc = cfs[mid]
        for other, score in ctx.store.method_neighbors(mid).items():
            if other in cfs:
                acc += cfs[other] * score
        out[mid] = acc
    return out


def bfrs(method_id: str, ctx: HistoryContext) -> float:
    """Fix recency: 1/(k+1) where k is the number of whole 30-day months
    between the query report and the most recently fixed prior report
    touching the method; 0 when never fixed before."""
    last = ctx.last_fix.get(method_id)
    if last is None:
        return 0.0
    k = max(0, (ctx.query.created_at - last) // SECONDS_PER_MONTH)
    return 1.0 / (k + 1)


def bffs(method_id: str, ctx: HistoryContext) -> float:
    """Fix frequency: number of prior reports whose fix modified any
    revision of the method."""
    return float(ctx.fix_counts.get(method_id, 0))


def compute_features(
    query: BugReportRecord,
    method_ids: Sequence[str],
    ctx: HistoryContext,
) -> dict[str, FixingFeatures]:
    scores = rcfs(query, method_ids, ctx)
    return {
        mid: FixingFeatures(scores[mid], bffs(mid, ctx), bfrs(mid, ctx))
        for mid in method_ids
    }


def features_for_report(
    corpus: Corpus,
    svc: HistoryService,
    report: BugReportRecord,
    revision: int | None = None,
    method_ids: Sequence[str] | None = None,
) -> dict[str, FixingFeatures]:
    """Features for methods of the report's candidate revision (all live
    methods by default)."""
    if revision is None:
        revision = corpus.before_fix_revision(report.id)
        if revision is None:
            revision = corpus.latest_revision
    snap = corpus.snapshot(revision)
    live = {m.id for m in snap.methods}
    if method_ids is None:
        method_ids = sorted(live)
    else:
        missing = set(method_ids) - live
        if missing:
            raise UnresolvedReferenceError(
                f"methods {sorted(missing)} absent from revision {revision}")
    return compute_features(report, method_ids, svc.context(report))


# ---------------------------------------------------------------------------
# Feature dump
# ---------------------------------------------------------------------------

FEATURE_COLUMNS = ("report_id", "method_id", "rcfs", "bffs", "bfrs")


def write_features(
    rows: Iterable[tuple[str, str, FixingFeatures]], path: str | Path
) -> None:
    """One row per (report, method), scores to 9 decimal places."""
    lines = ["# faultrank features v1", "# columns=" + "\t".join(FEATURE_COLUMNS)]
    for rid, mid, f in rows:
        lines.append(
            f"{rid}\t{mid}\t{f.rcfs:.9f}\t{f.bffs:.9f}\t{f.bfrs:.9f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_features(path: str | Path) -> dict[tuple[str, str], FixingFeatures]:
    out: dict[tuple[str, str], FixingFeatures] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        rid, mid, a, b, c = line.split("\t")
        out[(rid, mid)] = FixingFeatures(float(a), float(b), float(c))
    return out
