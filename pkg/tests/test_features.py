import math
import random

import pytest

from faultrank.corpus import MODIFICATION
from faultrank.errors import UnresolvedReferenceError
from faultrank.features import (
    SECONDS_PER_MONTH,
    FixEvent,
    FixingFeatures,
    HistoryContext,
    HistoryService,
    TfIdf,
    _rcfs_from_cos,
    bffs,
    bfrs,
    build_context,
    compute_features,
    cos_sim,
    features_for_report,
    rcfs,
    read_features,
    write_features,
)
from faultrank.simrank import SimilarityStore

from conftest import make_report


# ---------------------------------------------------------------------------
# TF-IDF cosine
# ---------------------------------------------------------------------------

def test_cosine_identical_lists():
    docs = [["cache", "flush"], ["cache", "load"], ["parse", "tree"]]
    assert cos_sim(["cache", "flush"], ["cache", "flush"], docs) == pytest.approx(1.0)


def test_cosine_disjoint_vocabularies():
    docs = [["cache", "flush"], ["parse", "tree"]]
    assert cos_sim(["cache"], ["tree"], docs) == 0.0


def test_cosine_three_document_fixture():
    # independent arithmetic: tf = count, idf = 1 + ln(N/df)
    docs = [["cache", "flush"], ["cache", "load"], ["parse", "tree"]]
    idf_cache = 1 + math.log(3 / 2)
    idf_other = 1 + math.log(3 / 1)
    dot = idf_cache * idf_cache
    norm = math.sqrt(idf_cache ** 2 + idf_other ** 2)
    expected = dot / (norm * norm)
    got = cos_sim(["cache", "flush"], ["cache", "load"], docs)
    assert got == pytest.approx(expected, abs=1e-12)


def test_cosine_unseen_terms_drop_out():
    docs = [["cache"], ["cache", "load"]]
    # 'zebra' never appeared in the fitted collection
    assert cos_sim(["zebra"], ["cache"], docs) == 0.0
    assert cos_sim(["cache", "zebra"], ["cache"], docs) == pytest.approx(1.0)


def test_tfidf_all_zero_vector():
    model = TfIdf([["cache"]])
    assert model.cosine([], ["cache"]) == 0.0


# ---------------------------------------------------------------------------
# Context fixtures
# ---------------------------------------------------------------------------

DAY = 24 * 3600


def ctx_from(query, prev_reports, events, sim_store=None):
    reports = {r.id: r for r in prev_reports}
    reports[query.id] = query
    ctx = build_context(query, reports, events)
    if sim_store is not None:
        ctx.store = sim_store
    return ctx


def test_rcfs_empty_history():
    query = make_report("q", 100 * DAY, tokens=("cache", "miss"))
    ctx = ctx_from(query, [], [])
    out = rcfs(query, ["m1", "m2"], ctx)
    assert out == {"m1": 0.0, "m2": 0.0}


def test_rcfs_single_previous_report_hand_trace():
    # one previous report fixing only m1, cosine 0.5, no similar-to entries:
    # step 1 gives 0.5, step 2 divides by one method, step 3 adds nothing.
    query = make_report("q", 100 * DAY, tokens=("cache", "miss"))
    prev = make_report("b1", 10 * DAY, tokens=("cache", "hit"))
    events = [FixEvent("b1", prev.created_at, "c1", 11 * DAY,
                       frozenset({"m1"}))]
    ctx = ctx_from(query, [prev], events)
    cos = {"b1": 0.5}
    out = _rcfs_from_cos(["m1", "m2"], ctx, cos)
    assert out["m1"] == pytest.approx(0.5, abs=1e-12)
    assert out["m2"] == 0.0


def rcfs_oracle(method_ids, bprev, modified_by, sb_pairs, sm_pairs, cos):
    """Literal re-implementation of the three-step procedure using plain
    nested loops over explicit pair maps."""
    def sb(i, j):
        return sb_pairs.get((i, j), sb_pairs.get((j, i), 0.0))

    def sm(i, j):
        return sm_pairs.get((i, j), sm_pairs.get((j, i), 0.0))

    sbn = {}
    for bi in bprev:
        total = cos[bi]
        for bj in bprev:
            total += sb(bi, bj) * cos[bj]
        sbn[bi] = total

    cfs = {}
    for mi in method_ids:
        b_mi = [bj for bj in bprev if mi in modified_by[bj]]
        cfs[mi] = sum(sbn[bj] / len(modified_by[bj]) for bj in b_mi)

    out = {}
    for mi in method_ids:
        total = cfs[mi]
        for mj in method_ids:
            if mj != mi:
                total += cfs[mj] * sm(mi, mj)
        out[mi] = total
    return out


def test_rcfs_matches_bruteforce_oracle():
    rnd = random.Random(17)
    for _ in range(20):
        n_reports = rnd.randrange(1, 6)
        n_methods = rnd.randrange(1, 7)
        method_ids = [f"m{i}" for i in range(n_methods)]
        bprev = [f"b{i}" for i in range(n_reports)]
        prev_reports = [make_report(b, (i + 1) * DAY) for i, b in enumerate(bprev)]
        modified_by = {}
        events = []
        for i, b in enumerate(bprev):
            fixed = frozenset(rnd.sample(method_ids, rnd.randrange(1, n_methods + 1)))
            modified_by[b] = fixed
            events.append(FixEvent(b, (i + 1) * DAY, f"c{i}",
                                   (i + 1) * DAY + 100, fixed))
        sb_pairs = {}
        for i in range(n_reports):
            for j in range(i + 1, n_reports):
                if rnd.random() < 0.5:
                    sb_pairs[(f"b{i}", f"b{j}")] = rnd.random() * 0.8
        sm_pairs = {}
        for i in range(n_methods):
            for j in range(i + 1, n_methods):
                if rnd.random() < 0.5:
                    sm_pairs[(f"m{i}", f"m{j}")] = rnd.random() * 0.8
        cos = {b: rnd.random() for b in bprev}

        query = make_report("q", 1000 * DAY)
        ctx = ctx_from(query, prev_reports, events,
                       sim_store=SimilarityStore(dict(sb_pairs), dict(sm_pairs)))
        got = _rcfs_from_cos(method_ids, ctx, cos)
        expected = rcfs_oracle(method_ids, bprev, modified_by,
                               sb_pairs, sm_pairs, cos)
        for mid in method_ids:
            assert got[mid] == pytest.approx(expected[mid], abs=1e-9)


def test_rcfs_monotone_in_cosine():
    rnd = random.Random(23)
    for _ in range(10):
        bprev = [f"b{i}" for i in range(4)]
        prev_reports = [make_report(b, (i + 1) * DAY) for i, b in enumerate(bprev)]
        method_ids = [f"m{i}" for i in range(5)]
        events = [
            FixEvent(b, (i + 1) * DAY, f"c{i}", (i + 1) * DAY + 1,
                     frozenset(rnd.sample(method_ids, rnd.randrange(1, 4))))
            for i, b in enumerate(bprev)
        ]
        sb = {("b0", "b1"): 0.3, ("b2", "b3"): 0.6}
        sm = {("m0", "m1"): 0.4}
        query = make_report("q", 100 * DAY)
        ctx = ctx_from(query, prev_reports, events,
                       sim_store=SimilarityStore(sb, sm))
        cos = {b: rnd.random() for b in bprev}
        base = _rcfs_from_cos(method_ids, ctx, cos)
        bumped_report = rnd.choice(bprev)
        cos2 = dict(cos)
        cos2[bumped_report] = cos[bumped_report] + 0.25
        bumped = _rcfs_from_cos(method_ids, ctx, cos2)
        for mid in method_ids:
            assert bumped[mid] >= base[mid] - 1e-12


# ---------------------------------------------------------------------------
# bfrs / bffs
# ---------------------------------------------------------------------------

def _single_fix_ctx(query_at, report_at, commit_at, mid="m1"):
    query = make_report("q", query_at)
    prev = make_report("b1", report_at)
    events = [FixEvent("b1", report_at, "c1", commit_at, frozenset({mid}))]
    return ctx_from(query, [prev], events)


def test_bfrs_same_month():
    ctx = _single_fix_ctx(10 * DAY, 5 * DAY, 6 * DAY)
    assert bfrs("m1", ctx) == 1.0


def test_bfrs_never_fixed():
    ctx = _single_fix_ctx(10 * DAY, 5 * DAY, 6 * DAY)
    assert bfrs("m2", ctx) == 0.0


def test_bfrs_three_months():
    ctx = _single_fix_ctx(100 * DAY, 100 * DAY - 3 * SECONDS_PER_MONTH,
                          100 * DAY - 3 * SECONDS_PER_MONTH + 1)
    assert bfrs("m1", ctx) == pytest.approx(0.25)


def test_bfrs_boundary_is_one_iff_same_month():
    ctx = _single_fix_ctx(5 * DAY + SECONDS_PER_MONTH, 5 * DAY, 5 * DAY + 1)
    assert bfrs("m1", ctx) == pytest.approx(0.5)


def test_bffs_counts_prior_reports():
    query = make_report("q", 100 * DAY)
    prevs = [make_report(f"b{i}", (i + 1) * DAY) for i in range(3)]
    events = [
        FixEvent(f"b{i}", (i + 1) * DAY, f"c{i}", (i + 1) * DAY + 1,
                 frozenset({"m1"}))
        for i in range(3)
    ]
    ctx = ctx_from(query, prevs, events)
    assert bffs("m1", ctx) == 3.0
    assert bffs("m2", ctx) == 0.0


def test_future_fix_not_counted():
    query = make_report("q", 10 * DAY)
    prev = make_report("b1", 5 * DAY)
    # commit lands after the query report was filed
    events = [FixEvent("b1", 5 * DAY, "c1", 20 * DAY, frozenset({"m1"}))]
    ctx = ctx_from(query, [prev], events)
    assert bffs("m1", ctx) == 0.0
    assert bfrs("m1", ctx) == 0.0
    assert rcfs(query, ["m1"], ctx) == {"m1": 0.0}


def test_bffs_nondecreasing_along_timeline():
    prevs = [make_report(f"b{i}", (i + 1) * DAY) for i in range(5)]
    events = [
        FixEvent(f"b{i}", (i + 1) * DAY, f"c{i}", (i + 1) * DAY + 1,
                 frozenset({"m1"}))
        for i in range(5)
    ]
    reports = {r.id: r for r in prevs}
    values = []
    for t in range(0, 10):
        query = make_report("q", t * DAY + DAY // 2)
        reports["q"] = query
        ctx = build_context(query, reports, events)
        values.append(bffs("m1", ctx))
    assert values == sorted(values)


# ---------------------------------------------------------------------------
# service + dump plumbing
# ---------------------------------------------------------------------------

def test_feature_dump_roundtrip(tmp_path):
    rows = [
        ("r1", "m1", FixingFeatures(1.23456789123, 3.0, 0.25)),
        ("r1", "m2", FixingFeatures(0.0, 0.0, 0.0)),
    ]
    path = tmp_path / "features.tsv"
    write_features(rows, path)
    text = path.read_text()
    assert "1.234567891\t3.000000000\t0.250000000" in text
    loaded = read_features(path)
    assert loaded[("r1", "m1")].rcfs == pytest.approx(1.234567891)
    assert loaded[("r1", "m2")] == FixingFeatures(0.0, 0.0, 0.0)


def test_features_for_report_validates_methods(tiny_corpus):
    corpus = tiny_corpus
    svc = HistoryService(corpus)
    report = corpus.reports[-1]
    with pytest.raises(UnresolvedReferenceError):
        features_for_report(corpus, svc, report,
                            method_ids=["nope#zzz()"])


@pytest.fixture
def tiny_corpus():
    from faultrank.corpus import assemble_corpus
    from conftest import make_commit, make_method, make_snapshot

    m1 = make_method("A.java#f()", 0, ["cache", "flush"])
    m2 = make_method("A.java#g()", 0, ["parse", "tree"])
    m1b = make_method("A.java#f()", 1, ["cache", "flush", "fix1"])
    r1 = make_report("1", 5 * DAY, tokens=("cache", "bug"))
    r2 = make_report("2", 50 * DAY, tokens=("cache", "crash"))
    c1 = make_commit("c1", 6 * DAY, "fix #1", 1)
    s0 = make_snapshot(0, [m1, m2])
    s1 = make_snapshot(1, [m1b, m2])
    return assemble_corpus([s0, s1], [r1, r2], [c1])


def test_history_service_end_to_end(tiny_corpus):
    corpus = tiny_corpus
    svc = HistoryService(corpus)
    r2 = corpus.report("2")
    feats = features_for_report(corpus, svc, r2, revision=1)
    assert feats["A.java#f()"].bffs == 1.0
    assert feats["A.java#f()"].bfrs == pytest.approx(1.0 / 2)  # 45 days -> k=1
    assert feats["A.java#f()"].rcfs > 0.0
    assert feats["A.java#g()"] == FixingFeatures(0.0, 0.0, 0.0)
