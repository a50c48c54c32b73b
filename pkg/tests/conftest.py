"""Shared fixture builders for the test suite."""

from __future__ import annotations

import random

from faultrank.corpus import (
    BugReportRecord,
    CommitRecord,
    CorpusSnapshot,
    MethodRecord,
    SourceFile,
    method_simple_name,
    resolve_callees_across,
)


def make_method(mid, rev, tokens, api=(), comment=(), callees=(), stmts=1):
    return MethodRecord(
        id=mid,
        revision=rev,
        name=method_simple_name(mid),
        tokens=tuple(tokens),
        api_calls=tuple(api),
        comment=tuple(comment),
        callees=frozenset(callees),
        statement_count=stmts,
    )


def make_snapshot(rev, methods, files=None, reports=(), commits=()):
    if files is None:
        paths = sorted({m.id.split("#", 1)[0] for m in methods})
        files = [SourceFile(p, rev, "") for p in paths]
    return CorpusSnapshot(
        revision=rev,
        files=list(files),
        methods=sorted(methods, key=lambda m: m.id),
        reports=list(reports),
        commits=list(commits),
    )


def random_snapshot_sequence(rnd: random.Random, n_revisions=4, n_methods=6):
    """A random linear history over a small method pool.

    File records are stamped at the revision where their membership last
    changed so snapshots mimic ingest output.
    """
    pool = [f"f{i % 2}.java#m{i}()" for i in range(n_methods)]
    state: dict[str, MethodRecord] = {}
    for mid in rnd.sample(pool, rnd.randrange(1, n_methods + 1)):
        state[mid] = make_method(mid, 0, [f"t{rnd.randrange(8)}" for _ in range(3)])

    snapshots = []
    file_revs: dict[str, int] = {}

    def snap_of(rev, changed_paths):
        for p in sorted({m.id.split("#", 1)[0] for m in state.values()}):
            if p not in file_revs or p in changed_paths:
                file_revs[p] = rev
        for p in list(file_revs):
            if p not in {m.id.split("#", 1)[0] for m in state.values()}:
                del file_revs[p]
        files = [SourceFile(p, file_revs[p], "") for p in sorted(file_revs)]
        return make_snapshot(rev, list(state.values()), files=files)

    snapshots.append(snap_of(0, {m.id.split("#", 1)[0] for m in state.values()}))
    for rev in range(1, n_revisions):
        changed: set[str] = set()
        for _ in range(rnd.randrange(0, 3)):
            op = rnd.choice(["add", "del", "mod"])
            if op == "add":
                absent = [m for m in pool if m not in state]
                if absent:
                    mid = rnd.choice(absent)
                    state[mid] = make_method(
                        mid, rev, [f"t{rnd.randrange(8)}" for _ in range(3)])
                    changed.add(mid.split("#", 1)[0])
            elif op == "del" and state:
                mid = rnd.choice(sorted(state))
                del state[mid]
                changed.add(mid.split("#", 1)[0])
            elif op == "mod" and state:
                mid = rnd.choice(sorted(state))
                state[mid] = make_method(
                    mid, rev, list(state[mid].tokens) + [f"x{rev}"])
                changed.add(mid.split("#", 1)[0])
        snapshots.append(snap_of(rev, changed))
    return snapshots


def make_report(rid, created, tokens=("crash",), fixed=(), project="default"):
    return BugReportRecord(
        id=rid, created_at=created, tokens=tuple(tokens),
        fixed_methods=frozenset(fixed), project=project,
    )


def make_commit(cid, ts, message, revision, changes=()):
    return CommitRecord(
        id=cid, timestamp=ts, message=message,
        revision=revision, changes=tuple(changes),
    )
