"""Corpus ingestion: parsing source snapshots into normalized records.

The parser is a deliberately lightweight brace-matching extractor over a
Java-like surface syntax.  It recognizes method bodies, lexical call
sites, the comment attached to a declaration, and top-level statement
counts.  Full grammar support (generics semantics, annotations,
multi-file type resolution) is out of scope; downstream stages only need
the normalized records defined here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import (
    CorpusFormatError,
    MalformedSourceError,
    RevisionOrderError,
)

ADDITION = "addition"
DELETION = "deletion"
MODIFICATION = "modification"
CHANGE_KINDS = (ADDITION, DELETION, MODIFICATION)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceFile:
    """One file at one revision. ``revision`` is the revision at which this
    content first appeared (unchanged files carry their record forward)."""

    path: str
    revision: int
    content: str

    def __post_init__(self):
        if not self.path:
            raise ValueError("SourceFile.path must be nonempty")
        if self.revision < 0:
            raise ValueError("SourceFile.revision must be >= 0")


@dataclass(frozen=True)
class MethodRecord:
    """One method revision.

    ``id`` is stable across revisions: ``<path>#<name>(<params>)``.
    ``revision`` is the revision at which this version of the method first
    appeared.  ``callees`` holds resolved method ids; ``api_calls`` holds
    the raw invocation names in textual order (resolved or external).
    """

    id: str
    revision: int
    name: str
    tokens: tuple[str, ...]
    api_calls: tuple[str, ...]
    comment: tuple[str, ...]
    callees: frozenset[str]
    statement_count: int

    def same_content(self, other: "MethodRecord") -> bool:
        return (
            self.tokens == other.tokens
            and self.api_calls == other.api_calls
            and self.comment == other.comment
        )


@dataclass(frozen=True)
class BugReportRecord:
    id: str
    created_at: int
    tokens: tuple[str, ...]
    fixed_methods: frozenset[str] = frozenset()
    project: str = "default"


@dataclass(frozen=True)
class CommitRecord:
    """A commit producing one revision. ``changes`` lists
    ``(method id, change kind)`` pairs; ``revision`` is the revision the
    commit produced."""

    id: str
    timestamp: int
    message: str
    revision: int
    changes: tuple[tuple[str, str], ...] = ()


@dataclass
class CorpusSnapshot:
    """The materialized state of the repository at one revision."""

    revision: int
    files: list[SourceFile] = field(default_factory=list)
    methods: list[MethodRecord] = field(default_factory=list)
    reports: list[BugReportRecord] = field(default_factory=list)
    commits: list[CommitRecord] = field(default_factory=list)

    def method_map(self) -> dict[str, MethodRecord]:
        return {m.id: m for m in self.methods}


def method_path(method_id: str) -> str:
    """File path component of a method id."""
    return method_id.split("#", 1)[0]


def method_simple_name(method_id: str) -> str:
    tail = method_id.split("#", 1)[-1]
    return tail.split("(", 1)[0]


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"[A-Za-z0-9_]+")
_CAMEL_TAIL = re.compile(r"(.)([A-Z][a-z]+)")
_CAMEL_EDGE = re.compile(r"([a-z0-9])([A-Z])")
_MIN_TOKEN_LEN = 2


def _camel_parts(chunk: str) -> list[str]:
    expanded = _CAMEL_TAIL.sub(r"\1_\2", chunk)
    expanded = _CAMEL_EDGE.sub(r"\1_\2", expanded)
    return [p.lower() for p in expanded.split("_") if p]


def split_compound(word: str) -> list[str]:
    """Split a camelCase / snake_case compound into lowercase parts."""
    return [p for c in word.split("_") if c for p in _camel_parts(c)]


def tokenize(text: str) -> list[str]:
    """Split text into lowercase tokens.

    Words are runs of ``[A-Za-z0-9_]``.  Compound words are split on
    camelCase and snake_case boundaries; the lowercased compound (and any
    snake_case chunk that splits further) is kept ahead of its parts so
    lexical overlap on full names remains possible.  Tokens shorter than
    2 characters are dropped.
    """
    out: list[str] = []
    for word in _WORD_RE.findall(text):
        chunks = [c for c in word.split("_") if c]
        parts = [p for c in chunks for p in _camel_parts(c)]
        whole = word.lower().strip("_")
        if len(parts) > 1 and len(whole) >= _MIN_TOKEN_LEN:
            out.append(whole)
        for chunk in chunks:
            cparts = _camel_parts(chunk)
            lower = chunk.lower()
            if len(cparts) > 1 and lower != whole and len(lower) >= _MIN_TOKEN_LEN:
                out.append(lower)
            out.extend(p for p in cparts if len(p) >= _MIN_TOKEN_LEN)
    return out


# ---------------------------------------------------------------------------
# Method extraction
# ---------------------------------------------------------------------------

_KEYWORDS = {
    "if", "for", "while", "switch", "catch", "synchronized", "return",
    "new", "do", "else", "try", "finally", "throw", "throws", "assert",
    "case", "default", "break", "continue", "instanceof", "this", "super",
}

_CANDIDATE_RE = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")


def _scan_source(path: str, content: str):
    """Blank comments and literals, collect comment spans.

    Returns ``(struct, text, comments)``: ``struct`` has comments and
    string/char literals blanked (for structural scanning), ``text`` has
    only comments blanked (tokens keep literal words), and ``comments``
    is a list of merged ``(start, end, raw)`` spans.
    """
    n = len(content)
    struct = list(content)
    text = list(content)

    def blank(buf, lo, hi):
        for k in range(lo, hi):
            if buf[k] != "\n":
                buf[k] = " "

    comments: list[tuple[int, int, str]] = []
    i = 0
    while i < n:
        c = content[i]
        nxt = content[i + 1] if i + 1 < n else ""
        if c == "/" and nxt == "/":
            j = content.find("\n", i)
            j = n if j < 0 else j
            comments.append((i, j, content[i:j]))
            blank(struct, i, j)
            blank(text, i, j)
            i = j
        elif c == "/" and nxt == "*":
            j = content.find("*/", i + 2)
            j = n if j < 0 else j + 2
            comments.append((i, j, content[i:j]))
            blank(struct, i, j)
            blank(text, i, j)
            i = j
        elif c == '"' or c == "'":
            j = i + 1
            while j < n:
                if content[j] == "\\":
                    j += 2
                    continue
                if content[j] == c:
                    j += 1
                    break
                if content[j] == "\n":
                    break
                j += 1
            else:
                j = n
            blank(struct, i, j)
            i = j
        else:
            i += 1

    # A run of consecutive line comments is one comment.
    merged: list[tuple[int, int, str]] = []
    for start, end, raw in comments:
        if (
            merged
            and raw.startswith("//")
            and merged[-1][2].startswith("//")
            and content[merged[-1][1]:start].strip() == ""
        ):
            ps, _, praw = merged[-1]
            merged[-1] = (ps, end, praw + "\n" + raw)
        else:
            merged.append((start, end, raw))
    return "".join(struct), "".join(text), merged


def _check_braces(path: str, struct: str) -> None:
    stack: list[int] = []
    for i, c in enumerate(struct):
        if c == "{":
            stack.append(i)
        elif c == "}":
            if not stack:
                raise MalformedSourceError(path, i, "unmatched closing brace")
            stack.pop()
    if stack:
        raise MalformedSourceError(path, stack[-1], "unclosed opening brace")


def _match_forward(struct: str, start: int, open_c: str, close_c: str) -> int:
    """Index of the bracket matching ``struct[start]``, or -1."""
    depth = 0
    for i in range(start, len(struct)):
        if struct[i] == open_c:
            depth += 1
        elif struct[i] == close_c:
            depth -= 1
            if depth == 0:
                return i
    return -1


def _comment_tokens(raw: str) -> tuple[str, ...]:
    body = raw
    if body.startswith("/*"):
        body = body[2:]
        if body.endswith("*/"):
            body = body[:-2]
        body = "\n".join(line.lstrip().lstrip("*") for line in body.splitlines())
    else:
        body = "\n".join(
            line.lstrip().lstrip("/") for line in body.splitlines()
        )
    return tuple(tokenize(body))


def _count_statements(struct: str, lo: int, hi: int) -> int:
    """Top-level statements in a body span: each ';' at depth 0 counts one,
    each '{...}' block counts one with else/catch/finally continuations
    absorbed into the same statement."""
    count = 0
    i = lo
    while i < hi:
        c = struct[i]
        if c == ";":
            count += 1
            i += 1
        elif c in "([":
            close = {"(": ")", "[": "]"}[c]
            m = _match_forward(struct, i, c, close)
            i = (m + 1) if m >= 0 else i + 1
        elif c == "{":
            m = _match_forward(struct, i, "{", "}")
            if m < 0:
                break
            count += 1
            i = m + 1
            while True:
                j = i
                while j < hi and struct[j].isspace():
                    j += 1
                word = _CANDIDATE_RE.match(struct, j)
                if word and word.group(0) in ("else", "catch", "finally"):
                    nb = struct.find("{", word.end(), hi)
                    # skip optional "(...)" of catch and chained "else if"
                    if nb < 0:
                        i = word.end()
                        break
                    mb = _match_forward(struct, nb, "{", "}")
                    if mb < 0:
                        i = hi
                        break
                    i = mb + 1
                else:
                    break
        else:
            i += 1
    return count


def _api_calls(struct: str, lo: int, hi: int) -> tuple[str, ...]:
    calls: list[str] = []
    for m in _CANDIDATE_RE.finditer(struct, lo, hi):
        name = m.group(0)
        if name in _KEYWORDS:
            continue
        j = m.end()
        while j < hi and struct[j].isspace():
            j += 1
        if j < hi and struct[j] == "(":
            calls.append(name)
    return tuple(calls)


def extract_methods(file: SourceFile) -> list[MethodRecord]:
    """Extract one record per method body found in a Java-like source file.

    Raises MalformedSourceError when braces do not balance, naming the
    file and the offset of the offending brace.
    """
    struct, text, comments = _scan_source(file.path, file.content)
    _check_braces(file.path, struct)

    records: list[MethodRecord] = []
    cursor = 0
    for m in _CANDIDATE_RE.finditer(struct):
        if m.start() < cursor:
            continue
        name = m.group(0)
        if name in _KEYWORDS:
            continue
        # skip annotation uses and qualified calls
        k = m.start() - 1
        while k >= 0 and struct[k].isspace():
            k -= 1
        if k >= 0 and struct[k] in ".@":
            continue
        # skip "new Foo(...)"
        prev = _prev_word(struct, m.start())
        if prev == "new":
            continue
        j = m.end()
        while j < len(struct) and struct[j].isspace():
            j += 1
        if j >= len(struct) or struct[j] != "(":
            continue
        close_paren = _match_forward(struct, j, "(", ")")
        if close_paren < 0:
            continue
        k = close_paren + 1
        while k < len(struct) and struct[k].isspace():
            k += 1
        if struct.startswith("throws", k):
            k += len("throws")
            while k < len(struct) and struct[k] not in "{;":
                k += 1
        if k >= len(struct) or struct[k] != "{":
            continue
        body_close = _match_forward(struct, k, "{", "}")
        if body_close < 0:
            continue

        boundary = max(
            struct.rfind(";", 0, m.start()),
            struct.rfind("{", 0, m.start()),
            struct.rfind("}", 0, m.start()),
        )
        decl_start = boundary + 1
        attached: tuple[str, ...] = ()
        for cs, ce, raw in reversed(comments):
            if cs > boundary and ce <= m.start():
                attached = _comment_tokens(raw)
                break
            if ce <= boundary:
                break

        params = re.sub(r"\s+", "", file.content[j + 1:close_paren])
        method_id = f"{file.path}#{name}({params})"
        records.append(
            MethodRecord(
                id=method_id,
                revision=file.revision,
                name=name,
                tokens=tuple(tokenize(text[decl_start:body_close + 1])),
                api_calls=_api_calls(struct, k + 1, body_close),
                comment=attached,
                callees=frozenset(),
                statement_count=_count_statements(struct, k + 1, body_close),
            )
        )
        cursor = body_close + 1

    return _resolve_callees(records)


def _prev_word(struct: str, pos: int) -> str:
    k = pos - 1
    while k >= 0 and struct[k].isspace():
        k -= 1
    end = k + 1
    while k >= 0 and (struct[k].isalnum() or struct[k] in "_$"):
        k -= 1
    return struct[k + 1:end]


def _resolve_callees(records: list[MethodRecord]) -> list[MethodRecord]:
    by_name: dict[str, set[str]] = {}
    for r in records:
        by_name.setdefault(r.name, set()).add(r.id)
    resolved = []
    for r in records:
        callees = frozenset(
            mid for call in r.api_calls for mid in by_name.get(call, ())
        )
        resolved.append(replace(r, callees=callees))
    return resolved


def resolve_callees_across(methods: list[MethodRecord]) -> list[MethodRecord]:
    """Re-resolve callees across a whole snapshot (same-file matches first,
    then unique global name matches)."""
    by_name: dict[str, list[str]] = {}
    for m in methods:
        by_name.setdefault(m.name, []).append(m.id)
    out = []
    for m in methods:
        path = method_path(m.id)
        callees = set(m.callees)
        for call in m.api_calls:
            candidates = by_name.get(call, [])
            same_file = [c for c in candidates if method_path(c) == path]
            if same_file:
                callees.update(same_file)
            elif len(candidates) == 1:
                callees.add(candidates[0])
        out.append(replace(m, callees=frozenset(callees)))
    return out


# ---------------------------------------------------------------------------
# Fix-commit linking
# ---------------------------------------------------------------------------

_BUG_ID_PATTERNS = (
    re.compile(r"#(\d+)"),
    re.compile(r"\bbug[\s:#]+(\d+)", re.IGNORECASE),
    re.compile(r"\bfix(?:es|ed)?[\s:#]+(\d+)", re.IGNORECASE),
)
_NUMERIC_RE = re.compile(r"\d+")


def mentioned_bug_ids(message: str) -> set[str]:
    ids: set[str] = set()
    for pat in _BUG_ID_PATTERNS:
        ids.update(m.group(1) for m in pat.finditer(message))
    return ids


def link_fix_commits(
    commits: Iterable[CommitRecord],
    reports: Iterable[BugReportRecord],
) -> list[tuple[str, str]]:
    """Pair reports with the commits that fixed them.

    A commit message must mention the report's numeric id through one of
    the ``#id`` / ``bug id`` / ``fix(es|ed) id`` patterns, and the commit
    must not predate the report.  Each (report, commit) pair is emitted
    once, in (commit timestamp, report id) order.
    """
    by_number: dict[str, list[BugReportRecord]] = {}
    for r in reports:
        m = _NUMERIC_RE.search(r.id)
        if m:
            by_number.setdefault(m.group(0), []).append(r)

    pairs: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for c in sorted(commits, key=lambda c: (c.timestamp, c.id)):
        for num in mentioned_bug_ids(c.message):
            for r in by_number.get(num, ()):
                if c.timestamp >= r.created_at and (r.id, c.id) not in seen:
                    seen.add((r.id, c.id))
                    pairs.append((r.id, c.id))
    return pairs


# ---------------------------------------------------------------------------
# Revision diffing
# ---------------------------------------------------------------------------

def diff_revisions(
    prev: CorpusSnapshot, next: CorpusSnapshot
) -> list[tuple[str, str]]:
    """Method-level change set between two consecutive snapshots."""
    if next.revision != prev.revision + 1:
        raise RevisionOrderError(
            f"expected revision {prev.revision + 1}, got {next.revision}"
        )
    before = prev.method_map()
    after = next.method_map()
    changes: list[tuple[str, str]] = []
    for mid in sorted(set(before) | set(after)):
        if mid not in after:
            changes.append((mid, DELETION))
        elif mid not in before:
            changes.append((mid, ADDITION))
        elif not before[mid].same_content(after[mid]):
            changes.append((mid, MODIFICATION))
    return changes


# ---------------------------------------------------------------------------
# Corpus container and JSONL persistence
# ---------------------------------------------------------------------------

@dataclass
class Corpus:
    snapshots: list[CorpusSnapshot]
    reports: list[BugReportRecord]
    commits: list[CommitRecord]

    def __post_init__(self):
        self._method_versions = {
            (m.id, m.revision): m
            for snap in self.snapshots
            for m in snap.methods
        }
        self._reports_by_id = {r.id: r for r in self.reports}
        self._commits_by_id = {c.id: c for c in self.commits}
        self.fix_links = link_fix_commits(self.commits, self.reports)

    @property
    def latest_revision(self) -> int:
        return self.snapshots[-1].revision if self.snapshots else -1

    def snapshot(self, revision: int) -> CorpusSnapshot:
        for s in self.snapshots:
            if s.revision == revision:
                return s
        raise RevisionOrderError(f"no snapshot for revision {revision}")

    def method_version(self, mid: str, revision: int) -> MethodRecord:
        return self._method_versions[(mid, revision)]

    def report(self, rid: str) -> BugReportRecord:
        return self._reports_by_id[rid]

    def commit(self, cid: str) -> CommitRecord:
        return self._commits_by_id[cid]

    def before_fix_revision(self, rid: str) -> int | None:
        """Revision immediately preceding the report's first fix commit,
        or None when the report has no usable fix."""
        fixes = [
            self._commits_by_id[cid]
            for r, cid in self.fix_links
            if r == rid and cid in self._commits_by_id
        ]
        if not fixes:
            return None
        first = min(fixes, key=lambda c: (c.revision, c.timestamp))
        rev = first.revision - 1
        return rev if rev >= 0 else None


def assemble_corpus(
    snapshots: list[CorpusSnapshot],
    reports: list[BugReportRecord],
    commits: list[CommitRecord],
) -> Corpus:
    """Normalize raw per-revision extractions into a corpus.

    Unchanged records are carried forward so that each method/file version
    is stamped with the revision where it first appeared; commit change
    lists are derived by diffing when not already present; report ground
    truth is derived from fix links.
    """
    snapshots = sorted(snapshots, key=lambda s: s.revision)
    for i, snap in enumerate(snapshots):
        if snap.revision != i:
            raise RevisionOrderError(
                f"snapshot revisions must be consecutive from 0, got {snap.revision} at index {i}"
            )
        snap.methods = resolve_callees_across(
            sorted(snap.methods, key=lambda m: m.id)
        )
        snap.files = sorted(snap.files, key=lambda f: f.path)

    commits = sorted(commits, key=lambda c: (c.revision, c.timestamp, c.id))
    by_rev: dict[int, list[CommitRecord]] = {}
    for c in commits:
        by_rev.setdefault(c.revision, []).append(c)
    for rev, group in by_rev.items():
        if len(group) > 1:
            raise RevisionOrderError(
                f"linear history requires at most one commit per revision, got {len(group)} at revision {rev}"
            )

    # Carry unchanged records forward and attach change sets.
    out_commits: list[CommitRecord] = []
    for i in range(1, len(snapshots)):
        prev, cur = snapshots[i - 1], snapshots[i]
        changes = diff_revisions(prev, cur)
        before = prev.method_map()
        carried = []
        for m in cur.methods:
            old = before.get(m.id)
            if old is not None and old.same_content(m):
                carried.append(old)
            else:
                carried.append(replace(m, revision=cur.revision))
        cur.methods = carried
        prev_files = {f.path: f for f in prev.files}
        cur.files = [
            prev_files[f.path]
            if f.path in prev_files and prev_files[f.path].content == f.content
            else replace(f, revision=cur.revision)
            for f in cur.files
        ]
        for c in by_rev.get(cur.revision, []):
            out_commits.append(
                c if c.changes else replace(c, changes=tuple(changes))
            )
    for c in by_rev.get(0, []):
        out_commits.append(c)

    out_by_rev: dict[int, list[CommitRecord]] = {}
    for c in out_commits:
        out_by_rev.setdefault(c.revision, []).append(c)
    for snap in snapshots:
        snap.commits = out_by_rev.get(snap.revision, [])

    reports = sorted(reports, key=lambda r: (r.created_at, r.id))
    corpus = Corpus(snapshots, reports, out_commits)

    # Ground truth: methods modified by a report's fix commits.
    truth: dict[str, set[str]] = {r.id: set(r.fixed_methods) for r in reports}
    commit_map = {c.id: c for c in out_commits}
    for rid, cid in corpus.fix_links:
        commit = commit_map.get(cid)
        if commit is None:
            continue
        truth[rid].update(
            mid for mid, kind in commit.changes if kind == MODIFICATION
        )
    enriched = [
        replace(r, fixed_methods=frozenset(truth[r.id])) for r in reports
    ]
    return Corpus(corpus.snapshots, enriched, out_commits)


def assign_reports_to_snapshots(corpus: Corpus) -> None:
    """Attach each report to the snapshot current when it was filed."""
    commit_times = sorted(
        (c.timestamp, c.revision) for c in corpus.commits if c.revision > 0
    )
    for snap in corpus.snapshots:
        snap.reports = []
    if not corpus.snapshots:
        return
    revs = [s.revision for s in corpus.snapshots]
    for r in corpus.reports:
        rev = 0
        for ts, crev in commit_times:
            if ts <= r.created_at:
                rev = max(rev, crev)
            else:
                break
        rev = min(rev, revs[-1])
        corpus.snapshot(rev).reports.append(r)


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the normalized JSONL corpus: one object per line, tagged by
    ``kind``; method and file records are written once per version."""
    path = Path(path)
    lines: list[str] = []
    seen_files: set[tuple[str, int]] = set()
    seen_methods: set[tuple[str, int]] = set()
    for snap in corpus.snapshots:
        for f in snap.files:
            key = (f.path, f.revision)
            if key in seen_files:
                continue
            seen_files.add(key)
            lines.append(json.dumps(
                {"kind": "file", "path": f.path, "revision": f.revision,
                 "content": f.content},
                sort_keys=True))
        for m in snap.methods:
            key = (m.id, m.revision)
            if key in seen_methods:
                continue
            seen_methods.add(key)
            lines.append(json.dumps(
                {"kind": "method", "id": m.id, "revision": m.revision,
                 "name": m.name, "tokens": list(m.tokens),
                 "api_calls": list(m.api_calls),
                 "comment": list(m.comment),
                 "callees": sorted(m.callees),
                 "statement_count": m.statement_count},
                sort_keys=True))
    for r in corpus.reports:
        lines.append(json.dumps(
            {"kind": "report", "id": r.id, "created_at": r.created_at,
             "tokens": list(r.tokens),
             "fixed_methods": sorted(r.fixed_methods),
             "project": r.project},
            sort_keys=True))
    for c in sorted(corpus.commits, key=lambda c: (c.revision, c.id)):
        lines.append(json.dumps(
            {"kind": "commit", "id": c.id, "timestamp": c.timestamp,
             "message": c.message, "revision": c.revision,
             "changes": [list(ch) for ch in c.changes]},
            sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_corpus(path: str | Path) -> Corpus:
    """Load a normalized JSONL corpus and materialize its snapshots."""
    path = Path(path)
    files: dict[tuple[str, int], SourceFile] = {}
    methods: dict[tuple[str, int], MethodRecord] = {}
    reports: list[BugReportRecord] = []
    commits: list[CommitRecord] = []

    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                kind = obj["kind"]
                if kind == "file":
                    rec = SourceFile(obj["path"], obj["revision"], obj["content"])
                    files[(rec.path, rec.revision)] = rec
                elif kind == "method":
                    rec = MethodRecord(
                        id=obj["id"], revision=obj["revision"],
                        name=obj["name"], tokens=tuple(obj["tokens"]),
                        api_calls=tuple(obj["api_calls"]),
                        comment=tuple(obj["comment"]),
                        callees=frozenset(obj["callees"]),
                        statement_count=obj["statement_count"])
                    methods[(rec.id, rec.revision)] = rec
                elif kind == "report":
                    reports.append(BugReportRecord(
                        id=obj["id"], created_at=obj["created_at"],
                        tokens=tuple(obj["tokens"]),
                        fixed_methods=frozenset(obj["fixed_methods"]),
                        project=obj.get("project", "default")))
                elif kind == "commit":
                    commits.append(CommitRecord(
                        id=obj["id"], timestamp=obj["timestamp"],
                        message=obj["message"], revision=obj["revision"],
                        changes=tuple(
                            (mid, ck) for mid, ck in obj["changes"])))
                else:
                    raise ValueError(f"unknown kind {kind!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(str(path), line_no, str(exc)) from exc

    return _materialize(files, methods, reports, commits)


def _materialize(
    files: dict[tuple[str, int], SourceFile],
    methods: dict[tuple[str, int], MethodRecord],
    reports: list[BugReportRecord],
    commits: list[CommitRecord],
) -> Corpus:
    """Reconstruct per-revision snapshots from change-point records."""
    commits = sorted(commits, key=lambda c: (c.revision, c.timestamp, c.id))
    max_rev = 0
    for (_, rev) in list(files) + list(methods):
        max_rev = max(max_rev, rev)
    for c in commits:
        max_rev = max(max_rev, c.revision)

    commit_by_rev: dict[int, list[CommitRecord]] = {}
    for c in commits:
        commit_by_rev.setdefault(c.revision, []).append(c)

    live_methods: dict[str, MethodRecord] = {
        m.id: m for (mid, rev), m in methods.items() if rev == 0
    }
    live_files: dict[str, SourceFile] = {
        f.path: f for (p, rev), f in files.items() if rev == 0
    }
    snapshots: list[CorpusSnapshot] = []
    for rev in range(max_rev + 1):
        if rev > 0:
            for c in commit_by_rev.get(rev, []):
                for mid, kind in c.changes:
                    if kind == DELETION:
                        live_methods.pop(mid, None)
                    else:
                        rec = methods.get((mid, rev))
                        if rec is None:
                            raise CorpusFormatError(
                                "<corpus>", 0,
                                f"missing method record ({mid}, {rev})")
                        live_methods[mid] = rec
            live_paths = {method_path(mid) for mid in live_methods}
            for (p, frev), f in files.items():
                if frev == rev:
                    live_files[p] = f
            for p in list(live_files):
                if p not in live_paths:
                    del live_files[p]
        snapshots.append(CorpusSnapshot(
            revision=rev,
            files=sorted(live_files.values(), key=lambda f: f.path),
            methods=sorted(live_methods.values(), key=lambda m: m.id),
            commits=commit_by_rev.get(rev, []),
        ))
    corpus = Corpus(snapshots, sorted(reports, key=lambda r: (r.created_at, r.id)), commits)
    assign_reports_to_snapshots(corpus)
    return corpus


# ---------------------------------------------------------------------------
# Raw-directory ingestion
# ---------------------------------------------------------------------------

def ingest_raw(root: str | Path) -> Corpus:
    """Ingest a raw corpus directory.

    Layout: ``revisions/<n>/`` trees of source files, plus
    ``reports.jsonl`` (id, created_at, summary, description, project?) and
    ``commits.jsonl`` (id, timestamp, message, revision).
    """
    root = Path(root)
    rev_root = root / "revisions"
    if not rev_root.is_dir():
        raise CorpusFormatError(str(root), 0, "missing revisions/ directory")

    rev_dirs = sorted(
        (int(p.name), p) for p in rev_root.iterdir() if p.is_dir() and p.name.isdigit()
    )
    snapshots: list[CorpusSnapshot] = []
    extraction_cache: dict[tuple[str, str], list[MethodRecord]] = {}
    for idx, (rev_no, rev_dir) in enumerate(rev_dirs):
        if rev_no != idx:
            raise RevisionOrderError(
                f"revision directories must be consecutive from 0, found {rev_no}")
        snap = CorpusSnapshot(revision=idx)
        for fp in sorted(rev_dir.rglob("*")):
            if not fp.is_file():
                continue
            rel = fp.relative_to(rev_dir).as_posix()
            content = fp.read_text(encoding="utf-8")
            snap.files.append(SourceFile(rel, idx, content))
            key = (rel, content)
            if key not in extraction_cache:
                extraction_cache[key] = extract_methods(
                    SourceFile(rel, idx, content))
            snap.methods.extend(
                replace(m, revision=idx) for m in extraction_cache[key])
        snapshots.append(snap)

    reports = list(_read_report_lines(root / "reports.jsonl"))
    commits = list(_read_commit_lines(root / "commits.jsonl"))
    return assemble_corpus(snapshots, reports, commits)


def _read_report_lines(path: Path) -> Iterator[BugReportRecord]:
    if not path.exists():
        return
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                text = obj.get("summary", "") + " " + obj.get("description", "")
                tokens = obj.get("tokens") or tokenize(text)
                yield BugReportRecord(
                    id=str(obj["id"]), created_at=int(obj["created_at"]),
                    tokens=tuple(tokens),
                    project=obj.get("project", "default"))
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(str(path), line_no, str(exc)) from exc


def _read_commit_lines(path: Path) -> Iterator[CommitRecord]:
    if not path.exists():
        return
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield CommitRecord(
                    id=str(obj["id"]), timestamp=int(obj["timestamp"]),
                    message=obj["message"], revision=int(obj["revision"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(str(path), line_no, str(exc)) from exc


def corpus_stats(corpus: Corpus, short_threshold: int = 5) -> dict[str, int]:
    """Entity counts plus short-method statistics for the latest revision."""
    version_count = len({(m.id, m.revision)
                         for s in corpus.snapshots for m in s.methods})
    latest = corpus.snapshots[-1].methods if corpus.snapshots else []
    return {
        "revisions": len(corpus.snapshots),
        "files": len({(f.path, f.revision)
                      for s in corpus.snapshots for f in s.files}),
        "method_versions": version_count,
        "methods_latest": len(latest),
        "short_methods_latest": sum(
            1 for m in latest if m.statement_count < short_threshold),
        "reports": len(corpus.reports),
        "commits": len(corpus.commits),
        "fix_links": len(corpus.fix_links),
    }
