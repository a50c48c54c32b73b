"""The code revision graph.

Entities are files, methods, bug reports, and commits.  Code entities are
versioned: a node is keyed by (kind, id, revision) and carries a deleted
mark.  A modification tombstones the old version and links it to the new
one with an ``update`` edge, so at most one version per id is live at any
time while history stays queryable.  Relations: ``has`` (file contains
method), ``call`` (method invokes method), ``modify`` (commit modified a
method version), ``fix`` (commit fixes report), ``update`` (version
chain).  Similar-to relations live in an attached SimilarityStore.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import (
    ADDITION,
    DELETION,
    MODIFICATION,
    Corpus,
    CorpusSnapshot,
    diff_revisions,
    method_path,
)
from .errors import GraphStoreError, RevisionOrderError, UnresolvedReferenceError
from .simrank import SimilarityStore, SimRankConfig, simrank_bipartite

FILE = "file"
METHOD = "method"
REPORT = "report"
COMMIT = "commit"

HAS = "has"
CALL = "call"
MODIFY = "modify"
FIX = "fix"
UPDATE = "update"

NodeKey = tuple[str, str, int | None]


@dataclass
class Node:
    kind: str
    id: str
    revision: int | None
    deleted: bool = False

    @property
    def key(self) -> NodeKey:
        return (self.kind, self.id, self.revision)


@dataclass(frozen=True)
class Edge:
    kind: str
    src: NodeKey
    dst: NodeKey


@dataclass
class RevisionGraph:
    nodes: dict[NodeKey, Node] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    latest_revision: int = -1
    similarity: SimilarityStore | None = None

    def __post_init__(self):
        self._live: dict[tuple[str, str], int] = {}
        self._out: dict[NodeKey, list[Edge]] = {}
        for key, node in self.nodes.items():
            if node.kind in (FILE, METHOD) and not node.deleted:
                self._live[(node.kind, node.id)] = node.revision
        for e in self.edges:
            self._out.setdefault(e.src, []).append(e)

    # -- mutation -----------------------------------------------------------

    def add_node(self, node: Node) -> Node:
        self.nodes[node.key] = node
        if node.kind in (FILE, METHOD) and not node.deleted:
            self._live[(node.kind, node.id)] = node.revision
        return node

    def add_edge(self, kind: str, src: NodeKey, dst: NodeKey) -> None:
        if src not in self.nodes or dst not in self.nodes:
            missing = src if src not in self.nodes else dst
            raise UnresolvedReferenceError(f"edge {kind} references missing node {missing}")
        edge = Edge(kind, src, dst)
        self.edges.append(edge)
        self._out.setdefault(src, []).append(edge)

    def tombstone(self, kind: str, id: str) -> Node:
        rev = self._live.get((kind, id))
        if rev is None:
            raise UnresolvedReferenceError(f"no live {kind} {id!r}")
        node = self.nodes[(kind, id, rev)]
        node.deleted = True
        del self._live[(kind, id)]
        return node

    # -- queries ------------------------------------------------------------

    def live_revision(self, kind: str, id: str) -> int | None:
        return self._live.get((kind, id))

    def has_entity(self, kind: str, id: str) -> bool:
        return any(k == kind and i == id for k, i, _ in self.nodes)

    def versions(self, kind: str, id: str) -> list[Node]:
        return sorted(
            (n for n in self.nodes.values() if n.kind == kind and n.id == id),
            key=lambda n: n.revision,
        )

    def out_edges(self, key: NodeKey, kind: str | None = None) -> list[Edge]:
        edges = self._out.get(key, [])
        return [e for e in edges if kind is None or e.kind == kind]

    def edges_of_kind(self, kind: str) -> list[Edge]:
        return [e for e in self.edges if e.kind == kind]

    def signature(self):
        """Canonical (node multiset, edge multiset) for equality checks."""
        nodes = sorted(
            (n.kind, n.id, -1 if n.revision is None else n.revision, n.deleted)
            for n in self.nodes.values()
        )
        def ek(e: Edge):
            return (e.kind,
                    (e.src[0], e.src[1], -1 if e.src[2] is None else e.src[2]),
                    (e.dst[0], e.dst[1], -1 if e.dst[2] is None else e.dst[2]))
        return nodes, sorted(ek(e) for e in self.edges), self.latest_revision

    def same_structure(self, other: "RevisionGraph") -> bool:
        return self.signature() == other.signature()


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _method_key(snapshot_rec) -> NodeKey:
    return (METHOD, snapshot_rec.id, snapshot_rec.revision)


def _add_call_edges(graph: RevisionGraph, record) -> None:
    src = (METHOD, record.id, record.revision)
    for callee in sorted(record.callees):
        rev = graph.live_revision(METHOD, callee)
        if rev is not None:
            graph.add_edge(CALL, src, (METHOD, callee, rev))


def _add_report_nodes(graph: RevisionGraph, snapshot: CorpusSnapshot) -> None:
    for r in snapshot.reports:
        key = (REPORT, r.id, None)
        if key not in graph.nodes:
            graph.add_node(Node(REPORT, r.id, None))


def _add_commits(
    graph: RevisionGraph,
    snapshot: CorpusSnapshot,
    fix_links: Iterable[tuple[str, str]],
) -> None:
    commit_ids = set()
    for c in snapshot.commits:
        commit_ids.add(c.id)
        key = (COMMIT, c.id, None)
        if key not in graph.nodes:
            graph.add_node(Node(COMMIT, c.id, None))
        for mid, kind in c.changes:
            if kind != MODIFICATION:
                continue
            rev = graph.live_revision(METHOD, mid)
            if rev is not None:
                graph.add_edge(MODIFY, key, (METHOD, mid, rev))
    for rid, cid in fix_links:
        if cid in commit_ids:
            rkey = (REPORT, rid, None)
            if rkey not in graph.nodes:
                raise UnresolvedReferenceError(
                    f"fix link references unknown report {rid!r}")
            graph.add_edge(FIX, (COMMIT, cid, None), rkey)


def _apply_initial(
    graph: RevisionGraph,
    snapshot: CorpusSnapshot,
    fix_links: Iterable[tuple[str, str]],
) -> None:
    for m in snapshot.methods:
        graph.add_node(Node(METHOD, m.id, m.revision))
    for f in snapshot.files:
        fkey = graph.add_node(Node(FILE, f.path, f.revision)).key
        for m in snapshot.methods:
            if method_path(m.id) == f.path:
                graph.add_edge(HAS, fkey, (METHOD, m.id, m.revision))
    for m in snapshot.methods:
        _add_call_edges(graph, m)
    _add_report_nodes(graph, snapshot)
    _add_commits(graph, snapshot, fix_links)
    graph.latest_revision = snapshot.revision


def apply_revision(
    graph: RevisionGraph,
    changes: list[tuple[str, str]],
    snapshot: CorpusSnapshot,
    fix_links: Iterable[tuple[str, str]] = (),
) -> RevisionGraph:
    """Merge one revision's change set into the graph.

    Additions insert new method nodes, deletions tombstone, modifications
    tombstone the old version and chain it to the new node with an
    ``update`` edge.  Files containing changed methods are re-versioned
    the same way.  ``changes`` must come from diff_revisions against the
    graph's latest revision.
    """
    if snapshot.revision != graph.latest_revision + 1:
        raise RevisionOrderError(
            f"graph is at revision {graph.latest_revision}, "
            f"snapshot has revision {snapshot.revision}")
    rev = snapshot.revision
    methods = snapshot.method_map()

    for mid, kind in changes:
        if kind in (DELETION, MODIFICATION):
            if graph.live_revision(METHOD, mid) is None:
                raise UnresolvedReferenceError(
                    f"{kind} of unknown method {mid!r}")
        elif kind == ADDITION:
            if mid not in methods:
                raise UnresolvedReferenceError(
                    f"addition of method {mid!r} absent from snapshot")
        else:
            raise UnresolvedReferenceError(f"unknown change kind {kind!r}")

    new_records = []
    for mid, kind in changes:
        if kind == DELETION:
            graph.tombstone(METHOD, mid)
        elif kind == MODIFICATION:
            old = graph.tombstone(METHOD, mid)
            rec = methods[mid]
            node = graph.add_node(Node(METHOD, mid, rec.revision))
            graph.add_edge(UPDATE, old.key, node.key)
            new_records.append(rec)
        else:
            rec = methods[mid]
            graph.add_node(Node(METHOD, mid, rec.revision))
            new_records.append(rec)

    # Re-version files whose method set changed; tombstone vanished files.
    snapshot_paths = {f.path: f for f in snapshot.files}
    touched_paths = sorted({method_path(mid) for mid, _ in changes})
    for path in touched_paths:
        if path not in snapshot_paths:
            if graph.live_revision(FILE, path) is not None:
                graph.tombstone(FILE, path)
            continue
        old_rev = graph.live_revision(FILE, path)
        if old_rev is not None:
            graph.nodes[(FILE, path, old_rev)].deleted = True
        node = graph.add_node(Node(FILE, path, rev))
        if old_rev is not None:
            graph.add_edge(UPDATE, (FILE, path, old_rev), node.key)
        for m in snapshot.methods:
            if method_path(m.id) == path:
                graph.add_edge(HAS, node.key, (METHOD, m.id, m.revision))

    for rec in new_records:
        _add_call_edges(graph, rec)

    _add_report_nodes(graph, snapshot)
    _add_commits(graph, snapshot, fix_links)
    graph.latest_revision = rev
    return graph


def build_graph(
    snapshots: list[CorpusSnapshot],
    fix_links: list[tuple[str, str]] | None = None,
) -> RevisionGraph:
    """Build the full graph by applying every revision in order."""
    fix_links = fix_links or []
    graph = RevisionGraph()
    if not snapshots:
        if fix_links:
            raise UnresolvedReferenceError("fix links reference an empty corpus")
        return graph
    snapshots = sorted(snapshots, key=lambda s: s.revision)
    _apply_initial(graph, snapshots[0], fix_links)
    for prev, cur in zip(snapshots, snapshots[1:]):
        apply_revision(graph, diff_revisions(prev, cur), cur, fix_links)

    known_commits = {i for k, i, _ in graph.nodes if k == COMMIT}
    known_reports = {i for k, i, _ in graph.nodes if k == REPORT}
    for rid, cid in fix_links:
        if cid not in known_commits or rid not in known_reports:
            raise UnresolvedReferenceError(
                f"dangling fix link ({rid!r}, {cid!r})")
    return graph


def build_graph_from_corpus(corpus: Corpus) -> RevisionGraph:
    from .corpus import assign_reports_to_snapshots

    assign_reports_to_snapshots(corpus)
    return build_graph(corpus.snapshots, corpus.fix_links)


# ---------------------------------------------------------------------------
# Fix-derived links and similarity
# ---------------------------------------------------------------------------

def report_method_links(graph: RevisionGraph) -> list[tuple[str, str]]:
    """(report id, method id) pairs connected through fix and modify edges."""
    links: set[tuple[str, str]] = set()
    for fix in graph.edges_of_kind(FIX):
        commit_key, report_key = fix.src, fix.dst
        for mod in graph.out_edges(commit_key, MODIFY):
            links.add((report_key[1], mod.dst[1]))
    return sorted(links)


def simrank(graph: RevisionGraph, cfg: SimRankConfig | None = None) -> SimilarityStore:
    """Similar-to relations over the graph's fix history."""
    return simrank_bipartite(report_method_links(graph), cfg)


def neighbors(
    graph: RevisionGraph, method_id: str, sim_limit: int | None = None
) -> tuple[list[str], list[str]]:
    """Relevant methods for expansion: (similar methods ranked by stored
    score, callees of the newest revision)."""
    if not graph.has_entity(METHOD, method_id):
        raise UnresolvedReferenceError(f"unknown method {method_id!r}")
    sim: list[str] = []
    if graph.similarity is not None:
        scored = graph.similarity.method_neighbors(method_id)
        ranked = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))
        sim = [mid for mid, _ in ranked]
        if sim_limit is not None:
            sim = sim[:sim_limit]
    rev = graph.live_revision(METHOD, method_id)
    if rev is None:
        rev = graph.versions(METHOD, method_id)[-1].revision
    callees = sorted(
        {e.dst[1] for e in graph.out_edges((METHOD, method_id, rev), CALL)}
    )
    return sim, callees


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_graph(graph: RevisionGraph, path: str | Path) -> None:
    """Line-oriented store: one JSON record per node/edge/similarity entry,
    in canonical order so identical graphs serialize identically."""
    lines = [json.dumps({"t": "graph", "v": 1,
                         "latest_revision": graph.latest_revision})]
    for n in sorted(graph.nodes.values(),
                    key=lambda n: (n.kind, n.id, -1 if n.revision is None else n.revision)):
        lines.append(json.dumps(
            {"t": "node", "kind": n.kind, "id": n.id,
             "rev": n.revision, "deleted": n.deleted}))
    def ek(e: Edge):
        return (e.kind,
                (e.src[0], e.src[1], -1 if e.src[2] is None else e.src[2]),
                (e.dst[0], e.dst[1], -1 if e.dst[2] is None else e.dst[2]))
    for e in sorted(graph.edges, key=ek):
        lines.append(json.dumps(
            {"t": "edge", "kind": e.kind,
             "src": list(e.src), "dst": list(e.dst)}))
    if graph.similarity is not None:
        for (a, b), s in sorted(graph.similarity.report_pairs.items()):
            lines.append(json.dumps({"t": "simb", "a": a, "b": b, "s": s}))
        for (a, b), s in sorted(graph.similarity.method_pairs.items()):
            lines.append(json.dumps({"t": "simm", "a": a, "b": b, "s": s}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> RevisionGraph:
    path = Path(path)
    graph = RevisionGraph()
    report_pairs: dict[tuple[str, str], float] = {}
    method_pairs: dict[tuple[str, str], float] = {}
    saw_sim = False
    saw_header = False
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                t = obj["t"]
                if t == "graph":
                    graph.latest_revision = obj["latest_revision"]
                    saw_header = True
                elif t == "node":
                    graph.add_node(Node(obj["kind"], obj["id"],
                                        obj["rev"], obj["deleted"]))
                elif t == "edge":
                    src = tuple(obj["src"])
                    dst = tuple(obj["dst"])
                    graph.add_edge(obj["kind"], src, dst)
                elif t == "simb":
                    report_pairs[(obj["a"], obj["b"])] = obj["s"]
                    saw_sim = True
                elif t == "simm":
                    method_pairs[(obj["a"], obj["b"])] = obj["s"]
                    saw_sim = True
                else:
                    raise ValueError(f"unknown record type {t!r}")
            except (KeyError, TypeError, ValueError,
                    UnresolvedReferenceError) as exc:
                raise GraphStoreError(f"{path}:{line_no}: {exc}") from exc
    if not saw_header:
        raise GraphStoreError(f"{path}: missing graph header record")
    if saw_sim:
        graph.similarity = SimilarityStore(report_pairs, method_pairs)
    return graph
