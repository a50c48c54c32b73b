"""Structural similarity over the bipartite report-method fix history.

Two bug reports are similar when the methods their fixes touched are
similar, and vice versa.  Scores decay by a constant factor per hop, are
refined over a fixed number of alternating sweeps, and only off-diagonal
pairs above an emission threshold are retained.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class SimRankConfig:
    decay: float = 0.8
    iterations: int = 5
    emit_threshold: float = 0.001

    def __post_init__(self):
        if not (0.0 < self.decay < 1.0):
            raise ValueError("decay must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.emit_threshold < 0.0:
            raise ValueError("emit_threshold must be >= 0")


def _canon(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class SimilarityStore:
    """Sparse symmetric similarity maps for report pairs and method pairs.

    Diagonal entries are 1 by definition and are not stored; only emitted
    off-diagonal pairs appear in the maps.
    """

    report_pairs: dict[tuple[str, str], float] = field(default_factory=dict)
    method_pairs: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        self._report_adj: dict[str, dict[str, float]] = {}
        self._method_adj: dict[str, dict[str, float]] = {}
        for (a, b), s in self.report_pairs.items():
            self._report_adj.setdefault(a, {})[b] = s
            self._report_adj.setdefault(b, {})[a] = s
        for (a, b), s in self.method_pairs.items():
            self._method_adj.setdefault(a, {})[b] = s
            self._method_adj.setdefault(b, {})[a] = s

    def report_sim(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return self.report_pairs.get(_canon(a, b), 0.0)

    def method_sim(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return self.method_pairs.get(_canon(a, b), 0.0)

    def report_neighbors(self, rid: str) -> dict[str, float]:
        """Stored off-diagonal similarities involving a report."""
        return self._report_adj.get(rid, {})

    def method_neighbors(self, mid: str) -> dict[str, float]:
        return self._method_adj.get(mid, {})


def simrank_bipartite(
    links: Iterable[tuple[str, str]], cfg: SimRankConfig | None = None
) -> SimilarityStore:
    """Run the iterative similarity computation over (report, method) links.

    Step 1 initializes diagonals to 1 and everything else to 0.  Step 2
    runs exactly ``cfg.iterations`` sweeps: report scores are refreshed
    from the current method scores, then method scores from the refreshed
    report scores; pairs where either side has no links keep score 0.
    Step 3 emits off-diagonal pairs above ``cfg.emit_threshold``.
    """
    cfg = cfg or SimRankConfig()
    link_set = sorted(set(links))
    if not link_set:
        return SimilarityStore()

    reports = sorted({r for r, _ in link_set})
    methods = sorted({m for _, m in link_set})
    r_idx = {r: i for i, r in enumerate(reports)}
    m_idx = {m: i for i, m in enumerate(methods)}

    inc = np.zeros((len(reports), len(methods)))
    for r, m in link_set:
        inc[r_idx[r], m_idx[m]] = 1.0
    p_reports = inc / inc.sum(axis=1, keepdims=True)
    p_methods = inc.T / inc.T.sum(axis=1, keepdims=True)

    s_reports = np.eye(len(reports))
    s_methods = np.eye(len(methods))
    for _ in range(cfg.iterations):
        s_reports = cfg.decay * (p_reports @ s_methods @ p_reports.T)
        np.fill_diagonal(s_reports, 1.0)
        s_methods = cfg.decay * (p_methods @ s_reports @ p_methods.T)
        np.fill_diagonal(s_methods, 1.0)

    def emit(matrix: np.ndarray, names: list[str]) -> dict[tuple[str, str], float]:
        out: dict[tuple[str, str], float] = {}
        ii, jj = np.nonzero(np.triu(matrix, k=1) > cfg.emit_threshold)
        for i, j in zip(ii.tolist(), jj.tolist()):
            out[_canon(names[i], names[j])] = float(matrix[i, j])
        return out

    return SimilarityStore(emit(s_reports, reports), emit(s_methods, methods))
