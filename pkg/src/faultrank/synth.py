"""Synthetic corpus generator.

Produces a raw corpus directory (revision trees plus report and commit
JSONL files) with planted signals: reports share topic words with the
method their fix touches, hotspot methods are fixed repeatedly so
frequency/recency history is informative, and a slice of hotspots is
short with topic-bearing callees so expansion has something to retrieve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DAY = 24 * 3600
HOUR = 3600
EPOCH0 = 1_600_000_000


@dataclass(frozen=True)
class SynthSpec:
    n_reports: int = 200
    n_methods: int = 300
    n_topics: int = 40
    n_files: int = 12
    n_unfixed: int = 5
    n_junk: int = 6
    words_per_topic: int = 8
    hotspot_prob: float = 0.8
    second_fix_prob: float = 0.15
    name_mention_prob: float = 0.3
    report_gap: int = 2 * DAY
    seed: int = 11


_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"


def _make_words(rng: np.random.Generator, count: int,
                taken: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        n_syll = int(rng.integers(2, 4))
        w = "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))]
            + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(n_syll)
        )
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


@dataclass
class _Method:
    name: str
    file_idx: int
    topic: int
    short: bool
    words: list[str]
    callee: str | None
    marker: str
    junk: bool = False

    def render(self) -> str:
        lines = [f"    /* {self.words[0]} {self.words[1]} handling */"]
        lines.append(f"    int {self.name}(int arg) {{")
        if self.short:
            if self.callee:
                lines.append(f"        {self.callee}(arg);")
            lines.append(f"        state = {self.marker};")
        else:
            for i, w in enumerate(self.words):
                lines.append(f"        a{i} = {w};")
            if self.callee:
                lines.append(f"        {self.callee}(a0);")
            lines.append(f"        emit(a1);")
            lines.append(f"        state = {self.marker};")
        lines.append("    }")
        return "\n".join(lines)


class SynthCorpus:
    def __init__(self, spec: SynthSpec | None = None):
        self.spec = spec or SynthSpec()
        self._build()

    def _build(self):
        spec = self.spec
        rng = np.random.default_rng(spec.seed)
        taken: set[str] = {"int", "arg", "state", "emit"}
        topic_words = [
            _make_words(rng, spec.words_per_topic, taken)
            for _ in range(spec.n_topics)
        ]
        noise_words = _make_words(rng, 60, taken)
        name_words = _make_words(rng, 70, taken)

        name_pairs = [(a, b) for a in name_words for b in name_words if a != b]
        rng.shuffle(name_pairs)
        next_pair = iter(name_pairs)

        def fresh_name() -> str:
            a, b = next(next_pair)
            return f"{a}{b.capitalize()}"

        methods: list[_Method] = []
        hotspots: list[_Method] = []
        workers: dict[int, _Method] = {}
        total = spec.n_methods + spec.n_junk
        for topic in range(spec.n_topics):
            file_idx = topic % spec.n_files
            words = topic_words[topic]
            worker = _Method(
                name=fresh_name(), file_idx=file_idx, topic=topic,
                short=False, words=list(words[:3]), callee=None, marker="rev0")
            workers[topic] = worker
            methods.append(worker)
            short = topic % 3 == 0
            hotspot = _Method(
                name=fresh_name(), file_idx=file_idx, topic=topic,
                short=short,
                words=list(words[3:6]) if not short else list(words[3:5]),
                callee=worker.name, marker="rev0")
            hotspots.append(hotspot)
            methods.append(hotspot)
        fill_topic = 0
        while len(methods) < total:
            topic = fill_topic % spec.n_topics
            fill_topic += 1
            words = topic_words[topic]
            pick = [words[int(i)] for i in rng.integers(0, len(words), size=3)]
            methods.append(_Method(
                name=fresh_name(), file_idx=topic % spec.n_files, topic=topic,
                short=bool(rng.random() < 0.2), words=pick,
                callee=workers[topic].name if rng.random() < 0.5 else None,
                marker="rev0"))
        junk_candidates = [m for m in methods if m not in hotspots
                           and m not in workers.values()]
        for m in junk_candidates[-spec.n_junk:]:
            m.junk = True

        self.rng = rng
        self.topic_words = topic_words
        self.noise_words = noise_words
        self.methods = methods
        self.hotspots = hotspots
        self.workers = workers

    # -- timeline ---------------------------------------------------------

    def events(self):
        """Yield ('report', ...) / ('commit', ...) records in time order."""
        spec = self.spec
        rng = self.rng
        by_topic: dict[int, list[_Method]] = {}
        for m in self.methods:
            if not m.junk:
                by_topic.setdefault(m.topic, []).append(m)

        junk = [m for m in self.methods if m.junk]
        cleanup_slots = set()
        if junk:
            step = max(1, spec.n_reports // (len(junk) + 1))
            cleanup_slots = {step * (i + 1) for i in range(len(junk))}

        revision = 0
        events = []
        junk_iter = iter(junk)
        for k in range(spec.n_reports):
            topic = int(rng.integers(spec.n_topics))
            if rng.random() < spec.hotspot_prob:
                target = self.hotspots[topic]
            else:
                pool = [m for m in by_topic[topic] if m is not self.hotspots[topic]]
                target = pool[int(rng.integers(len(pool)))]
            fixed = [target]
            if rng.random() < spec.second_fix_prob:
                extra = [m for m in by_topic[topic] if m not in fixed]
                if extra:
                    fixed.append(extra[int(rng.integers(len(extra)))])

            created = EPOCH0 + k * spec.report_gap + (k % 5) * HOUR
            rid = str(k + 1)
            words = self.topic_words[topic]
            n_topic_words = int(rng.integers(4, 7))
            summary = [words[int(i)] for i in
                       rng.integers(0, len(words), size=n_topic_words)]
            if rng.random() < spec.name_mention_prob:
                summary.append(target.name)
            descr = [self.noise_words[int(i)] for i in
                     rng.integers(0, len(self.noise_words), size=3)]
            events.append(("report", rid, created,
                           " ".join(summary), " ".join(descr)))

            revision += 1
            events.append(("commit", f"c{k + 1:04d}", created + DAY,
                           f"Fixed bug {rid}", revision,
                           [m.name for m in fixed]))
            if k + 1 in cleanup_slots:
                victim = next(junk_iter, None)
                if victim is not None:
                    revision += 1
                    events.append(("commit", f"x{k + 1:04d}",
                                   created + DAY + HOUR,
                                   "routine maintenance sweep", revision,
                                   ["DELETE:" + victim.name]))

        last_created = EPOCH0 + spec.n_reports * spec.report_gap
        for j in range(spec.n_unfixed):
            rid = str(900 + j)
            created = last_created + (j + 1) * DAY
            topic = int(rng.integers(spec.n_topics))
            words = self.topic_words[topic]
            summary = [words[int(i)] for i in rng.integers(0, len(words), size=4)]
            events.append(("report", rid, created, " ".join(summary),
                           "no fix landed"))
        return events

    # -- rendering --------------------------------------------------------

    def render_files(self, live: dict[str, _Method]) -> dict[str, str]:
        files: dict[str, str] = {}
        for idx in range(self.spec.n_files):
            members = [m for m in self.methods
                       if m.file_idx == idx and m.name in live]
            body = "\n\n".join(m.render() for m in members)
            files[f"mod{idx:02d}.java"] = (
                f"// module {idx} routines\n"
                f"class Module{idx} {{\n{body}\n}}\n")
        return files


def generate(out_dir: str | Path, spec: SynthSpec | None = None) -> Path:
    """Write the raw corpus (revision trees, reports.jsonl, commits.jsonl)."""
    corpus = SynthCorpus(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    live = {m.name: m for m in corpus.methods}
    fix_counts = {m.name: 0 for m in corpus.methods}

    def write_revision(rev: int):
        rev_dir = out / "revisions" / f"{rev:03d}"
        rev_dir.mkdir(parents=True, exist_ok=True)
        for fname, content in sorted(corpus.render_files(live).items()):
            (rev_dir / fname).write_text(content, encoding="utf-8")

    write_revision(0)
    reports_lines = []
    commits_lines = []
    for event in corpus.events():
        if event[0] == "report":
            _, rid, created, summary, descr = event
            reports_lines.append(json.dumps(
                {"id": rid, "created_at": created, "summary": summary,
                 "description": descr, "project": "synth"},
                sort_keys=True))
        else:
            _, cid, ts, message, revision, names = event
            for name in names:
                if name.startswith("DELETE:"):
                    live.pop(name[len("DELETE:"):], None)
                else:
                    fix_counts[name] += 1
                    method = live[name]
                    method.marker = f"rev{fix_counts[name]}x{method.file_idx}"
            write_revision(revision)
            commits_lines.append(json.dumps(
                {"id": cid, "timestamp": ts, "message": message,
                 "revision": revision}, sort_keys=True))

    (out / "reports.jsonl").write_text(
        "\n".join(reports_lines) + "\n", encoding="utf-8")
    (out / "commits.jsonl").write_text(
        "\n".join(commits_lines) + "\n", encoding="utf-8")
    return out


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(
        description="generate a synthetic fault-localization corpus")
    parser.add_argument("out_dir")
    parser.add_argument("--reports", type=int, default=200)
    parser.add_argument("--methods", type=int, default=300)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args(argv)
    spec = SynthSpec(n_reports=args.reports, n_methods=args.methods,
                     seed=args.seed)
    path = generate(args.out_dir, spec)
    print(f"wrote synthetic corpus to {path}")


if __name__ == "__main__":
    main()
