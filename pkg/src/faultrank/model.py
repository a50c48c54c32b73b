"""The fault ranking model.

A method is represented by three views (token sequence, API invocation
sequence, comment).  Each view and the bug report pass through their own
bidirectional recurrent encoder; a soft attention referenced on the
report fuses the views into one method vector.  Short methods are
enriched from relevant methods through a second attention plus a gated
interpolation.  The method/report match score is fused with the three
bug-fixing features by a small MLP ending in a two-class softmax; the
positive-class probability ranks candidates.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .corpus import BugReportRecord, Corpus, MethodRecord
from .errors import (
    CheckpointError,
    DegenerateInputError,
    NumericError,
    UnresolvedReferenceError,
)
from .features import FixingFeatures, HistoryContext, HistoryService

# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    cap_tokens: int = 200
    cap_api: int = 50
    cap_comment: int = 50
    cap_report: int = 300
    short_threshold: int = 5
    max_similar: int = 8
    max_callees: int = 8
    negatives_per_report: int = 300
    learning_rate: float = 0.05
    epochs: int = 2
    seed: int = 0
    fusion_hidden: int = 8
    grad_clip: float = 5.0
    # ablation switches: a disabled input is zeroed everywhere
    use_rcfs: bool = True
    use_bffs: bool = True
    use_bfrs: bool = True
    use_expansion: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        for cap in (self.cap_tokens, self.cap_api, self.cap_comment,
                    self.cap_report):
            if cap < 1:
                raise ValueError("sequence caps must be >= 1")
        if self.negatives_per_report < 1:
            raise ValueError("negatives_per_report must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def derive_rng(seed: int, *tags) -> np.random.Generator:
    digest = hashlib.sha256(
        ("|".join([str(seed)] + [str(t) for t in tags])).encode()
    ).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

UNK = 0


class Vocabulary:
    """Shared token table across report and code views; id 0 is unknown."""

    def __init__(self, tokens: Sequence[str]):
        self._index = {t: i + 1 for i, t in enumerate(sorted(set(tokens)))}

    def __len__(self):
        return len(self._index) + 1

    def encode(self, tokens: Sequence[str], cap: int | None = None) -> tuple[int, ...]:
        ids = tuple(self._index.get(t, UNK) for t in tokens)
        return ids[:cap] if cap else ids

    def tokens(self) -> list[str]:
        return sorted(self._index, key=self._index.get)

    def vocab_hash(self) -> str:
        joined = "\n".join(self.tokens()).encode()
        return hashlib.sha256(joined).hexdigest()


def api_token(name: str) -> str:
    return name.lower()


def build_vocabulary(corpus: Corpus, report_ids: Sequence[str]) -> Vocabulary:
    """All code tokens plus the tokens of the given (training) reports."""
    wanted = set(report_ids)
    tokens: set[str] = set()
    seen_versions = set()
    for snap in corpus.snapshots:
        for m in snap.methods:
            key = (m.id, m.revision)
            if key in seen_versions:
                continue
            seen_versions.add(key)
            tokens.update(m.tokens)
            tokens.update(api_token(n) for n in m.api_calls)
            tokens.update(m.comment)
    for r in corpus.reports:
        if r.id in wanted:
            tokens.update(r.tokens)
    return Vocabulary(sorted(tokens))


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

VIEWS = ("tok", "api", "cmt", "rpt")


def init_parameters(cfg: ModelConfig, vocab_size: int) -> ParameterStore:
    store = ParameterStore(derive_rng(cfg.seed, "init"),
                           init_bound=1.0 / math.sqrt(cfg.d))
    d, h = cfg.d, cfg.fusion_hidden
    store.create("emb", (vocab_size, d))
    for view in VIEWS:
        store.create(f"{view}_wf", (d, 2 * d))
        store.create(f"{view}_wb", (d, 2 * d))
        store.create(f"{view}_wo", (d, 2 * d))
        store.create(f"{view}_b", (d,))
    store.create("fuse_wv", (d, d))
    store.create("fuse_wr", (d, d))
    store.create("match_w1", (d, 2 * d))
    store.create("match_b1", (d,))
    store.create("match_w2", (1, d))
    store.create("match_b2", (1,))
    store.create("exp_wn", (d, d))
    store.create("exp_ws", (d, d))
    for gate in ("q", "r", "u"):
        store.create(f"gate_{gate}_w", (d, d))
        store.create(f"gate_{gate}_u", (d, d))
    store.create("out_w1", (h, 4))
    store.create("out_b1", (h,))
    store.create("out_w2", (2, h))
    store.create("out_b2", (2,))
    return store


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViewIds:
    tokens: tuple[int, ...]
    api: tuple[int, ...]
    comment: tuple[int, ...]


def encode_sequence(params: ParameterStore, view: str,
                    ids: Sequence[int], d: int) -> Tensor:
    """BRNN + maxpool over one view; an empty view is the zero vector."""
    if not ids:
        return ad.zeros(d)
    seq = ad.embed(ids, params["emb"])
    states = ad.brnn(seq, params[f"{view}_wf"], params[f"{view}_wb"],
                     params[f"{view}_wo"], params[f"{view}_b"])
    return ad.maxpool(states)


def embed_views(
    params: ParameterStore, cfg: ModelConfig,
    views: ViewIds, report_ids: Sequence[int],
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    if not (views.tokens or views.api or views.comment):
        raise DegenerateInputError("method has no tokens in any view")
    m = encode_sequence(params, "tok", views.tokens, cfg.d)
    a = encode_sequence(params, "api", views.api, cfg.d)
    c = encode_sequence(params, "cmt", views.comment, cfg.d)
    r = encode_sequence(params, "rpt", report_ids, cfg.d)
    return m, a, c, r


def fuse_views(params: ParameterStore, m: Tensor, a: Tensor, c: Tensor,
               r: Tensor) -> Tensor:
    """Attention over the three views referenced on the report vector.

    Per-view score vectors are reduced to scalars by coordinate sum, then
    softmax-normalized; the fused vector is the weighted view sum."""
    ref = ad.matmul(params["fuse_wr"], r)
    scores = [
        ad.sum_all(ad.tanh(ad.add(ad.matmul(params["fuse_wv"], v), ref)))
        for v in (m, a, c)
    ]
    weights = ad.softmax(ad.stack_scalars(scores))
    parts = [ad.smul(v, ad.pick(weights, i)) for i, v in enumerate((m, a, c))]
    return ad.add(ad.add(parts[0], parts[1]), parts[2])


def expand_with_neighbors(params: ParameterStore, s: Tensor,
                          neighbor_vecs: Sequence[Tensor]) -> Tensor:
    """Enrich a short method vector from its relevant methods.

    Attention retrieves a weighted neighbor summary u; a gated update
    interpolates: shat = (1 - q) * s + q * uhat with q, r gates sigmoid
    and uhat = tanh(W s + r * U u)."""
    if not neighbor_vecs:
        return s
    ref = ad.matmul(params["exp_ws"], s)
    scores = [
        ad.sum_all(ad.tanh(ad.add(ad.matmul(params["exp_wn"], n), ref)))
        for n in neighbor_vecs
    ]
    weights = ad.softmax(ad.stack_scalars(scores))
    u = ad.smul(neighbor_vecs[0], ad.pick(weights, 0))
    for i, n in enumerate(neighbor_vecs[1:], start=1):
        u = ad.add(u, ad.smul(n, ad.pick(weights, i)))

    q = ad.sigmoid(ad.add(ad.matmul(params["gate_q_w"], s),
                          ad.matmul(params["gate_q_u"], u)))
    r = ad.sigmoid(ad.add(ad.matmul(params["gate_r_w"], s),
                          ad.matmul(params["gate_r_u"], u)))
    uhat = ad.tanh(ad.add(ad.matmul(params["gate_u_w"], s),
                          ad.mul(r, ad.matmul(params["gate_u_u"], u))))
    ones = ad.constant(np.ones(s.shape[0]))
    return ad.add(ad.mul(ones - q, s), ad.mul(q, uhat))


def match_score(params: ParameterStore, s: Tensor, r: Tensor) -> Tensor:
    hidden = ad.sigmoid(ad.linear(params["match_w1"], ad.concat([s, r]),
                                  params["match_b1"]))
    e_vec = ad.linear(params["match_w2"], hidden, params["match_b2"])
    return ad.pick(e_vec, 0)


def fault_logprobs(params: ParameterStore, e: Tensor,
                   feats: tuple[float, float, float]) -> Tensor:
    """Two-class log-probabilities from the match score and the fixing
    features; index 1 is the faulty class.  bffs enters log-scaled."""
    rcfs_v, bffs_v, bfrs_v = feats
    for v in (rcfs_v, bffs_v, bfrs_v):
        if not math.isfinite(v):
            raise NumericError(f"non-finite fixing feature {feats}")
    z = ad.stack_scalars([
        e,
        ad.constant(rcfs_v),
        ad.constant(math.log1p(bffs_v)),
        ad.constant(bfrs_v),
    ])
    hidden = ad.sigmoid(ad.linear(params["out_w1"], z, params["out_b1"]))
    logits = ad.linear(params["out_w2"], hidden, params["out_b2"])
    return ad.log_softmax(logits)


def fault_probability(params: ParameterStore, e: Tensor,
                      feats: tuple[float, float, float]) -> float:
    return float(np.exp(fault_logprobs(params, e, feats).data[1]))


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    report_id: str
    method_id: str
    label: int
    report_ids: tuple[int, ...]
    views: ViewIds
    statement_count: int
    neighbors: tuple[ViewIds, ...]
    features: FixingFeatures


@dataclass(frozen=True)
class Prediction:
    method_id: str
    score: float
    e: float
    rcfs: float
    bffs: float
    bfrs: float


def masked_features(cfg: ModelConfig, f: FixingFeatures) -> tuple[float, float, float]:
    return (
        f.rcfs if cfg.use_rcfs else 0.0,
        f.bffs if cfg.use_bffs else 0.0,
        f.bfrs if cfg.use_bfrs else 0.0,
    )


def forward_instance(
    params: ParameterStore, cfg: ModelConfig, inst: Instance,
    report_vec: Tensor | None = None,
) -> tuple[Tensor, Tensor]:
    """Log-probabilities and match score for one (method, report) pair."""
    r = report_vec if report_vec is not None else encode_sequence(
        params, "rpt", inst.report_ids, cfg.d)
    m = encode_sequence(params, "tok", inst.views.tokens, cfg.d)
    a = encode_sequence(params, "api", inst.views.api, cfg.d)
    c = encode_sequence(params, "cmt", inst.views.comment, cfg.d)
    s = fuse_views(params, m, a, c, r)
    if (cfg.use_expansion and inst.neighbors
            and inst.statement_count < cfg.short_threshold):
        nvecs = []
        for nb in inst.neighbors:
            nm = encode_sequence(params, "tok", nb.tokens, cfg.d)
            na = encode_sequence(params, "api", nb.api, cfg.d)
            nc = encode_sequence(params, "cmt", nb.comment, cfg.d)
            nvecs.append(fuse_views(params, nm, na, nc, r))
        s = expand_with_neighbors(params, s, nvecs)
    e = match_score(params, s, r)
    lsm = fault_logprobs(params, e, masked_features(cfg, inst.features))
    return lsm, e


def instance_loss(params: ParameterStore, cfg: ModelConfig,
                  inst: Instance) -> Tensor:
    lsm, _ = forward_instance(params, cfg, inst)
    return -ad.pick(lsm, inst.label)


def bce_loss(y: int, yhat: float) -> float:
    """Reference binary cross-entropy on plain floats."""
    eps = 1e-300
    return -(y * math.log(max(yhat, eps))
             + (1 - y) * math.log(max(1.0 - yhat, eps)))


# ---------------------------------------------------------------------------
# Instance construction
# ---------------------------------------------------------------------------

def method_view_ids(vocab: Vocabulary, cfg: ModelConfig,
                    method: MethodRecord) -> ViewIds:
    return ViewIds(
        tokens=vocab.encode(method.tokens, cfg.cap_tokens),
        api=vocab.encode([api_token(n) for n in method.api_calls], cfg.cap_api),
        comment=vocab.encode(method.comment, cfg.cap_comment),
    )


def neighbor_views(
    vocab: Vocabulary,
    cfg: ModelConfig,
    ctx: HistoryContext,
    method: MethodRecord,
    live: dict[str, MethodRecord],
) -> tuple[ViewIds, ...]:
    """Relevant-method views for a short method: top similar methods from
    the pre-query similarity store, then callees, both capped and resolved
    against the candidate revision."""
    if method.statement_count >= cfg.short_threshold:
        return ()
    ranked = sorted(
        ctx.store.method_neighbors(method.id).items(),
        key=lambda kv: (-kv[1], kv[0]),
    )
    sim = [mid for mid, _ in ranked if mid in live and mid != method.id]
    sim = sim[:cfg.max_similar]
    callees = [
        mid for mid in sorted(method.callees)
        if mid in live and mid != method.id
    ][:cfg.max_callees]
    out = []
    seen = set()
    for mid in sim + callees:
        if mid not in seen:
            seen.add(mid)
            out.append(method_view_ids(vocab, cfg, live[mid]))
    return tuple(out)


def make_instances(
    corpus: Corpus,
    svc: HistoryService,
    vocab: Vocabulary,
    cfg: ModelConfig,
    report: BugReportRecord,
    features_map: dict[tuple[str, str], FixingFeatures] | None = None,
) -> list[Instance]:
    """Training triples for one report: its fixed methods as positives and
    a seeded uniform sample of other live methods as negatives.  Returns
    [] when the report has no usable positives."""
    revision = corpus.before_fix_revision(report.id)
    if revision is None:
        return []
    live = corpus.snapshot(revision).method_map()
    positives = sorted(mid for mid in report.fixed_methods if mid in live)
    if not positives:
        return []
    universe = sorted(set(live) - set(positives))
    rng = derive_rng(cfg.seed, "negatives", report.id)
    k = min(cfg.negatives_per_report, len(universe))
    negatives = sorted(
        rng.choice(len(universe), size=k, replace=False).tolist()
    )
    ctx = svc.context(report)
    report_ids = vocab.encode(report.tokens, cfg.cap_report)

    def features_of(mid: str) -> FixingFeatures:
        if features_map is not None:
            return features_map[(report.id, mid)]
        from .features import compute_features
        return compute_features(report, [mid], ctx)[mid]

    instances = []
    for label, mids in ((1, positives), (0, [universe[i] for i in negatives])):
        for mid in mids:
            rec = live[mid]
            instances.append(Instance(
                report_id=report.id,
                method_id=mid,
                label=label,
                report_ids=report_ids,
                views=method_view_ids(vocab, cfg, rec),
                statement_count=rec.statement_count,
                neighbors=neighbor_views(vocab, cfg, ctx, rec, live),
                features=features_of(mid),
            ))
    return instances


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ParameterStore
    vocab: Vocabulary
    cfg: ModelConfig
    losses: list[float]
    trained_reports: list[str]
    skipped_reports: list[str]


def train(
    corpus: Corpus,
    svc: HistoryService,
    cfg: ModelConfig,
    train_reports: Sequence[BugReportRecord],
    features_map: dict[tuple[str, str], FixingFeatures] | None = None,
    vocab: Vocabulary | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """Fit the model on the given reports with per-instance SGD on the
    binary cross-entropy; deterministic under a fixed seed."""
    reports = sorted(train_reports, key=lambda r: (r.created_at, r.id))
    if vocab is None:
        vocab = build_vocabulary(corpus, [r.id for r in reports])
    params = init_parameters(cfg, len(vocab))

    instances: list[Instance] = []
    trained, skipped = [], []
    for r in reports:
        batch = make_instances(corpus, svc, vocab, cfg, r, features_map)
        if not batch:
            skipped.append(r.id)
            if log:
                log(f"warning: report {r.id} has no usable fixed methods; excluded")
            continue
        trained.append(r.id)
        instances.extend(batch)

    losses: list[float] = []
    order_rng = derive_rng(cfg.seed, "order")
    tensors = params.tensors()
    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(len(instances))
        total = 0.0
        for idx in perm:
            loss = instance_loss(params, cfg, instances[int(idx)])
            total += float(loss.data)
            loss.backward()
            ad.sgd_step(tensors, cfg.learning_rate, cfg.grad_clip)
        mean = total / max(1, len(instances))
        losses.append(mean)
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs}: mean loss {mean:.6f}")
    return TrainResult(params, vocab, cfg, losses, trained, skipped)


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------

def rank_methods(
    report: BugReportRecord,
    corpus: Corpus,
    svc: HistoryService,
    params: ParameterStore,
    vocab: Vocabulary,
    cfg: ModelConfig,
    features_map: dict[tuple[str, str], FixingFeatures] | None = None,
    revision: int | None = None,
) -> list[Prediction]:
    """Score every live method of the candidate revision, descending by
    probability with ties broken by ascending method id."""
    if revision is None:
        revision = corpus.before_fix_revision(report.id)
        if revision is None:
            revision = corpus.latest_revision
    if not any(s.revision == revision for s in corpus.snapshots):
        raise UnresolvedReferenceError(f"unknown revision {revision}")
    live = corpus.snapshot(revision).method_map()
    ctx = svc.context(report)
    report_ids = vocab.encode(report.tokens, cfg.cap_report)
    report_vec = encode_sequence(params, "rpt", report_ids, cfg.d)

    if features_map is None:
        from .features import compute_features

        feats = compute_features(report, sorted(live), ctx)
    else:
        feats = {mid: features_map[(report.id, mid)] for mid in live}

    predictions = []
    for mid in sorted(live):
        rec = live[mid]
        inst = Instance(
            report_id=report.id, method_id=mid, label=0,
            report_ids=report_ids,
            views=method_view_ids(vocab, cfg, rec),
            statement_count=rec.statement_count,
            neighbors=neighbor_views(vocab, cfg, ctx, rec, live),
            features=feats[mid],
        )
        lsm, e = forward_instance(params, cfg, inst, report_vec=report_vec)
        predictions.append(Prediction(
            method_id=mid,
            score=float(np.exp(lsm.data[1])),
            e=float(e.data),
            rcfs=feats[mid].rcfs,
            bffs=feats[mid].bffs,
            bfrs=feats[mid].bfrs,
        ))
    predictions.sort(key=lambda p: (-p.score, p.method_id))
    return predictions


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, result: TrainResult) -> None:
    meta = {
        "format": 1,
        "config": result.cfg.to_dict(),
        "vocab": result.vocab.tokens(),
        "vocab_hash": result.vocab.vocab_hash(),
        "seed": result.cfg.seed,
        "losses": result.losses,
    }
    arrays = {f"param:{k}": t.data for k, t in result.params.items()}
    np.savez(path, __meta__=np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str | Path) -> TrainResult:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            cfg = ModelConfig.from_dict(meta["config"])
            vocab = Vocabulary(meta["vocab"])
            if vocab.vocab_hash() != meta["vocab_hash"]:
                raise CheckpointError("vocabulary hash mismatch")
            params = init_parameters(cfg, len(vocab))
            params.load_state({
                k[len("param:"):]: data[k]
                for k in data.files if k.startswith("param:")
            })
    except (KeyError, ValueError, OSError) as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    return TrainResult(params, vocab, cfg, meta.get("losses", []), [], [])
