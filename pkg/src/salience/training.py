"""Pairwise ranking loss, Adam optimizer, exact gradients, and the train loop.

The loss for one document sums hinge terms over (salient, non-salient) event
pairs: max(0, 1 - s_plus + s_minus).  Gradients are computed analytically all
the way into the embedding tables (through both the kernel pooling and the
voting features); ``grad_check`` verifies them against central finite
differences.  Training is serial and fully seeded so identical configurations
reproduce bitwise-identical models.
"""
from __future__ import annotations

import copy
import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Corpus, Document
from .errors import DataError, NumericError
from .metrics import evaluate
from .models import (
    KCECache,
    KCEModel,
    LeToRModel,
    PageRankModel,
    kce_forward,
    model_scores,
    pagerank_forward,
    score_letor,
    variant_uses_entity_kernels,
    variant_uses_features,
)
from .features import feature_matrix, scale_matrix

LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_docs: int = 128
    epochs: int = 20
    seed: int = 0
    max_pairs_per_doc: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    freeze_embeddings: bool = False

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_docs": self.batch_docs,
            "epochs": self.epochs,
            "seed": self.seed,
            "max_pairs_per_doc": self.max_pairs_per_doc,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "freeze_embeddings": self.freeze_embeddings,
        }

    @staticmethod
    def from_json(obj: dict) -> "TrainConfig":
        cfg = TrainConfig()
        for key, val in obj.items():
            if not hasattr(cfg, key):
                raise DataError(f"unknown train config field {key!r}")
            setattr(cfg, key, val)
        return cfg


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    dev_auc: float | None
    dev_p1: float | None


@dataclass
class TrainHistory:
    rows: list[EpochStats] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "dev_auc", "dev_p1"])
            for row in self.rows:
                writer.writerow(
                    [
                        row.epoch,
                        repr(row.loss),
                        "" if row.dev_auc is None else repr(row.dev_auc),
                        "" if row.dev_p1 is None else repr(row.dev_p1),
                    ]
                )


def _labels(doc: Document) -> np.ndarray:
    if any(ev.salient is None for ev in doc.events):
        raise DataError(f"doc {doc.doc_id!r} is not salience-labeled")
    return np.array([bool(ev.salient) for ev in doc.events])


def _pair_loss(
    scores: np.ndarray, pos_idx: np.ndarray, neg_idx: np.ndarray
) -> tuple[float, np.ndarray]:
    """Summed hinge over explicit index pairs plus d(loss)/d(scores)."""
    grad = np.zeros_like(scores)
    if len(pos_idx) == 0:
        return 0.0, grad
    margins = 1.0 - scores[pos_idx] + scores[neg_idx]
    active = margins > 0.0
    loss = float(margins[active].sum()) if active.any() else 0.0
    np.add.at(grad, pos_idx[active], -1.0)
    np.add.at(grad, neg_idx[active], 1.0)
    return loss, grad


def document_pair_loss(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Hinge loss over every (salient, non-salient) pair in one document."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    pos = np.flatnonzero(labels)
    neg = np.flatnonzero(~labels)
    pp, nn = np.meshgrid(pos, neg, indexing="ij")
    return _pair_loss(scores, pp.ravel(), nn.ravel())


def _derived_rng(seed: int, *names: str) -> np.random.Generator:
    entropy = [seed % (2**32)] + [zlib.crc32(n.encode("utf-8")) for n in names]
    return np.random.default_rng(entropy)


def make_pairs(doc: Document, cfg: TrainConfig) -> list[tuple[int, int]]:
    """All (salient, non-salient) index pairs, optionally subsampled per document.

    Subsampling is deterministic given (cfg.seed, doc_id) and keeps the
    canonical cross-product order.
    """
    labels = _labels(doc)
    pos = np.flatnonzero(labels)
    neg = np.flatnonzero(~labels)
    pairs = [(int(i), int(j)) for i in pos for j in neg]
    limit = cfg.max_pairs_per_doc
    if limit is not None and len(pairs) > limit:
        rng = _derived_rng(cfg.seed, doc.doc_id)
        chosen = rng.choice(len(pairs), size=limit, replace=False)
        pairs = [pairs[k] for k in sorted(chosen)]
    return pairs


class Adam:
    """Reference Adam with bias-corrected moment estimates."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# --- parameter blocks -------------------------------------------------------

BIAS_KEY = "bias"
TEMPERATURE_KEY = "temperature"
MIN_TEMPERATURE = 1e-3


def _param_arrays(model, freeze_embeddings: bool) -> tuple[dict[str, np.ndarray], list[str]]:
    """Views into the model's trainable arrays plus the names of scalar blocks."""
    if isinstance(model, KCEModel):
        arrays: dict[str, np.ndarray] = {"w_v": model.w_v, BIAS_KEY: np.array([model.bias])}
        if variant_uses_features(model.variant):
            arrays["w_f"] = model.w_f
        if variant_uses_entity_kernels(model.variant):
            arrays["w_e"] = model.w_e
        if not freeze_embeddings and model.event_table.trainable:
            arrays["event_emb"] = model.event_table.vectors
        if (
            not freeze_embeddings
            and model.entity_table.trainable
            and variant_uses_features(model.variant)
        ):
            arrays["entity_emb"] = model.entity_table.vectors
        return arrays, [BIAS_KEY]
    if isinstance(model, LeToRModel):
        return {"w_f": model.w_f, BIAS_KEY: np.array([model.bias])}, [BIAS_KEY]
    if isinstance(model, PageRankModel):
        arrays = {TEMPERATURE_KEY: np.array([model.temperature])}
        if not freeze_embeddings and model.event_table.trainable:
            arrays["event_emb"] = model.event_table.vectors
        return arrays, [TEMPERATURE_KEY]
    raise DataError(f"cannot train object of type {type(model).__name__}")


def _sync_scalars(model, arrays: dict[str, np.ndarray], scalars: list[str]) -> None:
    for name in scalars:
        if name == BIAS_KEY:
            model.bias = float(arrays[name][0])
        elif name == TEMPERATURE_KEY:
            arrays[name][0] = max(float(arrays[name][0]), MIN_TEMPERATURE)
            model.temperature = float(arrays[name][0])


# --- analytic backward passes ------------------------------------------------


def _cosine_matrix_backward(
    grad_sims: np.ndarray,
    sims: np.ndarray,
    unit_a: np.ndarray,
    norms_a: np.ndarray,
    unit_b: np.ndarray,
    norms_b: np.ndarray,
    symmetric: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Push gradients on a cosine matrix back to the underlying row vectors.

    For symmetric use (event-event), pass grad_sims with a zero diagonal and
    unit_a is unit_b; both sides of each pair are accumulated.  Zero-norm rows
    get zero gradient by definition.
    """
    if symmetric:
        spread = grad_sims + grad_sims.T
        row_mix = (spread * sims).sum(axis=1)
        d_a = spread @ unit_b - row_mix[:, None] * unit_a
        safe_a = np.where(norms_a == 0.0, 1.0, norms_a)
        d_a /= safe_a[:, None]
        d_a[norms_a == 0.0] = 0.0
        return d_a, d_a
    row_mix = (grad_sims * sims).sum(axis=1)
    d_a = grad_sims @ unit_b - row_mix[:, None] * unit_a
    safe_a = np.where(norms_a == 0.0, 1.0, norms_a)
    d_a /= safe_a[:, None]
    d_a[norms_a == 0.0] = 0.0
    col_mix = (grad_sims * sims).sum(axis=0)
    d_b = grad_sims.T @ unit_a - col_mix[:, None] * unit_b
    safe_b = np.where(norms_b == 0.0, 1.0, norms_b)
    d_b /= safe_b[:, None]
    d_b[norms_b == 0.0] = 0.0
    return d_a, d_b


def _kernel_cos_grad(acts: np.ndarray, sims: np.ndarray, bank, weights: np.ndarray) -> np.ndarray:
    """d(weights . phi)/d(cos) for every pooled pair; activations already cached."""
    slopes = acts * (-(sims[..., None] - bank.means) / (bank.sigmas * bank.sigmas))
    return slopes @ weights


def kce_backward(
    model: KCEModel, doc: Document, cache: KCECache, dscores: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of the document loss for every trainable block of a KCE model."""
    if cache.zero_nonfreq:
        raise DataError("backward pass is undefined for feature-zeroed scoring")
    n = len(doc.events)
    m = len(doc.entities)
    g = np.asarray(dscores, dtype=np.float64)
    uses_feats = variant_uses_features(model.variant)
    uses_ent_kernels = variant_uses_entity_kernels(model.variant)

    grads: dict[str, np.ndarray] = {
        "w_v": cache.phi_v.T @ g,
        BIAS_KEY: np.array([float(g.sum())]),
    }
    if uses_feats:
        grads["w_f"] = cache.scaled_feats.T @ g
    if uses_ent_kernels:
        grads["w_e"] = cache.phi_e.T @ g

    d_event = np.zeros_like(model.event_table.vectors)
    d_entity = np.zeros_like(model.entity_table.vectors)

    if n:
        # event-event cosine gradients: kernel path plus the event-voting feature
        grad_vv = g[:, None] * _kernel_cos_grad(cache.acts_vv, cache.sims_vv, model.bank, model.w_v)
        if uses_feats and n > 1:
            vote = g * (model.w_f[2] / model.scaler.stds[2] / (n - 1))
            grad_vv = grad_vv + vote[:, None]
        np.fill_diagonal(grad_vv, 0.0)
        d_rows_v, _ = _cosine_matrix_backward(
            grad_vv, cache.sims_vv, cache.unit_v, cache.norms_v, cache.unit_v, cache.norms_v, True
        )

        if m and (uses_ent_kernels or uses_feats):
            grad_ve = np.zeros_like(cache.sims_ve)
            if uses_ent_kernels:
                grad_ve += g[:, None] * _kernel_cos_grad(
                    cache.acts_ve, cache.sims_ve, model.bank, model.w_e
                )
            if uses_feats:
                grad_ve += np.outer(g * (model.w_f[3] / model.scaler.stds[3] / m), np.ones(m))
                safe_counts = np.where(cache.local_counts == 0, 1, cache.local_counts)
                local_up = g * model.w_f[4] / model.scaler.stds[4] / safe_counts
                local_up[cache.local_counts == 0] = 0.0
                grad_ve += local_up[:, None] * cache.local_mask
            d_rows_v2, d_rows_e = _cosine_matrix_backward(
                grad_ve,
                cache.sims_ve,
                cache.unit_v,
                cache.norms_v,
                cache.unit_e,
                cache.norms_e,
                False,
            )
            d_rows_v = d_rows_v + d_rows_v2
            np.add.at(d_entity, cache.rows_e, d_rows_e)
        np.add.at(d_event, cache.rows_v, d_rows_v)

    grads["event_emb"] = d_event
    grads["entity_emb"] = d_entity
    return grads


def pagerank_backward(
    model: PageRankModel, doc: Document, cache, dscores: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients into the walk temperature and event embeddings."""
    n = len(doc.events)
    g = np.asarray(dscores, dtype=np.float64)
    d_event = np.zeros_like(model.event_table.vectors)
    if n <= 1:
        return {TEMPERATURE_KEY: np.array([0.0]), "event_emb": d_event}
    d_walk = (1.0 - model.combine_lambda) * g
    d_trans = np.tile(d_walk / n, (n, 1))
    trans = cache.transitions
    inner = (trans * d_trans).sum(axis=1, keepdims=True)
    d_logits = trans * (d_trans - inner)
    d_temp = float((d_logits * (-cache.sims / (model.temperature**2))).sum())
    grad_sims = d_logits / model.temperature
    np.fill_diagonal(grad_sims, 0.0)
    d_rows, _ = _cosine_matrix_backward(
        grad_sims, cache.sims, cache.unit, cache.norms, cache.unit, cache.norms, True
    )
    np.add.at(d_event, cache.rows, d_rows)
    return {TEMPERATURE_KEY: np.array([d_temp]), "event_emb": d_event}


def _doc_pair_indices(doc: Document, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    pairs = make_pairs(doc, cfg)
    if not pairs:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    arr = np.asarray(pairs, dtype=np.intp)
    return arr[:, 0], arr[:, 1]


def _doc_loss_and_grads(model, doc: Document, cfg: TrainConfig):
    pos_idx, neg_idx = _doc_pair_indices(doc, cfg)
    if len(pos_idx) == 0:
        return 0.0, None
    if isinstance(model, KCEModel):
        scores, cache = kce_forward(model, doc)
        loss, dscores = _pair_loss(scores, pos_idx, neg_idx)
        return loss, kce_backward(model, doc, cache, dscores)
    if isinstance(model, LeToRModel):
        feats = feature_matrix(doc, model.event_table, model.entity_table)
        scaled = scale_matrix(feats, model.scaler)
        scores = scaled @ model.w_f + model.bias
        loss, dscores = _pair_loss(scores, pos_idx, neg_idx)
        return loss, {"w_f": scaled.T @ dscores, BIAS_KEY: np.array([float(dscores.sum())])}
    if isinstance(model, PageRankModel):
        scores, cache = pagerank_forward(model, doc)
        loss, dscores = _pair_loss(scores, pos_idx, neg_idx)
        return loss, pagerank_backward(model, doc, cache, dscores)
    raise DataError(f"cannot train object of type {type(model).__name__}")


def _dev_metrics(model, dev: Corpus) -> tuple[float | None, float | None]:
    if not dev.documents:
        return None, None
    scores = []
    for doc in dev.documents:
        s = model_scores(model, doc)
        if not np.all(np.isfinite(s)):
            raise NumericError(f"non-finite score while evaluating doc {doc.doc_id!r}")
        scores.append(s)
    report = evaluate(scores, dev)
    return report.auc, report.p_at.get(1)


def _tune_pagerank_lambda(model: PageRankModel, dev: Corpus) -> tuple[float, float | None]:
    """Grid-search the frequency/walk mix on dev AUC; ties prefer the smaller mix."""
    parts = []
    for doc in dev.documents:
        _, cache = pagerank_forward(model, doc)
        parts.append((cache.norm_freq, cache.walk))
    best_lam, best_auc = model.combine_lambda, None
    for lam in LAMBDA_GRID:
        scores = [lam * nf + (1.0 - lam) * walk for nf, walk in parts]
        auc = evaluate(scores, dev).auc
        if auc is not None and (best_auc is None or auc > best_auc):
            best_lam, best_auc = lam, auc
    return best_lam, best_auc


def _check_finite_params(arrays: dict[str, np.ndarray]) -> None:
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"parameter block {name!r} became non-finite during training")


def train(model, corpus: Corpus, dev: Corpus, cfg: TrainConfig):
    """Train with Adam on batches of documents; returns (model, history).

    The input model is not mutated.  The returned model carries the parameters
    of the epoch with the best dev AUC.  Identical (model, corpora, cfg) runs
    produce bitwise-identical results: shuffling, pair sampling, and reductions
    are all seeded and serial.
    """
    for split in (corpus, dev):
        for doc in split.documents:
            _labels(doc)
    model = copy.deepcopy(model)
    if cfg.epochs == 0:
        return model, TrainHistory()

    arrays, scalars = _param_arrays(model, cfg.freeze_embeddings)
    adam = Adam(arrays, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    best_auc: float | None = None
    best_epoch: int | None = None
    best_snapshot: dict[str, np.ndarray] | None = None
    best_lambda: float | None = None

    docs = corpus.documents
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(docs))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_docs):
            batch = order[start : start + cfg.batch_docs]
            grads = {k: np.zeros_like(v) for k, v in arrays.items()}
            for di in batch:
                loss, doc_grads = _doc_loss_and_grads(model, docs[di], cfg)
                epoch_loss += loss
                if doc_grads is None:
                    continue
                for name in grads:
                    if name in doc_grads:
                        grads[name] += doc_grads[name]
            adam.step(arrays, grads)
            _sync_scalars(model, arrays, scalars)
        _check_finite_params(arrays)

        if isinstance(model, PageRankModel) and dev.documents:
            model.combine_lambda, _ = _tune_pagerank_lambda(model, dev)
        dev_auc, dev_p1 = _dev_metrics(model, dev)
        history.rows.append(EpochStats(epoch=epoch, loss=epoch_loss, dev_auc=dev_auc, dev_p1=dev_p1))
        if dev_auc is not None and (best_auc is None or dev_auc > best_auc):
            best_auc = dev_auc
            best_epoch = epoch
            best_snapshot = {k: v.copy() for k, v in arrays.items()}
            if isinstance(model, PageRankModel):
                best_lambda = model.combine_lambda

    if best_snapshot is not None:
        for name, arr in arrays.items():
            arr[...] = best_snapshot[name]
        _sync_scalars(model, arrays, scalars)
        if isinstance(model, PageRankModel) and best_lambda is not None:
            model.combine_lambda = best_lambda
    model.meta.update(
        {
            "trained_epochs": cfg.epochs,
            "best_epoch": best_epoch,
            "best_dev_auc": best_auc,
            "train_config": cfg.to_json(),
        }
    )
    return model, history


# --- finite-difference verification ------------------------------------------

GRAD_EPS = 1e-8


def _kce_loss(model: KCEModel, doc: Document, labels: np.ndarray) -> float:
    scores, _ = kce_forward(model, doc)
    loss, _ = document_pair_loss(scores, labels)
    return loss


def grad_check(
    model: KCEModel,
    doc: Document,
    step: float = 1e-4,
    max_rows: int = 32,
    row_seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks every trainable weight block and a seeded sample of up to
    ``max_rows`` embedding rows actually referenced by the document.  The
    relative error is |a - n| / max(|a|, |n|, 1e-8); coordinates where both
    values sit at or below 1e-8 are treated as agreeing zeros (the loss is
    exactly bias-shift invariant, so e.g. the bias gradient is identically
    zero while finite differences return pure floating-point noise).
    """
    if not isinstance(model, KCEModel):
        raise DataError("grad_check runs on kernel centrality models")
    labels = _labels(doc)
    if not labels.any() or labels.all():
        return 0.0
    scores, cache = kce_forward(model, doc)
    _, dscores = document_pair_loss(scores, labels)
    analytic = kce_backward(model, doc, cache, dscores)

    blocks: list[tuple[np.ndarray, np.ndarray, list[tuple[int, ...]]]] = []

    def add_block(param: np.ndarray, grad: np.ndarray, coords: list[tuple[int, ...]]) -> None:
        blocks.append((param, grad, coords))

    add_block(model.w_v, analytic["w_v"], [(k,) for k in range(model.bank.size)])
    if variant_uses_entity_kernels(model.variant):
        add_block(model.w_e, analytic["w_e"], [(k,) for k in range(model.bank.size)])
    if variant_uses_features(model.variant):
        add_block(model.w_f, analytic["w_f"], [(k,) for k in range(len(model.w_f))])

    bias_arr = np.array([model.bias])
    add_block(bias_arr, analytic[BIAS_KEY], [(0,)])

    row_pool: list[tuple[str, int]] = []
    if model.event_table.trainable:
        row_pool += [("event_emb", int(r)) for r in sorted(set(cache.rows_v.tolist()))]
    if model.entity_table.trainable and variant_uses_features(model.variant):
        row_pool += [("entity_emb", int(r)) for r in sorted(set(cache.rows_e.tolist()))]
    if row_pool and max_rows > 0:
        rng = np.random.default_rng(row_seed)
        chosen = (
            row_pool
            if len(row_pool) <= max_rows
            else [row_pool[i] for i in rng.choice(len(row_pool), size=max_rows, replace=False)]
        )
        dim = model.event_table.dim
        for table_name, row in chosen:
            table = model.event_table if table_name == "event_emb" else model.entity_table
            add_block(
                table.vectors,
                analytic[table_name],
                [(row, d) for d in range(dim)],
            )

    def loss_with_bias_synced() -> float:
        model.bias = float(bias_arr[0])
        return _kce_loss(model, doc, labels)

    worst = 0.0
    for param, grad, coords in blocks:
        for coord in coords:
            a = float(grad[coord])
            orig = float(param[coord])
            param[coord] = orig + step
            loss_plus = loss_with_bias_synced()
            param[coord] = orig - step
            loss_minus = loss_with_bias_synced()
            param[coord] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            scale = max(abs(a), abs(numeric))
            if scale <= GRAD_EPS:
                continue
            worst = max(worst, abs(a - numeric) / max(scale, GRAD_EPS))
    model.bias = float(bias_arr[0])
    return worst
