"""Salience ranking models.

* LeToRModel      — linear model over the five standardized features.
* KCEModel        — kernel centrality model: pooled similarity kernels against
                    the document's other events and its entities, fused with the
                    feature block.  Three variants of increasing capacity:
                    events_only < events_features < full.
* PageRankModel   — one-step random walk over a fully connected event graph with
                    softmax(cosine / temperature) transitions, blended with the
                    normalized frequency distribution.
* frequency / location baselines.

Model files are single JSON documents with a version field; embedding tables
travel inside the file so every model is self-contained for scoring.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document
from .embeddings import (
    EmbeddingTable,
    normalized_rows,
    table_from_json,
    table_to_json,
)
from .errors import DataError, ModelFormatError, NumericError
from .features import (
    FeatureScaler,
    N_FEATURES,
    feature_matrix,
    scale_matrix,
    scaler_from_json,
    scaler_to_json,
)
from .kernels import KernelBank, bank_from_json, bank_to_json, gaussian_pool

MODEL_FILE_VERSION = 1
KCE_VARIANTS = ("events_only", "events_features", "full")


def variant_uses_features(variant: str) -> bool:
    return variant in ("events_features", "full")


def variant_uses_entity_kernels(variant: str) -> bool:
    return variant == "full"


@dataclass
class LeToRModel:
    w_f: np.ndarray  # (5,)
    bias: float
    scaler: FeatureScaler
    event_table: EmbeddingTable
    entity_table: EmbeddingTable
    meta: dict = field(default_factory=dict)


def new_letor_model(
    event_table: EmbeddingTable, entity_table: EmbeddingTable, scaler: FeatureScaler
) -> LeToRModel:
    event_table.trainable = False
    entity_table.trainable = False
    return LeToRModel(
        w_f=np.zeros(N_FEATURES),
        bias=0.0,
        scaler=scaler,
        event_table=event_table,
        entity_table=entity_table,
    )


def score_letor(
    model: LeToRModel,
    doc: Document,
    tables: tuple[EmbeddingTable, EmbeddingTable] | None = None,
) -> np.ndarray:
    """w_f . standardized features + bias, one score per event."""
    events_table, entities_table = tables if tables is not None else (
        model.event_table,
        model.entity_table,
    )
    feats = feature_matrix(doc, events_table, entities_table)
    return scale_matrix(feats, model.scaler) @ model.w_f + model.bias


@dataclass
class KCEModel:
    bank: KernelBank
    w_v: np.ndarray  # (K,) event-kernel weights
    w_e: np.ndarray  # (K,) entity-kernel weights (zero unless variant == full)
    w_f: np.ndarray  # (5,) feature weights (zero unless variant uses features)
    bias: float
    event_table: EmbeddingTable
    entity_table: EmbeddingTable
    scaler: FeatureScaler
    variant: str = "full"
    meta: dict = field(default_factory=dict)


def new_kce_model(
    bank: KernelBank,
    event_table: EmbeddingTable,
    entity_table: EmbeddingTable,
    scaler: FeatureScaler,
    variant: str = "full",
) -> KCEModel:
    if variant not in KCE_VARIANTS:
        raise DataError(f"unknown variant {variant!r}; expected one of {KCE_VARIANTS}")
    return KCEModel(
        bank=bank,
        w_v=np.zeros(bank.size),
        w_e=np.zeros(bank.size),
        w_f=np.zeros(N_FEATURES),
        bias=0.0,
        event_table=event_table,
        entity_table=entity_table,
        scaler=scaler,
        variant=variant,
    )


@dataclass
class KCECache:
    """Everything the backward pass needs from a forward evaluation."""

    rows_v: np.ndarray  # (n,) event vocab rows
    rows_e: np.ndarray  # (m,) entity vocab rows
    unit_v: np.ndarray  # (n, d) unit event vectors (zero rows stay zero)
    norms_v: np.ndarray  # (n,)
    unit_e: np.ndarray  # (m, d)
    norms_e: np.ndarray  # (m,)
    sims_vv: np.ndarray  # (n, n) cosines, diagonal zeroed (self excluded)
    sims_ve: np.ndarray  # (n, m)
    acts_vv: np.ndarray  # (n, n, K) kernel activations, diagonal zeroed
    acts_ve: np.ndarray  # (n, m, K)
    phi_v: np.ndarray  # (n, K)
    phi_e: np.ndarray  # (n, K)
    scaled_feats: np.ndarray  # (n, 5) after standardization (and any zeroing)
    local_mask: np.ndarray  # (n, m) same-sentence indicator
    local_counts: np.ndarray  # (n,)
    zero_nonfreq: bool


def kce_forward(
    model: KCEModel, doc: Document, zero_nonfreq_features: bool = False
) -> tuple[np.ndarray, KCECache]:
    """Scores plus a cache for gradient computation.

    ``zero_nonfreq_features`` replaces every standardized feature except the
    (recounted) frequency with 0 before the feature weights apply; used by the
    intrusion test so only relational evidence and frequency drive the score.
    """
    n = len(doc.events)
    m = len(doc.entities)
    K = model.bank.size
    dim = model.event_table.dim
    need_entities = variant_uses_entity_kernels(model.variant) or variant_uses_features(
        model.variant
    )

    rows_v = np.array(
        [model.event_table.vocabulary.lookup(ev.head_lemma) for ev in doc.events], dtype=np.intp
    )
    unit_v, norms_v = normalized_rows(model.event_table.vectors[rows_v])

    sims_vv = unit_v @ unit_v.T if n else np.zeros((0, 0))
    if n:
        np.fill_diagonal(sims_vv, 0.0)
    acts_vv = gaussian_pool(sims_vv, model.bank) if n else np.zeros((0, 0, K))
    if n:
        acts_vv[np.arange(n), np.arange(n), :] = 0.0
    phi_v = acts_vv.sum(axis=1) if n else np.zeros((0, K))

    if need_entities and m:
        rows_e = np.array(
            [model.entity_table.vocabulary.lookup(en.entity_key) for en in doc.entities],
            dtype=np.intp,
        )
        unit_e, norms_e = normalized_rows(model.entity_table.vectors[rows_e])
        sims_ve = unit_v @ unit_e.T
        acts_ve = gaussian_pool(sims_ve, model.bank)
        phi_e = acts_ve.sum(axis=1)
        ev_sent = np.array([ev.sentence_index for ev in doc.events])
        en_sent = np.array([en.sentence_index for en in doc.entities])
        local_mask = ev_sent[:, None] == en_sent[None, :]
        local_counts = local_mask.sum(axis=1)
    else:
        rows_e = np.zeros(0, dtype=np.intp)
        unit_e = np.zeros((0, dim))
        norms_e = np.zeros(0)
        sims_ve = np.zeros((n, 0))
        acts_ve = np.zeros((n, 0, K))
        phi_e = np.zeros((n, K))
        local_mask = np.zeros((n, 0), dtype=bool)
        local_counts = np.zeros(n, dtype=np.intp)

    scaled = np.zeros((n, N_FEATURES))
    if variant_uses_features(model.variant) and n:
        feats = np.zeros((n, N_FEATURES))
        lemmas = [ev.head_lemma for ev in doc.events]
        counts: dict[str, int] = {}
        for lemma in lemmas:
            counts[lemma] = counts.get(lemma, 0) + 1
        feats[:, 0] = [counts[lemma] for lemma in lemmas]
        feats[:, 1] = [float(ev.sentence_index) for ev in doc.events]
        if n > 1:
            feats[:, 2] = sims_vv.sum(axis=1) / (n - 1)
        if m:
            feats[:, 3] = sims_ve.sum(axis=1) / m
            nonzero = local_counts > 0
            local_sum = (sims_ve * local_mask).sum(axis=1)
            feats[nonzero, 4] = local_sum[nonzero] / local_counts[nonzero]
        scaled = scale_matrix(feats, model.scaler)
        if zero_nonfreq_features:
            scaled[:, 1:] = 0.0

    scores = phi_v @ model.w_v + model.bias
    if variant_uses_entity_kernels(model.variant):
        scores = scores + phi_e @ model.w_e
    if variant_uses_features(model.variant):
        scores = scores + scaled @ model.w_f

    cache = KCECache(
        rows_v=rows_v,
        rows_e=rows_e,
        unit_v=unit_v,
        norms_v=norms_v,
        unit_e=unit_e,
        norms_e=norms_e,
        sims_vv=sims_vv,
        sims_ve=sims_ve,
        acts_vv=acts_vv,
        acts_ve=acts_ve,
        phi_v=phi_v,
        phi_e=phi_e,
        scaled_feats=scaled,
        local_mask=local_mask,
        local_counts=local_counts,
        zero_nonfreq=zero_nonfreq_features,
    )
    return scores, cache


def score_kce(model: KCEModel, doc: Document, zero_nonfreq_features: bool = False) -> np.ndarray:
    scores, _ = kce_forward(model, doc, zero_nonfreq_features=zero_nonfreq_features)
    return scores


@dataclass
class PageRankModel:
    temperature: float
    combine_lambda: float
    event_table: EmbeddingTable
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise DataError("pagerank temperature must be positive")
        if not 0.0 <= self.combine_lambda <= 1.0:
            raise DataError("pagerank combine_lambda must lie in [0, 1]")


@dataclass
class PageRankCache:
    rows: np.ndarray
    unit: np.ndarray
    norms: np.ndarray
    sims: np.ndarray  # (n, n), diagonal zeroed (unused)
    transitions: np.ndarray  # (n, n) row-stochastic, zero diagonal
    walk: np.ndarray  # (n,) one-step visit distribution
    norm_freq: np.ndarray  # (n,)


def _frequency_counts(doc: Document) -> np.ndarray:
    lemmas = [ev.head_lemma for ev in doc.events]
    counts: dict[str, int] = {}
    for lemma in lemmas:
        counts[lemma] = counts.get(lemma, 0) + 1
    return np.array([counts[lemma] for lemma in lemmas], dtype=np.float64)


def pagerank_forward(model: PageRankModel, doc: Document) -> tuple[np.ndarray, PageRankCache]:
    n = len(doc.events)
    rows = np.array(
        [model.event_table.vocabulary.lookup(ev.head_lemma) for ev in doc.events], dtype=np.intp
    )
    unit, norms = normalized_rows(model.event_table.vectors[rows])
    freq = _frequency_counts(doc)
    norm_freq = freq / freq.sum() if n else freq

    if n <= 1:
        sims = np.zeros((n, n))
        transitions = np.zeros((n, n))
        walk = np.zeros(n)
    else:
        sims = unit @ unit.T
        np.fill_diagonal(sims, 0.0)
        logits = sims / model.temperature
        np.fill_diagonal(logits, -np.inf)  # no self-loops
        shifted = logits - logits.max(axis=1, keepdims=True)
        expo = np.exp(shifted)
        transitions = expo / expo.sum(axis=1, keepdims=True)
        walk = transitions.T @ np.full(n, 1.0 / n)

    scores = model.combine_lambda * norm_freq + (1.0 - model.combine_lambda) * walk
    cache = PageRankCache(
        rows=rows,
        unit=unit,
        norms=norms,
        sims=sims,
        transitions=transitions,
        walk=walk,
        norm_freq=norm_freq,
    )
    return scores, cache


def pagerank_scores(model: PageRankModel, doc: Document) -> np.ndarray:
    scores, _ = pagerank_forward(model, doc)
    return scores


def frequency_scores(doc: Document) -> np.ndarray:
    """Headword-lemma count baseline."""
    return _frequency_counts(doc)


def location_scores(doc: Document) -> np.ndarray:
    """Earlier mentions rank higher: negated mention order index."""
    return -np.arange(len(doc.events), dtype=np.float64)


def ranked_order(
    scores: np.ndarray,
    event_ids: Sequence[str] | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Indices in descending-score order.

    Exact ties break randomly when an rng is supplied (uniformly over the tied
    group), otherwise by ascending event id, otherwise by original position.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    idx = list(range(n))
    if rng is not None:
        jitter = rng.random(n)
        idx.sort(key=lambda i: (-scores[i], jitter[i]))
    elif event_ids is not None:
        idx.sort(key=lambda i: (-scores[i], event_ids[i]))
    else:
        idx.sort(key=lambda i: -scores[i])
    return np.array(idx, dtype=np.intp)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"model field {name} contains non-finite values")


def _model_to_json(model) -> dict:
    if isinstance(model, KCEModel):
        for name, arr in (("w_v", model.w_v), ("w_e", model.w_e), ("w_f", model.w_f)):
            _check_finite(name, arr)
        _check_finite("bias", np.array([model.bias]))
        _check_finite("event_table", model.event_table.vectors)
        _check_finite("entity_table", model.entity_table.vectors)
        return {
            "version": MODEL_FILE_VERSION,
            "model_type": "kce",
            "variant": model.variant,
            "bank": bank_to_json(model.bank),
            "w_v": model.w_v.tolist(),
            "w_e": model.w_e.tolist(),
            "w_f": model.w_f.tolist(),
            "bias": model.bias,
            "scaler": scaler_to_json(model.scaler),
            "event_table": table_to_json(model.event_table),
            "entity_table": table_to_json(model.entity_table),
            "meta": model.meta,
        }
    if isinstance(model, LeToRModel):
        _check_finite("w_f", model.w_f)
        _check_finite("bias", np.array([model.bias]))
        _check_finite("event_table", model.event_table.vectors)
        _check_finite("entity_table", model.entity_table.vectors)
        return {
            "version": MODEL_FILE_VERSION,
            "model_type": "letor",
            "w_f": model.w_f.tolist(),
            "bias": model.bias,
            "scaler": scaler_to_json(model.scaler),
            "event_table": table_to_json(model.event_table),
            "entity_table": table_to_json(model.entity_table),
            "meta": model.meta,
        }
    if isinstance(model, PageRankModel):
        _check_finite("temperature", np.array([model.temperature]))
        _check_finite("combine_lambda", np.array([model.combine_lambda]))
        _check_finite("event_table", model.event_table.vectors)
        return {
            "version": MODEL_FILE_VERSION,
            "model_type": "pagerank",
            "temperature": model.temperature,
            "combine_lambda": model.combine_lambda,
            "event_table": table_to_json(model.event_table),
            "meta": model.meta,
        }
    raise DataError(f"cannot serialize object of type {type(model).__name__}")


def save_model(model, path: str | Path) -> None:
    payload = _model_to_json(model)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")


def _table_checked(obj: dict, name: str) -> EmbeddingTable:
    table = table_from_json(obj[name])
    if not np.all(np.isfinite(table.vectors)):
        raise NumericError(f"model field {name} contains non-finite values")
    return table


def load_model(path: str | Path, expect: str | None = None):
    """Load any model file; ``expect`` pins the model_type and raises otherwise."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict) or "version" not in obj:
        raise ModelFormatError(f"{path}: missing version field")
    if obj["version"] != MODEL_FILE_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model file version {obj['version']!r} (expected {MODEL_FILE_VERSION})"
        )
    model_type = obj.get("model_type")
    if expect is not None and model_type != expect:
        raise ModelFormatError(f"{path}: expected a {expect} model, found {model_type!r}")

    if model_type == "kce":
        variant = obj["variant"]
        if variant not in KCE_VARIANTS:
            raise ModelFormatError(f"{path}: unknown variant {variant!r}")
        bank = bank_from_json(obj["bank"])
        w_v = np.asarray(obj["w_v"], dtype=np.float64)
        w_e = np.asarray(obj["w_e"], dtype=np.float64)
        w_f = np.asarray(obj["w_f"], dtype=np.float64)
        if w_v.shape != (bank.size,) or w_e.shape != (bank.size,):
            raise ModelFormatError(f"{path}: kernel weight length does not match the bank")
        if w_f.shape != (N_FEATURES,):
            raise ModelFormatError(f"{path}: feature weight vector must have length {N_FEATURES}")
        if not variant_uses_entity_kernels(variant) and np.any(w_e != 0.0):
            raise ModelFormatError(f"{path}: variant {variant} requires zero w_e (entity-kernel) weights")
        if not variant_uses_features(variant) and np.any(w_f != 0.0):
            raise ModelFormatError(f"{path}: variant {variant} requires zero w_f (feature) weights")
        for name, arr in (("w_v", w_v), ("w_e", w_e), ("w_f", w_f), ("bias", np.array([obj["bias"]]))):
            _check_finite(name, arr)
        return KCEModel(
            bank=bank,
            w_v=w_v,
            w_e=w_e,
            w_f=w_f,
            bias=float(obj["bias"]),
            event_table=_table_checked(obj, "event_table"),
            entity_table=_table_checked(obj, "entity_table"),
            scaler=scaler_from_json(obj["scaler"]),
            variant=variant,
            meta=obj.get("meta", {}),
        )
    if model_type == "letor":
        w_f = np.asarray(obj["w_f"], dtype=np.float64)
        if w_f.shape != (N_FEATURES,):
            raise ModelFormatError(f"{path}: feature weight vector must have length {N_FEATURES}")
        _check_finite("w_f", w_f)
        _check_finite("bias", np.array([obj["bias"]]))
        return LeToRModel(
            w_f=w_f,
            bias=float(obj["bias"]),
            scaler=scaler_from_json(obj["scaler"]),
            event_table=_table_checked(obj, "event_table"),
            entity_table=_table_checked(obj, "entity_table"),
            meta=obj.get("meta", {}),
        )
    if model_type == "pagerank":
        _check_finite("temperature", np.array([obj["temperature"]]))
        _check_finite("combine_lambda", np.array([obj["combine_lambda"]]))
        return PageRankModel(
            temperature=float(obj["temperature"]),
            combine_lambda=float(obj["combine_lambda"]),
            event_table=_table_checked(obj, "event_table"),
            meta=obj.get("meta", {}),
        )
    raise ModelFormatError(f"{path}: unknown model_type {model_type!r}")


def model_scores(model, doc: Document) -> np.ndarray:
    """Scores for any model object (dispatch helper for ranking and evaluation)."""
    if isinstance(model, KCEModel):
        return score_kce(model, doc)
    if isinstance(model, LeToRModel):
        return score_letor(model, doc)
    if isinstance(model, PageRankModel):
        return pagerank_scores(model, doc)
    raise DataError(f"cannot score with object of type {type(model).__name__}")
