"""Per-event document features for the feature-based ranking model.

Five features per event mention: lemma frequency within the document,
sentence location, and three embedding-vote averages (against other
events, all entities, and same-sentence entities).  A fitted scaler
standardizes features to zero mean / unit variance over a corpus.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Document, EventMention
from .embeddings import EmbeddingTable, cosine, normalized_rows
from .errors import DataError

FEATURE_NAMES = (
    "frequency",
    "sentence_location",
    "event_voting",
    "entity_voting",
    "local_entity_voting",
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    frequency: float
    sentence_location: float
    event_voting: float
    entity_voting: float
    local_entity_voting: float

    def to_array(self) -> np.ndarray:
        return np.array(
            [
                self.frequency,
                self.sentence_location,
                self.event_voting,
                self.entity_voting,
                self.local_entity_voting,
            ],
            dtype=np.float64,
        )

    @staticmethod
    def from_array(arr: np.ndarray) -> "FeatureVector":
        return FeatureVector(*(float(x) for x in arr))


def _event_index(doc: Document, ev: EventMention) -> int:
    for i, other in enumerate(doc.events):
        if other.id == ev.id:
            return i
    raise DataError(f"event {ev.id!r} is not part of doc {doc.doc_id!r}")


def frequency_feature(ev: EventMention, doc: Document) -> float:
    """How many events in the document share this head lemma (includes ev itself)."""
    return float(sum(1 for other in doc.events if other.head_lemma == ev.head_lemma))


def location_feature(ev: EventMention, doc: Document, normalize: bool = False) -> float:
    """Raw sentence index; optionally normalized by document length."""
    if normalize:
        return ev.sentence_index / doc.num_sentences
    return float(ev.sentence_index)


def event_voting(ev: EventMention, doc: Document, events_table: EmbeddingTable) -> float:
    """Mean cosine between this event's embedding and every other event's (0 if alone)."""
    i = _event_index(doc, ev)
    if len(doc.events) < 2:
        return 0.0
    target = events_table.row(ev.head_lemma)
    sims = [
        cosine(target, events_table.row(other.head_lemma))
        for j, other in enumerate(doc.events)
        if j != i
    ]
    return float(sum(sims) / len(sims))


def entity_voting(
    ev: EventMention, doc: Document, events_table: EmbeddingTable, entities_table: EmbeddingTable
) -> float:
    """Mean cosine between the event embedding and all entity embeddings (0 if none)."""
    if not doc.entities:
        return 0.0
    target = events_table.row(ev.head_lemma)
    sims = [cosine(target, entities_table.row(en.entity_key)) for en in doc.entities]
    return float(sum(sims) / len(sims))


def local_entity_voting(
    ev: EventMention, doc: Document, events_table: EmbeddingTable, entities_table: EmbeddingTable
) -> float:
    """Entity voting restricted to entities in the event's own sentence."""
    local = [en for en in doc.entities if en.sentence_index == ev.sentence_index]
    if not local:
        return 0.0
    target = events_table.row(ev.head_lemma)
    sims = [cosine(target, entities_table.row(en.entity_key)) for en in local]
    return float(sum(sims) / len(sims))


def extract_features(
    ev: EventMention,
    doc: Document,
    events_table: EmbeddingTable,
    entities_table: EmbeddingTable,
    normalize_location: bool = False,
) -> FeatureVector:
    return FeatureVector(
        frequency=frequency_feature(ev, doc),
        sentence_location=location_feature(ev, doc, normalize=normalize_location),
        event_voting=event_voting(ev, doc, events_table),
        entity_voting=entity_voting(ev, doc, events_table, entities_table),
        local_entity_voting=local_entity_voting(ev, doc, events_table, entities_table),
    )


def feature_matrix(
    doc: Document,
    events_table: EmbeddingTable,
    entities_table: EmbeddingTable,
    normalize_location: bool = False,
) -> np.ndarray:
    """All five features for every event at once; matches the per-event functions."""
    n = len(doc.events)
    out = np.zeros((n, N_FEATURES), dtype=np.float64)
    if n == 0:
        return out

    lemmas = [ev.head_lemma for ev in doc.events]
    lemma_counts: dict[str, int] = {}
    for lemma in lemmas:
        lemma_counts[lemma] = lemma_counts.get(lemma, 0) + 1
    out[:, 0] = [lemma_counts[lemma] for lemma in lemmas]
    out[:, 1] = [
        ev.sentence_index / doc.num_sentences if normalize_location else float(ev.sentence_index)
        for ev in doc.events
    ]

    rows_v = [events_table.vocabulary.lookup(lemma) for lemma in lemmas]
    unit_v, _ = normalized_rows(events_table.vectors[rows_v])
    if n > 1:
        sims_vv = unit_v @ unit_v.T
        np.fill_diagonal(sims_vv, 0.0)
        out[:, 2] = sims_vv.sum(axis=1) / (n - 1)

    m = len(doc.entities)
    if m > 0:
        rows_e = [entities_table.vocabulary.lookup(en.entity_key) for en in doc.entities]
        unit_e, _ = normalized_rows(entities_table.vectors[rows_e])
        sims_ve = unit_v @ unit_e.T
        out[:, 3] = sims_ve.sum(axis=1) / m
        ev_sent = np.array([ev.sentence_index for ev in doc.events])
        en_sent = np.array([en.sentence_index for en in doc.entities])
        local = ev_sent[:, None] == en_sent[None, :]
        counts = local.sum(axis=1)
        local_sum = (sims_ve * local).sum(axis=1)
        nonzero = counts > 0
        out[nonzero, 4] = local_sum[nonzero] / counts[nonzero]
    return out


@dataclass(frozen=True)
class FeatureScaler:
    means: np.ndarray  # (5,)
    stds: np.ndarray  # (5,) floored at 1e-8

    @staticmethod
    def identity() -> "FeatureScaler":
        return FeatureScaler(means=np.zeros(N_FEATURES), stds=np.ones(N_FEATURES))


def fit_scaler(
    corpus: Corpus, events_table: EmbeddingTable, entities_table: EmbeddingTable
) -> FeatureScaler:
    """Per-feature mean/std over every event in the corpus (std floored at 1e-8)."""
    blocks = [
        feature_matrix(doc, events_table, entities_table)
        for doc in corpus.documents
        if doc.events
    ]
    if not blocks:
        raise DataError("cannot fit a feature scaler: corpus contains no events")
    stacked = np.concatenate(blocks, axis=0)
    means = stacked.mean(axis=0)
    stds = np.maximum(stacked.std(axis=0), 1e-8)
    return FeatureScaler(means=means, stds=stds)


def apply_scaler(fv: FeatureVector, scaler: FeatureScaler) -> FeatureVector:
    return FeatureVector.from_array((fv.to_array() - scaler.means) / scaler.stds)


def scale_matrix(features: np.ndarray, scaler: FeatureScaler) -> np.ndarray:
    return (features - scaler.means) / scaler.stds


def scaler_to_json(scaler: FeatureScaler) -> dict:
    return {"means": scaler.means.tolist(), "stds": scaler.stds.tolist()}


def scaler_from_json(obj: dict) -> FeatureScaler:
    means = np.asarray(obj["means"], dtype=np.float64)
    stds = np.asarray(obj["stds"], dtype=np.float64)
    if means.shape != (N_FEATURES,) or stds.shape != (N_FEATURES,):
        raise DataError("feature scaler must carry exactly five means and stds")
    return FeatureScaler(means=means, stds=stds)
