"""Vocabularies, embedding tables, cosine similarity, and word-vector files.

Rare tokens (count below ``min_count``) share a single trainable "unknown"
row, which always takes the last index.  Pretrained vectors can be loaded
from the plain-text word2vec format: a ``"<count> <dim>"`` header followed
by ``token v1 .. v<dim>`` rows.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import Corpus
from .errors import DataError

VOCAB_FIELDS = ("event_lemma", "entity_key")


@dataclass(frozen=True)
class Vocabulary:
    token_to_index: dict[str, int]
    unknown_index: int
    size: int

    def lookup(self, token: str) -> int:
        return self.token_to_index.get(token, self.unknown_index)

    def tokens_by_index(self) -> list[str]:
        return [t for t, _ in sorted(self.token_to_index.items(), key=lambda kv: kv[1])]


def build_vocab(corpus: Corpus, field_name: str, min_count: int = 2) -> Vocabulary:
    """Count tokens over the corpus; tokens seen >= min_count times get dense indices
    ordered by descending count (ties lexicographic), the rest map to the unknown row."""
    if field_name not in VOCAB_FIELDS:
        raise DataError(f"unknown vocabulary field {field_name!r}; expected one of {VOCAB_FIELDS}")
    if not corpus.documents:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for doc in corpus.documents:
        if field_name == "event_lemma":
            counts.update(ev.head_lemma for ev in doc.events)
        else:
            counts.update(en.entity_key for en in doc.entities)
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    token_to_index = {tok: i for i, tok in enumerate(kept)}
    return Vocabulary(token_to_index=token_to_index, unknown_index=len(kept), size=len(kept) + 1)


@dataclass
class EmbeddingTable:
    vocabulary: Vocabulary
    dim: int
    vectors: np.ndarray  # (size, dim) float64
    trainable: bool = True

    def row(self, token: str) -> np.ndarray:
        return self.vectors[self.vocabulary.lookup(token)]


def init_embeddings(
    vocab: Vocabulary,
    dim: int = 128,
    seed: int = 0,
    pretrained: Mapping[str, np.ndarray] | str | Path | None = None,
) -> EmbeddingTable:
    """Seeded uniform init in [-0.5/dim, 0.5/dim]; pretrained rows are copied exactly."""
    if dim < 1:
        raise DataError(f"embedding dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab.size, dim))
    if pretrained is not None:
        if isinstance(pretrained, (str, Path)):
            pretrained = load_word_vectors(pretrained)
        for token, idx in sorted(vocab.token_to_index.items(), key=lambda kv: kv[1]):
            vec = pretrained.get(token)
            if vec is None:
                continue
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise DataError(
                    f"pretrained vector for {token!r} has dim {vec.shape}, table wants ({dim},)"
                )
            vectors[idx] = vec
    return EmbeddingTable(vocabulary=vocab, dim=dim, vectors=vectors, trainable=True)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero-norm inputs are defined to have similarity 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape:
        raise ValueError(f"cosine expects equal-length 1-d vectors, got {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def cosine_backward(
    u: np.ndarray, v: np.ndarray, upstream: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``upstream * cosine(u, v)`` w.r.t. u and v (0 at zero norm)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return np.zeros_like(u), np.zeros_like(v)
    c = float(np.dot(u, v) / (nu * nv))
    du = upstream * (v / (nu * nv) - c * u / (nu * nu))
    dv = upstream * (u / (nu * nv) - c * v / (nv * nv))
    return du, dv


def normalized_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize; zero rows stay zero.  Returns (unit rows, row norms)."""
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = matrix / safe[:, None]
    return unit, norms


def load_word_vectors(path: str | Path) -> dict[str, np.ndarray]:
    """Parse text-format word vectors; later duplicates win; ragged rows are errors."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: line 1: expected '<count> <dim>' header")
        try:
            _count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise DataError(f"{path}: line 1: expected integer header fields") from exc
        if dim < 1:
            raise DataError(f"{path}: line 1: dim must be >= 1")
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise DataError(
                    f"{path}: line {line_no}: expected {dim + 1} fields, got {len(parts)}"
                )
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}: line {line_no}: non-numeric vector entry") from exc
            vectors[parts[0]] = vec
    return vectors


def save_word_vectors(vectors: Mapping[str, np.ndarray], path: str | Path) -> None:
    """Write the text format with full float64 precision (17 significant digits)."""
    items = list(vectors.items())
    if not items:
        raise DataError("refusing to write an empty vector file")
    dim = len(np.asarray(items[0][1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(items)} {dim}\n")
        for token, vec in items:
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise DataError(f"vector for {token!r} has dim {vec.shape}, expected ({dim},)")
            fh.write(token + " " + " ".join(format(x, ".17g") for x in vec) + "\n")


def vocab_to_json(vocab: Vocabulary) -> dict:
    return {"tokens": vocab.tokens_by_index(), "unknown_index": vocab.unknown_index}


def vocab_from_json(obj: dict) -> Vocabulary:
    tokens = obj["tokens"]
    unknown_index = obj["unknown_index"]
    if unknown_index != len(tokens):
        raise DataError("vocabulary unknown_index must follow the listed tokens")
    return Vocabulary(
        token_to_index={t: i for i, t in enumerate(tokens)},
        unknown_index=unknown_index,
        size=len(tokens) + 1,
    )


def table_to_json(table: EmbeddingTable) -> dict:
    return {
        "vocab": vocab_to_json(table.vocabulary),
        "dim": table.dim,
        "trainable": table.trainable,
        "vectors": table.vectors.tolist(),
    }


def table_from_json(obj: dict) -> EmbeddingTable:
    vocab = vocab_from_json(obj["vocab"])
    vectors = np.asarray(obj["vectors"], dtype=np.float64)
    dim = int(obj["dim"])
    if vectors.shape != (vocab.size, dim):
        raise DataError(
            f"embedding matrix shape {vectors.shape} does not match vocab size {vocab.size} x dim {dim}"
        )
    return EmbeddingTable(vocabulary=vocab, dim=dim, vectors=vectors, trainable=bool(obj["trainable"]))
