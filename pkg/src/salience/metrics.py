"""Ranking metrics and the paired randomization significance test.

Precision@k always divides by k; recall@k divides by the number of salient
events.  AUC follows the Mann-Whitney convention with half credit for tied
scores.  Corpus-level numbers are macro averages over per-document values;
documents without salient events are skipped for precision/recall, and AUC
additionally requires at least one non-salient event.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import Corpus
from .errors import DataError

DEFAULT_KS = (1, 5, 10)


def precision_at_k(ranked_labels: Sequence[bool], k: int) -> float:
    """Fraction of the top k slots holding salient events (missing slots count as misses)."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    hits = sum(bool(x) for x in ranked_labels[:k])
    return hits / k


def recall_at_k(ranked_labels: Sequence[bool], k: int) -> float:
    """Fraction of all salient events captured in the top k (0 when none exist)."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    total = sum(bool(x) for x in ranked_labels)
    if total == 0:
        return 0.0
    return sum(bool(x) for x in ranked_labels[:k]) / total


def auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Mann-Whitney AUC with 0.5 credit for ties; None when one class is empty."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class DocMetrics:
    doc_id: str
    n_events: int
    n_salient: int
    p_at: dict[int, float]
    r_at: dict[int, float]
    auc: float | None


@dataclass
class MetricsReport:
    ks: tuple[int, ...]
    p_at: dict[int, float]
    r_at: dict[int, float]
    auc: float | None
    n_docs: int
    n_docs_pr: int
    n_docs_auc: int
    tie_seed: int | None
    per_doc: list[DocMetrics] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "ks": list(self.ks),
            "p_at": {str(k): v for k, v in self.p_at.items()},
            "r_at": {str(k): v for k, v in self.r_at.items()},
            "auc": self.auc,
            "n_docs": self.n_docs,
            "n_docs_pr": self.n_docs_pr,
            "n_docs_auc": self.n_docs_auc,
            "tie_seed": self.tie_seed,
            "per_doc": [
                {
                    "doc_id": d.doc_id,
                    "n_events": d.n_events,
                    "n_salient": d.n_salient,
                    "p_at": {str(k): v for k, v in d.p_at.items()},
                    "r_at": {str(k): v for k, v in d.r_at.items()},
                    "auc": d.auc,
                }
                for d in self.per_doc
            ],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, indent=2)
            fh.write("\n")

    @staticmethod
    def from_json(obj: dict) -> "MetricsReport":
        return MetricsReport(
            ks=tuple(obj["ks"]),
            p_at={int(k): v for k, v in obj["p_at"].items()},
            r_at={int(k): v for k, v in obj["r_at"].items()},
            auc=obj["auc"],
            n_docs=obj["n_docs"],
            n_docs_pr=obj["n_docs_pr"],
            n_docs_auc=obj["n_docs_auc"],
            tie_seed=obj.get("tie_seed"),
            per_doc=[
                DocMetrics(
                    doc_id=d["doc_id"],
                    n_events=d["n_events"],
                    n_salient=d["n_salient"],
                    p_at={int(k): v for k, v in d["p_at"].items()},
                    r_at={int(k): v for k, v in d["r_at"].items()},
                    auc=d["auc"],
                )
                for d in obj.get("per_doc", [])
            ],
        )

    @staticmethod
    def load(path: str | Path) -> "MetricsReport":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc.msg})") from exc
        return MetricsReport.from_json(obj)


def evaluate(
    scores_per_doc: Sequence[np.ndarray],
    corpus: Corpus,
    ks: tuple[int, ...] = DEFAULT_KS,
    tie_seed: int | None = None,
) -> MetricsReport:
    """Macro-averaged ranking metrics over a corpus.

    ``scores_per_doc`` aligns positionally with ``corpus.documents`` and each
    document's event list.  With ``tie_seed`` set, exact score ties are broken
    by a seeded random permutation before any metric is computed (the behavior
    baselines call for); otherwise ranking ties break by event id and AUC uses
    the half-credit convention.
    """
    if len(scores_per_doc) != len(corpus.documents):
        raise DataError(
            f"got scores for {len(scores_per_doc)} documents, corpus has {len(corpus.documents)}"
        )
    per_doc: list[DocMetrics] = []
    for doc_idx, (doc, scores) in enumerate(zip(corpus.documents, scores_per_doc)):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (len(doc.events),):
            raise DataError(f"doc {doc.doc_id!r}: score vector does not match the event list")
        if any(ev.salient is None for ev in doc.events):
            raise DataError(f"doc {doc.doc_id!r} is not salience-labeled")
        labels = np.array([bool(ev.salient) for ev in doc.events])
        ids = [ev.id for ev in doc.events]
        if tie_seed is not None:
            rng = np.random.default_rng([tie_seed % (2**32), doc_idx])
            jitter = rng.random(len(scores))
            order = np.array(
                sorted(range(len(scores)), key=lambda i: (-scores[i], jitter[i])), dtype=np.intp
            )
            auc_scores = np.empty(len(scores))
            auc_scores[order] = -np.arange(len(scores), dtype=np.float64)
        else:
            order = np.array(
                sorted(range(len(scores)), key=lambda i: (-scores[i], ids[i])), dtype=np.intp
            )
            auc_scores = scores
        ranked = labels[order]
        per_doc.append(
            DocMetrics(
                doc_id=doc.doc_id,
                n_events=len(doc.events),
                n_salient=int(labels.sum()),
                p_at={k: precision_at_k(ranked, k) for k in ks},
                r_at={k: recall_at_k(ranked, k) for k in ks},
                auc=auc(auc_scores, labels),
            )
        )

    pr_docs = [d for d in per_doc if d.n_salient > 0]
    auc_docs = [d for d in per_doc if d.auc is not None]
    report = MetricsReport(
        ks=ks,
        p_at={
            k: float(np.mean([d.p_at[k] for d in pr_docs])) if pr_docs else 0.0 for k in ks
        },
        r_at={
            k: float(np.mean([d.r_at[k] for d in pr_docs])) if pr_docs else 0.0 for k in ks
        },
        auc=float(np.mean([d.auc for d in auc_docs])) if auc_docs else None,
        n_docs=len(per_doc),
        n_docs_pr=len(pr_docs),
        n_docs_auc=len(auc_docs),
        tie_seed=tie_seed,
        per_doc=per_doc,
    )
    return report


def permutation_test(
    a: Sequence[float], b: Sequence[float], iterations: int = 10000, seed: int = 0
) -> float:
    """Two-sided paired sign-flip randomization test with add-one smoothing.

    Flips the sign of each paired difference independently with probability
    one half and counts permuted |mean| >= observed |mean|; returns
    (count + 1) / (iterations + 1).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("paired samples must be 1-d and of equal length")
    if len(a) == 0:
        raise DataError("cannot run a permutation test on empty samples")
    if iterations < 1:
        raise DataError("iterations must be >= 1")
    diff = a - b
    observed = abs(float(diff.mean()))
    rng = np.random.default_rng(seed)
    count = 0
    chunk = 4096
    done = 0
    while done < iterations:
        size = min(chunk, iterations - done)
        signs = rng.integers(0, 2, size=(size, len(diff))) * 2 - 1
        permuted = np.abs((signs * diff).mean(axis=1))
        count += int((permuted >= observed).sum())
        done += size
    return (count + 1) / (iterations + 1)
