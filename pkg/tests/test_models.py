import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from helpers import random_corpus, random_document, toy_table
from salience.corpus import Corpus, Document, EventMention
from salience.embeddings import normalized_rows
from salience.errors import DataError, ModelFormatError, NumericError
from salience.features import extract_features, apply_scaler, fit_scaler
from salience.kernels import default_bank, kernel_features
from salience.models import (
    KCEModel,
    PageRankModel,
    frequency_scores,
    kce_forward,
    load_model,
    location_scores,
    model_scores,
    new_kce_model,
    new_letor_model,
    pagerank_scores,
    ranked_order,
    save_model,
    score_kce,
    score_letor,
)


def build_kce(rng, doc, variant="full", w_scale=0.5, dim=8):
    ev_tokens = sorted({e.head_lemma for e in doc.events}) or ["pad"]
    en_tokens = sorted({n.entity_key for n in doc.entities}) or ["pad"]
    evt = toy_table(ev_tokens, dim, rng)
    ent = toy_table(en_tokens, dim, rng)
    # fit over several documents so no feature is constant (keeps stds off the
    # 1e-8 floor, which would amplify last-ulp wobble in the oracle comparison)
    fillers = tuple(
        random_document(rng, doc_id=f"filler-{k}", n_events=4, n_entities=3, distinct_lemmas=False)
        for k in range(2)
    )
    scaler = fit_scaler(Corpus(documents=(doc,) + fillers), evt, ent)
    bank = default_bank()
    model = KCEModel(
        bank=bank,
        w_v=rng.normal(0, w_scale, bank.size),
        w_e=rng.normal(0, w_scale, bank.size) if variant == "full" else np.zeros(bank.size),
        w_f=rng.normal(0, w_scale, 5) if variant != "events_only" else np.zeros(5),
        bias=float(rng.normal()),
        event_table=evt,
        entity_table=ent,
        scaler=scaler,
        variant=variant,
    )
    return model


def compositional_scores(model, doc):
    """Score each event with the already-tested pieces, one event at a time."""
    unit_v, _ = normalized_rows(
        np.stack([model.event_table.row(e.head_lemma) for e in doc.events])
    )
    scores = []
    for i, event in enumerate(doc.events):
        target = model.event_table.row(event.head_lemma)
        others = np.stack(
            [model.event_table.row(e.head_lemma) for j, e in enumerate(doc.events) if j != i]
        ) if len(doc.events) > 1 else np.zeros((0, model.event_table.dim))
        phi_v = kernel_features(target, others, model.bank)
        if doc.entities:
            ent_rows = np.stack([model.entity_table.row(n.entity_key) for n in doc.entities])
        else:
            ent_rows = np.zeros((0, model.entity_table.dim))
        phi_e = kernel_features(target, ent_rows, model.bank)
        feats = apply_scaler(
            extract_features(event, doc, model.event_table, model.entity_table), model.scaler
        ).to_array()
        score = float(model.w_v @ phi_v + model.w_e @ phi_e + model.w_f @ feats + model.bias)
        scores.append(score)
    return np.array(scores)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_kce_forward_matches_compositional_oracle(seed):
    rng = np.random.default_rng(seed)
    doc = random_document(
        rng,
        n_events=int(rng.integers(1, 7)),
        n_entities=int(rng.integers(0, 5)),
        distinct_lemmas=False,
    )
    model = build_kce(rng, doc)
    # a floored std amplifies last-ulp disagreement between the loop-based
    # oracle and the vectorized path by 1e8; those cases are covered by the
    # bitwise consistency test below
    assume(not np.any(model.scaler.stds <= 1e-8))
    got = score_kce(model, doc)
    assert got == pytest.approx(compositional_scores(model, doc), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_kce_forward_features_bitwise_equal_scaler_path(seed):
    """The features inside kce_forward must be the exact floats fit_scaler saw."""
    rng = np.random.default_rng(seed)
    doc = random_document(
        rng,
        n_events=int(rng.integers(1, 7)),
        n_entities=int(rng.integers(0, 5)),
        distinct_lemmas=False,
    )
    model = build_kce(rng, doc)
    _, cache = kce_forward(model, doc)
    from salience.features import feature_matrix, scale_matrix

    want = scale_matrix(
        feature_matrix(doc, model.event_table, model.entity_table), model.scaler
    )
    assert np.array_equal(cache.scaled_feats, want)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), variant=st.sampled_from(["events_only", "events_features"]))
def test_kce_variants_drop_blocks(seed, variant):
    rng = np.random.default_rng(seed)
    doc = random_document(rng, n_events=4, n_entities=3)
    model = build_kce(rng, doc, variant=variant)
    got = score_kce(model, doc)
    assert got == pytest.approx(compositional_scores(model, doc), abs=1e-10)


def test_zero_nonfreq_zeroes_all_but_frequency():
    rng = np.random.default_rng(5)
    doc = random_document(rng, n_events=5, n_entities=4, distinct_lemmas=False)
    model = build_kce(rng, doc)
    scores, cache = kce_forward(model, doc, zero_nonfreq_features=True)
    assert np.all(cache.scaled_feats[:, 1:] == 0.0)
    # frequency column still standardized with the trained scaler
    raw = np.array(
        [sum(1 for e in doc.events if e.head_lemma == ev.head_lemma) for ev in doc.events],
        dtype=np.float64,
    )
    want = (raw - model.scaler.means[0]) / model.scaler.stds[0]
    assert cache.scaled_feats[:, 0] == pytest.approx(want)


def test_letor_is_kce_without_kernels():
    rng = np.random.default_rng(11)
    doc = random_document(rng, n_events=5, n_entities=3, distinct_lemmas=False)
    kce = build_kce(rng, doc)
    letor = new_letor_model(kce.event_table, kce.entity_table, kce.scaler)
    letor.w_f[:] = kce.w_f
    letor.bias = kce.bias
    zeroed = KCEModel(
        bank=kce.bank,
        w_v=np.zeros(kce.bank.size),
        w_e=np.zeros(kce.bank.size),
        w_f=kce.w_f,
        bias=kce.bias,
        event_table=kce.event_table,
        entity_table=kce.entity_table,
        scaler=kce.scaler,
        variant="full",
    )
    assert score_letor(letor, doc) == pytest.approx(score_kce(zeroed, doc), abs=1e-12)


def softmax_rows(m):
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def test_pagerank_matches_matrix_oracle():
    rng = np.random.default_rng(3)
    doc = random_document(rng, n_events=6, n_entities=0, distinct_lemmas=False)
    evt = toy_table(sorted({e.head_lemma for e in doc.events}), 8, rng)
    model = PageRankModel(temperature=0.7, combine_lambda=0.4, event_table=evt)
    n = len(doc.events)
    rows = np.stack([evt.row(e.head_lemma) for e in doc.events])
    unit, _ = normalized_rows(rows)
    sims = unit @ unit.T
    logits = sims / 0.7
    np.fill_diagonal(logits, -np.inf)
    trans = softmax_rows(logits)
    walk = trans.T @ np.full(n, 1.0 / n)
    freq = np.array(
        [sum(1 for e in doc.events if e.head_lemma == ev.head_lemma) for ev in doc.events],
        dtype=np.float64,
    )
    want = 0.4 * freq / freq.sum() + 0.6 * walk
    assert pagerank_scores(model, doc) == pytest.approx(want, abs=1e-12)


def test_pagerank_single_event_walk_is_zero():
    doc = Document(
        doc_id="d",
        num_sentences=1,
        events=(EventMention(id="e0", head_lemma="x", surface="x", sentence_index=0),),
    )
    rng = np.random.default_rng(0)
    evt = toy_table(["x"], 4, rng)
    model = PageRankModel(temperature=1.0, combine_lambda=0.25, event_table=evt)
    # frequency part only: 0.25 * 1.0 (normalized) + 0.75 * 0
    assert pagerank_scores(model, doc).tolist() == [0.25]


def test_pagerank_validation():
    rng = np.random.default_rng(0)
    evt = toy_table(["x"], 4, rng)
    with pytest.raises(DataError):
        PageRankModel(temperature=0.0, combine_lambda=0.5, event_table=evt)
    with pytest.raises(DataError):
        PageRankModel(temperature=1.0, combine_lambda=1.5, event_table=evt)


def test_frequency_and_location_baselines():
    doc = Document(
        doc_id="d",
        num_sentences=4,
        events=(
            EventMention(id="e0", head_lemma="a", surface="a", sentence_index=0),
            EventMention(id="e1", head_lemma="b", surface="b", sentence_index=1),
            EventMention(id="e2", head_lemma="a", surface="a", sentence_index=3),
        ),
    )
    assert frequency_scores(doc).tolist() == [2.0, 1.0, 2.0]
    assert location_scores(doc).tolist() == [0.0, -1.0, -2.0]


def test_ranked_order_deterministic_without_rng():
    scores = np.array([1.0, 2.0, 1.0])
    ids = ["c", "a", "b"]
    assert ranked_order(scores, event_ids=ids).tolist() == [1, 2, 0]


def test_ranked_order_random_ties_are_uniform():
    scores = np.zeros(3)
    rng = np.random.default_rng(123)
    counts = {}
    trials = 3000
    for _ in range(trials):
        order = tuple(ranked_order(scores, rng=rng))
        counts[order] = counts.get(order, 0) + 1
    assert len(counts) == 6
    stat, p = chisquare(list(counts.values()))
    assert p > 0.001


def test_save_load_round_trip_kce(tmp_path):
    rng = np.random.default_rng(17)
    doc = random_document(rng, n_events=4, n_entities=3)
    model = build_kce(rng, doc)
    path = tmp_path / "m.json"
    save_model(model, path)
    again = load_model(path, expect="kce")
    assert np.array_equal(again.w_v, model.w_v)
    assert np.array_equal(again.w_e, model.w_e)
    assert np.array_equal(again.w_f, model.w_f)
    assert again.bias == model.bias
    assert np.array_equal(again.event_table.vectors, model.event_table.vectors)
    assert again.variant == model.variant
    assert score_kce(again, doc) == pytest.approx(score_kce(model, doc), abs=0)
    # saving the reloaded model reproduces the file byte-for-byte
    path2 = tmp_path / "m2.json"
    save_model(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_save_load_round_trip_letor_and_pagerank(tmp_path):
    rng = np.random.default_rng(23)
    doc = random_document(rng, n_events=4, n_entities=2)
    kce = build_kce(rng, doc)
    letor = new_letor_model(kce.event_table, kce.entity_table, kce.scaler)
    letor.w_f[:] = rng.normal(size=5)
    p1 = tmp_path / "letor.json"
    save_model(letor, p1)
    letor2 = load_model(p1, expect="letor")
    assert score_letor(letor2, doc) == pytest.approx(score_letor(letor, doc), abs=0)

    pr = PageRankModel(temperature=0.9, combine_lambda=0.3, event_table=kce.event_table)
    p2 = tmp_path / "pr.json"
    save_model(pr, p2)
    pr2 = load_model(p2, expect="pagerank")
    assert pagerank_scores(pr2, doc) == pytest.approx(pagerank_scores(pr, doc), abs=0)


def test_load_model_expect_mismatch(tmp_path):
    rng = np.random.default_rng(29)
    doc = random_document(rng, n_events=3, n_entities=2)
    model = build_kce(rng, doc)
    path = tmp_path / "m.json"
    save_model(model, path)
    with pytest.raises(ModelFormatError):
        load_model(path, expect="letor")


def test_load_model_rejects_missing_version(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"model_type": "kce"}', encoding="utf-8")
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_load_model_rejects_nonzero_frozen_blocks(tmp_path):
    rng = np.random.default_rng(31)
    doc = random_document(rng, n_events=3, n_entities=2)
    model = build_kce(rng, doc, variant="events_only")
    path = tmp_path / "m.json"
    save_model(model, path)
    text = path.read_text(encoding="utf-8")
    import json as _json

    obj = _json.loads(text)
    obj["w_e"][0] = 0.5
    path.write_text(_json.dumps(obj), encoding="utf-8")
    with pytest.raises(ModelFormatError, match="w_e"):
        load_model(path)


def test_save_model_rejects_non_finite(tmp_path):
    rng = np.random.default_rng(37)
    doc = random_document(rng, n_events=3, n_entities=2)
    model = build_kce(rng, doc)
    model.w_v[0] = np.nan
    with pytest.raises(NumericError):
        save_model(model, tmp_path / "m.json")


def test_model_scores_dispatch():
    rng = np.random.default_rng(41)
    doc = random_document(rng, n_events=4, n_entities=2)
    kce = build_kce(rng, doc)
    assert model_scores(kce, doc) == pytest.approx(score_kce(kce, doc), abs=0)
    letor = new_letor_model(kce.event_table, kce.entity_table, kce.scaler)
    assert model_scores(letor, doc) == pytest.approx(score_letor(letor, doc), abs=0)
