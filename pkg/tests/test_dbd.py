from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_dbd, brute_force_document_dbd, random_corpus
from wcapsule.corpus import Dataset, LabeledDocument, SyntheticSpec, generate_synthetic
from wcapsule.dbd import (DbdTransformer, DomainStats, build_domain_stats, count_domain_tokens, dbd_table,
                          document_dbd, identify_domain, word_dbd)
from wcapsule.errors import ContractError, StatsError


@pytest.fixture
def hand_stats():
    data = Dataset((LabeledDocument("good shoe shoe", "positive", "A"),
                    LabeledDocument("good book", "negative", "B")))
    return build_domain_stats(data)


def test_hand_counts(hand_stats):
    assert hand_stats.count("shoe", 0) == 2
    assert hand_stats.totals == (3, 2)
    assert hand_stats.count("good", 1) == 1


def test_hand_word_dbd(hand_stats):
    tf, idf, d = word_dbd("shoe", 0, hand_stats)
    assert (tf, idf, d) == (2 / 3, 1.0, 2 / 3)
    assert word_dbd("absent", 1, hand_stats) == (0.0, 0.0, 0.0)


def test_hand_document_dbd(hand_stats):
    D = document_dbd(["shoe", "good", "book"], hand_stats)
    # shoe: (2/3, 0); good: (1/3*1/2, 1/2*1/2); book: (0, 1/2)
    assert D == pytest.approx([5 / 18, 1 / 4], abs=1e-12)
    assert identify_domain(D) == 0


def test_single_token_document(hand_stats):
    D = document_dbd(["good"], hand_stats)
    assert D.tolist() == [word_dbd("good", i, hand_stats)[2] for i in range(2)]


def test_unknown_and_empty_documents(hand_stats):
    assert not document_dbd(["zzz", "yyy"], hand_stats).any()
    assert not document_dbd([], hand_stats).any()


def test_sum_aggregation(hand_stats):
    toks = ["shoe", "good", "book"]
    assert np.allclose(document_dbd(toks, hand_stats, "sum"), 3 * document_dbd(toks, hand_stats))
    with pytest.raises(ContractError):
        document_dbd(toks, hand_stats, "max")


def test_empty_domain_is_error():
    with pytest.raises(StatsError):
        count_domain_tokens([["a"], []], ["x", "y"], ["x", "y"])


def test_inconsistent_totals_rejected():
    with pytest.raises(StatsError):
        DomainStats(("a",), {"t": (2,)}, (3,))


def test_symmetric_token():
    stats = count_domain_tokens([["t", "a"], ["t", "b"], ["t", "c"]], ["x", "y", "z"], ["x", "y", "z"])
    rows = [word_dbd("t", i, stats) for i in range(3)]
    assert all(r[1] == pytest.approx(1 / 3) for r in rows)
    assert len({r[2] for r in rows}) == 1


@pytest.mark.parametrize("D,expected", [((0.03, 0.75, 0.40), 1), ((0, 0, 0), 0), ((0, 0, 1, 0), 2),
                                        ((0.5, 0.5), 0)])
def test_identify_domain(D, expected):
    assert identify_domain(D) == expected


def test_permutation_invariant_stats():
    rng = np.random.default_rng(0)
    docs, domains = random_corpus(rng)
    perm = rng.permutation(len(docs))
    a = count_domain_tokens([d for d, _ in docs], [l for _, l in docs], domains)
    b = count_domain_tokens([docs[i][0] for i in perm], [docs[i][1] for i in perm], domains)
    assert a == b


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    docs, domains = random_corpus(rng, max_docs=40, max_domains=5)
    stats = count_domain_tokens([d for d, _ in docs], [l for _, l in docs], domains)
    counts, totals, table = brute_force_dbd(docs, domains)
    assert stats.totals == tuple(totals[d] for d in domains)
    for (tok, dom), tri in table.items():
        i = domains.index(dom)
        assert stats.count(tok, i) == counts.get((tok, dom), 0)
        assert all(abs(got - float(want)) <= 1e-15 for got, want in zip(word_dbd(tok, i, stats), tri))
    for tokens, _ in docs[:10]:
        want = brute_force_document_dbd(tokens, domains, table)
        assert np.abs(document_dbd(tokens, stats) - np.array([float(w) for w in want])).max() <= 1e-15


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), factor=st.integers(2, 7))
def test_bounds_distribution_and_scaling(seed, factor):
    rng = np.random.default_rng(seed)
    docs, domains = random_corpus(rng, max_docs=30, max_domains=6)
    stats = count_domain_tokens([d for d, _ in docs], [l for _, l in docs], domains)
    for tok in stats.counts:
        rows = [word_dbd(tok, i, stats) for i in range(len(domains))]
        for tf, idf, d in rows:
            assert 0 <= tf <= 1 and 0 <= idf <= 1
            assert d <= tf and d <= idf
        assert sum(Fraction(stats.count(tok, i), sum(stats.counts[tok])) for i in range(len(domains))) == 1
    scaled = stats.scaled(factor)
    for tokens, _ in docs:
        assert identify_domain(document_dbd(tokens, stats)) == identify_domain(document_dbd(tokens, scaled))


def test_disjoint_vocabulary_separability():
    data = generate_synthetic(SyntheticSpec(num_domains=5, docs_per_domain=12, seed=2))
    model = DbdTransformer().fit(data.texts, data.domain_labels)
    assert list(model.predict(data.texts)) == data.domain_labels


def test_transformer_shapes_and_order():
    X = ["good shoe shoe", "good book"]
    model = DbdTransformer().fit(X, ["A", "B"], domain_order=["B", "A"])
    assert model.domains_ == ("B", "A")
    out = model.transform(["shoe", "nothing here"])
    assert out.shape == (2, 2)
    assert out[0].tolist() == [0.0, 2 / 3]
    assert not out[1].any()


def test_dbd_table_rows(hand_stats):
    rows = list(dbd_table(hand_stats))
    assert ("shoe", "A", 2 / 3, 1.0, 2 / 3) in rows
    assert all(r[2] > 0 for r in rows)
    assert len(rows) == 4
