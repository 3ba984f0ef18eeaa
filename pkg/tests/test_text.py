import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wcapsule.errors import BoundsError, DimensionError, ParseError, PipelineError
from wcapsule.text import (OOV, PAD, EmbeddingTable, PipelineConfig, TextVectorizer, Vocabulary,
                           build_vocabulary, embed, encode_pad, load_embeddings, load_stopwords,
                           preprocess, random_embeddings)


def test_preprocess_persian_stopwords():
    cfg = PipelineConfig(stopwords={"این", "است"})
    assert preprocess("این کتاب عالی است .", cfg) == ["کتاب", "عالی"]


@pytest.mark.parametrize("text", ["", "!!! ؟؟", "   ", "... , ;"])
def test_preprocess_empty(text):
    assert preprocess(text) == []


def test_preprocess_strips_edges_only():
    assert preprocess("Hello, world! don't") == ["hello", "world", "don't"]


def test_preprocess_case_kept_when_asked():
    assert preprocess("Good BAD", PipelineConfig(lowercase=False)) == ["Good", "BAD"]


def test_load_stopwords(tmp_path):
    p = tmp_path / "stop.txt"
    p.write_text("# comment\nاین\n\nاست\n", encoding="utf-8")
    assert load_stopwords(p) == frozenset({"این", "است"})


def test_vocabulary_min_count():
    docs = [["کتاب", "نادر"], ["کتاب"], ["کتاب"]]
    vocab = build_vocabulary(docs, PipelineConfig(min_count=2))
    assert "کتاب" in vocab
    assert "نادر" not in vocab
    assert vocab.lookup("نادر") == OOV


def test_vocabulary_min_count_one_keeps_all():
    docs = [["a", "b"], ["c"]]
    vocab = build_vocabulary(docs, PipelineConfig(min_count=1))
    assert set(vocab.tokens[2:]) == {"a", "b", "c"}


def test_vocabulary_tie_rule():
    docs = [["zeta"] * 5 + ["alpha"] * 5 + ["mid"] * 7]
    vocab = build_vocabulary(docs, PipelineConfig(min_count=1))
    assert vocab.tokens[2:] == ("mid", "alpha", "zeta")


def test_vocabulary_empty_after_filter():
    with pytest.raises(PipelineError):
        build_vocabulary([["a"], ["b"]], PipelineConfig(min_count=2))


def test_vocabulary_requires_placeholders():
    with pytest.raises(PipelineError):
        Vocabulary(("a", "b"))


def _vocab(*tokens):
    return Vocabulary(("<pad>", "<oov>", *tokens))


def test_encode_pad_examples():
    v = _vocab("a", "b", "c")
    assert encode_pad(["a", "b"], v, 5).tolist() == [2, 3, 0, 0, 0]
    assert encode_pad([], v, 3).tolist() == [0, 0, 0]
    assert encode_pad(list("abcabca"), v, 4).tolist() == [2, 3, 4, 2]
    assert encode_pad(["a", "zzz"], v, 3).tolist() == [2, OOV, PAD]


def test_encode_pad_rejects_zero_length():
    with pytest.raises(PipelineError):
        encode_pad(["a"], _vocab("a"), 0)


def test_embedding_table_pad_row_must_be_zero():
    with pytest.raises(PipelineError):
        EmbeddingTable(np.ones((3, 2)))


def test_embed_examples():
    table = random_embeddings(_vocab("a", "b"), 4, seed=0)
    assert np.array_equal(embed([0, 0, 0], table), np.zeros((3, 4)))
    out = embed([2, 0, 0], table)
    assert np.array_equal(out[0], table.matrix[2])
    assert not out[1:].any()


def test_embed_out_of_range():
    table = random_embeddings(_vocab("a"), 2)
    with pytest.raises(BoundsError):
        embed([3], table)


def _vector_file(tmp_path, header, lines):
    p = tmp_path / "vec.txt"
    p.write_text(header + "\n" + "\n".join(lines) + "\n", encoding="utf-8")
    return p


def test_load_embeddings_copy_and_determinism(tmp_path):
    vocab = _vocab("x", "y")
    p = _vector_file(tmp_path, "2 3", ["x 0.1 -0.2 0.3", "unused 1 1 1"])
    cfg = PipelineConfig(embed_dim=3)
    a = load_embeddings(p, vocab, cfg, seed=4)
    b = load_embeddings(p, vocab, cfg, seed=4)
    assert a.matrix[2].tolist() == [0.1, -0.2, 0.3]
    assert np.array_equal(a.matrix[3], b.matrix[3])
    assert np.all(np.abs(a.matrix[3]) <= 0.25)
    assert not a.matrix[PAD].any()


def test_load_embeddings_dimension_error(tmp_path):
    p = _vector_file(tmp_path, "100 300", [])
    with pytest.raises(DimensionError):
        load_embeddings(p, _vocab("x"), PipelineConfig(embed_dim=400))


def test_load_embeddings_bad_line(tmp_path):
    p = _vector_file(tmp_path, "2 2", ["x 0.1 0.2", "y 0.3"])
    with pytest.raises(ParseError) as err:
        load_embeddings(p, _vocab("x", "y"), PipelineConfig(embed_dim=2))
    assert err.value.line == 3


def test_vectorizer_auto_length():
    vec = TextVectorizer(min_count=1).fit(["a b c", "a"])
    assert vec.max_len_ == 3
    assert vec.transform(["a zz"]).tolist() == [[vec.vocabulary_.lookup("a"), OOV, PAD]]


words = st.sampled_from(["کتاب", "عالی", "بد", "good", "bad", "x", "y", "z"])


@settings(max_examples=50, deadline=None)
@given(docs=st.lists(st.lists(words, max_size=8), min_size=1, max_size=10),
       m=st.integers(1, 12), seed=st.integers(0, 1000))
def test_pipeline_properties(docs, m, seed):
    stop = {"x"}
    cfg = PipelineConfig(stopwords=stop, min_count=1)
    token_lists = [preprocess(" ".join(d), cfg) for d in docs]
    if not any(token_lists):
        return
    vocab = build_vocabulary(token_lists, cfg)
    shuffled = list(token_lists)
    np.random.default_rng(seed).shuffle(shuffled)
    assert build_vocabulary(shuffled, cfg) == vocab
    assert not set(vocab.tokens) & stop
    table = random_embeddings(vocab, 3, seed)
    for toks in token_lists:
        idx = encode_pad(toks, vocab, m)
        assert idx.shape == (m,)
        out = embed(idx, table)
        assert out.shape == (m, 3)
        assert not out[min(len(toks), m):].any()
        for t in range(m):
            assert np.array_equal(out[t], table.matrix[idx[t]])
