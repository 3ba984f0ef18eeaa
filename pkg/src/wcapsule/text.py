"""Tokenization, vocabulary, zero padding and embedding lookup."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import BoundsError, DimensionError, ParseError, PipelineError
from .validation import check_texts

PAD = 0
OOV = 1
PAD_TOKEN = "<pad>"
OOV_TOKEN = "<oov>"


@dataclass(frozen=True)
class PipelineConfig:
    stopwords: frozenset = frozenset()
    min_count: int = 2
    max_len: object = "auto"
    embed_dim: int = 32
    lowercase: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        if self.min_count < 1:
            raise PipelineError(f"min_count must be >= 1, got {self.min_count}")
        if self.max_len != "auto" and (not isinstance(self.max_len, (int, np.integer)) or self.max_len < 1):
            raise PipelineError(f"max_len must be 'auto' or a positive integer, got {self.max_len!r}")
        if self.embed_dim < 1:
            raise PipelineError(f"embed_dim must be >= 1, got {self.embed_dim}")


def load_stopwords(path) -> frozenset:
    """One token per line, UTF-8; blank lines and ``#`` comments ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(unicodedata.normalize("NFKC", line))
    return frozenset(words)


def _is_punct(ch):
    return unicodedata.category(ch)[0] in "PS"


def _strip_punct(token):
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def preprocess(text: str, config: PipelineConfig = PipelineConfig()) -> list:
    """NFKC-normalize, split on whitespace, strip punctuation, drop stopwords."""
    text = unicodedata.normalize("NFKC", text)
    stop = config.stopwords
    if config.lowercase:
        text = text.casefold()
        stop = {w.casefold() for w in stop}
    tokens = []
    for raw in text.split():
        tok = _strip_punct(raw)
        if tok and tok not in stop:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple  # index -> token; 0 and 1 are the PAD/OOV placeholders
    index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.tokens[:2] != (PAD_TOKEN, OOV_TOKEN):
            raise PipelineError("vocabulary must start with the PAD and OOV entries")
        mapping = {t: i for i, t in enumerate(self.tokens)}
        if len(mapping) != len(self.tokens):
            raise PipelineError("vocabulary tokens must be distinct")
        object.__setattr__(self, "index", mapping)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index and self.index[token] >= 2

    def lookup(self, token) -> int:
        i = self.index.get(token, OOV)
        return i if i >= 2 else OOV


def build_vocabulary(token_lists: Iterable[Sequence[str]], config: PipelineConfig = PipelineConfig()) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times, most frequent first, ties lexicographic."""
    counts = Counter()
    n_docs = 0
    for tokens in token_lists:
        counts.update(tokens)
        n_docs += 1
    if n_docs == 0:
        raise PipelineError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= config.min_count), key=lambda t: (-counts[t], t))
    if not kept:
        raise PipelineError(f"vocabulary is empty after filtering with min_count={config.min_count}")
    return Vocabulary((PAD_TOKEN, OOV_TOKEN, *kept))


def encode_pad(tokens: Sequence[str], vocab: Vocabulary, max_len: int) -> np.ndarray:
    """Index sequence of exactly ``max_len``: truncated prefix or right zero padding."""
    if max_len < 1:
        raise PipelineError(f"max_len must be >= 1, got {max_len}")
    out = np.zeros(max_len, dtype=np.int64)
    ids = [vocab.lookup(t) for t in tokens[:max_len]]
    out[: len(ids)] = ids
    return out


@dataclass(frozen=True)
class EmbeddingTable:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionError(f"embedding matrix must be 2-D, got shape {m.shape}")
        if not np.isfinite(m).all():
            raise PipelineError("embedding matrix has non-finite entries")
        if np.any(m[PAD] != 0):
            raise PipelineError("PAD row of the embedding matrix must be zero")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]


def random_embeddings(vocab: Vocabulary, dim: int, seed=0) -> EmbeddingTable:
    m = np.random.default_rng(seed).uniform(-0.25, 0.25, size=(len(vocab), dim))
    m[PAD] = 0.0
    return EmbeddingTable(m)


def load_embeddings(path, vocab: Vocabulary, config: PipelineConfig, seed=0) -> EmbeddingTable:
    """Fill rows from a textual word-vector file; missing tokens get seeded U(-0.25, 0.25)."""
    table = np.array(random_embeddings(vocab, config.embed_dim, seed).matrix)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise ParseError("expected header '<count> <dim>'", 1)
        dim = int(header[1])
        if dim != config.embed_dim:
            raise DimensionError(f"vector file has dim {dim}, pipeline expects {config.embed_dim}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected token + {dim} floats, got {len(parts) - 1} values", lineno)
            row = vocab.index.get(unicodedata.normalize("NFKC", parts[0]).casefold()
                                  if config.lowercase else parts[0])
            if row is None or row < 2:
                continue
            try:
                table[row] = [float(v) for v in parts[1:]]
            except ValueError:
                raise ParseError("non-numeric vector component", lineno) from None
    return EmbeddingTable(table)


def embed(indices, table: EmbeddingTable) -> np.ndarray:
    """Gather rows; ``indices`` of shape (M,) or (B, M) gives (M, E) or (B, M, E)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(table)):
        raise BoundsError(f"embedding index out of range [0, {len(table)})")
    return table.matrix[idx]


class TextVectorizer(TransformerMixin, BaseEstimator):
    """Raw texts -> padded index matrix of shape (n_samples, max_len).

    ``max_len="auto"`` fixes the length to the longest preprocessed training
    document.
    """

    def __init__(self, stopwords=None, min_count=2, max_len="auto", lowercase=True):
        self.stopwords = stopwords
        self.min_count = min_count
        self.max_len = max_len
        self.lowercase = lowercase

    def _config(self, embed_dim=1):
        return PipelineConfig(frozenset(self.stopwords or ()), self.min_count, self.max_len,
                              embed_dim, self.lowercase)

    def fit(self, X, y=None):
        X = check_texts(X)
        cfg = self._config()
        tokens = [preprocess(t, cfg) for t in X]
        self.vocabulary_ = build_vocabulary(tokens, cfg)
        longest = max(len(t) for t in tokens)
        self.max_len_ = max(1, longest) if self.max_len == "auto" else int(self.max_len)
        return self

    def tokenize(self, X):
        cfg = self._config()
        return [preprocess(t, cfg) for t in check_texts(X)]

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        tokens = self.tokenize(X)
        return np.stack([encode_pad(t, self.vocabulary_, self.max_len_) for t in tokens])
